"""Codec for arbitrary-shape text regions: encode annotations into kernel +
centripetal-shift supervision maps, decode predictions back into instances via
one-step pixel aggregation, score the results, and benchmark the pipeline."""

from .decoder import DecodeConfig, DecodedInstance, PredictionMaps, binarize, decode, to_proposals
from .encoder import (
    LabelBundle,
    TextAnnotation,
    compute_regression_mask,
    generate_labels,
    shift_targets,
)
from .errors import (
    AnnotationError,
    BadMagic,
    BadVersion,
    CentripetalError,
    DomainError,
    EmptyComponent,
    InvalidPolygon,
    NonFiniteShift,
    ShapeMismatch,
    TensorFileError,
    TruncatedPayload,
    UnsupportedDtype,
)
from .evaluation import EvalReport, match_and_score, polygon_iou
from .geometry import (
    Polygon,
    connected_components,
    erode,
    extract_contour,
    min_area_rect,
    rasterize,
    round_half_from_zero,
    shrink_polygon,
)
from .harness import BenchReport, PerturbSpec, bench_decode, perturb, robustness_curve
from .loss import LossConfig, LossReport, dice_loss, ohem_select, relaxed_l1_loss, smooth_l1, total_loss
from .tensorio import (
    load_annotations,
    load_bundle,
    read_tensor,
    save_annotations,
    save_bundle,
    save_detections,
    write_tensor,
)

__version__ = "0.1.0"

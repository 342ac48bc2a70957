"""Supervision-map generation: instance kernels, training mask, dense shift
field toward each instance's kernel reference, and the relaxed regression mask.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ShapeMismatch
from .geometry import Polygon, _fill_ring, erode, round_half_from_zero, shrink_polygon

# Cap on rows x references per distance block to bound temporary memory.
_DIST_BLOCK = 4_000_000


@dataclass
class TextAnnotation:
    """One annotated text region.  ``ignore`` marks unreadable (do-not-care)
    regions that are excluded from supervision; ids must be unique and >= 1."""

    polygon: Polygon
    ignore: bool = False
    id: int = 0


@dataclass
class LabelBundle:
    """Rasterized supervision for one image.

    kernel_map       bool (H, W): union of instance kernels.
    training_mask    bool (H, W): 0 where segmentation supervision is suppressed.
    shift_field      float32 (H, W, 2): (dx, dy) to the nearest kernel-reference
                     cell of the owning instance; (0, 0) on background, kernels,
                     and unsupervised (ignored / vanished-kernel) regions.
    instance_id      int32 (H, W): pixel ownership, smaller instance wins overlaps.
    kernel_id        int32 (H, W): kernel pixel ownership (subset of instance_id).
    reference_mask   bool (H, W): union of kernel-reference rings (shift targets).
    """

    height: int
    width: int
    kernel_map: np.ndarray
    training_mask: np.ndarray
    shift_field: np.ndarray
    instance_id: np.ndarray
    kernel_id: np.ndarray
    reference_mask: np.ndarray

    def supervised_ids(self):
        """Instance ids that own at least one kernel pixel."""
        ids = np.unique(self.kernel_id)
        return ids[ids > 0]


def _bbox_slices(poly, height, width, margin=2):
    xmin, ymin, xmax, ymax = poly.bounds
    x0 = max(int(np.floor(xmin)) - margin, 0)
    y0 = max(int(np.floor(ymin)) - margin, 0)
    x1 = min(int(np.ceil(xmax)) + margin, width)
    y1 = min(int(np.ceil(ymax)) + margin, height)
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)
    return slice(y0, y1), slice(x0, x1)


def _local_raster(poly, rows, cols):
    shifted = poly.points - np.array([cols.start, rows.start], dtype=np.float64)
    return _fill_ring(shifted, rows.stop - rows.start, cols.stop - cols.start)


def _nearest_reference_shifts(pixels, references):
    """Shift (dy, dx) from each pixel to its nearest reference cell.

    Distances are exact (integer coordinates in float64); ties resolve to the
    reference that comes first in raster order because argmin keeps the first
    minimum and ``references`` is raster-ordered.
    """
    out = np.empty_like(pixels)
    refs = references.astype(np.float64)
    block = max(1, _DIST_BLOCK // max(len(references), 1))
    for start in range(0, len(pixels), block):
        chunk = pixels[start:start + block]
        d2 = cdist(chunk.astype(np.float64), refs, "sqeuclidean")
        out[start:start + block] = references[np.argmin(d2, axis=1)] - chunk
    return out


def generate_labels(annotations, height, width, shrink_ratio=0.7):
    """Encode annotations into a :class:`LabelBundle`.

    Pipeline per instance: rasterize the region (overlaps go to the smaller
    instance), shrink the polygon to get the kernel, erode the kernel twice and
    keep the ring between the two erosions as the shift target (falling back to
    the whole kernel when one erosion empties it), then point every off-kernel
    pixel of the instance at its nearest target cell.  Instances that are
    ignored or whose kernel vanishes contribute no kernel and are masked out of
    training entirely.
    """
    if height <= 0 or width <= 0:
        raise ValueError("grid dimensions must be positive")
    ids = [ann.id for ann in annotations]
    if len(set(ids)) != len(ids):
        raise ValueError("annotation ids must be unique")
    if any(i < 1 for i in ids):
        raise ValueError("annotation ids must be >= 1")
    for ann in annotations:
        ann.polygon.validate()

    instance_id = np.zeros((height, width), dtype=np.int32)
    kernel_id = np.zeros((height, width), dtype=np.int32)
    kernel_map = np.zeros((height, width), dtype=bool)
    reference_mask = np.zeros((height, width), dtype=bool)
    shift_field = np.zeros((height, width, 2), dtype=np.float32)
    training_mask = np.ones((height, width), dtype=bool)

    boxes = {}
    rasters = {}
    for ann in annotations:
        rows, cols = _bbox_slices(ann.polygon, height, width)
        boxes[ann.id] = (rows, cols)
        rasters[ann.id] = _local_raster(ann.polygon, rows, cols)

    # Paint large regions first so overlap pixels end up owned by the smaller
    # instance (stable order: equal areas resolve to the later annotation).
    for ann in sorted(annotations, key=lambda a: -a.polygon.area):
        rows, cols = boxes[ann.id]
        view = instance_id[rows, cols]
        view[rasters[ann.id]] = ann.id

    for ann in annotations:
        if ann.ignore:
            continue
        shrunk = shrink_polygon(ann.polygon, shrink_ratio)
        if shrunk is None:
            continue  # kernel vanished: instance stays unsupervised
        rows, cols = boxes[ann.id]
        owned = instance_id[rows, cols] == ann.id
        kernel_local = _local_raster(shrunk, rows, cols) & owned
        if not kernel_local.any():
            continue
        kernel_id[rows, cols][kernel_local] = ann.id
        kernel_map[rows, cols] |= kernel_local

        eroded = erode(kernel_local)
        if eroded.any():
            reference_local = eroded ^ erode(eroded)
        else:
            reference_local = kernel_local
        reference_mask[rows, cols] |= reference_local

        region_local = owned & ~kernel_local
        if not region_local.any():
            continue
        pixels = np.argwhere(region_local)
        references = np.argwhere(reference_local)
        deltas = _nearest_reference_shifts(pixels, references)
        gy = pixels[:, 0] + rows.start
        gx = pixels[:, 1] + cols.start
        shift_field[gy, gx, 0] = deltas[:, 1]
        shift_field[gy, gx, 1] = deltas[:, 0]

    # Off-kernel instance pixels (including those of ignored or vanished-kernel
    # instances) carry no segmentation supervision.
    training_mask[(instance_id > 0) & (kernel_id == 0)] = False
    for ann in annotations:
        if ann.ignore:
            rows, cols = boxes[ann.id]
            training_mask[rows, cols][rasters[ann.id]] = False

    return LabelBundle(
        height=height,
        width=width,
        kernel_map=kernel_map,
        training_mask=training_mask,
        shift_field=shift_field,
        instance_id=instance_id,
        kernel_id=kernel_id,
        reference_mask=reference_mask,
    )


def shift_targets(shift_field):
    """Rounded landing cell (tx, ty) of every pixel under a shift field."""
    h, w = shift_field.shape[:2]
    tx = round_half_from_zero(np.arange(w)[None, :] + shift_field[:, :, 0].astype(np.float64))
    ty = round_half_from_zero(np.arange(h)[:, None] + shift_field[:, :, 1].astype(np.float64))
    return tx, ty


def compute_regression_mask(pred_shift, bundle):
    """Relaxation mask for a predicted shift field.

    A pixel needs no regression gradient (mask 0) when its rounded landing cell
    is already in the right region: inside the owning instance's kernel for
    supervised foreground pixels, outside every kernel for background pixels.
    Targets outside the grid count as non-kernel.  Pixels of ignored or
    vanished-kernel instances are always 0.
    """
    if pred_shift.shape != (bundle.height, bundle.width, 2):
        raise ShapeMismatch(
            f"shift field {pred_shift.shape} does not match "
            f"{(bundle.height, bundle.width, 2)}"
        )
    h, w = bundle.height, bundle.width
    tx, ty = shift_targets(pred_shift)
    valid = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    target_kernel = np.zeros((h, w), dtype=np.int32)
    target_kernel[valid] = bundle.kernel_id[ty[valid], tx[valid]]

    max_id = int(bundle.instance_id.max())
    has_kernel = np.zeros(max_id + 1, dtype=bool)
    kernel_ids = np.unique(bundle.kernel_id)
    has_kernel[kernel_ids[kernel_ids > 0]] = True

    supervised = (bundle.instance_id > 0) & has_kernel[bundle.instance_id]
    background = bundle.instance_id == 0

    mask = np.zeros((h, w), dtype=bool)
    mask[supervised] = target_kernel[supervised] != bundle.instance_id[supervised]
    mask[background] = target_kernel[background] > 0
    return mask

"""Perturbation robustness studies and decode throughput benchmarking."""

import time
from dataclasses import dataclass

import numpy as np

from .decoder import DecodeConfig, PredictionMaps, decode

PERTURB_MODES = ("gaussian_noise", "retarget_in_kernel", "retarget_uniform")


@dataclass
class PerturbSpec:
    """How to derive prediction maps from a label bundle.

    gaussian_noise      add N(0, magnitude^2) per shift component
    retarget_in_kernel  re-aim every instance pixel at a uniformly random pixel
                        of its own kernel (magnitude unused)
    retarget_uniform    add U(-magnitude, magnitude) per shift component
    """

    mode: str
    magnitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in PERTURB_MODES:
            raise ValueError(f"mode must be one of {PERTURB_MODES}")
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")


@dataclass
class BenchReport:
    height: int
    width: int
    instances: int
    repetitions: int
    workers: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    pixels_per_second: float

    def as_dict(self):
        return dict(self.__dict__)


def _rng(seed):
    # Counter-based generator: identical streams for identical seeds.
    return np.random.Generator(np.random.Philox(seed))


def perturb(bundle, spec):
    """Build prediction maps from ground truth, perturbing the shift field.

    The probability map is the kernel map as {0, 1} floats.  Draw order is
    fixed (single vectorized draw, or ascending instance id then raster order),
    so outputs are byte-identical for identical (bundle, spec).
    """
    rng = _rng(spec.seed)
    prob = bundle.kernel_map.astype(np.float32)
    shift = bundle.shift_field.copy()

    if spec.mode == "gaussian_noise":
        shift = shift + rng.normal(0.0, spec.magnitude, size=shift.shape).astype(np.float32)
    elif spec.mode == "retarget_uniform":
        noise = rng.uniform(-spec.magnitude, spec.magnitude, size=shift.shape)
        shift = shift + noise.astype(np.float32)
    else:
        for inst in bundle.supervised_ids():
            kernel_cells = np.argwhere(bundle.kernel_id == inst)
            pixels = np.argwhere(bundle.instance_id == inst)
            picks = kernel_cells[rng.integers(0, len(kernel_cells), size=len(pixels))]
            delta = picks - pixels
            shift[pixels[:, 0], pixels[:, 1], 0] = delta[:, 1]
            shift[pixels[:, 0], pixels[:, 1], 1] = delta[:, 0]
    return PredictionMaps(prob_map=prob, shift_field=shift.astype(np.float32))


def _mean_instance_iou(bundle, instances):
    gt_ids = bundle.supervised_ids()
    if len(gt_ids) == 0:
        return 1.0
    scores = []
    for inst in gt_ids:
        gt_mask = bundle.instance_id == inst
        gt_area = int(gt_mask.sum())
        best = 0.0
        for dec in instances:
            inter = int(np.sum(gt_mask & dec.pixel_mask))
            if inter == 0:
                continue
            union = gt_area + int(dec.pixel_mask.sum()) - inter
            best = max(best, inter / union)
        scores.append(best)
    return float(np.mean(scores))


def robustness_curve(bundle, mode, magnitudes, seed=0, cfg=None):
    """Mean decoded-vs-truth pixel IoU for each perturbation magnitude.

    Each ground-truth instance is scored against its best-overlapping decoded
    instance; magnitudes must be sorted ascending.
    """
    mags = list(magnitudes)
    if any(b < a for a, b in zip(mags, mags[1:])):
        raise ValueError("magnitudes must be sorted ascending")
    cfg = cfg or DecodeConfig()
    curve = []
    for magnitude in mags:
        pred = perturb(bundle, PerturbSpec(mode=mode, magnitude=magnitude, seed=seed))
        instances = decode(pred, cfg)
        curve.append((float(magnitude), _mean_instance_iou(bundle, instances)))
    return curve


def bench_decode(pred, cfg=None, repetitions=10, workers=1):
    """Wall-clock decode timing; one discarded warmup run, I/O excluded."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    cfg = cfg or DecodeConfig()
    instances = decode(pred, cfg, workers=workers)
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        decode(pred, cfg, workers=workers)
        times.append(time.perf_counter() - start)
    times_ms = np.asarray(times) * 1e3
    height, width = np.asarray(pred.prob_map).shape
    mean_s = float(np.mean(times))
    return BenchReport(
        height=height,
        width=width,
        instances=len(instances),
        repetitions=repetitions,
        workers=workers,
        mean_ms=float(np.mean(times_ms)),
        median_ms=float(np.median(times_ms)),
        p95_ms=float(np.percentile(times_ms, 95)),
        pixels_per_second=height * width / mean_s,
    )

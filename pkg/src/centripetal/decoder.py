"""Inference post-processing: binarize the probability map, label kernel
components, aggregate every pixel in one step through its shift vector, and
emit instance masks, contours, and proposal rectangles.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NonFiniteShift, ShapeMismatch
from .geometry import (
    Polygon,
    _round_half_inplace,
    connected_components,
    extract_contour,
    min_area_rect,
)


@dataclass
class PredictionMaps:
    """Network-style outputs: probability map (H, W) in [0, 1] and shift field
    (H, W, 2) storing (dx, dy) in pixels."""

    prob_map: np.ndarray
    shift_field: np.ndarray


@dataclass
class DecodeConfig:
    binarize_threshold: float = 0.2
    connectivity: int = 8
    min_kernel_area: int = 2
    min_instance_area: int = 16
    score_threshold: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize threshold must be in (0, 1)")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.min_kernel_area < 0 or self.min_instance_area < 0:
            raise ValueError("area filters must be >= 0")


@dataclass
class DecodedInstance:
    """One reconstructed text instance.

    score is the mean probability over the instance's kernel pixels; proposal
    is filled by :func:`to_proposals`.
    """

    kernel_id: int
    pixel_mask: np.ndarray
    contour: Polygon
    score: float
    proposal: tuple = None


def binarize(prob_map, threshold=0.2):
    """Bit set iff probability is strictly above the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    return np.asarray(prob_map) > threshold


def _landing_labels(labels, shift_field, row_lo, row_hi):
    """Kernel label each pixel in the row band lands on (0 when it leaves the
    grid or lands on background)."""
    h, w = labels.shape
    band = shift_field[row_lo:row_hi]
    tx = _round_half_inplace(np.arange(w, dtype=np.float64)[None, :] + band[:, :, 0])
    ty = _round_half_inplace(
        np.arange(row_lo, row_hi, dtype=np.float64)[:, None] + band[:, :, 1]
    )
    inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    out = labels[np.clip(ty, 0, h - 1), np.clip(tx, 0, w - 1)]
    out[~inside] = 0
    return out


@lru_cache(maxsize=8)
def _pool(workers):
    return ThreadPoolExecutor(max_workers=workers)


def _aggregate(labels, shift_field, workers):
    h = labels.shape[0]
    if workers <= 1 or h < 2 * workers:
        return _landing_labels(labels, shift_field, 0, h)
    bounds = np.linspace(0, h, workers + 1, dtype=int)
    bands = list(
        _pool(workers).map(
            lambda span: _landing_labels(labels, shift_field, span[0], span[1]),
            zip(bounds[:-1], bounds[1:]),
        )
    )
    return np.concatenate(bands, axis=0)


def _instance_contour(ys, xs):
    """Outer contour of the largest 8-connected piece of the pixel set."""
    y0, x0 = int(ys.min()), int(xs.min())
    local = np.zeros((int(ys.max()) - y0 + 1, int(xs.max()) - x0 + 1), dtype=bool)
    local[ys - y0, xs - x0] = True
    pieces = connected_components(local, 8)
    if pieces.max() > 1:
        areas = np.bincount(pieces.ravel())
        areas[0] = 0
        local = pieces == int(np.argmax(areas))
    return extract_contour(local).translated(x0, y0)


def decode(pred, cfg=None, workers=1):
    """Reconstruct text instances from prediction maps.

    Kernels are the connected components of the binarized probability map
    (small ones dropped); every pixel then joins the component its rounded
    shift target lands on, or is discarded when the target is background or
    off-grid.  The per-pixel assignment depends only on the pixel itself, so
    results are independent of processing order and of ``workers``.
    """
    cfg = cfg or DecodeConfig()
    prob = np.asarray(pred.prob_map)
    shift = np.asarray(pred.shift_field)
    if prob.ndim != 2 or shift.shape != prob.shape + (2,):
        raise ShapeMismatch(
            f"probability map {prob.shape} and shift field {shift.shape} disagree"
        )
    if not np.isfinite(shift).all():
        raise NonFiniteShift("shift field contains NaN or Inf")

    labels = connected_components(binarize(prob, cfg.binarize_threshold), cfg.connectivity)
    counts = np.bincount(labels.ravel())
    kept = [i for i in range(1, len(counts)) if counts[i] >= cfg.min_kernel_area]
    if not kept:
        return []
    remap = np.zeros(len(counts), dtype=np.int32)
    remap[kept] = np.arange(1, len(kept) + 1, dtype=np.int32)
    labels = remap[labels]
    num = len(kept)

    assigned = _aggregate(labels, shift, workers)

    flat_labels = labels.ravel()
    kernel_sizes = np.bincount(flat_labels, minlength=num + 1)
    kernel_prob = np.bincount(flat_labels, weights=prob.ravel(), minlength=num + 1)

    # Group member pixels by instance in one pass instead of one full-grid
    # equality scan per instance.
    h, w = prob.shape
    member_idx = np.flatnonzero(assigned.ravel())
    member_ids = assigned.ravel()[member_idx]
    order = np.argsort(member_ids, kind="stable")
    member_idx = member_idx[order]
    splits = np.searchsorted(member_ids[order], np.arange(1, num + 2))

    instances = []
    for cid in range(1, num + 1):
        lo, hi = splits[cid - 1], splits[cid]
        if hi - lo < cfg.min_instance_area:
            continue
        score = float(kernel_prob[cid] / kernel_sizes[cid])
        if score < cfg.score_threshold:
            continue
        flat = member_idx[lo:hi]
        pixel_mask = np.zeros(h * w, dtype=bool)
        pixel_mask[flat] = True
        ys, xs = np.divmod(flat, w)
        instances.append(
            DecodedInstance(
                kernel_id=cid,
                pixel_mask=pixel_mask.reshape(h, w),
                contour=_instance_contour(ys, xs),
                score=score,
            )
        )
    return instances


def to_proposals(instances):
    """Convert decoded instances to (min-area rectangle, mask, score) proposals."""
    proposals = []
    for inst in instances:
        rect = min_area_rect(inst.contour.points)
        proposals.append((rect, inst.pixel_mask, inst.score))
    return proposals

"""Training objective: masked dice segmentation loss with online hard example
mining, plus the relaxation-masked smooth-L1 regression loss, with analytic
gradients with respect to the predicted maps.

All selection masks (training mask, mined negatives, relaxation mask) are
treated as constants: no gradient flows through them.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeMismatch
from .encoder import compute_regression_mask


@dataclass
class LossConfig:
    lam: float = 0.05            # weight of the regression term
    ohem_ratio: float = 3.0      # mined negatives per positive
    smooth_l1_beta: float = 1.0  # quadratic-to-linear crossover
    eps: float = 1e-6

    def __post_init__(self):
        if self.lam <= 0 or self.ohem_ratio <= 0 or self.smooth_l1_beta <= 0:
            raise ValueError("lam, ohem_ratio and smooth_l1_beta must be positive")


@dataclass
class LossReport:
    """Scalar losses plus gradients of the total with respect to the inputs."""

    seg_loss: float
    reg_loss: float
    total: float
    grad_prob: np.ndarray   # (H, W) float64
    grad_shift: np.ndarray  # (H, W, 2) float64
    ohem_mask: np.ndarray   # (H, W) bool

    def scalars(self):
        return {"seg_loss": self.seg_loss, "reg_loss": self.reg_loss, "total": self.total}


def _check_same_shape(*arrays):
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"shape mismatch: {sorted(shapes)}")


def ohem_select(pred_prob, gt_kernel, training_mask, ratio=3.0):
    """Select all positives plus the hardest negatives at a fixed ratio.

    Negatives are ranked by predicted probability; ties at the cut score keep
    raster order.  With no positives the whole training mask is returned.
    """
    pred_prob = np.asarray(pred_prob)
    gt_kernel = np.asarray(gt_kernel, dtype=bool)
    training_mask = np.asarray(training_mask, dtype=bool)
    _check_same_shape(pred_prob, gt_kernel, training_mask)

    positives = gt_kernel & training_mask
    negatives = ~gt_kernel & training_mask
    num_pos = int(positives.sum())
    if num_pos == 0:
        return training_mask.copy()
    keep = min(int(ratio * num_pos), int(negatives.sum()))
    selected = positives.copy()
    if keep > 0:
        neg_idx = np.flatnonzero(negatives.ravel())
        order = np.argsort(-pred_prob.ravel()[neg_idx], kind="stable")
        selected.ravel()[neg_idx[order[:keep]]] = True
    return selected


def dice_loss(pred_prob, gt_kernel, effective_mask, eps=1e-6):
    """Masked dice loss and its gradient with respect to the prediction.

    With p = pred * mask and g = gt * mask:
    loss = 1 - (2*sum(p*g) + eps) / (sum(p^2) + sum(g^2) + eps).
    """
    pred_prob = np.asarray(pred_prob, dtype=np.float64)
    gt = np.asarray(gt_kernel, dtype=np.float64)
    mask = np.asarray(effective_mask, dtype=np.float64)
    _check_same_shape(pred_prob, gt, mask)
    if pred_prob.size and not (
        np.isfinite(pred_prob).all() and 0.0 <= pred_prob.min() and pred_prob.max() <= 1.0
    ):
        raise DomainError("predicted probabilities must lie in [0, 1]")

    p = pred_prob * mask
    g = gt * mask
    numer = 2.0 * float(np.sum(p * g)) + eps
    denom = float(np.sum(p * p) + np.sum(g * g)) + eps
    loss = 1.0 - numer / denom
    grad = 2.0 * mask * (numer * p - denom * g) / (denom * denom)
    return loss, grad


def smooth_l1(diff, beta=1.0):
    """0.5*d^2/beta inside |d| < beta, |d| - 0.5*beta outside."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    d = np.abs(np.asarray(diff, dtype=np.float64))
    out = np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)
    if np.isscalar(diff) or getattr(diff, "ndim", 1) == 0:
        return float(out)
    return out


def _smooth_l1_grad(diff, beta):
    d = np.asarray(diff, dtype=np.float64)
    return np.where(np.abs(d) < beta, d / beta, np.sign(d))


def relaxed_l1_loss(pred_shift, bundle, regression_mask, cfg=None):
    """Smooth-L1 shift regression gated by the relaxation mask.

    The per-pixel term is the sum of the x and y component losses; the total is
    normalized by the mask population so image size does not change its scale.
    The mask is a constant: the gradient is zero wherever it is zero.
    """
    cfg = cfg or LossConfig()
    pred_shift = np.asarray(pred_shift)
    expected = (bundle.height, bundle.width, 2)
    if pred_shift.shape != expected:
        raise ShapeMismatch(f"shift field {pred_shift.shape}, expected {expected}")
    if regression_mask.shape != expected[:2]:
        raise ShapeMismatch(f"regression mask {regression_mask.shape}, expected {expected[:2]}")

    diff = pred_shift.astype(np.float64) - bundle.shift_field.astype(np.float64)
    per_pixel = smooth_l1(diff[:, :, 0], cfg.smooth_l1_beta) + smooth_l1(
        diff[:, :, 1], cfg.smooth_l1_beta
    )
    gate = regression_mask.astype(np.float64)
    denom = float(gate.sum()) + cfg.eps
    loss = float(np.sum(gate * per_pixel)) / denom
    grad = gate[:, :, None] * _smooth_l1_grad(diff, cfg.smooth_l1_beta) / denom
    return loss, grad


def total_loss(pred, bundle, cfg=None):
    """Compose the mined segmentation loss and the relaxed regression loss.

    total = seg + lam * reg; gradients are of the total, so the shift gradient
    carries the lam factor.
    """
    cfg = cfg or LossConfig()
    ohem_mask = ohem_select(
        pred.prob_map, bundle.kernel_map, bundle.training_mask, cfg.ohem_ratio
    )
    effective = bundle.training_mask & ohem_mask
    seg, grad_prob = dice_loss(pred.prob_map, bundle.kernel_map, effective, cfg.eps)
    regression_mask = compute_regression_mask(pred.shift_field, bundle)
    reg, grad_shift = relaxed_l1_loss(pred.shift_field, bundle, regression_mask, cfg)
    return LossReport(
        seg_loss=seg,
        reg_loss=reg,
        total=seg + cfg.lam * reg,
        grad_prob=grad_prob,
        grad_shift=cfg.lam * grad_shift,
        ohem_mask=ohem_mask,
    )

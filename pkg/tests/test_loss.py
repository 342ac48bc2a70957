import numpy as np
import pytest

from centripetal import (
    LossConfig,
    PredictionMaps,
    compute_regression_mask,
    dice_loss,
    ohem_select,
    relaxed_l1_loss,
    smooth_l1,
    total_loss,
)
from centripetal.errors import DomainError, ShapeMismatch

from conftest import encoded_scene, scene_rng


def ohem_oracle(pred, gt, training, ratio):
    """Full sort over (score desc, raster index asc)."""
    pos = gt & training
    neg = ~gt & training
    if pos.sum() == 0:
        return training.copy()
    k = min(int(ratio * pos.sum()), int(neg.sum()))
    scored = sorted(
        [(-pred.ravel()[i], i) for i in np.flatnonzero(neg.ravel())]
    )
    out = pos.copy()
    for _, i in scored[:k]:
        out.ravel()[i] = True
    return out


class TestOhem:
    def test_ratio_three(self):
        rng = scene_rng(1)
        gt = np.zeros((8, 13), dtype=bool)
        gt.ravel()[:4] = True  # 4 positives, 100 negatives
        pred = rng.random(gt.shape)
        selected = ohem_select(pred, gt, np.ones_like(gt), 3.0)
        assert selected.sum() == 4 + 12

    def test_capped_by_negatives(self):
        gt = np.zeros((3, 5), dtype=bool)
        gt.ravel()[:10] = True  # 10 positives, 5 negatives
        pred = np.linspace(0, 1, 15).reshape(3, 5)
        selected = ohem_select(pred, gt, np.ones_like(gt), 3.0)
        assert selected.all()

    def test_no_positives_returns_training_mask(self):
        rng = scene_rng(2)
        gt = np.zeros((6, 6), dtype=bool)
        training = rng.random(gt.shape) < 0.5
        assert np.array_equal(
            ohem_select(rng.random(gt.shape), gt, training, 3.0), training
        )

    def test_matches_sort_oracle(self):
        rng = scene_rng(3)
        for _ in range(10):
            gt = rng.random((16, 16)) < 0.15
            training = rng.random((16, 16)) < 0.9
            pred = rng.random((16, 16))
            assert np.array_equal(
                ohem_select(pred, gt, training, 3.0),
                ohem_oracle(pred, gt, training, 3.0),
            )

    def test_ties_break_in_raster_order(self):
        gt = np.zeros((1, 6), dtype=bool)
        gt[0, 5] = True  # one positive, five tied negatives
        pred = np.full((1, 6), 0.4)
        selected = ohem_select(pred, gt, np.ones_like(gt), 3.0)
        assert selected.tolist() == [[True, True, True, False, False, True]]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            ohem_select(np.zeros((2, 2)), np.zeros((3, 3), bool), np.ones((3, 3), bool))


class TestDice:
    def test_perfect_prediction(self):
        gt = np.zeros((10, 10), dtype=bool)
        gt[2:6, 3:8] = True
        loss, grad = dice_loss(gt.astype(float), gt, np.ones_like(gt))
        assert loss <= 1e-7
        assert grad.shape == (10, 10)

    def test_half_ones_closed_form(self):
        # pred 0.5 everywhere, gt half ones: 1 - 0.5N / (0.25N + 0.5N) = 1/3
        gt = np.zeros((4, 8), dtype=bool)
        gt[:, :4] = True
        pred = np.full((4, 8), 0.5)
        loss, _ = dice_loss(pred, gt, np.ones_like(gt))
        assert loss == pytest.approx(1.0 / 3.0, abs=1e-6)

    def test_empty_mask(self):
        loss, grad = dice_loss(np.full((5, 5), 0.7), np.ones((5, 5), bool),
                               np.zeros((5, 5), bool))
        assert loss == 0.0
        assert not grad.any()

    def test_domain_error(self):
        with pytest.raises(DomainError):
            dice_loss(np.full((2, 2), 1.2), np.ones((2, 2), bool), np.ones((2, 2), bool))

    def test_gradient_matches_finite_differences(self):
        rng = scene_rng(4)
        pred = rng.uniform(0.1, 0.9, (6, 7))
        gt = rng.random((6, 7)) < 0.4
        mask = rng.random((6, 7)) < 0.8
        _, grad = dice_loss(pred, gt, mask)
        step = 1e-6
        for y, x in [(0, 0), (2, 3), (5, 6), (4, 1)]:
            up, down = pred.copy(), pred.copy()
            up[y, x] += step
            down[y, x] -= step
            fd = (dice_loss(up, gt, mask)[0] - dice_loss(down, gt, mask)[0]) / (2 * step)
            assert grad[y, x] == pytest.approx(fd, abs=1e-6)

    def test_grad_zero_off_mask(self):
        rng = scene_rng(5)
        pred = rng.random((8, 8))
        gt = rng.random((8, 8)) < 0.5
        mask = rng.random((8, 8)) < 0.5
        _, grad = dice_loss(pred, gt, mask)
        assert not grad[~mask].any()


class TestSmoothL1:
    def test_scalar_values(self):
        assert smooth_l1(0.0) == 0.0
        assert smooth_l1(0.5) == 0.125
        assert smooth_l1(2.0) == 1.5
        assert smooth_l1(-2.0) == 1.5

    def test_beta(self):
        assert smooth_l1(0.5, beta=2.0) == pytest.approx(0.0625)
        assert smooth_l1(3.0, beta=2.0) == pytest.approx(2.0)
        with pytest.raises(ValueError):
            smooth_l1(1.0, beta=0.0)

    def test_array_form(self):
        out = smooth_l1(np.array([0.0, 0.5, 2.0]))
        assert np.allclose(out, [0.0, 0.125, 1.5])


class TestRelaxedL1:
    def test_ground_truth_is_free(self, small_scene):
        _, bundle = small_scene
        mask = compute_regression_mask(bundle.shift_field, bundle)
        loss, grad = relaxed_l1_loss(bundle.shift_field, bundle, mask)
        assert loss == 0.0
        assert not grad.any()

    def test_single_pixel_value(self, small_scene):
        _, bundle = small_scene
        pred = bundle.shift_field.copy()
        pred[10, 10, 0] += 0.5
        mask = np.zeros((bundle.height, bundle.width), dtype=bool)
        mask[10, 10] = True
        loss, grad = relaxed_l1_loss(pred, bundle, mask)
        assert loss == pytest.approx(0.125, abs=1e-5)
        assert grad[10, 10, 0] == pytest.approx(0.5, abs=1e-5)
        assert np.count_nonzero(grad) == 1

    def test_relaxed_correct_retargeting_is_free(self):
        rng = scene_rng(6)
        _, bundle = encoded_scene(21, height=128, width=128, max_instances=3)
        pred = bundle.shift_field.copy()
        for inst in bundle.supervised_ids():
            cells = np.argwhere(bundle.kernel_id == inst)
            pixels = np.argwhere(bundle.instance_id == inst)
            picks = cells[rng.integers(0, len(cells), len(pixels))]
            delta = picks - pixels
            pred[pixels[:, 0], pixels[:, 1], 0] = delta[:, 1]
            pred[pixels[:, 0], pixels[:, 1], 1] = delta[:, 0]
        assert not np.array_equal(pred, bundle.shift_field)
        mask = compute_regression_mask(pred, bundle)
        loss, _ = relaxed_l1_loss(pred, bundle, mask)
        assert loss == 0.0

    def test_nonnegative_and_zero_iff_gated_terms_vanish(self, small_scene):
        rng = scene_rng(7)
        _, bundle = small_scene
        pred = bundle.shift_field + rng.normal(0, 2, bundle.shift_field.shape).astype(
            np.float32
        )
        mask = compute_regression_mask(pred, bundle)
        loss, _ = relaxed_l1_loss(pred, bundle, mask)
        diff = pred.astype(np.float64) - bundle.shift_field.astype(np.float64)
        terms = smooth_l1(diff[:, :, 0]) + smooth_l1(diff[:, :, 1])
        assert loss >= 0.0
        assert (loss == 0.0) == (not (mask * terms).any())

    def test_relaxation_only_removes_terms(self, small_scene):
        # Unnormalized comparison: the relaxation mask is pointwise below the
        # supervised-universe mask, so the gated sum can only shrink.
        rng = scene_rng(8)
        _, bundle = small_scene
        pred = bundle.shift_field + rng.normal(0, 3, bundle.shift_field.shape).astype(
            np.float32
        )
        mask = compute_regression_mask(pred, bundle)
        diff = pred.astype(np.float64) - bundle.shift_field.astype(np.float64)
        terms = smooth_l1(diff[:, :, 0]) + smooth_l1(diff[:, :, 1])
        max_id = int(bundle.instance_id.max())
        has_kernel = np.zeros(max_id + 1, dtype=bool)
        ids = np.unique(bundle.kernel_id)
        has_kernel[ids[ids > 0]] = True
        supervised_universe = ~((bundle.instance_id > 0) & ~has_kernel[bundle.instance_id])
        assert not (mask & ~supervised_universe).any()
        assert (mask * terms).sum() <= (supervised_universe * terms).sum()

    def test_shape_mismatch(self, small_scene):
        _, bundle = small_scene
        with pytest.raises(ShapeMismatch):
            relaxed_l1_loss(np.zeros((3, 3, 2)), bundle,
                            np.zeros((bundle.height, bundle.width), bool))


class TestTotalLoss:
    def test_perfect_prediction(self, small_scene):
        _, bundle = small_scene
        pred = PredictionMaps(bundle.kernel_map.astype(np.float32), bundle.shift_field)
        report = total_loss(pred, bundle)
        assert report.total <= 1e-6
        assert report.total == report.seg_loss + 0.05 * report.reg_loss

    def test_lambda_linearity(self, small_scene):
        _, bundle = small_scene
        pred = PredictionMaps(
            bundle.kernel_map.astype(np.float32),
            np.zeros_like(bundle.shift_field),
        )
        r1 = total_loss(pred, bundle, LossConfig(lam=0.05))
        r2 = total_loss(pred, bundle, LossConfig(lam=0.10))
        assert r1.reg_loss > 0
        assert (r2.total - r2.seg_loss) == pytest.approx(
            2 * (r1.total - r1.seg_loss), rel=1e-12
        )

    def test_gradients_match_finite_differences(self, small_scene):
        rng = scene_rng(9)
        _, bundle = small_scene
        prob = np.clip(
            bundle.kernel_map * 0.7 + 0.15 + rng.uniform(-0.1, 0.1, bundle.kernel_map.shape),
            0.0, 1.0,
        ).astype(np.float32)
        shift = bundle.shift_field + rng.normal(0, 1.5, bundle.shift_field.shape).astype(
            np.float32
        )
        pred = PredictionMaps(prob, shift)
        cfg = LossConfig()
        report = total_loss(pred, bundle, cfg)

        # Masks are stop-gradient constants: freeze them for the oracle too.
        effective = bundle.training_mask & report.ohem_mask
        regression = compute_regression_mask(shift, bundle)
        step = 1e-4

        def total_frozen(prob64, shift64):
            seg, _ = dice_loss(prob64, bundle.kernel_map, effective, cfg.eps)
            reg, _ = relaxed_l1_loss(shift64, bundle, regression, cfg)
            return seg + cfg.lam * reg

        prob64 = prob.astype(np.float64)
        shift64 = shift.astype(np.float64)
        checked = 0
        for y, x in rng.integers(0, (bundle.height, bundle.width), size=(60, 2)):
            up, down = prob64.copy(), prob64.copy()
            up[y, x] += step
            down[y, x] -= step
            fd = (total_frozen(up, shift64) - total_frozen(down, shift64)) / (2 * step)
            got = report.grad_prob[y, x]
            assert abs(got - fd) <= 1e-4 * max(abs(got), abs(fd), 1e-7)
            checked += 1

        for y, x, c in rng.integers(0, (bundle.height, bundle.width, 2), size=(80, 3)):
            diff = abs(float(shift64[y, x, c] - bundle.shift_field[y, x, c]))
            if abs(diff - cfg.smooth_l1_beta) < 10 * step:
                continue  # smooth-L1 kink
            up, down = shift64.copy(), shift64.copy()
            up[y, x, c] += step
            down[y, x, c] -= step
            fd = (total_frozen(prob64, up) - total_frozen(prob64, down)) / (2 * step)
            got = report.grad_shift[y, x, c]
            assert abs(got - fd) <= 1e-4 * max(abs(got), abs(fd), 1e-7)
            checked += 1
        assert checked > 100

    def test_grad_support(self, small_scene):
        rng = scene_rng(10)
        _, bundle = small_scene
        prob = np.clip(rng.random(bundle.kernel_map.shape), 0, 1).astype(np.float32)
        shift = (bundle.shift_field + rng.normal(0, 2, bundle.shift_field.shape)).astype(np.float32)
        report = total_loss(PredictionMaps(prob, shift), bundle)
        effective = bundle.training_mask & report.ohem_mask
        regression = compute_regression_mask(shift, bundle)
        assert not report.grad_prob[~effective].any()
        assert not report.grad_shift[~regression].any()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LossConfig(lam=0.0)
        with pytest.raises(ValueError):
            LossConfig(ohem_ratio=-1)

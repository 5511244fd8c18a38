import math

import numpy as np
import pytest

from anglekit import (AnchorBox, AnglePrediction, AssignedSample, AxisAlignedBox, BoxDeltas,
                      CodecConfig, InvalidInputError, LossWeights, Method, OrientedBox,
                      aabb_giou, cross_entropy, cross_entropy_grad, decode_box_deltas, encode,
                      encode_box_deltas, finite_diff_grad_check, focal_loss, focal_loss_grad,
                      giou_location_loss, giou_location_loss_grad, ifl, ifl_grad, longside,
                      mse, mse_grad, multitask_loss, rotated_iou, run_gradient_checks,
                      smooth_l1, smooth_l1_grad)


class TestBoxDeltas:
    ANCHOR = AnchorBox(10.0, 20.0, 4.0, 2.0)

    def test_identity(self):
        deltas = encode_box_deltas(AxisAlignedBox(10.0, 20.0, 4.0, 2.0), self.ANCHOR)
        assert (deltas.dx, deltas.dy, deltas.dw, deltas.dh) == (0.0, 0.0, 0.0, 0.0)

    def test_log_scale(self):
        deltas = encode_box_deltas(AxisAlignedBox(10.0, 20.0, 4.0 * math.e, 2.0), self.ANCHOR)
        assert deltas.dw == pytest.approx(1.0, abs=1e-12)

    def test_accepts_oriented_boxes(self):
        deltas = encode_box_deltas(OrientedBox(11.0, 21.0, 4.0, 2.0, 30.0), self.ANCHOR)
        assert deltas.dx == pytest.approx(0.25)
        assert deltas.dy == pytest.approx(0.5)

    def test_random_roundtrips(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            anchor = AnchorBox(*rng.uniform(-5, 5, size=2), *rng.uniform(0.5, 6, size=2))
            box = AxisAlignedBox(*rng.uniform(-5, 5, size=2), *rng.uniform(0.5, 6, size=2))
            back = decode_box_deltas(encode_box_deltas(box, anchor), anchor)
            assert back.cx == pytest.approx(box.cx, abs=1e-10)
            assert back.cy == pytest.approx(box.cy, abs=1e-10)
            assert back.w == pytest.approx(box.w, abs=1e-10)
            assert back.h == pytest.approx(box.h, abs=1e-10)

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidInputError):
            BoxDeltas(0.0, 0.0, math.inf, 0.0)


class TestSmoothL1:
    def test_zero_at_target(self):
        assert smooth_l1(1.7, 1.7) == 0.0

    def test_boundary_value(self):
        assert smooth_l1(1.0, 0.0, beta=1.0) == pytest.approx(0.5)

    def test_linear_branch(self):
        assert smooth_l1(3.0, 0.0, beta=1.0) == pytest.approx(2.5)

    def test_continuous_and_c1_at_kink(self):
        beta = 1.0
        eps = 1e-9
        below = smooth_l1(beta - eps, 0.0, beta)
        above = smooth_l1(beta + eps, 0.0, beta)
        assert abs(above - below) < 1e-8
        g_below = smooth_l1_grad(beta - eps, 0.0, beta)
        g_above = smooth_l1_grad(beta + eps, 0.0, beta)
        assert g_below == pytest.approx(g_above, abs=1e-8)

    def test_rejects_bad_beta(self):
        with pytest.raises(InvalidInputError):
            smooth_l1(1.0, 0.0, beta=0.0)


class TestIfl:
    def test_weight_one_at_perfect_iou(self):
        assert ifl(2.0, 0.5, 1.0) == smooth_l1(2.0, 0.5)

    def test_weight_two_at_inverse_e(self):
        assert ifl(2.0, 0.5, math.exp(-1)) == pytest.approx(2.0 * smooth_l1(2.0, 0.5), rel=1e-12)

    def test_zero_base_loss(self):
        assert ifl(0.7, 0.7, 0.3) == 0.0

    def test_weight_strictly_decreasing_in_iou(self):
        values = [ifl(1.5, 0.0, iou) for iou in np.linspace(0.01, 1.0, 200)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_never_below_smooth_l1(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            p, t = rng.uniform(-4, 4, size=2)
            iou = rng.uniform(1e-6, 1.0)
            assert ifl(p, t, iou) >= smooth_l1(p, t) - 1e-15

    def test_rejects_out_of_range_iou(self):
        for bad in (0.0, -0.1, 1.0001, math.nan):
            with pytest.raises(InvalidInputError):
                ifl(1.0, 0.0, bad)


class TestMse:
    def test_values(self):
        assert mse(1.3, 1.3) == 0.0
        assert mse(0.0, 3.0) == 9.0

    def test_dual_evaluation(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            p, t = rng.uniform(-10, 10, size=2)
            assert mse(p, t) == pytest.approx(p * p - 2 * p * t + t * t, abs=1e-12)


class TestFocalLoss:
    def test_perfect_prediction_limit(self):
        assert focal_loss(100.0, 1) == pytest.approx(0.0, abs=1e-30)
        assert focal_loss(-100.0, 0) == pytest.approx(0.0, abs=1e-30)

    def test_reduces_to_weighted_bce(self):
        assert focal_loss(0.0, 1, alpha=0.5, gamma=0.0) == pytest.approx(0.5 * math.log(2))

    def test_independent_evaluation(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            logit = float(rng.uniform(-6, 6))
            label = int(rng.integers(0, 2))
            p = 1.0 / (1.0 + math.exp(-logit))
            pt = p if label == 1 else 1.0 - p
            alpha_t = 0.25 if label == 1 else 0.75
            expected = -alpha_t * (1.0 - pt) ** 2.0 * math.log(pt)
            assert focal_loss(logit, label) == pytest.approx(expected, abs=1e-10)

    def test_rejects_bad_label(self):
        with pytest.raises(InvalidInputError):
            focal_loss(0.0, 2)


class TestCrossEntropy:
    def test_uniform_logits(self):
        assert cross_entropy([0.0] * 7, 3) == pytest.approx(math.log(7), abs=1e-12)

    def test_dominant_logit_limit(self):
        assert cross_entropy([200.0, 0.0, 0.0], 0) == pytest.approx(0.0, abs=1e-12)

    def test_independent_softmax_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            logits = rng.normal(0, 2, size=6)
            idx = int(rng.integers(0, 6))
            probs = np.exp(logits) / np.sum(np.exp(logits))
            assert cross_entropy(logits, idx) == pytest.approx(-math.log(probs[idx]), abs=1e-10)
            assert cross_entropy(logits, idx) >= 0.0

    def test_index_out_of_range(self):
        with pytest.raises(InvalidInputError):
            cross_entropy([0.0, 1.0], 2)


CODEC = CodecConfig(Method.MGAR, 3)


def perfect_positive_sample(theta=73.5):
    gt = OrientedBox(10.0, 20.0, 6.0, 2.0, theta)
    anchor = AnchorBox(gt.cx, gt.cy, gt.w, gt.h)
    target = encode(gt.theta, CODEC)
    return AssignedSample(
        objectness=1,
        anchor=anchor,
        pred_deltas=encode_box_deltas(gt, anchor),
        pred_confidence=12.0,
        pred_category_logits=np.array([900.0, -900.0]),
        pred_angle=AnglePrediction(target.class_vector * 1000.0, target.residual_target),
        gt_box=gt,
        gt_category=0,
    )


def background_sample(conf_logit=-3.0):
    return AssignedSample(
        objectness=0,
        anchor=AnchorBox(0.0, 0.0, 4.0, 2.0),
        pred_deltas=BoxDeltas(0.0, 0.0, 0.0, 0.0),
        pred_confidence=conf_logit,
        pred_category_logits=np.array([0.0, 0.0]),
        pred_angle=AnglePrediction(np.zeros(3), 0.0),
    )


def noisy_positive_sample(rng):
    gt = OrientedBox(*rng.uniform(-3, 3, size=2), 5.0, 2.0, float(rng.uniform(0, 180)))
    anchor = AnchorBox(gt.cx + rng.uniform(-1, 1), gt.cy + rng.uniform(-1, 1), 4.5, 2.5)
    target = encode(gt.theta, CODEC)
    return AssignedSample(
        objectness=1,
        anchor=anchor,
        pred_deltas=BoxDeltas(*rng.normal(0, 0.2, size=4)),
        pred_confidence=float(rng.normal(0, 2)),
        pred_category_logits=rng.normal(0, 1, size=4),
        pred_angle=AnglePrediction(rng.normal(0, 1, size=3),
                                   target.residual_target + float(rng.normal(0, 0.5))),
        gt_box=gt,
        gt_category=int(rng.integers(0, 4)),
    )


class TestMultitaskLoss:
    WEIGHTS = LossWeights()

    def test_default_weights_match_training_setup(self):
        w = LossWeights()
        assert (w.location, w.confidence, w.category, w.angle_class, w.angle_reg) == \
            (2.0, 2.0, 5.0, 2.0, 0.5)

    def test_all_background_gates_everything_but_confidence(self):
        samples = [background_sample(-1.0), background_sample(2.0), background_sample(0.5)]
        breakdown = multitask_loss(samples, self.WEIGHTS, CODEC)
        assert breakdown.location == 0.0
        assert breakdown.category == 0.0
        assert breakdown.angle_class == 0.0
        assert breakdown.angle_reg == 0.0
        assert breakdown.confidence > 0.0
        assert breakdown.total == pytest.approx(2.0 * breakdown.confidence, abs=1e-15)

    def test_single_perfect_positive(self):
        breakdown = multitask_loss([perfect_positive_sample()], self.WEIGHTS, CODEC)
        assert breakdown.location == pytest.approx(0.0, abs=1e-12)
        assert breakdown.category == pytest.approx(0.0, abs=1e-12)
        assert breakdown.angle_class == pytest.approx(0.0, abs=1e-12)
        assert breakdown.angle_reg == pytest.approx(0.0, abs=1e-12)
        assert breakdown.total == pytest.approx(2.0 * breakdown.confidence, abs=1e-12)

    def test_four_sample_fixture_matches_hand_assembly(self):
        rng = np.random.default_rng(21)
        samples = [noisy_positive_sample(rng), background_sample(1.0),
                   noisy_positive_sample(rng), background_sample(-2.0)]
        breakdown = multitask_loss(samples, self.WEIGHTS, CODEC)

        n = len(samples)
        conf = sum(focal_loss(s.pred_confidence, s.objectness) for s in samples) / n
        loc = cat = ang_c = ang_r = 0.0
        for s in samples:
            if not s.objectness:
                continue
            pred_box = decode_box_deltas(s.pred_deltas, s.anchor)
            loc += 1.0 - aabb_giou(
                pred_box, AxisAlignedBox(s.gt_box.cx, s.gt_box.cy, s.gt_box.w, s.gt_box.h))
            cat += cross_entropy(s.pred_category_logits, s.gt_category)
            target = encode(s.gt_box.theta, CODEC)
            ang_c += cross_entropy(s.pred_angle.class_logits, target.class_index)
            theta = (60.0 * int(np.argmax(s.pred_angle.class_logits))
                     + s.pred_angle.regression_output ** 2) % 180.0
            pred_obb = longside(pred_box.cx, pred_box.cy, pred_box.w, pred_box.h, theta)
            iou = min(max(rotated_iou(pred_obb, s.gt_box), 1e-6), 1.0)
            ang_r += smooth_l1(s.pred_angle.regression_output, target.residual_target) \
                * (abs(-math.log(iou)) + 1.0)
        expected_total = (2.0 * loc + 2.0 * conf * n + 5.0 * cat + 2.0 * ang_c + 0.5 * ang_r) / n

        assert breakdown.location == pytest.approx(loc / n, abs=1e-12)
        assert breakdown.confidence == pytest.approx(conf, abs=1e-12)
        assert breakdown.category == pytest.approx(cat / n, abs=1e-12)
        assert breakdown.angle_class == pytest.approx(ang_c / n, abs=1e-12)
        assert breakdown.angle_reg == pytest.approx(ang_r / n, abs=1e-12)
        assert breakdown.total == pytest.approx(expected_total, abs=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(22)
        samples = [noisy_positive_sample(rng) for _ in range(6)] + \
                  [background_sample(float(rng.normal())) for _ in range(6)]
        base = multitask_loss(samples, self.WEIGHTS, CODEC)
        for seed in range(3):
            perm = list(np.random.default_rng(seed).permutation(len(samples)))
            shuffled = multitask_loss([samples[i] for i in perm], self.WEIGHTS, CODEC)
            assert shuffled.total == base.total
            assert shuffled.location == base.location

    def test_total_is_weighted_sum_of_terms(self):
        rng = np.random.default_rng(25)
        samples = [noisy_positive_sample(rng), background_sample(0.3)]
        weights = LossWeights(1.5, 0.5, 3.0, 2.5, 0.25)
        b = multitask_loss(samples, weights, CODEC)
        expected = (1.5 * b.location + 0.5 * b.confidence + 3.0 * b.category
                    + 2.5 * b.angle_class + 0.25 * b.angle_reg)
        assert b.total == pytest.approx(expected, abs=1e-12)
        for term in (b.location, b.confidence, b.category, b.angle_class, b.angle_reg):
            assert term >= 0.0

    def test_rejects_empty_and_dcl(self):
        with pytest.raises(InvalidInputError):
            multitask_loss([], self.WEIGHTS, CODEC)
        with pytest.raises(InvalidInputError):
            multitask_loss([background_sample()], self.WEIGHTS,
                           CodecConfig(Method.DCL_GRAY, 64))

    def test_foreground_requires_targets(self):
        with pytest.raises(InvalidInputError):
            AssignedSample(objectness=1, anchor=AnchorBox(0, 0, 1, 1),
                           pred_deltas=BoxDeltas(0, 0, 0, 0), pred_confidence=0.0,
                           pred_category_logits=np.zeros(2),
                           pred_angle=AnglePrediction(np.zeros(3), 0.0))


class TestFiniteDifference:
    def test_mse_quadratic_exactness(self):
        err = finite_diff_grad_check(
            lambda p: mse(p[0], 3.0), lambda p: [mse_grad(p[0], 3.0)], [0.0])
        assert mse_grad(0.0, 3.0) == -6.0
        assert err < 1e-6

    def test_smooth_l1_away_from_kink(self):
        for point in (0.3, 2.5, -0.7, -4.0):
            err = finite_diff_grad_check(
                lambda p: smooth_l1(p[0], 0.0), lambda p: [smooth_l1_grad(p[0], 0.0)], [point])
            assert err < 1e-4

    def test_ifl_fixed_iou(self):
        err = finite_diff_grad_check(
            lambda p: ifl(p[0], 1.0, 0.4), lambda p: [ifl_grad(p[0], 1.0, 0.4)], [1.6])
        assert err < 1e-4

    def test_focal(self):
        for label in (0, 1):
            err = finite_diff_grad_check(
                lambda p: focal_loss(p[0], label),
                lambda p: [focal_loss_grad(p[0], label)], [0.8])
            assert err < 1e-4

    def test_cross_entropy_vector_gradient(self):
        logits = np.array([0.2, -1.0, 0.7, 1.5])
        err = finite_diff_grad_check(
            lambda p: cross_entropy(p, 2), lambda p: cross_entropy_grad(p, 2), logits)
        assert err < 1e-4

    def test_giou_location(self):
        pred = np.array([0.2, -0.1, 2.0, 1.5])
        target = np.array([0.0, 0.0, 1.8, 1.6])
        err = finite_diff_grad_check(
            lambda p: giou_location_loss(p, target),
            lambda p: giou_location_loss_grad(p, target), pred)
        assert err < 1e-4

    def test_full_suite_passes(self):
        results = run_gradient_checks(seed=0, points=100)
        assert set(results) == {"smooth_l1", "mse", "ifl", "focal", "cross_entropy",
                                "giou_location"}
        for name, result in results.items():
            assert result.max_relative_error < 1e-4, name

    def test_corrupt_hook_fails(self):
        results = run_gradient_checks(seed=0, points=10, corrupt="mse")
        assert results["mse"].max_relative_error > 1e-4

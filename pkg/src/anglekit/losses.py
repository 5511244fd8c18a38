"""Detection losses and box-delta transforms.

Anchor-relative box deltas, smooth L1, MSE, focal, softmax cross-entropy,
the IoU-aware residual loss (smooth L1 re-weighted by |-log IoU| + 1), the
five-term multi-task loss, and a finite-difference gradient checker. Each
loss ships an analytic gradient for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .codecs import AnglePrediction, CodecConfig, Method, decode, encode
from .errors import InvalidInputError
from .obb import AxisAlignedBox, OrientedBox, aabb_giou, longside, rotated_iou

FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0

# Rotated IoU is clamped here before entering the log re-weighting term.
_IOU_FLOOR = 1e-6


@dataclass(frozen=True)
class AnchorBox:
    """Prior box the deltas are regressed against."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.cx, self.cy, self.w, self.h)):
            raise InvalidInputError("non-finite anchor parameters")
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError(f"anchor sides must be positive, got w={self.w}, h={self.h}")


@dataclass(frozen=True)
class BoxDeltas:
    """Dimensionless anchor-relative offsets (dx, dy) and log-scales (dw, dh)."""

    dx: float
    dy: float
    dw: float
    dh: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dw, self.dh)):
            raise InvalidInputError("non-finite box deltas")


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights of the multi-task loss, defaulting to (2, 2, 5, 2, 0.5)."""

    location: float = 2.0
    confidence: float = 2.0
    category: float = 5.0
    angle_class: float = 2.0
    angle_reg: float = 0.5

    def __post_init__(self):
        values = (self.location, self.confidence, self.category, self.angle_class, self.angle_reg)
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise InvalidInputError(f"loss weights must be non-negative, got {values}")


@dataclass(frozen=True, eq=False)
class AssignedSample:
    """One pre-assigned anchor with its predictions and (if foreground) targets."""

    objectness: int
    anchor: AnchorBox
    pred_deltas: BoxDeltas
    pred_confidence: float
    pred_category_logits: np.ndarray
    pred_angle: AnglePrediction
    gt_box: OrientedBox | None = None
    gt_category: int | None = None
    confidence_target: float | None = None

    def __post_init__(self):
        if self.objectness not in (0, 1):
            raise InvalidInputError(f"objectness must be 0 or 1, got {self.objectness}")
        logits = np.asarray(self.pred_category_logits, dtype=float)
        object.__setattr__(self, "pred_category_logits", logits)
        if self.objectness == 1 and (self.gt_box is None or self.gt_category is None):
            raise InvalidInputError("foreground samples need gt_box and gt_category")
        if self.confidence_target is not None and self.confidence_target not in (0.0, 1.0):
            raise InvalidInputError(f"confidence target must be 0 or 1, got {self.confidence_target}")


@dataclass(frozen=True)
class LossBreakdown:
    """Unweighted per-term means plus the weighted total."""

    location: float
    confidence: float
    category: float
    angle_class: float
    angle_reg: float
    total: float


def encode_box_deltas(box, anchor: AnchorBox) -> BoxDeltas:
    """Anchor-relative deltas of a box's center and sides.

    Accepts anything with cx/cy/w/h fields (axis-aligned or oriented box).
    """
    if box.w <= 0 or box.h <= 0:
        raise InvalidInputError(f"box sides must be positive, got w={box.w}, h={box.h}")
    return BoxDeltas(
        dx=(box.cx - anchor.cx) / anchor.w,
        dy=(box.cy - anchor.cy) / anchor.h,
        dw=math.log(box.w / anchor.w),
        dh=math.log(box.h / anchor.h),
    )


def decode_box_deltas(deltas: BoxDeltas, anchor: AnchorBox) -> AxisAlignedBox:
    """Exact inverse of encode_box_deltas."""
    return AxisAlignedBox(
        cx=deltas.dx * anchor.w + anchor.cx,
        cy=deltas.dy * anchor.h + anchor.cy,
        w=anchor.w * math.exp(deltas.dw),
        h=anchor.h * math.exp(deltas.dh),
    )


def smooth_l1(pred: float, target: float, beta: float = 1.0) -> float:
    """Huber-style loss: quadratic within beta of the target, linear beyond."""
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    x = pred - target
    if abs(x) < beta:
        return 0.5 * x * x / beta
    return abs(x) - 0.5 * beta


def smooth_l1_grad(pred: float, target: float, beta: float = 1.0) -> float:
    x = pred - target
    if abs(x) < beta:
        return x / beta
    return math.copysign(1.0, x)


def mse(pred: float, target: float) -> float:
    """Squared error."""
    return (pred - target) ** 2


def mse_grad(pred: float, target: float) -> float:
    return 2.0 * (pred - target)


def ifl(pred_residual: float, target_residual: float, iou: float, beta: float = 1.0) -> float:
    """IoU-aware residual loss: smooth L1 scaled by |-log(iou)| + 1.

    The weight is 1 at iou = 1 and grows as the boxes diverge, so poorly
    localized samples push the residual harder.
    """
    weight = _ifl_weight(iou)
    return smooth_l1(pred_residual, target_residual, beta) * weight


def ifl_grad(pred_residual: float, target_residual: float, iou: float, beta: float = 1.0) -> float:
    return smooth_l1_grad(pred_residual, target_residual, beta) * _ifl_weight(iou)


def _ifl_weight(iou: float) -> float:
    if not (0.0 < iou <= 1.0) or not math.isfinite(iou):
        raise InvalidInputError(f"iou must lie in (0, 1], got {iou}")
    return abs(-math.log(iou)) + 1.0


def _log_sigmoid(x: float) -> float:
    # log(sigmoid(x)), stable for large |x|.
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def focal_loss(logit: float, label: int, alpha: float = FOCAL_ALPHA,
               gamma: float = FOCAL_GAMMA) -> float:
    """Focal loss on a single logit; reduces to weighted BCE at gamma = 0."""
    if label not in (0, 1):
        raise InvalidInputError(f"label must be 0 or 1, got {label}")
    if label == 1:
        log_pt = _log_sigmoid(logit)
        one_minus_pt = _sigmoid(-logit)
        alpha_t = alpha
    else:
        log_pt = _log_sigmoid(-logit)
        one_minus_pt = _sigmoid(logit)
        alpha_t = 1.0 - alpha
    return -alpha_t * one_minus_pt ** gamma * log_pt


def focal_loss_grad(logit: float, label: int, alpha: float = FOCAL_ALPHA,
                    gamma: float = FOCAL_GAMMA) -> float:
    if label not in (0, 1):
        raise InvalidInputError(f"label must be 0 or 1, got {label}")
    p = _sigmoid(logit)
    if label == 1:
        pt, alpha_t, dpt = p, alpha, p * (1.0 - p)
    else:
        pt, alpha_t, dpt = 1.0 - p, 1.0 - alpha, -p * (1.0 - p)
    one_minus = 1.0 - pt
    # d/dpt of -alpha_t (1-pt)^gamma log(pt)
    if gamma == 0.0:
        dloss_dpt = -alpha_t / pt
    else:
        dloss_dpt = -alpha_t * (-gamma * one_minus ** (gamma - 1.0) * math.log(pt)
                                + one_minus ** gamma / pt)
    return dloss_dpt * dpt


def cross_entropy(logits: Sequence[float], target_index: int) -> float:
    """Softmax cross-entropy against a hard class index."""
    z = np.asarray(logits, dtype=float)
    if z.ndim != 1 or not (0 <= target_index < z.size):
        raise InvalidInputError(f"target index {target_index} out of range for {z.size} logits")
    m = float(np.max(z))
    log_norm = m + math.log(float(np.sum(np.exp(z - m))))
    return log_norm - float(z[target_index])


def cross_entropy_grad(logits: Sequence[float], target_index: int) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    if z.ndim != 1 or not (0 <= target_index < z.size):
        raise InvalidInputError(f"target index {target_index} out of range for {z.size} logits")
    exp = np.exp(z - np.max(z))
    grad = exp / np.sum(exp)
    grad[target_index] -= 1.0
    return grad


def _pick(a: float, ga: np.ndarray, b: float, gb: np.ndarray, take_min: bool):
    if (a <= b) == take_min:
        return a, ga
    return b, gb


def giou_location_loss(pred: Sequence[float], target: Sequence[float]) -> float:
    """1 - GIoU between two (cx, cy, w, h) boxes."""
    px, py, pw, ph = pred
    tx, ty, tw, th = target
    return 1.0 - aabb_giou(AxisAlignedBox(px, py, pw, ph), AxisAlignedBox(tx, ty, tw, th))


def giou_location_loss_grad(pred: Sequence[float], target: Sequence[float]) -> np.ndarray:
    """Gradient of 1 - GIoU with respect to the predicted (cx, cy, w, h)."""
    px, py, pw, ph = (float(v) for v in pred)
    tx, ty, tw, th = (float(v) for v in target)
    e = np.eye(4)
    zero = np.zeros(4)

    pr, g_pr = px + 0.5 * pw, e[0] + 0.5 * e[2]
    pl, g_pl = px - 0.5 * pw, e[0] - 0.5 * e[2]
    pt_, g_pt = py + 0.5 * ph, e[1] + 0.5 * e[3]
    pb, g_pb = py - 0.5 * ph, e[1] - 0.5 * e[3]
    tr, tl = tx + 0.5 * tw, tx - 0.5 * tw
    tt, tb = ty + 0.5 * th, ty - 0.5 * th

    ir, g_ir = _pick(pr, g_pr, tr, zero, take_min=True)
    il, g_il = _pick(pl, g_pl, tl, zero, take_min=False)
    iw, g_iw = ir - il, g_ir - g_il
    if iw <= 0.0:
        iw, g_iw = 0.0, zero
    it, g_it = _pick(pt_, g_pt, tt, zero, take_min=True)
    ib, g_ib = _pick(pb, g_pb, tb, zero, take_min=False)
    ih, g_ih = it - ib, g_it - g_ib
    if ih <= 0.0:
        ih, g_ih = 0.0, zero

    inter = iw * ih
    g_inter = ih * g_iw + iw * g_ih
    union = pw * ph + tw * th - inter
    g_union = ph * e[2] + pw * e[3] - g_inter
    g_iou = (g_inter * union - inter * g_union) / (union * union)

    cr, g_cr = _pick(pr, g_pr, tr, zero, take_min=False)
    cl, g_cl = _pick(pl, g_pl, tl, zero, take_min=True)
    ct, g_ct = _pick(pt_, g_pt, tt, zero, take_min=False)
    cb, g_cb = _pick(pb, g_pb, tb, zero, take_min=True)
    cw, g_cw = cr - cl, g_cr - g_cl
    ch, g_ch = ct - cb, g_ct - g_cb
    enclosing = cw * ch
    g_enclosing = ch * g_cw + cw * g_ch

    # giou = iou - 1 + union / enclosing
    g_giou = g_iou + (g_union * enclosing - union * g_enclosing) / (enclosing * enclosing)
    return -g_giou


def multitask_loss(samples: Sequence[AssignedSample], weights: LossWeights,
                   codec: CodecConfig) -> LossBreakdown:
    """Assemble the five-term training loss over pre-assigned samples.

    Location (1 - GIoU on decoded deltas), category cross-entropy, angle
    cross-entropy, and the IoU-aware residual term apply to foreground
    samples only; the focal confidence term runs over every sample. Stored
    fields are unweighted means over the sample count; the total applies
    the weights. The IoU feeding the residual term is the rotated IoU of
    the fully decoded prediction against the ground truth.
    """
    if not samples:
        raise InvalidInputError("sample list is empty")
    if codec.method in (Method.DCL_BINARY, Method.DCL_GRAY):
        raise InvalidInputError("multitask loss needs per-bin class logits; dcl codes unsupported")

    loc, conf, cat, ang_c, ang_r = [], [], [], [], []
    for s in samples:
        target_conf = s.confidence_target if s.confidence_target is not None else float(s.objectness)
        conf.append(focal_loss(s.pred_confidence, int(target_conf)))
        if not s.objectness:
            continue
        pred_box = decode_box_deltas(s.pred_deltas, s.anchor)
        loc.append(giou_location_loss(
            (pred_box.cx, pred_box.cy, pred_box.w, pred_box.h),
            (s.gt_box.cx, s.gt_box.cy, s.gt_box.w, s.gt_box.h)))
        cat.append(cross_entropy(s.pred_category_logits, s.gt_category))
        target = encode(s.gt_box.theta, codec)
        if codec.has_classification:
            ang_c.append(cross_entropy(s.pred_angle.class_logits, target.class_index))
        if codec.has_regression:
            theta_pred = decode(s.pred_angle, codec)
            pred_obb = longside(pred_box.cx, pred_box.cy, pred_box.w, pred_box.h, theta_pred)
            iou = min(max(rotated_iou(pred_obb, s.gt_box), _IOU_FLOOR), 1.0)
            ang_r.append(ifl(s.pred_angle.regression_output, target.residual_target, iou))

    n = len(samples)
    terms = tuple(math.fsum(values) / n for values in (loc, conf, cat, ang_c, ang_r))
    lambdas = (weights.location, weights.confidence, weights.category,
               weights.angle_class, weights.angle_reg)
    total = math.fsum(lam * term for lam, term in zip(lambdas, terms))
    return LossBreakdown(*terms, total=total)


def finite_diff_grad_check(fn: Callable[[np.ndarray], float],
                           grad_fn: Callable[[np.ndarray], np.ndarray],
                           point: Sequence[float], epsilon: float = 1e-6) -> float:
    """Max relative error between grad_fn and central differences of fn."""
    x = np.asarray(point, dtype=float)
    analytic = np.atleast_1d(np.asarray(grad_fn(x), dtype=float))
    worst = 0.0
    for i in range(x.size):
        shift = np.zeros_like(x)
        shift[i] = epsilon
        fd = (fn(x + shift) - fn(x - shift)) / (2.0 * epsilon)
        denom = max(abs(fd), abs(analytic[i]), 1e-8)
        worst = max(worst, abs(fd - analytic[i]) / denom)
    return worst


@dataclass(frozen=True)
class GradCheckResult:
    max_relative_error: float
    worst_point: tuple[float, ...]


def _sample_giou_case(rng) -> tuple[np.ndarray, np.ndarray]:
    # Resample until every min/max branch sits well clear of its boundary,
    # keeping the loss smooth across the finite-difference stencil.
    while True:
        pred = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1),
                         rng.uniform(1, 3), rng.uniform(1, 3)])
        target = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1),
                           rng.uniform(1, 3), rng.uniform(1, 3)])
        px, py, pw, ph = pred
        tx, ty, tw, th = target
        margins = [
            (px + pw / 2) - (tx + tw / 2), (px - pw / 2) - (tx - tw / 2),
            (py + ph / 2) - (ty + th / 2), (py - ph / 2) - (ty - th / 2),
            min(px + pw / 2, tx + tw / 2) - max(px - pw / 2, tx - tw / 2),
            min(py + ph / 2, ty + th / 2) - max(py - ph / 2, ty - th / 2),
        ]
        if all(abs(m) > 1e-2 for m in margins):
            return pred, target


def run_gradient_checks(seed: int = 0, points: int = 100, epsilon: float = 1e-6,
                        corrupt: str | None = None) -> dict[str, GradCheckResult]:
    """Finite-difference check of every analytic gradient at random smooth points.

    Returns the worst relative error (and the point attaining it) per loss.
    `corrupt` names a loss whose gradient is deliberately perturbed; it
    exists to verify that the harness reports failures.
    """
    rng = np.random.default_rng(seed)
    results: dict[str, GradCheckResult] = {}

    def run(name, make_case):
        worst, worst_point = 0.0, ()
        bad = 1e-2 if corrupt == name else 0.0
        for _ in range(points):
            fn, grad_fn, point = make_case()
            if bad:
                inner = grad_fn
                grad_fn = lambda x, _g=inner: np.atleast_1d(np.asarray(_g(x), float)) + bad
            err = finite_diff_grad_check(fn, grad_fn, point, epsilon)
            if err > worst:
                worst, worst_point = err, tuple(float(v) for v in np.atleast_1d(point))
        results[name] = GradCheckResult(worst, worst_point)

    def smooth_l1_case():
        target = rng.uniform(-3, 3)
        while True:
            x = rng.uniform(-3, 3)
            if abs(abs(x) - 1.0) > 0.05:
                break
        return (lambda p: smooth_l1(p[0], target),
                lambda p: [smooth_l1_grad(p[0], target)],
                [target + x])

    def mse_case():
        target = rng.uniform(-3, 3)
        return (lambda p: mse(p[0], target),
                lambda p: [mse_grad(p[0], target)],
                [rng.uniform(-3, 3)])

    def ifl_case():
        target = rng.uniform(-3, 3)
        iou = rng.uniform(0.05, 1.0)
        while True:
            x = rng.uniform(-3, 3)
            if abs(abs(x) - 1.0) > 0.05:
                break
        return (lambda p: ifl(p[0], target, iou),
                lambda p: [ifl_grad(p[0], target, iou)],
                [target + x])

    def focal_case():
        label = int(rng.integers(0, 2))
        return (lambda p: focal_loss(p[0], label),
                lambda p: [focal_loss_grad(p[0], label)],
                [rng.uniform(-4, 4)])

    def cross_entropy_case():
        idx = int(rng.integers(0, 5))
        return (lambda p: cross_entropy(p, idx),
                lambda p: cross_entropy_grad(p, idx),
                rng.normal(0.0, 1.0, size=5))

    def giou_case():
        pred, target = _sample_giou_case(rng)
        return (lambda p: giou_location_loss(p, target),
                lambda p: giou_location_loss_grad(p, target),
                pred)

    run("smooth_l1", smooth_l1_case)
    run("mse", mse_case)
    run("ifl", ifl_case)
    run("focal", focal_case)
    run("cross_entropy", cross_entropy_case)
    run("giou_location", giou_case)
    return results

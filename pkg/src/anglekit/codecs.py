"""Angle representation codecs for oriented boxes.

Five encodings of the box angle theta in [0, 180): direct regression,
circular smooth labels (CSL), densely coded labels (DCL, binary or gray
bits), and the joint coarse-class + fine-residual representation (MGAR).
Also computes the closed-form and swept encoding errors of each codec and
the per-anchor prediction-head thickness it requires.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

ANGLE_RANGE = 180.0


class Method(str, Enum):
    REGRESSION = "regression"
    CSL = "csl"
    DCL_BINARY = "dcl-binary"
    DCL_GRAY = "dcl-gray"
    MGAR = "mgar"


class FitFunction(str, Enum):
    LINEAR = "linear"
    SIGMOID = "sigmoid"
    SQUARE = "square"
    EXP = "exp"


DEFAULT_C_THETA = {
    Method.REGRESSION: 1,
    Method.CSL: 180,
    Method.DCL_BINARY: 64,
    Method.DCL_GRAY: 64,
    Method.MGAR: 3,
}

DCL_C_THETA_CHOICES = (32, 64, 128, 256)
MGAR_C_THETA_DEFAULTS = (3, 4, 5)

_CLASSIFICATION_METHODS = (Method.CSL, Method.DCL_BINARY, Method.DCL_GRAY, Method.MGAR)
_REGRESSION_METHODS = (Method.REGRESSION, Method.MGAR)
_DCL_METHODS = (Method.DCL_BINARY, Method.DCL_GRAY)


def _validate_c_theta(method: Method, c_theta: int, warn: bool = False) -> None:
    if method is Method.REGRESSION and c_theta != 1:
        raise InvalidInputError(f"regression uses a single angle bin, got c_theta={c_theta}")
    if method is Method.CSL and c_theta != 180:
        raise InvalidInputError(f"csl uses one bin per degree (c_theta=180), got {c_theta}")
    if method in _DCL_METHODS and c_theta not in DCL_C_THETA_CHOICES:
        raise InvalidInputError(f"dcl supports c_theta in {DCL_C_THETA_CHOICES}, got {c_theta}")
    if method is Method.MGAR:
        if c_theta < 1 or 180 % c_theta != 0:
            raise InvalidInputError(f"mgar requires c_theta to divide 180, got {c_theta}")
        if warn and c_theta not in MGAR_C_THETA_DEFAULTS:
            warnings.warn(
                f"mgar c_theta={c_theta} is outside the recommended set {MGAR_C_THETA_DEFAULTS}",
                UserWarning,
                stacklevel=3,
            )


@dataclass(frozen=True)
class CodecConfig:
    """Immutable codec configuration.

    c_theta=0 selects the per-method default. window_size applies to CSL
    only; fit_function applies to the regression component (MGAR and
    regression), defaulting to the square fit.
    """

    method: Method
    c_theta: int = 0
    angle_range: float = ANGLE_RANGE
    window_size: float = 6.0
    fit_function: FitFunction = FitFunction.SQUARE

    def __post_init__(self):
        method = Method(self.method)
        object.__setattr__(self, "method", method)
        object.__setattr__(self, "fit_function", FitFunction(self.fit_function))
        c_theta = int(self.c_theta) if self.c_theta else DEFAULT_C_THETA[method]
        object.__setattr__(self, "c_theta", c_theta)
        if self.angle_range != ANGLE_RANGE:
            raise InvalidInputError(f"angle range is fixed at {ANGLE_RANGE} degrees")
        if method is Method.CSL and not self.window_size > 0:
            raise InvalidInputError(f"window_size must be positive, got {self.window_size}")
        _validate_c_theta(method, c_theta, warn=True)

    @property
    def has_classification(self) -> bool:
        return self.method in _CLASSIFICATION_METHODS

    @property
    def has_regression(self) -> bool:
        return self.method in _REGRESSION_METHODS

    @property
    def code_length(self) -> int:
        """Length of the class vector this codec emits."""
        if self.method in _DCL_METHODS:
            return max(1, math.ceil(math.log2(self.c_theta)))
        if self.method is Method.REGRESSION:
            return 0
        return self.c_theta


@dataclass(frozen=True, eq=False)
class AngleTarget:
    """Encoded training target for one ground-truth angle."""

    class_index: int
    class_vector: np.ndarray
    residual_target: float | None
    raw_angle: float


@dataclass(frozen=True, eq=False)
class AnglePrediction:
    """Raw network-style prediction: class logits plus fit-space residual."""

    class_logits: np.ndarray = field(default_factory=lambda: np.zeros(0))
    regression_output: float | None = None

    def __post_init__(self):
        logits = np.asarray(self.class_logits, dtype=float)
        object.__setattr__(self, "class_logits", logits)
        if not np.all(np.isfinite(logits)):
            raise InvalidInputError("non-finite class logits")
        if self.regression_output is not None and not math.isfinite(self.regression_output):
            raise InvalidInputError(f"non-finite regression output {self.regression_output}")


def omega(config: CodecConfig) -> float:
    """Discretization granularity in degrees (angle range over bin count)."""
    return config.angle_range / config.c_theta


def gray_from_binary(bits: Sequence[int]) -> tuple[int, ...]:
    """Gray code of an MSB-first binary bit vector."""
    _check_bits(bits)
    return tuple(b ^ (bits[i - 1] if i else 0) for i, b in enumerate(bits))


def binary_from_gray(bits: Sequence[int]) -> tuple[int, ...]:
    """Inverse of gray_from_binary."""
    _check_bits(bits)
    out: list[int] = []
    acc = 0
    for g in bits:
        acc ^= g
        out.append(acc)
    return tuple(out)


def _check_bits(bits: Sequence[int]) -> None:
    if len(bits) == 0:
        raise InvalidInputError("empty bit vector")
    if any(b not in (0, 1) for b in bits):
        raise InvalidInputError(f"bits must be 0 or 1, got {list(bits)}")


def _fit_inverse(degrees: float, fit: FitFunction, width: float) -> float:
    # Fit-space target whose forward mapping reproduces `degrees`.
    if fit is FitFunction.SQUARE:
        return math.sqrt(degrees)
    if fit is FitFunction.LINEAR:
        return degrees
    if fit is FitFunction.EXP:
        return math.log1p(degrees)
    # Sigmoid saturates at the range ends; clamp keeps the target finite.
    ratio = min(max(degrees / width, 1e-12), 1.0 - 1e-12)
    return math.log(ratio / (1.0 - ratio))


def _fit_forward(value: float, fit: FitFunction, width: float) -> float:
    if fit is FitFunction.SQUARE:
        return value * value
    if fit is FitFunction.LINEAR:
        return value
    if fit is FitFunction.EXP:
        return max(math.exp(value) - 1.0, 0.0)
    return width / (1.0 + math.exp(-value))


def _csl_label(k: int, c_theta: int, window_size: float) -> np.ndarray:
    # Circular Gaussian window, sigma = window/3, zero outside the window.
    half = c_theta // 2
    d = (np.arange(c_theta) - k + half) % c_theta - half
    sigma = window_size / 3.0
    label = np.zeros(c_theta)
    mask = np.abs(d) <= window_size
    label[mask] = np.exp(-(d[mask] ** 2) / (2.0 * sigma * sigma))
    return label


def _dcl_bits(k: int, length: int, gray: bool) -> tuple[int, ...]:
    bits = tuple((k >> (length - 1 - i)) & 1 for i in range(length))
    return gray_from_binary(bits) if gray else bits


def encode(theta_gt: float, config: CodecConfig) -> AngleTarget:
    """Encode a ground-truth angle in [0, 180) into the codec's target.

    The bin index is floor(theta / omega); an angle exactly on a bin
    boundary belongs to that bin with residual zero. MGAR and regression
    targets carry the fit-space residual; CSL and DCL targets carry only
    the class vector.
    """
    if not (0.0 <= theta_gt < config.angle_range) or not math.isfinite(theta_gt):
        raise InvalidInputError(f"angle must lie in [0, {config.angle_range}), got {theta_gt}")
    width = omega(config)
    k = min(int(theta_gt // width), config.c_theta - 1)
    residual = max(theta_gt - k * width, 0.0)

    method = config.method
    if method is Method.REGRESSION:
        vector = np.zeros(0)
    elif method is Method.MGAR:
        vector = np.zeros(config.c_theta)
        vector[k] = 1.0
    elif method is Method.CSL:
        vector = _csl_label(k, config.c_theta, config.window_size)
    else:
        bits = _dcl_bits(k, config.code_length, gray=method is Method.DCL_GRAY)
        vector = np.array(bits, dtype=float)

    residual_target = None
    if config.has_regression:
        residual_target = _fit_inverse(residual, config.fit_function, width)
    return AngleTarget(class_index=k, class_vector=vector, residual_target=residual_target,
                       raw_angle=theta_gt)


def decode(pred: AnglePrediction, config: CodecConfig) -> float:
    """Decode a raw prediction into an angle in [0, 180).

    The class bin comes from the argmax of the logits (MGAR, CSL), or from
    sigmoid-thresholded code bits (DCL). Pure-classification codecs report
    the bin midpoint; codecs with a regression part add the fitted residual
    to the bin start. Only the final angle is wrapped into range; residual
    overflow past one bin is preserved.
    """
    width = omega(config)
    logits = pred.class_logits
    expected = config.code_length
    if logits.shape != (expected,):
        raise InvalidInputError(
            f"{config.method.value} expects {expected} logits, got shape {logits.shape}")

    method = config.method
    if method is Method.REGRESSION:
        k = 0
    elif method in _DCL_METHODS:
        bits = tuple(int(v) for v in (1.0 / (1.0 + np.exp(-logits)) > 0.5))
        if method is Method.DCL_GRAY:
            bits = binary_from_gray(bits)
        k = 0
        for b in bits:
            k = (k << 1) | b
        k = min(k, config.c_theta - 1)
    else:
        k = int(np.argmax(logits))

    if config.has_regression:
        if pred.regression_output is None:
            raise InvalidInputError(f"{method.value} decode requires a regression output")
        residual = _fit_forward(pred.regression_output, config.fit_function, width)
    else:
        if pred.regression_output is not None:
            raise InvalidInputError(f"{method.value} predictions carry no regression output")
        residual = 0.5 * width
    return (k * width + residual) % config.angle_range


def ideal_prediction(target: AngleTarget, config: CodecConfig) -> AnglePrediction:
    """Loss-free prediction: logits equal the target vector, residual exact."""
    return AnglePrediction(class_logits=target.class_vector.copy(),
                           regression_output=target.residual_target)


def analytic_errors(config: CodecConfig) -> tuple[float, float]:
    """Closed-form (max, mean) encoding error in degrees.

    Pure-classification codecs lose up to half a bin (mean: a quarter bin);
    codecs with a continuous residual encode exactly.
    """
    if config.has_regression:
        return (0.0, 0.0)
    width = omega(config)
    return (width / 2.0, width / 4.0)


def empirical_errors(config: CodecConfig, grid_step: float) -> tuple[float, float]:
    """Swept (max, mean) of |decode(encode(theta)) - theta| over [0, 180).

    Uses loss-free predictions at every grid point, exercising the real
    encode/decode path rather than the closed forms.
    """
    if not grid_step > 0:
        raise InvalidInputError(f"grid_step must be positive, got {grid_step}")
    count = int(round(config.angle_range / grid_step))
    worst = 0.0
    total = 0.0
    n = 0
    for i in range(count):
        theta = i * grid_step
        if theta >= config.angle_range:
            continue
        decoded = decode(ideal_prediction(encode(theta, config), config), config)
        err = abs(decoded - theta)
        if err > worst:
            worst = err
        total += err
        n += 1
    return (worst, total / n)


def head_thickness(method: Method | str, c_theta: int, anchors: int) -> int:
    """Channel count of the angle prediction layer for one anchor set."""
    method = Method(method)
    if anchors < 1:
        raise InvalidInputError(f"anchor count must be >= 1, got {anchors}")
    _validate_c_theta(method, c_theta)
    if method is Method.REGRESSION:
        return anchors
    if method is Method.CSL:
        return anchors * c_theta
    if method in _DCL_METHODS:
        return anchors * math.ceil(math.log2(c_theta))
    return anchors * (c_theta + 1)

"""Split conformal prediction: nonconformity scores, calibration, sets, intervals and coverage."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

ABS_RESIDUAL = "abs_residual"
ONE_MINUS_PROBA = "one_minus_proba"
SCORE_KINDS = (ABS_RESIDUAL, ONE_MINUS_PROBA)


@dataclass(frozen=True)
class ScoreFunction:
    kind: str = ABS_RESIDUAL

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ValidationError(f"unknown score function {self.kind!r}")

    def __call__(self, output, y):
        return score(self, output, y)


def score(fn, output, y):
    """Nonconformity of candidate ``y`` given the model output; larger means less conforming.

    ``abs_residual`` is ``|y - output|``. ``one_minus_proba`` is ``1 - p(y|x)``
    with ``output = P(Y=1|x)``. Works elementwise on arrays.
    """
    output = np.asarray(output, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if fn.kind == ABS_RESIDUAL:
        s = np.abs(y - output)
    else:
        if not np.all((y == 0) | (y == 1)):
            raise ValidationError("classification candidate labels must be 0 or 1")
        s = 1.0 - np.where(y == 1, output, 1.0 - output)
    return float(s) if s.ndim == 0 else s


def _ceil_index(x):
    # guards products such as (n + 1) * (1 - alpha) that land a hair above an integer
    return math.ceil(x - 1e-9)


def _floor_index(x):
    return math.floor(x + 1e-9)


@dataclass(frozen=True, eq=False)
class CalibrationRecord:
    scores: np.ndarray  # sorted ascending
    alpha: float
    q_hat: float
    kind: str = ABS_RESIDUAL
    corrected: bool = True

    @property
    def n(self):
        return len(self.scores)


def conformal_rank(n, alpha, corrected=True):
    """1-based order statistic used as q_hat; may exceed ``n`` (then q_hat is +inf)."""
    if corrected:
        return _ceil_index((n + 1) * (1.0 - alpha))
    return max(_ceil_index(n * (1.0 - alpha)), 1)


def calibrate(scores, alpha, kind=ABS_RESIDUAL, corrected=True):
    """q_hat is the ceil((n+1)(1-alpha))-th smallest score, or +inf past the end.

    With ``corrected=False`` the plain empirical (1-alpha) quantile (inverted
    CDF, ceil(n(1-alpha))-th order statistic) is used instead.
    """
    scores = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    if scores.size == 0:
        raise ValidationError("calibration needs at least one score")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    if not np.all(np.isfinite(scores)) or np.any(scores < 0):
        raise ValidationError("calibration scores must be finite and nonnegative")
    k = conformal_rank(len(scores), alpha, corrected)
    q_hat = float(scores[k - 1]) if k <= len(scores) else math.inf
    return CalibrationRecord(scores, float(alpha), q_hat, kind, corrected)


@dataclass(frozen=True)
class PredictionSet:
    labels: frozenset
    alpha: float
    scores: tuple  # (score for y=0, score for y=1)

    def __contains__(self, y):
        return int(y) in self.labels

    @property
    def size(self):
        return len(self.labels)


@dataclass(frozen=True)
class PredictiveInterval:
    """Closed interval; infinite endpoints mark unbounded sides.

    ``finite_lower``/``finite_upper`` keep the extreme finite candidate values
    when an order-statistic index under- or overflows.
    """

    lower: float
    upper: float
    alpha: float
    method: str
    finite_lower: float = None
    finite_upper: float = None

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValidationError(f"interval lower {self.lower} exceeds upper {self.upper}")

    def __contains__(self, y):
        return self.lower <= y <= self.upper

    @property
    def bounded(self):
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    @property
    def width(self):
        return self.upper - self.lower


def set_from_output(output, record, force_nonempty=False):
    """Prediction set for a classifier output P(Y=1|x)."""
    fn = ScoreFunction(ONE_MINUS_PROBA)
    s0, s1 = score(fn, output, 0), score(fn, output, 1)
    labels = {y for y, s in ((0, s0), (1, s1)) if s <= record.q_hat}
    if force_nonempty and not labels:
        labels = {1 if output >= 0.5 else 0}
    return PredictionSet(frozenset(labels), record.alpha, (s0, s1))


def predict_set(model, x, record, fn=ScoreFunction(ONE_MINUS_PROBA), force_nonempty=False):
    """C(x) = {y : s(x, y) <= q_hat}; an empty set is returned as-is unless forced."""
    from .estimators import predict_proba

    if fn.kind != ONE_MINUS_PROBA:
        raise ValidationError("prediction sets need the one_minus_proba score")
    output = float(predict_proba(model, np.atleast_2d(x))[0])
    return set_from_output(output, record, force_nonempty)


def predict_interval(y_hat, record):
    """[y_hat - q_hat, y_hat + q_hat] for the absolute-residual score."""
    q = record.q_hat
    if math.isinf(q):
        return PredictiveInterval(-math.inf, math.inf, record.alpha, "conformal")
    return PredictiveInterval(float(y_hat) - q, float(y_hat) + q, record.alpha, "conformal")


@dataclass(frozen=True)
class CoverageSummary:
    coverage: float
    mean_size: float  # mean set size, or mean width over bounded intervals (None if none)
    n_unbounded: int
    n: int


def evaluate_coverage(regions, truths):
    """Fraction of truths inside their region plus the mean set size / interval width."""
    truths = list(np.asarray(truths).ravel())
    if len(regions) != len(truths):
        raise ValidationError(f"{len(regions)} regions but {len(truths)} truths")
    if not regions:
        raise ValidationError("no regions to evaluate")
    covered = sum(1 for r, y in zip(regions, truths) if y in r)
    sizes = []
    unbounded = 0
    for r in regions:
        if isinstance(r, PredictionSet):
            sizes.append(r.size)
        elif r.bounded:
            sizes.append(r.width)
        else:
            unbounded += 1
    mean_size = float(np.mean(sizes)) if sizes else None
    return CoverageSummary(covered / len(regions), mean_size, unbounded, len(regions))

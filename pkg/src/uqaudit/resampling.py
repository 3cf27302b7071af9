"""Sampling-during-inference: bootstrap ensembles, the jackknife, jackknife+ and J+aB.

Indices in this module are positions within the training matrix passed in,
not dataset row ids.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._seeding import derive_seed, parallel_map, rng_for
from .conformal import (
    ABS_RESIDUAL, ONE_MINUS_PROBA, PredictiveInterval, ScoreFunction, _ceil_index,
    _floor_index, score,
)
from .errors import MemberFitError, OOBError, UQAuditError, ValidationError
from .estimators import fit, predict_label, predict_proba

log = logging.getLogger(__name__)

JACKKNIFE_PLUS = "jackknife_plus"
JAB = "jab"


def residual_score(spec):
    """Shared nonconformity notion: |y - y_hat| for regression, 1 - p(y|x) for classifiers."""
    return ScoreFunction(ONE_MINUS_PROBA if spec.is_classifier else ABS_RESIDUAL)


def bootstrap_size(n, fraction):
    if n < 1:
        raise ValidationError(f"bootstrap needs n >= 1, got {n}")
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"bootstrap fraction must lie in (0, 1], got {fraction}")
    size = int(math.floor(fraction * n + 0.5))
    if size == 0:
        raise ValidationError(f"bootstrap fraction {fraction} of n={n} rounds to zero rows")
    return size


def bootstrap_indices(n, fraction, rng):
    """round(fraction * n) indices drawn uniformly with replacement from [0, n)."""
    return rng.integers(0, n, size=bootstrap_size(n, fraction))


def _fit_member(spec, X, y, rows, seed, index):
    try:
        return fit(spec, X[rows], y[rows], seed)
    except UQAuditError as exc:
        raise MemberFitError(index, exc) from exc


@dataclass(frozen=True, eq=False)
class BootstrapEnsemble:
    spec: object
    members: tuple
    bags: tuple
    member_seeds: tuple
    fraction: float
    n_train: int

    @property
    def b(self):
        return len(self.members)

    @property
    def fits(self):
        return len(self.members)

    def in_bag(self):
        """Boolean (b, n_train) matrix; a sample drawn at least once is in-bag."""
        mask = np.zeros((self.b, self.n_train), dtype=bool)
        for j, bag in enumerate(self.bags):
            mask[j, bag] = True
        return mask


def fit_bootstrap_ensemble(spec, features, targets, b=200, fraction=0.8, root_seed=0, threads=None):
    """Fit ``b`` members on bootstrap bags; bags and seeds are fixed before any fit runs."""
    if b < 1:
        raise ValidationError(f"ensemble size must be >= 1, got {b}")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    n = len(X)
    bags = tuple(bootstrap_indices(n, fraction, rng_for(root_seed, "bag", j)) for j in range(b))
    seeds = tuple(derive_seed(root_seed, "member", j) for j in range(b))
    members = parallel_map(
        lambda j: _fit_member(spec, X, y, bags[j], seeds[j], j), range(b), threads
    )
    return BootstrapEnsemble(spec, tuple(members), bags, seeds, float(fraction), n)


@dataclass(frozen=True, eq=False)
class PredictiveMatrix:
    probabilities: np.ndarray  # (b, m)
    labels: np.ndarray
    threshold: float = 0.5

    @classmethod
    def from_probabilities(cls, probabilities, threshold=0.5):
        p = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
        return cls(p, predict_label(p, threshold), float(threshold))

    @property
    def b(self):
        return self.probabilities.shape[0]

    @property
    def m(self):
        return self.probabilities.shape[1]

    def columns(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        return PredictiveMatrix(self.probabilities[:, positions], self.labels[:, positions], self.threshold)


def _member_outputs(ensemble, X, threads=None):
    if ensemble.b == 0:
        raise ValidationError("ensemble has no members")
    rows = parallel_map(lambda model: predict_proba(model, X), ensemble.members, threads)
    return np.vstack(rows)


def predict_distribution(ensemble, features, threshold=0.5, threads=None):
    """Member-by-sample matrix of ensemble outputs with thresholded labels."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return PredictiveMatrix.from_probabilities(_member_outputs(ensemble, X, threads), threshold)


def percentile_intervals(matrix, alpha=0.05, method="bootstrap_percentile"):
    """Empirical alpha/2 and 1-alpha/2 percentiles of each column.

    A reporting heuristic with no coverage guarantee.
    """
    p = matrix.probabilities if isinstance(matrix, PredictiveMatrix) else np.asarray(matrix)
    lo = np.percentile(p, 100 * alpha / 2, axis=0)
    hi = np.percentile(p, 100 * (1 - alpha / 2), axis=0)
    return [PredictiveInterval(float(a), float(b), alpha, method) for a, b in zip(lo, hi)]


@dataclass(frozen=True, eq=False)
class LooSet:
    spec: object
    models: tuple
    residuals: np.ndarray
    loo_predictions: np.ndarray  # model i evaluated on row i

    @property
    def n(self):
        return len(self.models)

    @property
    def fits(self):
        return len(self.models)

    def predict(self, features, threads=None):
        """(n, m) matrix: row i holds the leave-one-out model i's predictions."""
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return np.vstack(parallel_map(lambda model: predict_proba(model, X), self.models, threads))


def fit_jackknife(spec, features, targets, seed=0, threads=None):
    """n leave-one-out models and their residuals on the held-out row."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    n = len(X)
    if n < 2:
        raise ValidationError(f"the jackknife needs n >= 2, got {n}")
    everything = np.arange(n)

    def leave_out(i):
        model = _fit_member(spec, X, y, everything[everything != i], derive_seed(seed, "loo", i), i)
        return model, float(predict_proba(model, X[i:i + 1])[0])

    fitted = parallel_map(leave_out, range(n), threads)
    models = tuple(m for m, _ in fitted)
    preds = np.array([p for _, p in fitted])
    residuals = np.asarray(score(residual_score(spec), preds, y), dtype=np.float64)
    return LooSet(spec, models, residuals, preds)


@dataclass(frozen=True)
class IntervalBounds:
    """Vectorised jackknife+ output: one entry per evaluation point."""

    lower: np.ndarray
    upper: np.ndarray
    finite_lower: np.ndarray
    finite_upper: np.ndarray
    alpha: float
    method: str

    def intervals(self):
        return [
            PredictiveInterval(float(a), float(b), self.alpha, self.method, float(c), float(d))
            for a, b, c, d in zip(self.lower, self.upper, self.finite_lower, self.finite_upper)
        ]


def jackknife_plus_bounds(loo_predictions, residuals, alpha, method=JACKKNIFE_PLUS):
    """Order-statistic bounds from leave-one-out predictions at the test points.

    ``loo_predictions`` is (n, m): entry (i, s) is the model without sample i
    evaluated at test point s. Lower is the floor(alpha(n+1))-th smallest of
    ``mu - R`` and upper the ceil((1-alpha)(n+1))-th smallest of ``mu + R``;
    indices outside [1, n] give -inf / +inf. Above alpha = 0.5 the two
    indices cross and the bounds can invert, so such alphas are rejected.
    """
    if not 0.0 < alpha <= 0.5:
        raise ValidationError(f"alpha must lie in (0, 0.5], got {alpha}")
    mu = np.asarray(loo_predictions, dtype=np.float64)
    if mu.ndim == 1:
        mu = mu[:, None]
    r = np.asarray(residuals, dtype=np.float64)[:, None]
    n = mu.shape[0]
    if n == 0 or r.shape[0] != n:
        raise ValidationError(f"need matching, nonempty predictions ({n}) and residuals ({r.shape[0]})")
    low_vals = np.sort(mu - r, axis=0)
    high_vals = np.sort(mu + r, axis=0)
    k_lo = _floor_index(alpha * (n + 1))
    k_hi = _ceil_index((1.0 - alpha) * (n + 1))
    lower = low_vals[k_lo - 1] if k_lo >= 1 else np.full(mu.shape[1], -math.inf)
    upper = high_vals[k_hi - 1] if k_hi <= n else np.full(mu.shape[1], math.inf)
    return IntervalBounds(lower, upper, low_vals[0], high_vals[-1], float(alpha), method)


def jackknife_plus_intervals(loo, features, alpha, threads=None):
    return jackknife_plus_bounds(loo.predict(features, threads), loo.residuals, alpha).intervals()


def jackknife_plus_interval(loo, x, alpha):
    return jackknife_plus_intervals(loo, np.atleast_2d(x), alpha)[0]


@dataclass(frozen=True, eq=False)
class OOBResult:
    """Out-of-bag bookkeeping for a bootstrap ensemble over its training rows."""

    oob: np.ndarray  # (b, n) True where member j did not see sample i
    predictions: np.ndarray  # aggregated OOB prediction per sample (nan if none)
    residuals: np.ndarray  # nan where the sample has no OOB member
    zero_oob: tuple
    strict: bool = False

    def members(self, i):
        return np.flatnonzero(self.oob[:, i])

    @property
    def counts(self):
        return self.oob.sum(axis=0)

    @property
    def valid(self):
        return np.flatnonzero(self.counts > 0)


def oob_prediction_sets(ensemble, features, targets, strict=False, threads=None):
    """Aggregate each training sample's prediction over the members whose bags exclude it."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if len(X) != ensemble.n_train:
        raise ValidationError(f"ensemble was trained on {ensemble.n_train} rows, got {len(X)}")
    oob = ~ensemble.in_bag()
    counts = oob.sum(axis=0)
    zero = tuple(int(i) for i in np.flatnonzero(counts == 0))
    if zero and strict:
        raise OOBError(zero)
    if zero:
        log.warning("%d training sample(s) have no out-of-bag member and are excluded", len(zero))
    outputs = _member_outputs(ensemble, X, threads)
    with np.errstate(invalid="ignore", divide="ignore"):
        agg = np.where(oob, outputs, 0.0).sum(axis=0) / counts
    residuals = np.full(len(y), np.nan)
    ok = counts > 0
    residuals[ok] = score(residual_score(ensemble.spec), agg[ok], y[ok])
    return OOBResult(oob, agg, residuals, zero, strict)


def jab_intervals(ensemble, oob_result, features, alpha, threads=None):
    """Jackknife+ bounds where sample i's leave-one-out model is its OOB aggregate. No refits."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    valid = oob_result.valid
    if valid.size == 0:
        raise OOBError(range(ensemble.n_train))
    outputs = _member_outputs(ensemble, X, threads)  # (b, m)
    mask = oob_result.oob[:, valid].astype(np.float64)  # (b, n_valid)
    mu = (mask.T @ outputs) / mask.sum(axis=0)[:, None]
    return jackknife_plus_bounds(mu, oob_result.residuals[valid], alpha, method=JAB)


def jab_interval(ensemble, oob_result, x, alpha):
    return jab_intervals(ensemble, oob_result, np.atleast_2d(x), alpha).intervals()[0]

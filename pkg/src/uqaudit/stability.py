"""Variance-based stability metrics computed on a member-by-sample predictive matrix."""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def label_stability(labels):
    """|#positive - #negative| / b for one sample's b ensemble labels."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValidationError("label stability needs at least one label")
    pos = int(np.count_nonzero(labels == 1))
    return abs(pos - (labels.size - pos)) / labels.size


def label_stability_per_sample(labels):
    labels = np.atleast_2d(np.asarray(labels))
    b = labels.shape[0]
    pos = (labels == 1).sum(axis=0)
    return np.abs(2 * pos - b) / b


def pairwise_jitter(labels_i, labels_j):
    """Churn between two models: share of samples where their labels differ."""
    a, c = np.asarray(labels_i), np.asarray(labels_j)
    if a.shape != c.shape:
        raise ValidationError(f"label vectors differ in length: {a.shape} vs {c.shape}")
    if a.size == 0:
        raise ValidationError("pairwise jitter needs at least one sample")
    return np.count_nonzero(a != c) / a.size


def jitter_per_sample(labels):
    """Share of unordered member pairs that disagree on each sample: 2k(b-k) / (b(b-1))."""
    labels = np.atleast_2d(np.asarray(labels))
    b = labels.shape[0]
    if b < 2:
        raise ValidationError(f"jitter needs at least two ensemble members, got {b}")
    k = (labels == 1).sum(axis=0)
    return 2.0 * k * (b - k) / (b * (b - 1))


def jitter(labels):
    """Mean pairwise jitter over all b(b-1)/2 member pairs.

    Equal to the mean of :func:`jitter_per_sample`, which is how it is computed.
    """
    return float(np.mean(jitter_per_sample(labels)))


def per_sample_std(probabilities):
    """Column standard deviation with the b-1 denominator."""
    p = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    if p.shape[0] < 2:
        raise ValidationError(f"std needs at least two ensemble members, got {p.shape[0]}")
    return p.std(axis=0, ddof=1)


def per_sample_iqr(probabilities):
    """Q75 - Q25 per column with linear interpolation between order statistics."""
    p = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    if p.shape[0] < 2:
        raise ValidationError(f"IQR needs at least two ensemble members, got {p.shape[0]}")
    q75, q25 = np.percentile(p, [75, 25], axis=0, method="linear")
    return q75 - q25


def predictive_entropy(probabilities):
    """Binary entropy (nats) of the mean predicted probability; 0 ln 0 is taken as 0.

    Accepts one column of b values or a (b, m) matrix.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    p_bar = p.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p_bar > 0, p_bar * np.log(p_bar), 0.0)
              + np.where(p_bar < 1, (1 - p_bar) * np.log1p(-p_bar), 0.0))
    return float(h) if np.ndim(h) == 0 else h


def aggregate_over(values, indices=None):
    """Mean of a per-sample metric over ``indices``; None (undefined) for an empty group."""
    values = np.asarray(values, dtype=np.float64)
    if indices is not None:
        values = values[np.asarray(indices, dtype=np.int64)]
    if values.size == 0:
        return None
    return float(values.mean())


STABILITY_METRICS = ("label_stability", "jitter", "std", "iqr")
ENTROPY = "entropy"


@dataclass(frozen=True, eq=False)
class StabilityProfile:
    """Per-sample stability vectors; ``None`` for metrics undefined at this ensemble size."""

    label_stability: np.ndarray
    jitter: np.ndarray
    std: np.ndarray
    iqr: np.ndarray
    entropy: np.ndarray = None

    def metrics(self, include_entropy=False):
        names = STABILITY_METRICS + ((ENTROPY,) if include_entropy else ())
        return {name: getattr(self, name) for name in names}

    def aggregate(self, indices=None, include_entropy=False):
        return {
            name: (None if vec is None else aggregate_over(vec, indices))
            for name, vec in self.metrics(include_entropy).items()
        }


def stability_profile(matrix, entropy=False, labels=True):
    """Profile of a PredictiveMatrix. ``labels=False`` skips the label-based metrics (regression)."""
    b = matrix.b
    return StabilityProfile(
        label_stability=label_stability_per_sample(matrix.labels) if labels else None,
        jitter=jitter_per_sample(matrix.labels) if labels and b >= 2 else None,
        std=per_sample_std(matrix.probabilities) if b >= 2 else None,
        iqr=per_sample_iqr(matrix.probabilities) if b >= 2 else None,
        entropy=predictive_entropy(matrix.probabilities) if entropy and labels else None,
    )

"""Error-based (statistical bias) metrics from 0/1 truths and predictions."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError

RATE_METRICS = ("accuracy", "tpr", "fpr", "tnr", "fnr", "positive_rate")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True)
class RateSet:
    """Rates in [0, 1]; ``None`` marks a zero denominator."""

    accuracy: float = None
    tpr: float = None
    fpr: float = None
    tnr: float = None
    fnr: float = None
    positive_rate: float = None

    def as_dict(self):
        return asdict(self)


def confusion_counts(y_true, y_pred):
    t = np.asarray(y_true).ravel()
    p = np.asarray(y_pred).ravel()
    if t.shape != p.shape:
        raise ValidationError(f"{t.size} truths but {p.size} predictions")
    return ConfusionCounts(
        tp=int(np.count_nonzero((t == 1) & (p == 1))),
        fp=int(np.count_nonzero((t == 0) & (p == 1))),
        tn=int(np.count_nonzero((t == 0) & (p == 0))),
        fn=int(np.count_nonzero((t == 1) & (p == 0))),
    )


def _ratio(num, den):
    return num / den if den else None


def rates(counts):
    c = counts
    return RateSet(
        accuracy=_ratio(c.tp + c.tn, c.total),
        tpr=_ratio(c.tp, c.tp + c.fn),
        fpr=_ratio(c.fp, c.fp + c.tn),
        tnr=_ratio(c.tn, c.tn + c.fp),
        fnr=_ratio(c.fn, c.fn + c.tp),
        positive_rate=_ratio(c.tp + c.fp, c.total),
    )


def subgroup_counts(y_true, y_pred, partition):
    """Confusion counts per subgroup; ``partition`` maps names to positions in the vectors."""
    t = np.asarray(y_true).ravel()
    p = np.asarray(y_pred).ravel()
    out = {}
    for name, positions in partition.items():
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size and (positions.min() < 0 or positions.max() >= t.size):
            raise ValidationError(f"subgroup {name!r} has positions outside [0, {t.size})")
        out[name] = confusion_counts(t[positions], p[positions])
    return out


def subgroup_rates(y_true, y_pred, partition):
    """RateSet per subgroup plus ``overall``; an empty subgroup gets an all-undefined RateSet."""
    out = {"overall": rates(confusion_counts(y_true, y_pred))}
    for name, counts in subgroup_counts(y_true, y_pred, partition).items():
        out[name] = rates(counts)
    return out

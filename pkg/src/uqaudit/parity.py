"""Metric grids and the parity metrics composed from their priv/dis cells."""

from dataclasses import dataclass, field

from .errors import ValidationError

DIFFERENCE = "difference"
RATIO = "ratio"

PARITY = "parity"
DISCRIMINATION = "discrimination"
REVERSE = "reverse_discrimination"
UNDEFINED = "undefined"
CLASSIFICATIONS = (PARITY, DISCRIMINATION, REVERSE, UNDEFINED)

DEFAULT_TOLERANCE = 0.05

# name, base metric, kind
PARITY_METRICS = (
    ("equalized_odds_tpr", "tpr", DIFFERENCE),
    ("equalized_odds_fpr", "fpr", DIFFERENCE),
    ("disparate_impact", "positive_rate", RATIO),
    ("statistical_parity_difference", "positive_rate", DIFFERENCE),
    ("accuracy_parity", "accuracy", DIFFERENCE),
    ("label_stability_ratio", "label_stability", RATIO),
    ("jitter_parity", "jitter", DIFFERENCE),
    ("std_parity", "std", DIFFERENCE),
    ("iqr_parity", "iqr", DIFFERENCE),
)


class MetricsTable:
    """(metric, subgroup) -> float or None grid for one model and run."""

    def __init__(self, values=None, metadata=None):
        self._values = dict(values or {})
        self.metadata = dict(metadata or {})

    def set(self, metric, subgroup, value):
        self._values[(metric, subgroup)] = None if value is None else float(value)

    def get(self, metric, subgroup):
        return self._values.get((metric, subgroup))

    def __contains__(self, key):
        return key in self._values

    def __len__(self):
        return len(self._values)

    def __eq__(self, other):
        return isinstance(other, MetricsTable) and self._values == other._values

    @property
    def metrics(self):
        return sorted({m for m, _ in self._values})

    @property
    def subgroups(self):
        return sorted({s for _, s in self._values})

    def rows(self):
        """Sorted ``(metric, subgroup, value)`` triples."""
        return [(m, s, v) for (m, s), v in sorted(self._values.items())]

    @classmethod
    def from_rows(cls, rows, metadata=None):
        table = cls(metadata=metadata)
        for metric, subgroup, value in rows:
            table.set(metric, subgroup, value)
        return table

    def renamed(self, mapping):
        """Copy with subgroup names remapped (names missing from ``mapping`` are kept)."""
        return MetricsTable(
            {(m, mapping.get(s, s)): v for (m, s), v in self._values.items()}, self.metadata
        )


def diff_metric(dis_value, priv_value):
    """dis - priv, or None when either side is undefined."""
    if dis_value is None or priv_value is None:
        return None
    return dis_value - priv_value


def ratio_metric(dis_value, priv_value):
    """dis / priv, or None when either side is undefined or priv is zero."""
    if dis_value is None or priv_value is None or priv_value == 0:
        return None
    return dis_value / priv_value


@dataclass(frozen=True)
class ParityEntry:
    metric: str
    group: str
    value: float
    kind: str
    classification: str
    note: str = ""


@dataclass
class ParityReport:
    entries: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def get(self, metric, group):
        for e in self.entries:
            if e.metric == metric and e.group == group:
                return e
        raise KeyError((metric, group))


def _positive_favors_dis(metric, favorable_positive):
    """True when a value above the neutral point is disparity in favour of the dis group."""
    if metric in ("statistical_parity_difference", "disparate_impact"):
        return favorable_positive
    if metric in ("accuracy_parity", "equalized_odds_tpr", "label_stability_ratio"):
        return True
    if metric in ("equalized_odds_fpr", "jitter_parity", "std_parity", "iqr_parity"):
        return False
    raise ValidationError(f"no disparity orientation for metric {metric!r}")


def classify_disparity(metric, value, kind, favorable_positive=True, tolerance=DEFAULT_TOLERANCE):
    """Map a parity value to parity / discrimination / reverse_discrimination / undefined.

    Within ``tolerance`` of the neutral value (0 for differences, 1 for ratios)
    is parity. Otherwise the side decides; SPD and disparate impact flip with
    ``favorable_positive``, the variance metrics do not.
    """
    if tolerance <= 0:
        raise ValidationError(f"tolerance must be positive, got {tolerance}")
    if value is None:
        return UNDEFINED
    deviation = value - (1.0 if kind == RATIO else 0.0)
    # slack so that e.g. 1.05 against a 0.05 band counts as the boundary
    if abs(deviation) <= tolerance + 1e-12:
        return PARITY
    if (deviation > 0) == _positive_favors_dis(metric, favorable_positive):
        return REVERSE
    return DISCRIMINATION


def compose_parity(table, groups, favorable_positive=True, tolerance=DEFAULT_TOLERANCE):
    """Parity metrics for each attribute / intersection key in ``groups``.

    Base metrics absent from the table altogether (e.g. label metrics on a
    regression audit) are skipped; a missing or undefined cell yields an
    undefined entry with a note.
    """
    present = set(table.metrics)
    report = ParityReport()
    for group in groups:
        dis, priv = f"{group}_dis", f"{group}_priv"
        for name, base, kind in PARITY_METRICS:
            if base not in present:
                continue
            missing = [s for s in (dis, priv) if (base, s) not in table]
            d, p = table.get(base, dis), table.get(base, priv)
            value = diff_metric(d, p) if kind == DIFFERENCE else ratio_metric(d, p)
            if missing:
                note = f"missing {base} cell for {', '.join(missing)}"
            elif value is None:
                undefined = [s for s, v in ((dis, d), (priv, p)) if v is None]
                note = (f"{base} undefined for {', '.join(undefined)}" if undefined
                        else f"{base} is zero for {priv}")
            else:
                note = ""
            report.entries.append(ParityEntry(
                name, group, value, kind,
                classify_disparity(name, value, kind, favorable_positive, tolerance), note,
            ))
    return report

"""Tabular datasets: CSV ingestion, seeded splits, preprocessing and subgroup partitions."""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import rng_for
from .errors import ParseError, SchemaError, ValidationError

BINARY = "binary_classification"
REGRESSION = "regression"
TASKS = (BINARY, REGRESSION)

OVERALL = "overall"


@dataclass(frozen=True)
class ColumnSchema:
    """Roles of the dataset columns.

    Sensitive attributes that are not already numerical or categorical
    features are one-hot encoded as extra categorical features unless they are
    listed in ``exclude_from_features``.
    """

    target: str
    numericals: tuple = ()
    categoricals: tuple = ()
    sensitive: tuple = ()
    exclude_from_features: tuple = ()

    def __post_init__(self):
        for name in ("numericals", "categoricals", "sensitive", "exclude_from_features"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.target in self.numericals or self.target in self.categoricals:
            raise SchemaError(f"target column {self.target!r} is also listed as a feature", self.target)
        overlap = set(self.numericals) & set(self.categoricals)
        if overlap:
            col = sorted(overlap)[0]
            raise SchemaError(f"column {col!r} is both numerical and categorical", col)
        for names in (self.numericals, self.categoricals, self.sensitive):
            if len(set(names)) != len(names):
                raise SchemaError(f"duplicate column names in {list(names)}")
        unknown = set(self.exclude_from_features) - set(self.sensitive)
        if unknown:
            col = sorted(unknown)[0]
            raise SchemaError(f"only sensitive attributes can be excluded from features, got {col!r}", col)

    @property
    def columns(self):
        """Every column the schema references, target first, without duplicates."""
        seen = [self.target]
        for name in self.numericals + self.categoricals + self.sensitive:
            if name not in seen:
                seen.append(name)
        return tuple(seen)

    @property
    def feature_numericals(self):
        return tuple(c for c in self.numericals if c not in self.exclude_from_features)

    @property
    def feature_categoricals(self):
        extra = tuple(
            c for c in self.sensitive
            if c not in self.numericals and c not in self.categoricals
        )
        return tuple(
            c for c in self.categoricals + extra if c not in self.exclude_from_features
        )


@dataclass(frozen=True)
class SubgroupSpec:
    """Privileged values per sensitive attribute plus the intersections to cross."""

    attributes: tuple
    intersections: tuple = ()

    def __post_init__(self):
        attrs = self.attributes
        if isinstance(attrs, dict):
            attrs = attrs.items()
        object.__setattr__(self, "attributes", tuple((str(a), v) for a, v in attrs))
        object.__setattr__(self, "intersections", tuple(tuple(s) for s in self.intersections))
        names = self.attribute_names
        if len(set(names)) != len(names):
            raise SchemaError("a sensitive attribute is declared twice")
        for subset in self.intersections:
            if len(subset) < 2 or len(set(subset)) != len(subset):
                raise SchemaError(f"intersection {list(subset)} needs at least two distinct attributes")
            for name in subset:
                if name not in names:
                    raise SchemaError(f"intersection references undeclared attribute {name!r}", name)

    @property
    def attribute_names(self):
        return tuple(a for a, _ in self.attributes)

    @property
    def privileged(self):
        return dict(self.attributes)

    @property
    def group_keys(self):
        """Attribute and intersection keys in declaration order, e.g. ``sex``, ``sex&race``."""
        return self.attribute_names + tuple("&".join(s) for s in self.intersections)

    def validate(self, schema):
        for name in self.attribute_names:
            if name not in schema.sensitive:
                raise SchemaError(f"subgroup attribute {name!r} is not a sensitive column", name)


@dataclass(frozen=True)
class Dataset:
    """Column-oriented table.

    Numerical columns are float64 arrays, the target is int64 (binary) or
    float64 (regression), everything else is kept as strings.
    """

    columns: dict
    schema: ColumnSchema
    task: str = BINARY

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValidationError(f"unknown task {self.task!r}; expected one of {TASKS}")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValidationError("columns have different lengths")
        for name in self.schema.columns:
            if name not in self.columns:
                raise SchemaError(f"missing column {name!r}", name)
        if self.task == BINARY:
            y = np.asarray(self.columns[self.schema.target])
            if y.size and not np.all((y == 0) | (y == 1)):
                raise ValidationError("binary classification targets must be 0 or 1")

    def __len__(self):
        return len(self.columns[self.schema.target])

    @property
    def n(self):
        return len(self)

    @property
    def target(self):
        return self.columns[self.schema.target]


def load_csv(path, schema, task=BINARY):
    """Read a UTF-8 CSV file with a header row into a :class:`Dataset`."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row expected") from None
        rows = [r for r in reader if r]
    position = {name.strip(): i for i, name in enumerate(header)}
    for name in schema.columns:
        if name not in position:
            raise SchemaError(f"{path}: missing column {name!r}", name)
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}", row=lineno)

    def raw(name):
        i = position[name]
        return [r[i].strip() for r in rows]

    def parse_float(name):
        out = np.empty(len(rows), dtype=np.float64)
        for k, cell in enumerate(raw(name)):
            try:
                out[k] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: row {k + 2}, column {name!r}: cannot parse {cell!r} as a number",
                    row=k + 2, column=name,
                ) from None
            if not math.isfinite(out[k]):
                raise ParseError(
                    f"{path}: row {k + 2}, column {name!r}: non-finite value {cell!r}",
                    row=k + 2, column=name,
                )
        return out

    columns = {}
    for name in schema.columns:
        if name == schema.target:
            y = parse_float(name)
            if task == BINARY:
                bad = np.flatnonzero((y != 0) & (y != 1))
                if bad.size:
                    k = int(bad[0])
                    raise ValidationError(
                        f"{path}: row {k + 2}: target {name!r} must be 0 or 1 for binary classification, got {raw(name)[k]!r}"
                    )
                y = y.astype(np.int64)
            columns[name] = y
        elif name in schema.numericals:
            columns[name] = parse_float(name)
        else:
            columns[name] = np.array(raw(name), dtype=str)
    return Dataset(columns=columns, schema=schema, task=task)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    calibration: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def sizes(self):
        return len(self.train), len(self.test), len(self.calibration)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split(dataset, fractions=(0.8, 0.1, 0.1), seed=0):
    """Shuffle row indices with ``seed`` and cut them into train/test/calibration.

    Test and calibration sizes are ``round(fraction * n)``; when the fractions
    sum to one the rounding remainder goes to train.
    """
    n = dataset if isinstance(dataset, int) else len(dataset)
    f_train, f_test, f_cal = (float(f) for f in fractions)
    for f in (f_train, f_test, f_cal):
        if not 0.0 <= f <= 1.0:
            raise ValidationError(f"split fractions must lie in [0, 1], got {fractions}")
    total = f_train + f_test + f_cal
    if total > 1 + 1e-12:
        raise ValidationError(f"split fractions sum to {total} > 1")
    if n < 3:
        raise ValidationError(f"need at least 3 rows to split, got {n}")
    n_test = _round_half_up(f_test * n)
    n_cal = _round_half_up(f_cal * n)
    if abs(total - 1.0) <= 1e-12:
        n_train = n - n_test - n_cal
    else:
        n_train = min(_round_half_up(f_train * n), n - n_test - n_cal)
    for name, f, size in (("train", f_train, n_train), ("test", f_test, n_test), ("calibration", f_cal, n_cal)):
        if f > 0 and size < 1:
            raise ValidationError(f"{name} fraction {f} yields an empty split for n={n}")
    perm = rng_for(seed, "split").permutation(n)
    test = np.sort(perm[:n_test])
    cal = np.sort(perm[n_test:n_test + n_cal])
    train = np.sort(perm[n_test + n_cal:n_test + n_cal + n_train])
    return SplitIndices(train=train, test=test, calibration=cal)


@dataclass(frozen=True)
class Subgroups:
    """Dataset row indices per subgroup name; ``empty`` lists subgroups with no rows."""

    groups: dict

    @property
    def empty(self):
        return tuple(name for name, idx in self.groups.items() if len(idx) == 0)

    def __getitem__(self, name):
        return self.groups[name]

    def __iter__(self):
        return iter(self.groups)

    def __len__(self):
        return len(self.groups)

    def items(self):
        return self.groups.items()

    def positions(self, indices):
        """Re-express every subgroup as positions within ``indices`` (e.g. the test split)."""
        lookup = {int(ix): pos for pos, ix in enumerate(indices)}
        return {
            name: np.array([lookup[int(i)] for i in idx], dtype=np.int64)
            for name, idx in self.groups.items()
        }


def _privileged_mask(dataset, column, value):
    values = dataset.columns[column]
    if column in dataset.schema.numericals:
        return values == float(value)
    return values == str(value)


def partition_subgroups(dataset, indices, spec):
    """Split ``indices`` into ``overall``, ``<a>_priv``/``<a>_dis`` and intersection groups.

    An intersection's ``dis`` group holds rows where every member attribute is
    non-privileged; mixed rows belong to neither intersectional group.
    """
    spec.validate(dataset.schema)
    indices = np.asarray(indices, dtype=np.int64)
    priv = {
        a: _privileged_mask(dataset, a, v)[indices] for a, v in spec.attributes
    }
    groups = {OVERALL: indices.copy()}
    for a in spec.attribute_names:
        groups[f"{a}_priv"] = indices[priv[a]]
        groups[f"{a}_dis"] = indices[~priv[a]]
    for subset in spec.intersections:
        key = "&".join(subset)
        all_priv = np.logical_and.reduce([priv[a] for a in subset])
        all_dis = np.logical_and.reduce([~priv[a] for a in subset])
        groups[f"{key}_priv"] = indices[all_priv]
        groups[f"{key}_dis"] = indices[all_dis]
    return Subgroups(groups)


@dataclass(frozen=True)
class Preprocessor:
    """Train-split statistics: (name, mean, scale) per numerical, (name, vocabulary) per categorical."""

    numericals: tuple
    categoricals: tuple
    warnings: tuple = ()

    @property
    def width(self):
        return len(self.numericals) + sum(len(v) for _, v in self.categoricals)

    @property
    def feature_names(self):
        names = [name for name, _, _ in self.numericals]
        for name, vocab in self.categoricals:
            names.extend(f"{name}={v}" for v in vocab)
        return names


def fit_preprocessor(dataset, train):
    train = np.asarray(train, dtype=np.int64)
    if train.size == 0:
        raise ValidationError("cannot fit a preprocessor on an empty train split")
    schema = dataset.schema
    numericals = []
    notes = []
    for name in schema.feature_numericals:
        values = dataset.columns[name][train]
        mean = float(values.mean())
        std = float(values.std())  # population convention (ddof=0)
        if std == 0.0:
            notes.append(f"column {name!r} has zero variance on train; scaling divisor set to 1")
            std = 1.0
        numericals.append((name, mean, std))
    categoricals = []
    for name in schema.feature_categoricals:
        vocab = dict.fromkeys(str(v) for v in dataset.columns[name][train])
        categoricals.append((name, tuple(vocab)))
    return Preprocessor(tuple(numericals), tuple(categoricals), tuple(notes))


def transform(preproc, dataset, indices):
    """Feature matrix for ``indices``; unseen categories encode as an all-zero block."""
    indices = np.asarray(indices, dtype=np.int64)
    blocks = []
    for name, mean, scale in preproc.numericals:
        blocks.append(((dataset.columns[name][indices] - mean) / scale)[:, None])
    for name, vocab in preproc.categoricals:
        values = dataset.columns[name][indices]
        blocks.append(
            np.stack([values == v for v in vocab], axis=1).astype(np.float64)
            if vocab else np.zeros((len(indices), 0))
        )
    if not blocks:
        return np.zeros((len(indices), 0))
    return np.hstack(blocks).astype(np.float64)

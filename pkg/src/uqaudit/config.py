"""Declarative audit configuration (YAML or JSON) with defaults and validation."""

import hashlib
import json
from pathlib import Path
from typing import ClassVar, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, field_validator

from .data import BINARY, REGRESSION, ColumnSchema, SubgroupSpec
from .errors import ConfigError, ValidationError
from .estimators import ModelSpec

SCHEMA_VERSION = 1


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DatasetConfig(_Section):
    path: str
    id: Optional[str] = None
    task: Literal["binary_classification", "regression"] = BINARY


class SchemaConfig(_Section):
    target: str
    numericals: list[str] = []
    categoricals: list[str] = []
    sensitive: list[str] = []
    exclude_from_features: list[str] = []


class SubgroupsConfig(_Section):
    attributes: dict[str, Union[str, int, float]]
    intersections: list[list[str]] = []

    @field_validator("attributes")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("at least one sensitive attribute is required")
        return v


class SplitsConfig(_Section):
    train: float = Field(0.8, ge=0, le=1)
    test: float = Field(0.1, ge=0, le=1)
    calibration: float = Field(0.1, ge=0, le=1)

    @field_validator("calibration")
    @classmethod
    def _sum(cls, v, info):
        total = info.data.get("train", 0.0) + info.data.get("test", 0.0) + v
        if total > 1 + 1e-12:
            raise ValueError(f"split fractions sum to {total:g} > 1")
        return v


class EnsembleConfig(_Section):
    size: int = Field(200, ge=1)
    fraction: float = Field(0.8, gt=0, le=1)
    threshold: float = Field(0.5, ge=0, le=1)
    bias_from: Literal["single_model", "ensemble_mean"] = "single_model"


class BootstrapMetricsConfig(_Section):
    enabled: bool = True
    entropy: bool = False
    percentile_alpha: float = Field(0.05, gt=0, lt=1)


class IntervalMethodConfig(_Section):
    enabled: bool = True
    alphas: list[float] = [0.1]

    # jackknife+ bounds cross above 0.5
    max_alpha: ClassVar[float] = 0.5

    @field_validator("alphas")
    @classmethod
    def _alphas(cls, v):
        if not v:
            raise ValueError("at least one alpha is required")
        for a in v:
            if not 0.0 < a < 1.0 or a > cls.max_alpha:
                bound = "1)" if cls.max_alpha >= 1.0 else f"{cls.max_alpha}]"
                raise ValueError(f"alpha must lie in (0, {bound}, got {a}")
        return v


class JabConfig(IntervalMethodConfig):
    strict: bool = False


class ConformalConfig(IntervalMethodConfig):
    max_alpha: ClassVar[float] = 1.0

    corrected: bool = True
    force_nonempty: bool = False


def _toggle(v):
    if v is True:
        return {}
    if v is False:
        return {"enabled": False}
    return v


class MethodsConfig(_Section):
    bootstrap_metrics: BootstrapMetricsConfig = BootstrapMetricsConfig()
    jackknife_plus: IntervalMethodConfig = IntervalMethodConfig(enabled=False)
    jab: JabConfig = JabConfig(enabled=False)
    conformal: ConformalConfig = ConformalConfig(enabled=False)

    @field_validator("bootstrap_metrics", "jackknife_plus", "jab", "conformal", mode="before")
    @classmethod
    def _toggles(cls, v):
        # `jab: true` switches a method on with its defaults
        return _toggle(v)


class ReportConfig(_Section):
    favorable_positive: bool = True
    tolerance: float = Field(0.05, gt=0)
    format: Literal["csv", "json"] = "csv"


class RunConfig(_Section):
    dataset: DatasetConfig
    columns: SchemaConfig = Field(alias="schema")
    subgroups: SubgroupsConfig
    models: dict[str, dict]
    seeds: list[int]
    splits: SplitsConfig = SplitsConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    methods: MethodsConfig = MethodsConfig()
    report: ReportConfig = ReportConfig()

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        if len(set(v)) != len(v):
            raise ValueError("seeds must be unique")
        return v

    @field_validator("models")
    @classmethod
    def _models(cls, v):
        if not v:
            raise ValueError("at least one model is required")
        for name, body in v.items():
            if not isinstance(body, dict) or "kind" not in body:
                raise ValueError(f"model {name!r} needs a 'kind'")
        return v

    # resolved views -------------------------------------------------------

    @property
    def task(self):
        return self.dataset.task

    @property
    def dataset_id(self):
        return self.dataset.id or Path(self.dataset.path).stem

    @property
    def column_schema(self):
        c = self.columns
        sensitive = list(c.sensitive)
        for name in self.subgroups.attributes:
            if name not in sensitive:
                sensitive.append(name)
        return ColumnSchema(c.target, c.numericals, c.categoricals, sensitive, c.exclude_from_features)

    @property
    def subgroup_spec(self):
        return SubgroupSpec(tuple(self.subgroups.attributes.items()), self.subgroups.intersections)

    @property
    def fractions(self):
        return self.splits.train, self.splits.test, self.splits.calibration

    def model_spec(self, name):
        body = dict(self.models[name])
        kind = body.pop("kind")
        return ModelSpec(kind, self.task, body)

    def canonical(self):
        """Canonical JSON of the resolved config, without the dataset location."""
        data = self.model_dump(mode="json", by_alias=True)
        data["dataset"].pop("path")
        data["dataset"]["id"] = self.dataset_id
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def fingerprint(self, dataset_bytes=b""):
        h = hashlib.sha256(self.canonical().encode())
        h.update(hashlib.sha256(dataset_bytes).digest())
        return h.hexdigest()[:20]


def _check(config):
    """Cross-section invariants pydantic cannot express per field."""
    try:
        schema = config.column_schema
        config.subgroup_spec.validate(schema)
    except ValidationError as exc:
        raise ConfigError(str(exc), getattr(exc, "column", None) and "subgroups") from exc
    m = config.methods
    if m.bootstrap_metrics.enabled and config.ensemble.size < 2:
        raise ConfigError("stability metrics need ensemble.size >= 2", "ensemble.size")
    if m.conformal.enabled and config.splits.calibration <= 0:
        raise ConfigError("conformal prediction needs splits.calibration > 0", "splits.calibration")
    if config.task == REGRESSION and config.ensemble.bias_from != "single_model":
        raise ConfigError("bias metrics are not computed for regression", "ensemble.bias_from")
    for name in config.models:
        try:
            config.model_spec(name)
        except ValidationError as exc:
            raise ConfigError(f"models.{name}: {exc}", f"models.{name}") from exc
    return config


def _format_error(exc):
    parts, keys = [], []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"])
        keys.append(key)
        if err["type"] == "extra_forbidden":
            parts.append(f"unknown key {key!r}")
        elif err["type"] == "missing":
            parts.append(f"missing key {key!r}")
        else:
            parts.append(f"{key}: {err['msg']}")
    return "; ".join(parts), (keys[0] if keys else None)


def config_from_dict(data, base_dir=None):
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    try:
        config = RunConfig.model_validate(data)
    except PydanticError as exc:
        message, key = _format_error(exc)
        raise ConfigError(message, key) from None
    if base_dir is not None and not Path(config.dataset.path).is_absolute():
        resolved = str((Path(base_dir) / config.dataset.path).resolve())
        config = config.model_copy(update={"dataset": config.dataset.model_copy(update={"path": resolved})})
    if not Path(config.dataset.path).is_file():
        raise ConfigError(f"dataset not found: {config.dataset.path}", "dataset.path")
    return _check(config)


def parse_config(path):
    """Read a YAML or JSON config file, fill defaults and validate."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}") from None
    return config_from_dict(data, base_dir=path.parent)


def with_overrides(config, strict_oob=None, uncorrected_quantile=None, force_nonempty_sets=None):
    """Apply command-line switches; the result has its own fingerprint."""
    m = config.methods
    jab, conf = m.jab, m.conformal
    if strict_oob:
        jab = jab.model_copy(update={"strict": True})
    if uncorrected_quantile:
        conf = conf.model_copy(update={"corrected": False})
    if force_nonempty_sets:
        conf = conf.model_copy(update={"force_nonempty": True})
    methods = m.model_copy(update={"jab": jab, "conformal": conf})
    return config.model_copy(update={"methods": methods})

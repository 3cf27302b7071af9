"""Audit orchestration: single run, multi-model and multi-seed interfaces with per-run persistence."""

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bias, conformal, resampling, stability
from ._seeding import derive_seed, resolve_threads
from .config import SCHEMA_VERSION, parse_config
from .data import BINARY, fit_preprocessor, load_csv, partition_subgroups, split, transform
from .errors import RecordLoadError
from .estimators import fit, predict_label, predict_proba
from .parity import MetricsTable, ParityEntry, ParityReport, compose_parity

log = logging.getLogger(__name__)

OK = "ok"
FAILED = "failed"
TIMINGS_DIR = "_timings"

BOOTSTRAP_PERCENTILE = "bootstrap_percentile"
CONFORMAL = "conformal"


@dataclass
class IntervalSummary:
    method: str
    alpha: float
    coverage: float
    mean_width: float  # mean set size for classification conformal sets
    n_unbounded: int
    n: int
    fits: int
    region: str = "interval"  # or "set"


@dataclass
class RunRecord:
    config_fingerprint: str
    dataset_id: str
    seed: int
    model: str
    status: str = OK
    error: dict = None
    split_fingerprint: str = ""
    split_sizes: list = field(default_factory=list)
    metrics: MetricsTable = field(default_factory=MetricsTable)
    parity: ParityReport = field(default_factory=ParityReport)
    intervals: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)  # ms per stage, stored beside the record

    @property
    def name(self):
        return record_name(self.dataset_id, self.model, self.seed)

    @property
    def ok(self):
        return self.status == OK

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "config_fingerprint": self.config_fingerprint,
            "dataset_id": self.dataset_id,
            "seed": self.seed,
            "model": self.model,
            "status": self.status,
            "error": self.error,
            "split_fingerprint": self.split_fingerprint,
            "split_sizes": list(self.split_sizes),
            "metrics": [
                {"metric": m, "subgroup": s, "value": v} for m, s, v in self.metrics.rows()
            ],
            "parity": [vars(e) for e in self.parity],
            "intervals": [vars(s) for s in self.intervals],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data, timings=None):
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {data.get('schema_version')!r}")
        return cls(
            config_fingerprint=data["config_fingerprint"],
            dataset_id=data["dataset_id"],
            seed=data["seed"],
            model=data["model"],
            status=data["status"],
            error=data["error"],
            split_fingerprint=data["split_fingerprint"],
            split_sizes=data["split_sizes"],
            metrics=MetricsTable.from_rows((r["metric"], r["subgroup"], r["value"]) for r in data["metrics"]),
            parity=ParityReport([ParityEntry(**e) for e in data["parity"]]),
            intervals=[IntervalSummary(**s) for s in data["intervals"]],
            warnings=data["warnings"],
            timings=dict(timings or {}),
        )

    def __eq__(self, other):
        return isinstance(other, RunRecord) and self.to_dict() == other.to_dict()


def record_name(dataset_id, model, seed):
    return f"{dataset_id}_{model}_{seed}"


def _dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


_WRITE_LOCK = threading.Lock()


def persist(record, out_dir):
    """Write ``<dataset>_<model>_<seed>.json`` plus a timing sidecar; returns the record path."""
    out = Path(out_dir)
    (out / TIMINGS_DIR).mkdir(parents=True, exist_ok=True)
    path = out / f"{record.name}.json"
    with _WRITE_LOCK:
        for target, text in (
            (path, _dumps(record.to_dict())),
            (out / TIMINGS_DIR / f"{record.name}.json", _dumps(record.timings)),
        ):
            tmp = target.with_suffix(".json.tmp")
            tmp.write_text(text, encoding="utf-8")
            os.replace(tmp, target)
    return path


class LoadedRecords(list):
    """Records read from disk; ``errors`` lists files that could not be read."""

    def __init__(self, records=(), errors=()):
        super().__init__(records)
        self.errors = list(errors)


def load_record(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        timing_path = path.parent / TIMINGS_DIR / path.name
        timings = json.loads(timing_path.read_text(encoding="utf-8")) if timing_path.exists() else {}
        return RunRecord.from_dict(data, timings)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise RecordLoadError(path, exc) from exc


def load_records(out_dir):
    """Every record in ``out_dir`` sorted by file name; unreadable files go to ``.errors``."""
    records, errors = [], []
    out = Path(out_dir)
    if not out.is_dir():
        return LoadedRecords()
    for path in sorted(out.glob("*.json")):
        try:
            records.append(load_record(path))
        except RecordLoadError as exc:
            log.error("%s", exc)
            errors.append(exc)
    return LoadedRecords(records, errors)


def _hash_indices(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.asarray(a, dtype=np.int64).tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]


class _Stages:
    """Times named pipeline stages and remembers which one was running."""

    def __init__(self):
        self.timings = {}
        self.current = None

    def __call__(self, name):
        self.current = name
        return self

    def __enter__(self):
        self._t0 = time.perf_counter_ns()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.timings[self.current] = round((time.perf_counter_ns() - self._t0) / 1e6, 3)
        return False


class AuditRunner:
    """Runs audits for one validated :class:`~uqaudit.config.RunConfig`.

    The dataset is read once; every run derives its split, bags and model
    seeds from its master seed, so results do not depend on ``threads``.
    """

    def __init__(self, config, threads=None, out_dir=None):
        self.config = config
        self.threads = resolve_threads(threads)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        data_path = Path(config.dataset.path)
        self.dataset = load_csv(data_path, config.column_schema, config.task)
        self.fingerprint = config.fingerprint(data_path.read_bytes())

    @classmethod
    def from_file(cls, path, threads=None, out_dir=None):
        return cls(parse_config(path), threads=threads, out_dir=out_dir)

    # ---- single run ---------------------------------------------------

    def _prepare(self, seed):
        cfg = self.config
        idx = split(self.dataset, cfg.fractions, seed)
        pre = fit_preprocessor(self.dataset, idx.train)
        y = self.dataset.target
        return idx, pre, {
            "train": (transform(pre, self.dataset, idx.train), y[idx.train]),
            "test": (transform(pre, self.dataset, idx.test), y[idx.test]),
            "calibration": (transform(pre, self.dataset, idx.calibration), y[idx.calibration]),
        }

    def run_single(self, model, seed, persist_record=True):
        """Audit one model for one seed; failures come back as a ``failed`` stub record."""
        cfg = self.config
        record = RunRecord(self.fingerprint, cfg.dataset_id, int(seed), model)
        stages = _Stages()
        try:
            self._pipeline(record, model, int(seed), stages)
        except Exception as exc:  # any stage failure is recorded, not raised
            log.warning("run %s failed in stage %s: %s", record.name, stages.current, exc)
            record.status = FAILED
            record.error = {"stage": stages.current, "message": f"{type(exc).__name__}: {exc}"}
            record.metrics = MetricsTable()
            record.parity = ParityReport()
            record.intervals = []
        record.timings = stages.timings
        if persist_record and self.out_dir is not None:
            persist(record, self.out_dir)
        return record

    def _pipeline(self, record, model_name, seed, stage):
        cfg = self.config
        methods = cfg.methods
        classify = cfg.task == BINARY
        threshold = cfg.ensemble.threshold

        with stage("config"):
            spec = cfg.model_spec(model_name)
        with stage("split"):
            idx, pre, mats = self._prepare(seed)
            record.split_fingerprint = _hash_indices(idx.train, idx.test, idx.calibration)
            record.split_sizes = list(idx.sizes())
            record.warnings.extend(pre.warnings)
            groups = partition_subgroups(self.dataset, idx.test, cfg.subgroup_spec)
            positions = groups.positions(idx.test)
            record.warnings.extend(f"subgroup {g!r} is empty on the test split" for g in groups.empty)
        X_tr, y_tr = mats["train"]
        X_te, y_te = mats["test"]

        with stage("fit"):
            single = fit(spec, X_tr, y_tr, derive_seed(seed, "model"))
            test_out = predict_proba(single, X_te)

        table = record.metrics
        ensemble = matrix = None
        if methods.bootstrap_metrics.enabled or methods.jab.enabled:
            with stage("bootstrap"):
                ensemble = resampling.fit_bootstrap_ensemble(
                    spec, X_tr, y_tr, cfg.ensemble.size, cfg.ensemble.fraction,
                    derive_seed(seed, "ensemble"), self.threads,
                )
                matrix = resampling.predict_distribution(ensemble, X_te, threshold, self.threads)

        if classify:
            with stage("bias"):
                if cfg.ensemble.bias_from == "ensemble_mean" and matrix is not None:
                    labels = predict_label(matrix.probabilities.mean(axis=0), threshold)
                else:
                    labels = predict_label(test_out, threshold)
                for group, rs in bias.subgroup_rates(y_te, labels, positions).items():
                    for metric, value in rs.as_dict().items():
                        table.set(metric, group, value)

        if methods.bootstrap_metrics.enabled:
            with stage("stability"):
                entropy = methods.bootstrap_metrics.entropy
                profile = stability.stability_profile(matrix, entropy=entropy, labels=classify)
                for group, pos in positions.items():
                    for metric, value in profile.aggregate(pos, entropy).items():
                        if getattr(profile, metric) is not None:  # label metrics skipped for regression
                            table.set(metric, group, value)

        with stage("parity"):
            rep = compose_parity(table, cfg.subgroup_spec.group_keys,
                                 cfg.report.favorable_positive, cfg.report.tolerance)
            record.parity = rep

        with stage("intervals"):
            record.intervals = self._intervals(spec, seed, single, ensemble, matrix, mats, record)

    def _intervals(self, spec, seed, single, ensemble, matrix, mats, record):
        cfg = self.config
        methods = cfg.methods
        X_tr, y_tr = mats["train"]
        X_te, y_te = mats["test"]
        truths = y_te.astype(np.float64)
        out = []

        def summarize(method, alpha, regions, fits, region="interval"):
            s = conformal.evaluate_coverage(regions, truths)
            out.append(IntervalSummary(method, alpha, s.coverage, s.mean_size, s.n_unbounded, s.n, fits, region))

        if methods.bootstrap_metrics.enabled and matrix is not None:
            a = methods.bootstrap_metrics.percentile_alpha
            summarize(BOOTSTRAP_PERCENTILE, a, resampling.percentile_intervals(matrix, a), ensemble.fits)
        if methods.jackknife_plus.enabled:
            loo = resampling.fit_jackknife(spec, X_tr, y_tr, derive_seed(seed, "jackknife"), self.threads)
            mu = loo.predict(X_te, self.threads)
            for a in methods.jackknife_plus.alphas:
                bounds = resampling.jackknife_plus_bounds(mu, loo.residuals, a)
                summarize(resampling.JACKKNIFE_PLUS, a, bounds.intervals(), loo.fits)
        if methods.jab.enabled:
            oob = resampling.oob_prediction_sets(ensemble, X_tr, y_tr, methods.jab.strict, self.threads)
            if oob.zero_oob:
                record.warnings.append(
                    f"jab: {len(oob.zero_oob)} training sample(s) without out-of-bag members excluded"
                )
            for a in methods.jab.alphas:
                bounds = resampling.jab_intervals(ensemble, oob, X_te, a, self.threads)
                summarize(resampling.JAB, a, bounds.intervals(), ensemble.fits)
        if methods.conformal.enabled:
            out.extend(self._conformal(single, mats))
        return out

    def _conformal(self, model, mats):
        conf = self.config.methods.conformal
        X_cal, y_cal = mats["calibration"]
        X_te, y_te = mats["test"]
        classify = model.spec.is_classifier
        fn = resampling.residual_score(model.spec)
        cal_scores = conformal.score(fn, predict_proba(model, X_cal), y_cal)
        test_out = predict_proba(model, X_te)
        out = []
        for a in conf.alphas:
            rec = conformal.calibrate(cal_scores, a, fn.kind, conf.corrected)
            if classify:
                regions = [conformal.set_from_output(o, rec, conf.force_nonempty) for o in test_out]
            else:
                regions = [conformal.predict_interval(o, rec) for o in test_out]
            s = conformal.evaluate_coverage(regions, y_te.astype(np.float64))
            out.append(IntervalSummary(CONFORMAL, a, s.coverage, s.mean_size, s.n_unbounded, s.n, 1,
                                       "set" if classify else "interval"))
        return out

    def conformal_only(self, model, seed):
        """Split, fit once, calibrate and evaluate coverage; no ensembles."""
        spec = self.config.model_spec(model)
        _, _, mats = self._prepare(seed)
        single = fit(spec, *mats["train"], derive_seed(seed, "model"))
        return self._conformal(single, mats)

    # ---- multi-model / multi-seed --------------------------------------

    def run_multi_model(self, seed, persist_record=True):
        return [self.run_single(m, seed, persist_record) for m in self.config.models]

    def _completed(self, model, seed):
        if self.out_dir is None:
            return None
        path = self.out_dir / f"{record_name(self.config.dataset_id, model, seed)}.json"
        if not path.exists():
            return None
        try:
            rec = load_record(path)
        except RecordLoadError:
            return None
        if rec.ok and rec.config_fingerprint == self.fingerprint:
            return rec
        return None

    def run_multi_seed(self, resume=True, on_record=None):
        """All seeds x all models, persisted after each run; completed runs are skipped on resume.

        ``on_record(record, fresh)`` is called after every run in order.
        """
        records = []
        for seed in self.config.seeds:
            for model in self.config.models:
                done = self._completed(model, seed) if resume else None
                fresh = done is None
                rec = self.run_single(model, seed) if fresh else done
                records.append(rec)
                if on_record is not None:
                    on_record(rec, fresh)
        return records


def run_single(config, model, seed, threads=None, out_dir=None):
    return AuditRunner(config, threads, out_dir).run_single(model, seed)


def run_multi_model(config, seed, threads=None, out_dir=None):
    return AuditRunner(config, threads, out_dir).run_multi_model(seed)


def run_multi_seed(config, threads=None, out_dir=None, resume=True):
    return AuditRunner(config, threads, out_dir).run_multi_seed(resume)

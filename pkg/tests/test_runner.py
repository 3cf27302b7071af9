import json
import statistics
from itertools import combinations

import numpy as np
import pytest

from conftest import base_config
from uqaudit._seeding import derive_seed
from uqaudit.config import config_from_dict, parse_config, with_overrides
from uqaudit.data import fit_preprocessor, split, transform
from uqaudit.errors import ConfigError, RecordLoadError
from uqaudit.estimators import fit, predict_label, predict_proba
from uqaudit.resampling import fit_bootstrap_ensemble, predict_distribution
from uqaudit.runner import AuditRunner, RunRecord, load_record, load_records, persist


def make(csv, **overrides):
    return config_from_dict(base_config(csv, **overrides))


class TestConfig:
    def test_defaults(self, synth_csv):
        cfg = config_from_dict({k: v for k, v in base_config(synth_csv).items() if k != "ensemble"})
        assert cfg.ensemble.size == 200 and cfg.ensemble.fraction == 0.8
        assert cfg.fractions == (0.8, 0.1, 0.1)
        assert cfg.report.tolerance == 0.05
        assert cfg.methods.bootstrap_metrics.enabled and not cfg.methods.jab.enabled

    def test_values_kept_verbatim(self, synth_csv):
        cfg = make(synth_csv, ensemble={"size": 200, "fraction": 0.8}, seeds=list(range(101, 111)))
        assert cfg.ensemble.size == 200 and cfg.ensemble.fraction == 0.8
        assert cfg.seeds == list(range(101, 111))

    def test_sensitive_columns_filled_from_subgroups(self, synth_csv):
        assert set(make(synth_csv).column_schema.sensitive) == {"sex", "race"}

    @pytest.mark.parametrize("overrides,key", [
        ({"splits": {"train": 0.8, "test": 0.3, "calibration": 0.1}}, "splits"),
        ({"bogus": 1}, "bogus"),
        ({"methods": {"conformal": {"alphas": [0.0]}}}, "methods.conformal.alphas"),
        ({"methods": {"jab": {"alphas": [0.7]}}}, "methods.jab.alphas"),
        ({"ensemble": {"size": 1}}, "ensemble.size"),
        ({"dataset": {"path": "/nonexistent/data.csv"}}, "dataset.path"),
        ({"seeds": [1, 1]}, "seeds"),
        ({"models": {"m": {"kind": "knn", "depth": 2}}}, "models.m"),
    ])
    def test_rejected(self, synth_csv, overrides, key):
        with pytest.raises(ConfigError) as info:
            make(synth_csv, **overrides)
        assert info.value.key.startswith(key)

    def test_bool_toggle(self, synth_csv):
        cfg = make(synth_csv, methods={"jab": True})
        assert cfg.methods.jab.enabled and cfg.methods.jab.alphas == [0.1]

    def test_overrides_change_fingerprint(self, synth_csv):
        cfg = make(synth_csv, methods={"conformal": True})
        other = with_overrides(cfg, uncorrected_quantile=True)
        assert not other.methods.conformal.corrected
        assert other.fingerprint(b"x") != cfg.fingerprint(b"x")

    def test_yaml_relative_path(self, toy_config_path):
        cfg = parse_config(toy_config_path)
        assert cfg.dataset_id == "toy60" and cfg.seeds == [1, 2, 3]


def oracle_grid(cfg, runner, model, seed):
    """Recompute the test-split grid from library primitives with hand-written metrics."""
    ds = runner.dataset
    idx = split(ds, cfg.fractions, seed)
    pre = fit_preprocessor(ds, idx.train)
    X_tr, y_tr = transform(pre, ds, idx.train), ds.target[idx.train]
    X_te, y_te = transform(pre, ds, idx.test), ds.target[idx.test]
    spec = cfg.model_spec(model)
    yhat = predict_label(predict_proba(fit(spec, X_tr, y_tr, derive_seed(seed, "model")), X_te))
    ens = fit_bootstrap_ensemble(spec, X_tr, y_tr, cfg.ensemble.size, cfg.ensemble.fraction,
                                 derive_seed(seed, "ensemble"))
    mat = predict_distribution(ens, X_te)
    sex = np.array(ds.columns["sex"])[idx.test]
    groups = {"overall": np.arange(len(idx.test)), "sex_priv": np.flatnonzero(sex == "M"),
              "sex_dis": np.flatnonzero(sex != "M")}
    out = {}
    for g, pos in groups.items():
        t, p = y_te[pos], yhat[pos]
        out[("accuracy", g)] = float(np.mean(t == p))
        pos_true = t == 1
        out[("tpr", g)] = float(np.mean(p[pos_true] == 1)) if pos_true.any() else None
        labels = mat.labels[:, pos]
        b = labels.shape[0]
        pairs = list(combinations(range(b), 2))
        out[("jitter", g)] = float(np.mean([np.mean(labels[i] != labels[j]) for i, j in pairs]))
        out[("label_stability", g)] = float(np.mean([abs(2 * c.sum() - b) / b for c in labels.T]))
        out[("std", g)] = float(np.mean([statistics.stdev(c) for c in mat.probabilities[:, pos].T]))
    return out


class TestRunSingle:
    def test_grid_matches_oracle(self, synth_csv, tmp_path):
        cfg = make(synth_csv, subgroups={"attributes": {"sex": "M"}})
        runner = AuditRunner(cfg, out_dir=tmp_path / "out")
        rec = runner.run_single("dt", 1)
        assert rec.ok, rec.error
        expected = oracle_grid(cfg, runner, "dt", 1)
        for (metric, group), value in expected.items():
            got = rec.metrics.get(metric, group)
            if value is None:
                assert got is None
            else:
                assert got == pytest.approx(value, abs=1e-12), (metric, group)
        assert {e.metric for e in rec.parity} >= {"disparate_impact", "jitter_parity"}
        assert sum(rec.split_sizes) == 60

    def test_rerun_identical(self, synth_csv, tmp_path):
        cfg = make(synth_csv, methods={"jab": True, "conformal": True, "jackknife_plus": True})
        a = AuditRunner(cfg, threads=1).run_single("knn", 4)
        b = AuditRunner(cfg, threads=3).run_single("knn", 4)
        assert a.ok and a == b
        assert {s.method for s in a.intervals} == {"bootstrap_percentile", "jackknife_plus", "jab", "conformal"}

    def test_fit_counts(self, synth_csv):
        cfg = make(synth_csv, methods={"jab": True, "conformal": True, "jackknife_plus": True})
        rec = AuditRunner(cfg).run_single("dt", 2)
        fits = {s.method: s.fits for s in rec.intervals}
        assert fits == {"bootstrap_percentile": 8, "jackknife_plus": rec.split_sizes[0], "jab": 8, "conformal": 1}


class TestMultiModel:
    def test_shared_split(self, synth_csv):
        recs = AuditRunner(make(synth_csv)).run_multi_model(5)
        assert [r.model for r in recs] == ["lr", "dt", "knn"]
        assert len({r.split_fingerprint for r in recs}) == 1

    def test_failure_is_isolated(self, synth_csv, tmp_path):
        models = base_config(synth_csv)["models"] | {"knn": {"kind": "knn", "k": 1000}}
        recs = AuditRunner(make(synth_csv, models=models), out_dir=tmp_path).run_multi_model(1)
        status = {r.model: r.status for r in recs}
        assert status == {"lr": "ok", "dt": "ok", "knn": "failed"}
        failed = recs[2]
        assert failed.error["stage"] == "fit" and "exceeds" in failed.error["message"]
        assert len(failed.metrics) == 0
        assert load_record(tmp_path / "synth_knn_1.json").status == "failed"


class TestResume:
    def test_interrupted_run_resumes(self, synth_csv, tmp_path):
        cfg = make(synth_csv, seeds=list(range(1, 11)), ensemble={"size": 4})
        out = tmp_path / "out"
        seen = []

        def kill_after_seven(rec, fresh):
            seen.append(rec.name)
            if len(seen) == 7:
                raise KeyboardInterrupt

        with pytest.raises(KeyboardInterrupt):
            AuditRunner(cfg, out_dir=out).run_multi_seed(on_record=kill_after_seven)
        assert len(list(out.glob("*.json"))) == 7

        fresh_flags = []
        records = AuditRunner(cfg, out_dir=out).run_multi_seed(on_record=lambda r, f: fresh_flags.append(f))
        assert len(records) == 30 and sum(fresh_flags) == 23

        full = AuditRunner(cfg, out_dir=tmp_path / "clean").run_multi_seed()
        assert records == full

    def test_changed_config_reruns(self, synth_csv, tmp_path):
        AuditRunner(make(synth_csv), out_dir=tmp_path).run_multi_seed()
        flags = []
        cfg = make(synth_csv, report={"tolerance": 0.1})
        AuditRunner(cfg, out_dir=tmp_path).run_multi_seed(on_record=lambda r, f: flags.append(f))
        assert flags == [True, True, True]


class TestPersistence:
    def test_round_trip(self, synth_csv, tmp_path):
        rec = AuditRunner(make(synth_csv, methods={"conformal": True})).run_single("lr", 1)
        path = persist(rec, tmp_path)
        back = load_record(path)
        assert back == rec and back.metrics == rec.metrics
        assert (tmp_path / "_timings" / f"{rec.name}.json").exists()
        assert "timings" not in json.loads(path.read_text())

    def test_corrupt_record(self, tmp_path):
        (tmp_path / "broken.json").write_text("{not json")
        with pytest.raises(RecordLoadError):
            load_record(tmp_path / "broken.json")
        loaded = load_records(tmp_path)
        assert list(loaded) == [] and len(loaded.errors) == 1

    def test_empty_directory(self, tmp_path):
        assert list(load_records(tmp_path)) == []

    def test_unknown_schema_version(self, tmp_path):
        (tmp_path / "old.json").write_text(json.dumps({"schema_version": 99}))
        with pytest.raises(RecordLoadError):
            load_record(tmp_path / "old.json")

    def test_record_equality_ignores_timings(self):
        a = RunRecord("f", "d", 1, "m", timings={"fit": 1.0})
        assert a == RunRecord("f", "d", 1, "m", timings={"fit": 2.0})

import csv
from pathlib import Path

import numpy as np
import pytest

from uqaudit.fixtures import fixture_path

ACCEPTANCE_RESULTS = []


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def synthetic_rows(n, seed=0):
    """Binary-label table with one numerical, one categorical and two sensitive columns."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    cat = rng.choice(["a", "b", "c"], n)
    sex = rng.choice(["M", "F"], n)
    race = rng.choice(["W", "B"], n)
    y = ((x + 0.5 * (sex == "M") + rng.normal(0, 0.7, n)) > 0.2).astype(int)
    return [[round(float(a), 4), c, s, r, int(t)] for a, c, s, r, t in zip(x, cat, sex, race, y)]


SYNTH_HEADER = ["x", "cat", "sex", "race", "label"]


def base_config(csv_path, **overrides):
    cfg = {
        "dataset": {"path": str(csv_path), "id": "synth"},
        "schema": {"target": "label", "numericals": ["x"], "categoricals": ["cat"]},
        "subgroups": {"attributes": {"sex": "M", "race": "W"}},
        "models": {"lr": {"kind": "logistic_regression", "iterations": 100},
                   "dt": {"kind": "decision_tree", "max_depth": 3},
                   "knn": {"kind": "knn", "k": 3}},
        "seeds": [1],
        "ensemble": {"size": 8},
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture
def synth_csv(tmp_path):
    return write_csv(tmp_path / "synth.csv", SYNTH_HEADER, synthetic_rows(60, seed=3))


@pytest.fixture
def toy_config_path():
    return fixture_path("toy60.yaml")


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        ACCEPTANCE_RESULTS.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")

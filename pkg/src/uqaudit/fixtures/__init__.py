"""Bundled example dataset and audit config."""

from pathlib import Path

HERE = Path(__file__).parent


def fixture_path(name="toy60.csv"):
    return HERE / name

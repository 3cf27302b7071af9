"""Static report files built from persisted run records."""

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import ValidationError

GRID_HEADER = ["metric", "subgroup", "value", "model", "seed", "value_defined", "record"]
PARITY_HEADER = ["metric", "group", "value", "model", "seed", "kind", "classification",
                 "value_defined", "note", "record"]
AGGREGATE_HEADER = ["table", "model", "metric", "subgroup", "n", "mean", "std", "min", "max"]
COMPARISON_HEADER = ["model", "seed", "method", "alpha", "region", "coverage", "mean_width",
                     "n_unbounded", "n", "fits", "record"]
TIMING_HEADER = ["model", "seed", "stage", "ms", "record"]


def fmt_number(value):
    """6 significant digits; undefined becomes an empty cell."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(float(value), ".6g")


def grid_rows(records):
    rows = []
    for rec in records:
        if not rec.ok:
            continue
        for metric, subgroup, value in rec.metrics.rows():
            rows.append({
                "metric": metric, "subgroup": subgroup, "value": value, "model": rec.model,
                "seed": rec.seed, "value_defined": value is not None, "record": f"{rec.name}.json",
            })
    rows.sort(key=lambda r: (r["model"], r["seed"], r["metric"], r["subgroup"]))
    return rows


def parity_rows(records):
    rows = []
    for rec in records:
        if not rec.ok:
            continue
        for e in rec.parity:
            rows.append({
                "metric": e.metric, "group": e.group, "value": e.value, "model": rec.model,
                "seed": rec.seed, "kind": e.kind, "classification": e.classification,
                "value_defined": e.value is not None, "note": e.note, "record": f"{rec.name}.json",
            })
    rows.sort(key=lambda r: (r["model"], r["seed"], r["metric"], r["group"]))
    return rows


def cross_seed_aggregates(records):
    """Mean, sample std, min and max across seeds for every (model, metric, subgroup) cell."""
    cells = defaultdict(list)
    for r in grid_rows(records):
        if r["value"] is not None:
            cells[("metric", r["model"], r["metric"], r["subgroup"])].append(r["value"])
    for r in parity_rows(records):
        if r["value"] is not None:
            cells[("parity", r["model"], r["metric"], r["group"])].append(r["value"])
    rows = []
    for (table, model, metric, subgroup), values in sorted(cells.items()):
        v = np.asarray(values, dtype=np.float64)
        rows.append({
            "table": table, "model": model, "metric": metric, "subgroup": subgroup, "n": len(v),
            "mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
            "min": float(v.min()), "max": float(v.max()),
        })
    return rows


def method_comparison(records):
    """One row per (model, seed, method, alpha): coverage, mean width / set size and fit count."""
    rows = []
    for rec in records:
        if not rec.ok:
            continue
        for s in rec.intervals:
            rows.append({
                "model": rec.model, "seed": rec.seed, "method": s.method, "alpha": s.alpha,
                "region": s.region, "coverage": s.coverage, "mean_width": s.mean_width,
                "n_unbounded": s.n_unbounded, "n": s.n, "fits": s.fits, "record": f"{rec.name}.json",
            })
    if not rows:
        raise ValidationError("no interval method results in these records")
    rows.sort(key=lambda r: (r["model"], r["seed"], r["method"], r["alpha"]))
    return rows


def timing_rows(records):
    rows = []
    for rec in records:
        for stage, ms in sorted(rec.timings.items()):
            rows.append({"model": rec.model, "seed": rec.seed, "stage": stage, "ms": ms,
                         "record": f"{rec.name}.json"})
    rows.sort(key=lambda r: (r["model"], r["seed"], r["stage"]))
    return rows


def _cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None or isinstance(value, (int, float, np.integer, np.floating)):
        return fmt_number(value)
    return str(value)


def write_table(rows, header, path, fmt="csv"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = path.with_suffix(".json")
        clean = [{k: _json_value(r[k]) for k in header} for r in rows]
        path.write_text(json.dumps(clean, indent=1, allow_nan=False) + "\n", encoding="utf-8")
        return path
    path = path.with_suffix(".csv")
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([_cell(r[k]) for k in header])
    return path


def _json_value(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def read_grid_csv(path):
    """Parse an emitted metric grid back into (metric, subgroup, model, seed) -> value."""
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            value = float(row["value"]) if row["value_defined"] == "true" else None
            out[(row["metric"], row["subgroup"], row["model"], int(row["seed"]))] = value
    return out


def emit_tables(records, out_dir, fmt="csv"):
    """Write grid, parity, aggregates, method comparison and timing tables plus a summary.

    Returns the written paths. Only the timing table depends on wall-clock time.
    """
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown report format {fmt!r}")
    records = list(records)
    if not records:
        raise ValidationError("no records to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        write_table(grid_rows(records), GRID_HEADER, out / "metric_grid", fmt),
        write_table(parity_rows(records), PARITY_HEADER, out / "parity", fmt),
        write_table(cross_seed_aggregates(records), AGGREGATE_HEADER, out / "aggregates", fmt),
    ]
    try:
        comparison = method_comparison(records)
    except ValidationError:
        comparison = None
    if comparison is not None:
        paths.append(write_table(comparison, COMPARISON_HEADER, out / "method_comparison", fmt))
    paths.append(write_table(timing_rows(records), TIMING_HEADER, out / "timings", fmt))
    summary = out / "summary.txt"
    summary.write_text(summary_text(records), encoding="utf-8")
    paths.append(summary)
    return paths


def summary_text(records):
    ok = [r for r in records if r.ok]
    failed = [r for r in records if not r.ok]
    lines = [
        f"records: {len(records)} ({len(ok)} ok, {len(failed)} failed)",
        f"models: {', '.join(sorted({r.model for r in records}))}",
        f"seeds: {', '.join(str(s) for s in sorted({r.seed for r in records}))}",
        "",
    ]
    counts = defaultdict(lambda: defaultdict(int))
    for row in parity_rows(records):
        counts[(row["model"], row["metric"], row["group"])][row["classification"]] += 1
    if counts:
        lines.append("parity classifications across seeds (model / metric / group: counts)")
        for (model, metric, group), c in sorted(counts.items()):
            detail = ", ".join(f"{k}={v}" for k, v in sorted(c.items()))
            lines.append(f"  {model} / {metric} / {group}: {detail}")
        lines.append("")
    for r in sorted(failed, key=lambda r: r.name):
        lines.append(f"FAILED {r.name}: stage={r.error.get('stage')} {r.error.get('message')}")
    return "\n".join(lines).rstrip("\n") + "\n"


def format_comparison(rows):
    """Fixed-width text rendering of :func:`method_comparison` rows."""
    cols = ["model", "seed", "method", "alpha", "coverage", "mean_width", "fits"]
    body = [[_cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]

    def line(cells):
        return "  ".join(x.ljust(w) for x, w in zip(cells, widths)).rstrip()

    return "\n".join([line(cols)] + [line(b) for b in body]) + "\n"

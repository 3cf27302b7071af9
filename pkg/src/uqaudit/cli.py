"""``uqaudit`` command line: audit, report, conformal, compare, validate.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from ._seeding import THREADS_ENV
from .config import parse_config, with_overrides
from .data import partition_subgroups, split
from .errors import UQAuditError, ValidationError
from .reporting import (
    COMPARISON_HEADER, emit_tables, fmt_number, format_comparison, method_comparison, write_table,
)
from .runner import AuditRunner, load_records

DEFAULT_OUT = "uqaudit-out"
log = logging.getLogger("uqaudit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--out", default=None, help=f"output directory (default ./{DEFAULT_OUT})")
    common.add_argument("--format", choices=("csv", "json"), default=None, help="report table format")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads, 0 = all cores (overrides ${THREADS_ENV})")
    common.add_argument("--strict-oob", action="store_true", help="fail J+aB when a sample has no OOB member")
    common.add_argument("--uncorrected-quantile", action="store_true",
                        help="conformal q_hat as the plain empirical (1-alpha) quantile")
    common.add_argument("--force-nonempty-sets", action="store_true",
                        help="add the top-probability label to empty prediction sets")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="uqaudit", description="Uncertainty, stability and fairness audits for tabular models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, target, text in (
        ("audit", "config", "run every seed x model in the config and persist records"),
        ("report", "outdir", "build metric, parity, aggregate and comparison tables"),
        ("conformal", "config", "split conformal coverage evaluation only"),
        ("compare", "outdir", "interval method comparison table"),
        ("validate", "config", "parse the config and dry-run checks without fitting"),
    ):
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        p.add_argument(target)
    return parser


def _load_config(args):
    config = parse_config(args.config)
    return with_overrides(config, args.strict_oob, args.uncorrected_quantile, args.force_nonempty_sets)


def cmd_validate(args):
    config = _load_config(args)
    runner = AuditRunner(config, threads=args.threads)
    problems = []
    for seed in config.seeds:
        idx = split(runner.dataset, config.fractions, seed)
        n_train = len(idx.train)
        for name in config.models:
            k = config.model_spec(name).hyperparameters.get("k")
            if k is not None and k > n_train:
                problems.append(f"model {name!r}: k={k} exceeds train size {n_train} (seed {seed})")
        groups = partition_subgroups(runner.dataset, idx.test, config.subgroup_spec)
        for g in groups.empty:
            print(f"warning: subgroup {g!r} is empty on the test split for seed {seed}")
    resolved = config.model_dump(mode="json", by_alias=True)
    print(json.dumps(resolved, indent=2, sort_keys=True))
    print(f"rows: {runner.dataset.n}  fingerprint: {runner.fingerprint}")
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return 1
    return 0


def cmd_audit(args):
    config = _load_config(args)
    out = Path(args.out or DEFAULT_OUT)
    runner = AuditRunner(config, threads=args.threads, out_dir=out)

    def progress(rec, fresh):
        state = rec.status if fresh else "skipped (already complete)"
        print(f"{rec.name}: {state}")

    records = runner.run_multi_seed(resume=True, on_record=progress)
    failed = [r for r in records if not r.ok]
    print(f"{len(records)} records in {out} ({len(failed)} failed)")
    return 2 if failed else 0


def cmd_report(args):
    out = Path(args.outdir)
    records = load_records(out)
    for err in records.errors:
        print(f"error: {err}", file=sys.stderr)
    if not records:
        print(f"error: no records found in {out}", file=sys.stderr)
        return 1
    target = Path(args.out) if args.out else out / "report"
    for path in emit_tables(records, target, args.format or "csv"):
        print(path)
    return 2 if records.errors else 0


def cmd_compare(args):
    out = Path(args.outdir)
    records = load_records(out)
    if not records:
        print(f"error: no records found in {out}", file=sys.stderr)
        return 1
    rows = method_comparison(records)
    sys.stdout.write(format_comparison(rows))
    target = Path(args.out) if args.out else out / "report"
    print(write_table(rows, COMPARISON_HEADER, target / "method_comparison", args.format or "csv"))
    return 0


def cmd_conformal(args):
    config = _load_config(args)
    alphas = config.methods.conformal.alphas
    if config.splits.calibration <= 0:
        raise ValidationError("conformal evaluation needs splits.calibration > 0")
    if not config.methods.conformal.enabled:
        config = config.model_copy(update={"methods": config.methods.model_copy(
            update={"conformal": config.methods.conformal.model_copy(update={"enabled": True})})})
    runner = AuditRunner(config, threads=args.threads)
    rows = []
    for seed in config.seeds:
        for model in config.models:
            for s in runner.conformal_only(model, seed):
                rows.append({"model": model, "seed": seed, "method": s.method, "alpha": s.alpha,
                             "region": s.region, "coverage": s.coverage, "mean_width": s.mean_width,
                             "n_unbounded": s.n_unbounded, "n": s.n, "fits": s.fits, "record": ""})
    sys.stdout.write(format_comparison(rows))
    if args.out:
        print(write_table(rows, COMPARISON_HEADER, Path(args.out) / "conformal_coverage", args.format or "csv"))
    mean = sum(r["coverage"] for r in rows) / len(rows)
    print(f"mean coverage {fmt_number(mean)} (target >= {fmt_number(1 - min(alphas))} at the smallest alpha)")
    return 0


COMMANDS = {
    "audit": cmd_audit,
    "report": cmd_report,
    "conformal": cmd_conformal,
    "compare": cmd_compare,
    "validate": cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        key = getattr(exc, "key", None)
        print(f"error: {exc}" + (f" [key: {key}]" if key else ""), file=sys.stderr)
        return 1
    except UQAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.exception("unexpected failure")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

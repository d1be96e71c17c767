"""Command-line entry point: run, summarize, compare."""

import argparse
import csv
import sys
from collections import defaultdict

import numpy as np

from . import harness

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cfpower",
        description="Minimum-power AP selection for cell-free massive MIMO")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment")
    run.add_argument("config", nargs="?",
                     help="flat key = value config file (omit for defaults)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("overrides", nargs="*", metavar="key=value",
                     help="config overrides")

    summ = sub.add_parser("summarize",
                          help="per-method CDF tables from a records CSV")
    summ.add_argument("records", help="records.csv from a previous run")
    summ.add_argument("--metric", default="total_w",
                      choices=harness.CDF_METRICS)

    comp = sub.add_parser("compare",
                          help="relative savings between two records CSVs")
    comp.add_argument("baseline")
    comp.add_argument("candidate")
    return parser


def _load_records(path):
    rows = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["status"] in ("ok", "budget_exceeded"):
                rows[row["method"]].append(row)
    return rows


def _cmd_run(args):
    try:
        text = ""
        overrides = list(args.overrides)
        config_path = args.config
        if config_path and "=" in config_path:
            # bare overrides with no config file land in the positional
            overrides.insert(0, config_path)
            config_path = None
        if config_path:
            with open(config_path) as fh:
                text = fh.read()
        config = harness.parse_config_text(text, overrides=overrides)
    except (OSError, harness.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = harness.run_experiment(config)
    out = harness.emit(report, args.out)
    failures = sum(r.status.startswith("error") or r.status == "recheck_failed"
                   for r in report.records)
    print(f"wrote {len(report.records)} records to {out}")
    if failures:
        print(f"{failures} method failures recorded", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_summarize(args):
    rows = _load_records(args.records)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["method", "value_w", "probability"])
    for method in sorted(rows):
        values = np.sort([float(r[args.metric]) for r in rows[method]])
        for i, v in enumerate(values, start=1):
            writer.writerow([method, f"{v:.9g}", f"{i / len(values):.9g}"])
    return EXIT_OK


def _cmd_compare(args):
    base = _load_records(args.baseline)
    cand = _load_records(args.candidate)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["method", "baseline_mean_total_w",
                     "candidate_mean_total_w", "relative_saving"])
    for method in sorted(set(base) & set(cand)):
        b = float(np.mean([float(r["total_w"]) for r in base[method]]))
        c = float(np.mean([float(r["total_w"]) for r in cand[method]]))
        writer.writerow([method, f"{b:.9g}", f"{c:.9g}",
                         f"{(b - c) / b:.9g}"])
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "summarize": _cmd_summarize,
               "compare": _cmd_compare}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())

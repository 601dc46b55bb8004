"""Command-line entry point: ``ibgan run|summarize|oracle-check|gradcheck``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import checks
from .experiment import (
    ConfigError,
    format_summary,
    load_config,
    read_records,
    run_experiment,
    summarize,
    write_summary_csv,
)


def _run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    records = run_experiment(cfg)
    failed = [r for r in records if r.error]
    ok = [r for r in records if not r.error]
    if ok:
        rows = summarize(ok)
        csv_path = Path(cfg.output).with_suffix(".summary.csv")
        write_summary_csv(rows, csv_path)
        print(format_summary(rows))
        print(f"\nrecords: {cfg.output}\nsummary: {csv_path}")
    if failed:
        print(f"{len(failed)} replicate(s) failed; see 'error' fields", file=sys.stderr)
    return 1 if failed else 0


def _summarize(args) -> int:
    rows = summarize(read_records(args.input))
    if args.out:
        write_summary_csv(rows, args.out)
    if args.csv:
        sys.stdout.write(write_summary_csv(rows))
    else:
        print(format_summary(rows))
    return 0


def _report(results) -> int:
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ibgan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment grid from an INI config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_run)

    p = sub.add_parser("summarize", help="mean ± sd table from a results file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="also write the summary CSV here")
    p.add_argument("--csv", action="store_true", help="print CSV instead of the text table")
    p.set_defaults(fn=_summarize)

    p = sub.add_parser("oracle-check", help="exact finite-joint property sweeps")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=lambda a: _report(checks.oracle_checks(a.seed)))

    p = sub.add_parser("gradcheck", help="finite-difference checks of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=lambda a: _report(checks.gradient_checks(a.seed)))

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry points.

    bflab run <config.json>       run the experiment, write artifacts
    bflab validate <config.json>  schema-check only
    bflab report <dir>            summarize an existing report.json

Exit codes: 0 success, 1 acceptance flags failed (report still written),
2 config/schema violation, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ExperimentConfig
from .errors import ConfigError, NumericsError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bflab",
                                     description="boson-fermion mean-field lab")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")
    p_rep = sub.add_parser("report", help="summarize a run directory")
    p_rep.add_argument("directory")
    args = parser.parse_args(argv)

    try:
        if args.command == "validate":
            ExperimentConfig.from_file(args.config)
            print("config ok")
            return 0
        if args.command == "run":
            from .experiments import run

            cfg = ExperimentConfig.from_file(args.config)
            report = run(cfg)
            _summarize(report.as_dict())
            return 0 if report.passed() else 1
        if args.command == "report":
            path = os.path.join(args.directory, "report.json")
            with open(path) as fh:
                _summarize(json.load(fh))
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _summarize(report: dict):
    print(f"experiment: {report['experiment']}")
    for flag in report.get("flags", []):
        status = "PASS" if flag["passed"] else "FAIL"
        print(f"  [{status}] {flag['name']}: value={flag['value']:.3e} "
              f"threshold={flag['threshold']:.3e}")
    fitted = report.get("fitted", {})
    if fitted:
        print(f"  fitted: {json.dumps(fitted, default=str)}")
    print(f"  overall: {'PASS' if report.get('passed') else 'FAIL'} "
          f"({report.get('wall_clock_s', 0):.2f}s)")


if __name__ == "__main__":
    sys.exit(main())

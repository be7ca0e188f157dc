"""Command-line front end.

Science parameters come from ``--config`` plus ``--override section.key=value``;
see :mod:`distdiff.runner` for the schema. Exit codes: 0 success,
1 failed assertion, 2 config error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import runner
from .geometry import NonUniqueProjectionError
from .runner import ConfigError, RunConfig
from .verify import SUITES, report_json, run_suites


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distdiff", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run config")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads (trajectory granularity)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="section.key=value, repeatable")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("generate", "sample", "concentration", "gamma-sweep", "tail-bound"):
        sub.add_parser(name, parents=[common])
    sp = sub.add_parser("schedule", parents=[common])
    sp.add_argument("action", choices=("build", "check", "beta-star", "limits"))
    vp = sub.add_parser("verify", parents=[common])
    vp.add_argument("--suite", action="append", choices=SUITES, help="repeatable; default all suites")
    return p


def _config(args) -> RunConfig:
    if args.config is not None:
        return RunConfig.from_file(args.config, args.override, args.seed)
    return RunConfig.from_text("", args.override, args.seed)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = _config(args)
        if args.command == "verify":
            seed = cfg.get("run", "seed", int, 0) if args.seed is None else args.seed
            report = run_suites(args.suite or SUITES, seed, runner.fault_factor())
            text = report_json(report)
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / "verify_report.json").write_text(text)
            sys.stdout.write(text)
            if not report["passed"]:
                f = report["first_failure"]
                print(f"FAILED {f['suite']}:{f['key']} value={f['value']!r} limit={f['limit']!r}", file=sys.stderr)
                return 1
            return 0
        cfg.seed  # seed is mandatory for everything else
        if args.command == "schedule":
            sys.stdout.write(runner.cmd_schedule(cfg, args.action))
            return 0
        out = args.out if args.out is not None else Path("runs") / args.command
        if args.command == "generate":
            cloud = runner.cmd_generate(cfg, out)
            print(f"wrote {len(cloud)} points in R^{cloud.dim}")
        elif args.command == "sample":
            summary = runner.cmd_sample(cfg, out, args.threads)
            print(runner._rows_to_csv([summary]), end="")
        elif args.command == "concentration":
            row = runner.cmd_concentration(cfg, out)
            print(runner._rows_to_csv([row]), end="")
        elif args.command == "gamma-sweep":
            rows = runner.cmd_gamma_sweep(cfg, out)
            print(runner._rows_to_csv(rows), end="")
        elif args.command == "tail-bound":
            rows = runner.cmd_tail_bound(cfg, out)
            if not all(r["holds"] or r["skipped"] for r in rows):
                print("tail bound violated", file=sys.stderr)
                return 1
            print(f"{sum(r['holds'] for r in rows)} of {len(rows)} cases within the bound")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonUniqueProjectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

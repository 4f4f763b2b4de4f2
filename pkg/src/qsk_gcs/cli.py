"""Command line: ``qsk-gcs {run, resume, validate, report}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from .runner import ConfigError, RunManifest, load_config, run_experiment, validate_config, write_reports


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsk-gcs", description="Disorder-ensemble experiments for the "
                                     "quantum SK model with coherent-state ansatze.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment (resumes if --out already holds it)")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides output_dir in the config)")
    run.add_argument("--workers", type=int, help="worker processes (default: $QSK_WORKERS or CPU count)")
    run.add_argument("--seed", type=int, help="master seed (overrides the config)")

    resume = sub.add_parser("resume", help="finish the pending tasks of an existing run")
    resume.add_argument("--out", required=True)
    resume.add_argument("--workers", type=int)

    val = sub.add_parser("validate", help="check a config file and print it with defaults applied")
    val.add_argument("--config", required=True)

    rep = sub.add_parser("report", help="regenerate aggregate CSVs from task files")
    rep.add_argument("--out", required=True)
    return parser


def _summary(manifest: RunManifest) -> int:
    done = sum(t["status"] == "done" for t in manifest.tasks)
    print(f"{done}/{len(manifest.tasks)} tasks done")
    for t in manifest.failed:
        print(f"FAILED {t['id']}:\n{t['error']}", file=sys.stderr)
    return 0 if manifest.complete else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "validate":
            config = load_config(args.config)
            import json
            print(json.dumps(config.to_dict(), indent=1, sort_keys=True))
            return 0
        if args.command == "run":
            config = load_config(args.config)
            if args.seed is not None:
                config = validate_config({**_raw(config), "seed": args.seed})
            out = args.out or config.output_dir
            return _summary(run_experiment(config, out, args.workers))
        if args.command == "resume":
            config = load_config(os.path.join(args.out, "config.json"))
            return _summary(run_experiment(config, args.out, args.workers))
        if args.command == "report":
            for name in write_reports(args.out):
                print(os.path.join(args.out, name))
            return 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


def _raw(config) -> dict:
    doc = config.to_dict()
    doc["optimizer"] = dataclasses.asdict(config.optimizer)
    return doc


if __name__ == "__main__":
    sys.exit(main())

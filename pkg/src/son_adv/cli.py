"""Command-line entry point: ``son-adv <stage> --config exp.json``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, load_config, with_seed
from .errors import SonAdvError
from .harness import run_experiment, run_stage

log = logging.getLogger("son_adv")

COMMANDS = ("generate", "train", "attack", "defend", "explain", "run", "report")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="son-adv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config (JSON); defaults are used when omitted")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--format", choices=("json", "csv"), default="json",
                       help="summary format printed to stdout (run/report)")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("SON_ADV_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    if level not in ("ERROR", "WARNING", "INFO", "DEBUG"):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _summary(report: dict, fmt: str) -> str:
    payload = report["payload"]
    rows = [("clean", "", payload["clean_accuracy"], "")]
    for name, entry in payload["attacks"].items():
        post = entry.get("defense", {}).get("post_defense_adv_accuracy", "")
        rows.append((name, entry["spec"]["kind"], entry["adversarial_accuracy"], post))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["attack", "kind", "adversarial_accuracy", "defended_accuracy"])
        writer.writerows(rows)
        return buf.getvalue()
    return json.dumps({
        "clean_accuracy": payload["clean_accuracy"],
        "attacks": {r[0]: {"adversarial_accuracy": r[2], "defended_accuracy": r[3] if r[3] != "" else None}
                    for r in rows[1:]},
        "payload_sha256": report["payload_sha256"],
    }, indent=2) + "\n"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _setup_logging()
    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise SonAdvError("--seed must be non-negative")
            config = with_seed(config, args.seed)
        if args.out:
            config = replace(config, output_dir=args.out)
        out = Path(config.output_dir)
        if args.command == "run":
            report = run_experiment(config, out)
        else:
            report = run_stage(args.command, config, out)
        if args.command in ("run", "report"):
            sys.stdout.write(_summary(report, args.format))
    except SonAdvError as exc:
        print(f"son-adv: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

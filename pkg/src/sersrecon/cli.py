"""Command line entry point.

    sers-recon pipeline [--config PATH] [--seed N] [--out DIR]
    sers-recon {pretrain,finetune,scan,classify,evaluate} ...
    sers-recon --print-default-config

Exit codes: 0 success, 1 runtime error, 2 usage/config error or missing
upstream artifact.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline as pl
from .config import ConfigError, PipelineConfig, default_config_json, load_config
from .scanner import plan_raster

log = logging.getLogger("sersrecon")

STAGES = ("pretrain", "finetune", "scan", "classify", "evaluate")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="pipeline config JSON (omitted keys take defaults)")
    p.add_argument("--seed", type=int, help="derive every seed from this base value")
    p.add_argument("--out", type=Path, help="output directory (overrides config output_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sers-recon", description="Simulated SERS raster-scan reconstruction")
    parser.add_argument("--print-default-config", action="store_true", help="print the default config JSON and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    _common(sub.add_parser("pipeline", help="run every stage end to end"))
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        _common(p)
        if name == "scan":
            p.add_argument("--dry-run", action="store_true", help="print planned positions, write nothing")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("SERS_RECON_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
        stream=sys.stderr,
    )


def _resolve(args) -> tuple[PipelineConfig, Path]:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = args.out if args.out is not None else Path(cfg.output_dir)
    return cfg, out


def _dry_run(cfg: PipelineConfig) -> None:
    positions = plan_raster(cfg.plan)
    print("index,row,col,x_mm,y_mm")
    for p in positions:
        print(f"{p.index},{p.row},{p.col},{p.x_mm!r},{p.y_mm!r}")
    print(f"{len(positions)} planned positions", file=sys.stderr)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(default_config_json())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg, out = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "scan" and args.dry_run:
            _dry_run(cfg)
            return 0
        if args.command == "pipeline":
            report = pl.run_all(cfg, out)
            print(pl.summary_line(report))
        elif args.command == "pretrain":
            pl.stage_pretrain(cfg, out)
        elif args.command == "finetune":
            pl.stage_finetune(cfg, out)
        elif args.command == "scan":
            out.mkdir(parents=True, exist_ok=True)
            pl.stage_scan(cfg, out)
        elif args.command == "classify":
            pl.stage_classify(cfg, out)
        elif args.command == "evaluate":
            print(pl.summary_line(pl.stage_evaluate(cfg, out)))
    except pl.MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("stage failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> None:
    _setup_logging()
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

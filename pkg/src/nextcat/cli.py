"""Command-line entry point: ``nextcat <command> [--config FILE] [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from . import pipeline, selftest

log = logging.getLogger("nextcat")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--out", type=Path, default=None, help="override the output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nextcat", description="Next merchant category benchmark")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("gen-data", "sample synthetic Bank A and Bank B"),
        ("preprocess", "filter customers, map categories, derive income groups"),
        ("make-instructions", "write instruction corpora (JSONL)"),
        ("pretrain-lm", "build the tokenizer and pre-train the base language model"),
        ("finetune-lora", "fine-tune low-rank adapters on the Bank A corpus"),
        ("selftest", "gradient checks and oracle comparisons"),
        ("init-config", "write the default configuration as YAML"),
    ]:
        _common(sub.add_parser(name, help=help_))
    train = sub.add_parser("train", help="train a benchmark model")
    train.add_argument("model", choices=["baseline", "lstm", "cnn"])
    _common(train)
    for name, help_ in [("evaluate", "score every model on Bank B"),
                        ("report", "render report.md / report.csv / report.json"),
                        ("run-all", "every stage in order")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--check", action="store_true",
                       help="exit nonzero if a model ordering check fails")
        _common(p)
    return parser


def resolve_config(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=str(args.out))
    return cfg


def _report_checks(cfg, reports) -> bool:
    ok = True
    for c in pipeline.checks(cfg, reports):
        ok &= c.passed
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    return ok


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (cfgmod.ConfigValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "selftest":
        ok, lines = selftest.run(cfg.seed)
        print("\n".join(lines))
        return EXIT_OK if ok else EXIT_FAILED
    out = Path(cfg.out)
    if args.command == "init-config":
        out.mkdir(parents=True, exist_ok=True)
        path = out / "config.yaml"
        path.write_text(cfg.to_yaml(), encoding="utf-8")
        print(path)
        return EXIT_OK

    stage = f"train {args.model}" if args.command == "train" else args.command
    start = time.perf_counter()
    try:
        if stage == "run-all":
            result = pipeline.run_all(cfg, out)
        else:
            result = pipeline.STAGES[stage](cfg, out)
    except pipeline.MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    pipeline.write_manifest(cfg, out)
    log.info("%s finished in %.1f s", stage, time.perf_counter() - start)
    if getattr(args, "check", False) and not _report_checks(cfg, result):
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

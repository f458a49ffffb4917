"""Command-line entry point: ``polarpipe <stage|run|fixture> --config run.json``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .pipeline import STAGES, ConfigError, Pipeline, RunConfig, StageError
from .report import read_json

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

HELP = {
    "ingest": "load and validate politicians and tweets; tweets-by-date series",
    "classify": "label tweet sentiment (and evaluate against gold labels if given)",
    "evaluate": "classify, then print macro F1 and balanced accuracy per classifier",
    "ideology": "roll-call scaling, expert table and LLM ratings to ideology.csv",
    "label": "in/out-group partisanship pairs and counts per grouping",
    "h1": "Poisson rate comparison of NP and PP",
    "h2": "hierarchical engagement model",
    "h3": "hierarchical NP propensity model",
    "network": "signed mention network, layout and homogeneity",
    "report": "tables and figure data from whatever stages have run",
    "run": "all stages in order",
}


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polarpipe", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES[:2], "evaluate", *STAGES[2:], "run"):
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--seed", type=_seed, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--grouping", choices=("party", "bloc", "both"), help="override grouping levels")
        p.add_argument("-v", "--verbose", action="store_true")
    fx = sub.add_parser("fixture", help="write a small synthetic input set and config")
    fx.add_argument("directory")
    fx.add_argument("--seed", type=int, default=7)
    fx.add_argument("--tweets", type=int, default=1200)
    fx.add_argument("-v", "--verbose", action="store_true")
    return parser


def _print_table1(pipeline: Pipeline) -> None:
    path = pipeline.out / "classify" / "evaluation.json"
    if not path.exists():
        print("no gold labels configured; nothing to evaluate")
        return
    print(f"{'model':24s} {'F1':>8s} {'BalAcc':>8s} {'n':>6s}")
    for name, ev in sorted(read_json(path).items()):
        print(f"{name:24s} {ev['macro_f1']:8.3f} {ev['balanced_accuracy']:8.3f} {ev['n']:6d}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fixture":
        from .synthetic import write_fixture
        write_fixture(args.directory, seed=args.seed, n_tweets=args.tweets)
        print(f"fixture written to {args.directory}; run with --config {args.directory}/config.json")
        return EXIT_OK
    try:
        config = RunConfig.from_file(args.config, seed=args.seed, out=args.out, grouping=args.grouping)
        pipeline = Pipeline(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    target = "classify" if args.command == "evaluate" else args.command
    try:
        manifest = pipeline.run(target)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"manifest: {pipeline.out / 'manifest.json'}", file=sys.stderr)
        return EXIT_STAGE
    for record in manifest.stages:
        print(f"{record.name:9s} {record.status:9s} {record.seconds:8.2f}s")
    if args.command == "evaluate":
        _print_table1(pipeline)
    print(f"outputs in {pipeline.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

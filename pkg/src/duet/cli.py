"""Command-line entry points.

Everything is driven by one YAML experiment config (see duet.config for the
schema); the subcommands are thin wrappers over the harness:

    duet train      --config exp.yaml          # fit + save the n-gram models
    duet decode     --config exp.yaml --method twist-fg  < src > hyp
    duet experiment --config exp.yaml          # all methods -> results.tsv
    duet tune       --config exp.yaml          # lambda grid search on dev
    duet bench      --config exp.yaml          # step counts and wall time
    duet sweep      --config exp.yaml          # training-size sweep

Exit codes: 0 on success, 1 for configuration problems, 2 for runtime
failures (decode, protocol, model files).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import METHODS, ExperimentConfig, load_config
from .errors import ConfigError, DuetError
from .harness import (
    bench,
    decode_lines,
    run_experiment,
    subsample_sweep,
    train_models,
    tune_lambda,
)


def _configure(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        config = replace(config, workers=args.workers)
    return config


def _out(args: argparse.Namespace) -> Optional[Path]:
    return None if args.out is None else Path(args.out)


def cmd_train(args: argparse.Namespace) -> int:
    for name, path in sorted(train_models(_configure(args)).items()):
        print("trained %s -> %s" % (name, path))
    return 0


def cmd_decode(args: argparse.Namespace) -> int:
    lines = sys.stdin.read().splitlines()
    for hyp in decode_lines(_configure(args), lines, args.method):
        print(hyp)
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    config = _configure(args)
    results = run_experiment(config, out=_out(args))
    for method in config.methods:
        res = results[method]
        print("%s\tbleu\t%.4f" % (method, res.bleu))
        print("%s\trouge-l\t%.4f" % (method, res.rouge.f1))
        print("%s\tdecode_failures\t%d" % (method, res.decode_failures))
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    config = _configure(args)
    result = tune_lambda(config, out=_out(args))
    for lam_f, lam_g, value in result.rows:
        print("%r\t%r\t%.4f" % (lam_f, lam_g, value))
    print(
        "best: lambda_f=%r lambda_g=%r (%s %.4f)"
        % (result.lambda_f, result.lambda_g, config.metric, result.value)
    )
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    for row in bench(_configure(args), out=_out(args)):
        print(
            "%s\tf=%d\tg=%d\t%.3fs\t%.2fx"
            % (row.method, row.f_step_evals, row.g_step_evals, row.wall_s, row.relative)
        )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    for row in subsample_sweep(_configure(args), out=_out(args)):
        print("%d\t%s\t%.4f" % (row.size, row.method, row.value))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duet",
        description="decode with a pair of models pulling toward each other",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument(
            "--workers", type=int, default=None, help="override decode concurrency"
        )
        p.add_argument("--out", default=None, help="override output directory")

    p = sub.add_parser("train", help="fit and save the configured n-gram models")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="decode stdin lines to stdout")
    common(p)
    p.add_argument(
        "--method",
        default="twist-fg",
        choices=METHODS,
        help="decoding method (default twist-fg)",
    )
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("experiment", help="run every configured method and score it")
    common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("tune", help="grid-search the guidance weights on dev")
    common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bench", help="measure step evaluations and wall time")
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="retrain on corpus subsets of growing size")
    common(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 1
    except DuetError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

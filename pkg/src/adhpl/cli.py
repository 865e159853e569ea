"""Command line entry point: ``adhpl run | compare | synth``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import synth_lowrank, write_ratings
from .errors import AdhplError
from .harness import (
    MODELS,
    ExperimentConfig,
    emit_report,
    load_config,
    run_comparison,
    run_experiment,
)


def _global_flags():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for group refinement (results do not depend on it)")
    p.add_argument("--out-dir", default=None, help="directory for reports")
    return p


def _experiment_flags():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--model", choices=MODELS, default=None)
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config field, e.g. hyper.lam=0.02")
    return p


def _configure(path, args, model=None):
    cfg = load_config(path) if path else ExperimentConfig()
    overrides = list(args.overrides)
    if model or args.model:
        overrides.append(f"model={model or args.model}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    if args.out_dir is not None:
        overrides.append(f"out_dir={args.out_dir}")
    return cfg.with_overrides(overrides)


def cmd_run(args):
    cfg = _configure(args.config, args)
    report = run_experiment(cfg)
    if not cfg.out_dir:
        emit_report(report, Path("."))
    print(f"{report.model} on {report.dataset} (seed {report.seed}): "
          f"valid {report.best_valid_rmse:.6f}  test {report.test_rmse:.6f}")
    return 0


def cmd_compare(args):
    models = args.models.split(",") if args.models else [None]
    configs = []
    for path in args.configs:
        for model in models:
            configs.append(_configure(path, args, model))
    _, _, text = run_comparison(configs, args.reference, args.out_dir or ".")
    print(text, end="")
    return 0


def cmd_synth(args):
    clip = tuple(args.clip) if args.clip else None
    matrix, params = synth_lowrank(args.rows, args.cols, args.rank, args.density,
                                   args.noise, clip, args.seed or 0)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        write_ratings(matrix, f)
    if args.params:
        Path(args.params).write_text(params.to_json(), encoding="utf-8")
    print(f"wrote {len(matrix)} ratings to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="adhpl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    g, e = _global_flags(), _experiment_flags()

    run = sub.add_parser("run", parents=[g, e], help="run one experiment")
    run.add_argument("config", nargs="?", help="YAML config (defaults if omitted)")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", parents=[g, e], help="run several configs and rank them")
    cmp_.add_argument("configs", nargs="+")
    cmp_.add_argument("--models", help="comma-separated models to run on every config")
    cmp_.add_argument("--reference", default=None, help="model used for the Win/Loss row")
    cmp_.set_defaults(func=cmd_compare)

    syn = sub.add_parser("synth", parents=[g], help="write a synthetic rating file")
    syn.add_argument("output")
    syn.add_argument("--rows", type=int, default=200)
    syn.add_argument("--cols", type=int, default=300)
    syn.add_argument("--rank", type=int, default=5)
    syn.add_argument("--density", type=float, default=0.08)
    syn.add_argument("--noise", type=float, default=0.1)
    syn.add_argument("--clip", type=float, nargs=2, metavar=("LO", "HI"))
    syn.add_argument("--params", help="also write the hidden generator as JSON")
    syn.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AdhplError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

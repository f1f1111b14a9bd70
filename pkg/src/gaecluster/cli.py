"""Command-line entry point.

Exit codes: 0 success, 1 numeric or validation failure, 2 I/O or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import pipeline
from .errors import ConfigError, PipelineError
from .pipeline import MODES, RunConfig
from .synth import write_dataset

log = logging.getLogger("gaecluster")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="root seed (overrides config)")
    p.add_argument("--out-dir", help="artifact directory (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def make_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="gaecluster", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a planted-partition dataset")
    p.add_argument("--n-companies", type=int)
    p.add_argument("--n-articles", type=int)
    p.add_argument("--n-days", type=int)
    p.add_argument("--k-planted", type=int)

    p = sub.add_parser("build", parents=[common], help="build the featured graph from input files")
    p.add_argument("--cooc")
    p.add_argument("--prices", nargs="+")
    p.add_argument("--labels")

    p = sub.add_parser("cv", parents=[common], help="k-fold cross-validation over the grid")
    p.add_argument("--full-grid", action="store_true", help="search the full hyperparameter grid")
    p.add_argument("--folds", type=int)
    p.add_argument("--workers", type=int)

    for name in ("train-eval", "evaluate"):
        p = sub.add_parser(name, parents=[common], help="final training, clustering and scoring")
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--epochs", type=int, help="fixed epoch count (ignores cv_choice.json)")

    p = sub.add_parser("ablate", parents=[common], help="run every mode over several seeds")
    p.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds")
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out_dir is not None:
        updates["out_dir"] = args.out_dir
    for key in ("cooc", "prices", "labels", "mode", "workers", "epochs"):
        value = getattr(args, key, None)
        if value is not None:
            updates[key] = value
    if getattr(args, "folds", None) is not None:
        updates["cv_folds"] = args.folds
    if getattr(args, "full_grid", False):
        updates["grid"] = "full"
    cfg = replace(cfg, **updates)
    if args.command == "synth":
        synth_updates = {
            k: getattr(args, k)
            for k in ("n_companies", "n_articles", "n_days", "k_planted")
            if getattr(args, k) is not None
        }
        if args.seed is not None:
            synth_updates["seed"] = args.seed
        cfg = replace(cfg, synth=replace(cfg.synth, **synth_updates))
    return cfg


def run(args) -> dict:
    cfg = load_config(args)
    if args.command == "synth":
        paths = write_dataset(cfg.synth, cfg.out_dir)
        return {name: str(p) for name, p in paths.items()}
    if args.command == "build":
        return pipeline.cmd_build(cfg)["counts"]
    if args.command == "cv":
        return pipeline.cmd_cv(cfg)
    if args.command in ("train-eval", "evaluate"):
        return pipeline.cmd_train_eval(cfg, use_cv_choice=args.epochs is None)
    if args.command == "ablate":
        return pipeline.cmd_ablate(cfg, args.seeds)["summary"]
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        result = run(args)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

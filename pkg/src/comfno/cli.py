"""Command line entry point.

Subcommands: generate, train, evaluate, reproduce, export-curves.
Setting the COMFNO_SEED environment variable to an integer overrides
both the dataset seed and the training seed of any loaded config.
"""

import argparse
import os
import sys
from importlib import resources

from .config import load_config
from .errors import FormatError, StageError
from .experiments import (EXPERIMENTS, export_curves, run_experiment,
                          stage_evaluate, stage_generate, stage_train)
from .metrics import reports_to_text

SEED_ENV = "COMFNO_SEED"


def _seed_override():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise FormatError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _load(args):
    return load_config(args.config, seed_override=_seed_override(),
                       output_override=getattr(args, "out", None))


def _preset_path(name):
    """Resolve a preset name to a packaged config file."""
    alias = {"desk": "desk-1d-plain", "paper": "paper-1d-plain"}
    stem = alias.get(name, name)
    configs = resources.files("comfno").joinpath("configs")
    ref = configs.joinpath(f"{stem}.cfg")
    if not ref.is_file():
        listing = sorted(p.name[:-4] for p in configs.iterdir()
                         if p.name.endswith(".cfg"))
        raise FormatError(f"unknown preset {name!r}; available: {listing}")
    return ref


def cmd_generate(args):
    cfg = _load(args)
    paths = stage_generate(cfg)
    for split, path in paths.items():
        print(f"wrote {split} dataset: {path}")
    return 0


def cmd_train(args):
    cfg = _load(args)
    models = ("fno", "comfno") if args.model == "both" else (args.model,)
    paths = stage_train(cfg, models)
    for model, path in paths.items():
        print(f"wrote {model} checkpoint: {path}")
    return 0


def cmd_evaluate(args):
    cfg = _load(args)
    reports, _ = stage_evaluate(cfg)
    sys.stdout.write(reports_to_text(reports))
    print(f"artifacts in {cfg.output}")
    return 0


def cmd_reproduce(args):
    from threadpoolctl import threadpool_limits

    ref = _preset_path(args.preset)
    with resources.as_file(ref) as path:
        cfg = load_config(str(path), seed_override=_seed_override(),
                          output_override=args.out)
    with threadpool_limits(limits=1):
        reports = run_experiment(cfg, "all")
    sys.stdout.write(reports_to_text(reports))
    export_curves(cfg.output)
    print(f"artifacts in {cfg.output}")
    return 0


def cmd_export_curves(args):
    outs = export_curves(args.run, args.dest)
    for out in outs:
        print(f"wrote {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="comfno",
        description="Generate stiff boundary-layer datasets, train FNO and "
                    "ComFNO operator models, and compare their residuals. "
                    f"Experiments: {', '.join(EXPERIMENTS)}. Set {SEED_ENV} "
                    "to override every seed in a config.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="solve ground-truth datasets for a config")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", help="override the config's output directory")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--model", choices=("fno", "comfno", "both"), default="both")
    p.add_argument("--out", help="override the config's output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score trained models on the test set")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", help="override the config's output directory")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("reproduce", help="run a packaged preset end to end, "
                                         "single-threaded for bit-stable output")
    p.add_argument("--preset", required=True,
                   help="desk, paper, or a full preset name like desk-few-shot")
    p.add_argument("--out", help="override the preset's output directory")
    p.set_defaults(fn=cmd_reproduce)

    p = sub.add_parser("export-curves", help="merge per-model residual curves "
                                             "into plot-ready CSVs")
    p.add_argument("--run", required=True, help="experiment output directory")
    p.add_argument("--dest", help="directory for the merged files (default: run dir)")
    p.set_defaults(fn=cmd_export_curves)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (FormatError, StageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

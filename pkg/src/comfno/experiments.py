"""Declarative experiment runs: generate datasets, train both models, evaluate.

An experiment is described by an ExperimentConfig (usually parsed from a
config file, see `config` module) and materializes under its output
directory as:

    train.spds, test.spds        generate
    fno.spck, comfno.spck        train
    metrics.txt, metrics.csv,    evaluate
    fno_curve.csv, comfno_curve.csv

Later stages require the earlier artifacts and raise StageError when
they are missing.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import StageError
from .metrics import MetricsReport, evaluate_model, reports_to_csv, reports_to_text
from .models import ComFnoConfig, FnoConfig, LayerBlockSpec
from .training import (TrainConfig, build_dataset, load_checkpoint, load_dataset,
                       rng_state_echo, save_checkpoint, save_dataset, train_loop)

EXPERIMENTS = ("1d-plain", "1d-turning", "parabolic", "elliptic-2d",
               "multi-eps", "few-shot")

# equation family backing each experiment
EXPERIMENT_EQUATION = {
    "1d-plain": "1d-plain",
    "1d-turning": "1d-turning",
    "parabolic": "parabolic",
    "elliptic-2d": "elliptic-2d",
    "multi-eps": "1d-plain",
    "few-shot": "1d-plain",
}

# layer-block anchors (location, stretched axis) dictated by where the
# boundary layers sit; block_num in a config must match the entry length
EXPERIMENT_BLOCKS = {
    "1d-plain": ((1.0, 0),),
    "1d-turning": ((-1.0, 0), (1.0, 0)),
    "parabolic": ((1.0, 0),),
    "elliptic-2d": ((1.0, 1), (1.0, 0)),
    "multi-eps": ((1.0, 0),),
    "few-shot": ((1.0, 0),),
}

STAGES = ("generate", "train", "evaluate")


@dataclass
class FnoSettings:
    width: int = 64
    modes: int = 16
    depth: int = 4
    lr: float = 1e-3
    epochs: int = 500
    batch_size: int = 50


@dataclass
class ComfnoSettings:
    block_num: int = 1
    width: int = 64
    modes: int = 16
    depth: int = 4
    extra_width: int = 32
    extra_modes: int = 8
    extra_depth: int = 2
    dense_hidden: tuple = (64,)
    lr: float = 1e-3
    epochs: int = 500
    batch_size: int = 30


@dataclass
class ExperimentConfig:
    experiment: str
    output: str
    train_count: int = 200
    test_count: int = 100
    resolution: int = 201
    eps: float = 1e-3
    seed: int = 0
    train_seed: int = 0
    lengthscale: float = 1.0
    fine_n: int = 4096
    fine_steps: int = 2048
    # multi-eps only: the eps grid paired with f_count random functions
    f_count: int = 0
    eps_count: int = 0
    eps_min: float = 1e-3
    eps_max: float = 1e-1
    fno: FnoSettings = field(default_factory=FnoSettings)
    comfno: ComfnoSettings = field(default_factory=ComfnoSettings)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        expected_blocks = len(EXPERIMENT_BLOCKS[self.experiment])
        if self.comfno.block_num != expected_blocks:
            raise ValueError(
                f"{self.experiment} needs block_num={expected_blocks}, "
                f"got {self.comfno.block_num}")
        if self.experiment == "multi-eps":
            if self.f_count < 1 or self.eps_count < 1:
                raise ValueError("multi-eps needs f_count and eps_count >= 1")
            if self.test_count > self.eps_count:
                raise ValueError("multi-eps test_count cannot exceed eps_count "
                                 "(each test function gets a distinct eps)")
            self.train_count = self.f_count * self.eps_count
        if min(self.train_count, self.test_count) < 1:
            raise ValueError("train_count and test_count must be positive")

    @property
    def equation(self):
        return EXPERIMENT_EQUATION[self.experiment]

    @property
    def eps_as_input(self):
        return self.experiment == "multi-eps"

    @property
    def ndim(self):
        return 2 if self.equation == "elliptic-2d" else 1

    def eps_grid(self):
        return np.linspace(self.eps_min, self.eps_max, self.eps_count)

    def dataset_resolution(self):
        if self.ndim == 2:
            return (self.resolution, self.resolution)
        return self.resolution

    def fno_config(self):
        s = self.fno
        in_channels = 1 + self.ndim + (1 if self.eps_as_input else 0)
        modes = s.modes if self.ndim == 1 else (s.modes, s.modes)
        return FnoConfig(width=s.width, modes=modes, depth=s.depth,
                         in_channels=in_channels, ndim=self.ndim)

    def comfno_config(self):
        s = self.comfno
        in_channels = 1 + self.ndim + (1 if self.eps_as_input else 0)
        modes = s.modes if self.ndim == 1 else (s.modes, s.modes)
        base = FnoConfig(width=s.width, modes=modes, depth=s.depth,
                         in_channels=in_channels, ndim=self.ndim)
        blocks = tuple(LayerBlockSpec(loc, axis=ax)
                       for loc, ax in EXPERIMENT_BLOCKS[self.experiment])
        extra_modes = s.extra_modes if self.ndim == 1 else (s.extra_modes, s.extra_modes)
        return ComFnoConfig(base=base, blocks=blocks, extra_width=s.extra_width,
                            extra_modes=extra_modes,
                            extra_depth=min(s.extra_depth, s.depth),
                            dense_hidden=tuple(s.dense_hidden))

    def train_config(self, model):
        s = self.comfno if model == "comfno" else self.fno
        return TrainConfig(lr=s.lr, epochs=s.epochs, batch_size=s.batch_size,
                           seed=self.train_seed)


def _artifact(cfg, name):
    return os.path.join(cfg.output, name)


def _require(cfg, names, needed_by):
    missing = [n for n in names if not os.path.exists(_artifact(cfg, n))]
    if missing:
        raise StageError(f"stage {needed_by!r} needs missing artifacts "
                         f"{missing}; run earlier stages first")


def _build_split(cfg, split):
    """Build the train or test dataset for an experiment config."""
    kw = dict(resolution=cfg.dataset_resolution(), seed=cfg.seed,
              lengthscale=cfg.lengthscale, fine_n=cfg.fine_n,
              fine_steps=cfg.fine_steps, eps_as_input=cfg.eps_as_input)
    if cfg.experiment == "multi-eps":
        grid = cfg.eps_grid()
        if split == "train":
            # every (function, eps) pair on the grid
            f_idx = np.repeat(np.arange(cfg.f_count), cfg.eps_count)
            eps = np.tile(grid, cfg.f_count)
        else:
            # fresh functions, one distinct eps each
            f_idx = cfg.f_count + np.arange(cfg.test_count)
            eps = grid[np.arange(cfg.test_count) % cfg.eps_count]
        return build_dataset(cfg.equation, f_idx.size, eps=eps,
                             f_indices=f_idx, **kw)
    if split == "train":
        return build_dataset(cfg.equation, cfg.train_count, eps=cfg.eps,
                             index_start=0, **kw)
    return build_dataset(cfg.equation, cfg.test_count, eps=cfg.eps,
                         index_start=cfg.train_count, **kw)


def stage_generate(cfg):
    os.makedirs(cfg.output, exist_ok=True)
    paths = {}
    for split in ("train", "test"):
        ds = _build_split(cfg, split)
        path = _artifact(cfg, f"{split}.spds")
        save_dataset(path, ds)
        paths[split] = path
    return paths


def _config_echo(cfg, model):
    mc = cfg.comfno if model == "comfno" else cfg.fno
    echo = {"experiment": cfg.experiment, "model": model,
            "train_seed": str(cfg.train_seed)}
    for k, v in vars(mc).items():
        echo[k] = repr(v) if isinstance(v, (float, tuple)) else str(v)
    return echo


def stage_train(cfg, models=("fno", "comfno")):
    _require(cfg, ["train.spds"], "train")
    train_ds = load_dataset(_artifact(cfg, "train.spds"))
    paths = {}
    for model in models:
        if model not in ("fno", "comfno"):
            raise ValueError(f"unknown model {model!r}")
        model_cfg = cfg.comfno_config() if model == "comfno" else cfg.fno_config()
        tc = cfg.train_config(model)
        params, history = train_loop(model_cfg, train_ds, tc)
        path = _artifact(cfg, f"{model}.spck")
        save_checkpoint(path, _config_echo(cfg, model), params, history,
                        rng_state_echo(tc))
        paths[model] = path
    return paths


def _write_curve(path, curve, mesh, ndim):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if ndim == 1:
            writer.writerow(["x", "abs_residual"])
            for x, v in zip(mesh.nodes, curve):
                writer.writerow([repr(float(x)), repr(float(v))])
        else:
            writer.writerow(["x", "y", "abs_residual"])
            coords = mesh.node_coords()
            for (x, y), v in zip(coords, curve.reshape(-1)):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def stage_evaluate(cfg, batch_size=50):
    _require(cfg, ["test.spds", "fno.spck", "comfno.spck"], "evaluate")
    test_ds = load_dataset(_artifact(cfg, "test.spds"))
    reports = []
    curves = {}
    for model in ("fno", "comfno"):
        _, params, _, _ = load_checkpoint(_artifact(cfg, f"{model}.spck"))
        model_cfg = cfg.comfno_config() if model == "comfno" else cfg.fno_config()
        report, curve = evaluate_model(params, model_cfg, test_ds,
                                       model_name=model, batch_size=batch_size)
        report.equation = cfg.experiment
        reports.append(report)
        curves[model] = curve
        _write_curve(_artifact(cfg, f"{model}_curve.csv"), curve,
                     test_ds.mesh, cfg.ndim)
    text = reports_to_text(reports)
    with open(_artifact(cfg, "metrics.txt"), "w") as fh:
        fh.write(text)
    reports_to_csv(_artifact(cfg, "metrics.csv"), reports)
    return reports, curves


def run_experiment(cfg, stage="all"):
    """Run one stage or the whole pipeline; returns the evaluate reports."""
    if stage not in STAGES and stage != "all":
        raise ValueError(f"unknown stage {stage!r}")
    reports = None
    if stage in ("generate", "all"):
        stage_generate(cfg)
    if stage in ("train", "all"):
        stage_train(cfg)
    if stage in ("evaluate", "all"):
        reports, _ = stage_evaluate(cfg)
    return reports


def _read_curve(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def export_curves(run_dir, dest=None):
    """Merge per-model residual curves into plot-ready CSVs.

    1D runs produce one file with header x,fno_abs_residual,
    comfno_abs_residual; 2D runs produce one long-format x,y,abs_residual
    file per model. Returns the written paths.
    """
    fno_path = os.path.join(run_dir, "fno_curve.csv")
    com_path = os.path.join(run_dir, "comfno_curve.csv")
    if not (os.path.exists(fno_path) and os.path.exists(com_path)):
        raise StageError("export needs fno_curve.csv and comfno_curve.csv; "
                         "run the evaluate stage first")
    fno_header, fno_rows = _read_curve(fno_path)
    com_header, com_rows = _read_curve(com_path)
    if fno_header != com_header or len(fno_rows) != len(com_rows):
        raise StageError("model curves disagree on shape; re-run evaluate")
    if dest is None:
        dest = run_dir
    os.makedirs(dest, exist_ok=True)
    if fno_header == ["x", "abs_residual"]:
        out = os.path.join(dest, "curves.csv")
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "fno_abs_residual", "comfno_abs_residual"])
            for (x, fv), (x2, cv) in zip(fno_rows, com_rows):
                if x != x2:
                    raise StageError("model curves sample different nodes")
                writer.writerow([x, fv, cv])
        return [out]
    outs = []
    for name, rows in (("curves_fno.csv", fno_rows), ("curves_comfno.csv", com_rows)):
        out = os.path.join(dest, name)
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "abs_residual"])
            writer.writerows(rows)
        outs.append(out)
    return outs

"""Residual statistics for trained models.

For residuals r_ij = pred_ij - truth_ij over N samples and M nodes:

* mean:     (1/NM) sum_ij |r_ij|
* inf_norm: (1/N) sum_i max_j |r_ij|   (per-sample max, averaged)
* var:      (1/NM) sum_i sum_j (|r_ij| - mean_j |r_ij|)^2, centered
            per sample, so it measures spread along the nodes.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .training import predict


def residual_metrics(pred, truth):
    """(mean, inf_norm, var) of the absolute residuals; see module docstring."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"metric shapes differ: {pred.shape} vs {truth.shape}")
    if pred.ndim < 2 or pred.shape[0] < 1 or np.prod(pred.shape[1:]) < 1:
        raise ValueError("metrics need at least one sample and one node")
    r = np.abs(pred.reshape(pred.shape[0], -1) - truth.reshape(truth.shape[0], -1))
    mean = float(np.mean(r))
    inf_norm = float(np.mean(np.max(r, axis=1)))
    centered = r - np.mean(r, axis=1, keepdims=True)
    var = float(np.mean(centered**2))
    return mean, inf_norm, var


@dataclass
class MetricsReport:
    model: str
    equation: str
    count: int
    mean: float
    inf_norm: float
    var: float


def evaluate_model(params, cfg, dataset, model_name="model", batch_size=50):
    """Predict over a dataset; returns (MetricsReport, per-node mean |residual|)."""
    eps = float(dataset.eps[0]) if dataset.eps_mode == "shared" else dataset.eps
    pred = predict(params, cfg, dataset.inputs, eps, dataset.mesh, batch_size)
    mean, inf_norm, var = residual_metrics(pred, dataset.targets)
    resid = np.abs(pred - dataset.targets)[..., 0]
    curve = resid.mean(axis=0)
    report = MetricsReport(model_name, dataset.equation, dataset.count, mean, inf_norm, var)
    return report, curve


def reports_to_text(reports):
    """Aligned text table, scientific notation with two significant digits."""
    header = ("experiment", "model", "count", "mean", "inf_norm", "var")
    rows = [header]
    for r in reports:
        rows.append((r.equation, r.model, str(r.count),
                     f"{r.mean:.1e}", f"{r.inf_norm:.1e}", f"{r.var:.1e}"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in rows]
    return "\n".join(lines) + "\n"


def reports_to_csv(path, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment", "model", "count", "mean", "inf_norm", "var"])
        for r in reports:
            writer.writerow([r.equation, r.model, r.count,
                             repr(r.mean), repr(r.inf_norm), repr(r.var)])

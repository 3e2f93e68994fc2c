import numpy as np
import pytest

from comfno import training as tr
from comfno.errors import ShapeError
from comfno.metrics import (MetricsReport, evaluate_model, reports_to_csv,
                            reports_to_text, residual_metrics)
from comfno.models import FnoConfig, init_params


def naive_metrics(pred, truth):
    """Double-loop restatement of the three formulas, no vectorization."""
    n, m = pred.shape
    r = [[abs(pred[i][j] - truth[i][j]) for j in range(m)] for i in range(n)]
    mean = sum(sum(row) for row in r) / (n * m)
    inf = sum(max(row) for row in r) / n
    var = 0.0
    for row in r:
        rowmean = sum(row) / m
        var += sum((v - rowmean) ** 2 for v in row)
    return mean, inf, var / (n * m)


def test_hand_case():
    pred = np.array([[1.0, 3.0], [2.0, 4.0]])
    truth = np.zeros((2, 2))
    mean, inf, var = residual_metrics(pred, truth)
    assert mean == pytest.approx(2.5)
    assert inf == pytest.approx(3.5)
    assert var == pytest.approx(1.0)


def test_perfect_and_constant():
    u = np.random.default_rng(0).standard_normal((4, 9))
    assert residual_metrics(u, u) == (0.0, 0.0, 0.0)
    mean, inf, var = residual_metrics(u + 0.25, u)
    assert mean == pytest.approx(0.25)
    assert inf == pytest.approx(0.25)
    assert var == pytest.approx(0.0, abs=1e-30)


def test_against_naive_double_loop():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, 14))
        pred = rng.standard_normal((n, m))
        truth = rng.standard_normal((n, m))
        got = residual_metrics(pred, truth)
        want = naive_metrics(pred, truth)
        for g, w in zip(got, want):
            assert abs(g - w) < 1e-14


def test_reference_shape_is_flattened():
    # higher-rank fields are treated as (samples, all nodes)
    rng = np.random.default_rng(2)
    pred = rng.standard_normal((3, 5, 7, 1))
    truth = rng.standard_normal((3, 5, 7, 1))
    got = residual_metrics(pred, truth)
    want = residual_metrics(pred.reshape(3, -1), truth.reshape(3, -1))
    assert got == want


def test_permutation_invariance():
    rng = np.random.default_rng(3)
    pred = rng.standard_normal((5, 11))
    truth = rng.standard_normal((5, 11))
    base = residual_metrics(pred, truth)
    rows = rng.permutation(5)
    assert residual_metrics(pred[rows], truth[rows]) == pytest.approx(base)
    cols = rng.permutation(11)
    permuted = residual_metrics(pred[:, cols], truth[:, cols])
    assert permuted[0] == pytest.approx(base[0])
    assert permuted[2] == pytest.approx(base[2])


def test_scaling_property():
    rng = np.random.default_rng(4)
    pred = rng.standard_normal((4, 6))
    truth = rng.standard_normal((4, 6))
    mean, inf, var = residual_metrics(pred, truth)
    lam = 3.5
    m2, i2, v2 = residual_metrics(truth + lam * (pred - truth), truth)
    assert m2 == pytest.approx(lam * mean)
    assert i2 == pytest.approx(lam * inf)
    assert v2 == pytest.approx(lam * lam * var)


def test_inf_norm_dominates_mean():
    rng = np.random.default_rng(5)
    pred = rng.standard_normal((6, 12))
    truth = rng.standard_normal((6, 12))
    mean, inf, _ = residual_metrics(pred, truth)
    assert inf >= mean


def test_shape_validation():
    with pytest.raises(ShapeError):
        residual_metrics(np.ones((2, 3)), np.ones((2, 4)))
    with pytest.raises(ValueError):
        residual_metrics(np.ones((0, 3)), np.ones((0, 3)))


def test_evaluate_model_and_untrained_comparison():
    # eps resolvable at this resolution, so a converged toy model must beat
    # a random one on every metric
    ds = tr.build_dataset("1d-plain", 16, 33, 5e-2, seed=0, fine_n=512)
    test = tr.build_dataset("1d-plain", 4, 33, 5e-2, seed=0, fine_n=512,
                            index_start=16)
    cfg = FnoConfig(width=16, modes=12, depth=2)
    trained, _ = tr.train_loop(cfg, ds, tr.TrainConfig(lr=3e-3, epochs=200,
                                                       batch_size=8, seed=0))
    report, curve = evaluate_model(trained, cfg, test, "fno")
    assert isinstance(report, MetricsReport)
    assert report.count == 4 and report.model == "fno"
    assert curve.shape == (33,)
    assert np.all(curve >= 0.0)

    fresh = init_params(cfg, 123)
    cold, _ = evaluate_model(fresh, cfg, test, "fno")
    assert cold.mean > report.mean
    assert cold.inf_norm > report.inf_norm
    assert cold.var > report.var


def test_report_rendering(tmp_path):
    reports = [
        MetricsReport("fno", "1d-plain", 100, 5.04e-4, 3.21e-3, 6.7e-7),
        MetricsReport("comfno", "1d-plain", 100, 1.02e-4, 9.9e-4, 4.02e-5),
    ]
    text = reports_to_text(reports)
    assert "5.0e-04" in text and "1.0e-04" in text
    assert "4.0e-05" in text  # two significant digits, scientific
    lines = text.strip().splitlines()
    assert len(lines) == 3  # header + one row per model
    path = tmp_path / "metrics.csv"
    reports_to_csv(path, reports)
    got = path.read_text().splitlines()
    assert got[0] == "experiment,model,count,mean,inf_norm,var"
    assert got[1].startswith("1d-plain,fno,100,")
    # round-trippable float text
    assert float(got[1].split(",")[3]) == 5.04e-4

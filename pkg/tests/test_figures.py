"""Rendering smoke tests: every figure function writes a real PNG."""

import numpy as np
import pytest

from stefan_pinn import evaluation, figures, sampling, training

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def assert_png(path):
    assert path is not None
    with open(path, "rb") as fh:
        assert fh.read(8) == PNG_MAGIC
    import os
    assert os.path.getsize(path) > 1000


@pytest.fixture(scope="module")
def run(cfg):
    settings = training.TrainSettings(regime="pointwise", n_iter=20,
                                      layer_sizes=(2, 8, 1), n_initial=32,
                                      n_boundary=16, n_residual=64,
                                      eval_every=10)
    return training.train(cfg, settings, seed=0, reference=cfg)


def test_loss_history(run, tmp_path):
    assert_png(figures.loss_history(run.history, tmp_path / "f.png"))


def test_error_history(run, tmp_path):
    assert_png(figures.error_history(run.history, tmp_path / "f.png"))


def test_error_history_without_metric_rows(cfg, tmp_path):
    settings = training.TrainSettings(n_iter=2, layer_sizes=(2, 4, 1),
                                      n_initial=8, n_boundary=4, n_residual=8,
                                      eval_every=10**9)
    res = training.train(cfg, settings, seed=1)
    out = figures.error_history(res.history, tmp_path / "f.png")
    assert out is None
    assert not (tmp_path / "f.png").exists()


def test_weight_history(run, tmp_path):
    assert_png(figures.weight_history(run.history, tmp_path / "f.png"))


def test_profile_slices(cfg, run, tmp_path):
    assert_png(figures.profile_slices(cfg, run.net, tmp_path / "f.png"))


def test_exact_profiles(cfg, tmp_path):
    assert_png(figures.exact_profiles(cfg, tmp_path / "f.png"))


def test_field_heatmap(cfg, tmp_path):
    grid = evaluation.EvalGrid.for_config(cfg, nt=30, nx=30)
    field = evaluation.exact_field(cfg, grid)
    assert_png(figures.field_heatmap(field, grid, tmp_path / "f.png"))


def test_convergence(tmp_path):
    hs = [1 / 64, 1 / 128, 1 / 256]
    errs = [4e-3, 1e-3, 2.6e-4]
    assert_png(figures.convergence(hs, errs, tmp_path / "f.png"))


def test_front_position(cfg, run, tmp_path):
    assert_png(figures.front_position(cfg, run.net, tmp_path / "f.png"))


def test_front_extraction_known_crossing(cfg):
    # u(t, x) = -tanh(x - 0.5): positive left of x = 0.5, negative right
    from stefan_pinn import autodiff

    net = autodiff.Mlp((2, 1, 1),
                       [np.array([[0.0, 1.0]]), np.array([[-1.0]])],
                       [np.array([-0.5]), np.array([0.0])])
    ts = np.linspace(cfg.t0, cfg.t1, 7)
    found = figures._predicted_front(cfg, net, ts, nx=801)
    assert np.allclose(found, 0.5, atol=1e-6)


def test_front_extraction_no_crossing(cfg):
    from stefan_pinn import autodiff

    net = autodiff.xavier_init((2, 4, 1), seed=0)
    for w in net.weights:
        w[:] = 0.0
    ts = np.linspace(cfg.t0, cfg.t1, 5)
    assert np.all(np.isnan(figures._predicted_front(cfg, net, ts)))


def test_mask_values(cfg, run, tmp_path):
    samples = sampling.build_sample_set(cfg, 32, 16, 64,
                                        np.random.SeedSequence(0).spawn(3)[1])
    assert_png(figures.mask_values(run.point_weights, samples,
                                   tmp_path / "f.png"))


def test_ensemble_errors(tmp_path):
    report = evaluation.RunReport(0.1, 0.02, {0: 0.08, 1: 0.12, 2: 0.1}, {})
    assert_png(figures.ensemble_errors(report, tmp_path / "f.png"))

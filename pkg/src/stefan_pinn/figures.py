"""Figure rendering for run reports.

Every function writes a PNG next to the delimited output and returns the
path it wrote.  The Agg backend is forced so nothing here needs a display.
"""

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import autodiff, evaluation, physics

DPI = 150


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return str(path)


def loss_history(history, path):
    """Per-family loss terms against iteration, log scale."""
    its = [r.iteration for r in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(its, [r.l_r for r in history], label="residual")
    ax.semilogy(its, [r.l_0 for r in history], label="initial")
    ax.semilogy(its, [r.l_b for r in history], label="boundary")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend()
    return _finish(fig, path)


def error_history(history, path):
    """Relative L2 error checkpoints against iteration, or None if the run
    recorded no metric rows."""
    pts = [(r.iteration, r.rel_l2) for r in history if math.isfinite(r.rel_l2)]
    if not pts:
        return None
    its, errs = zip(*pts)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(its, errs, marker="o", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative L2 error")
    return _finish(fig, path)


def weight_history(history, path):
    """Loss-weight trajectories for the reweighted regimes."""
    its = [r.iteration for r in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(its, [r.omega_0 for r in history], label="initial weight")
    ax.semilogy(its, [r.omega_b for r in history], label="boundary weight")
    ax.set_xlabel("iteration")
    ax.set_ylabel("weight")
    ax.legend()
    return _finish(fig, path)


def profile_slices(cfg, net, path, times=(0.05, 0.53, 1.0), nx=400):
    """Predicted against exact temperature profiles at fixed times."""
    rows = evaluation.solution_slices(cfg, net, times, nx=nx)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, t in enumerate(times):
        block = rows[i * nx:(i + 1) * nx]
        color = f"C{i}"
        ax.plot(block[:, 1], block[:, 3], color=color, lw=1.5,
                label=f"exact, t={t:g}")
        ax.plot(block[:, 1], block[:, 2], color=color, lw=1.0, ls="--",
                label=f"predicted, t={t:g}")
    ax.axhline(0.0, color="0.7", lw=0.5)
    ax.set_xlabel("x")
    ax.set_ylabel("temperature")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def exact_profiles(cfg, path, times=(0.05, 0.53, 1.0), nx=400):
    """Closed-form temperature profiles with the interface marked."""
    xs = np.linspace(cfg.x0, cfg.x1, nx)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, t in enumerate(times):
        theta = np.asarray(physics.exact_theta(cfg, float(t), xs))
        ax.plot(xs, theta, color=f"C{i}", label=f"t={t:g}")
        ax.axvline(physics.melt_front(cfg, float(t)), color=f"C{i}",
                   lw=0.5, ls=":")
    ax.axhline(0.0, color="0.7", lw=0.5)
    ax.set_xlabel("x")
    ax.set_ylabel("temperature")
    ax.legend()
    return _finish(fig, path)


def field_heatmap(field, grid, path, label="temperature"):
    """Space-time heat map of a field sampled on an evaluation grid."""
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(field, origin="lower", aspect="auto",
                   extent=(grid.x0, grid.x1, grid.t0, grid.t1))
    fig.colorbar(im, ax=ax, label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    return _finish(fig, path)


def convergence(hs, errors, path):
    """Step-size study on log axes with a second-order guide line."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(hs, errors, marker="o", label="measured")
    guide = errors[-1] * (hs / hs[-1]) ** 2
    ax.loglog(hs, guide, ls="--", color="0.5", label="second order")
    ax.set_xlabel("step h")
    ax.set_ylabel("relative L2 error")
    ax.legend()
    return _finish(fig, path)


def _predicted_front(cfg, net, ts, nx=400):
    """First sign change of the predicted field along x, per time."""
    xs = np.linspace(cfg.x0, cfg.x1, nx)
    out = np.full(ts.shape, np.nan)
    for i, t in enumerate(ts):
        theta = autodiff.forward(net, np.full(nx, float(t)), xs)
        sign = theta > 0.0
        idx = np.nonzero(sign[:-1] & ~sign[1:])[0]
        if idx.size == 0:
            continue
        j = idx[0]
        a, b = theta[j], theta[j + 1]
        out[i] = xs[j] + (xs[j + 1] - xs[j]) * a / (a - b)
    return out


def front_position(cfg, net, path, nt=200):
    """Predicted melt-front trajectory against the similarity solution."""
    ts = np.linspace(cfg.t0, cfg.t1, nt)
    exact = np.array([physics.melt_front(cfg, float(t)) for t in ts])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, exact, lw=1.5, label="exact")
    ax.plot(ts, _predicted_front(cfg, net, ts), ls="--", label="predicted")
    ax.set_xlabel("t")
    ax.set_ylabel("front position")
    ax.legend()
    return _finish(fig, path)


def mask_values(point_weights, samples, path):
    """Learned mask values over the collocation points after a min-max run."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 4))
    m0 = point_weights.init_values()
    ax0.plot(samples.initial_x, m0, ".", ms=3)
    ax0.set_xlabel("x")
    ax0.set_ylabel("initial-family mask")
    mr = point_weights.res_values()
    sc = ax1.scatter(samples.residual_x, samples.residual_t, c=mr, s=4)
    fig.colorbar(sc, ax=ax1, label="residual mask")
    ax1.set_xlabel("x")
    ax1.set_ylabel("t")
    return _finish(fig, path)


def ensemble_errors(report, path):
    """Per-seed final errors with the ensemble mean marked."""
    seeds = sorted(report.per_seed)
    vals = [report.per_seed[s] for s in seeds]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar([str(s) for s in seeds], vals, color="C0")
    ax.axhline(report.rel_l2_mean, color="C3", ls="--",
               label=f"mean {report.rel_l2_mean:.3e}")
    ax.set_xlabel("seed")
    ax.set_ylabel("relative L2 error")
    ax.set_yscale("log")
    ax.legend()
    return _finish(fig, path)

"""Finite-difference reference solver for the smoothed melting equation.

The smoothed problem  d theta/dt = r(theta) * d2 theta/dx2  with
r = effective_diffusivity is discretized with Crank-Nicolson in time and
second-order central differences in space.  Each implicit step is solved
with a full Newton iteration (the Jacobian includes the derivative of r)
and a direct tridiagonal elimination.  Fields are plain float64 arrays on
the grid nodes; full space-time solutions carry one row per time level.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import NewtonDiverged, SingularJacobian
from .physics import (
    StefanConfig,
    effective_diffusivity,
    effective_diffusivity_prime,
    exact_theta,
)

PIVOT_FLOOR = 1e-14


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid covering [x0, x1] x [t0, t1] exactly."""

    x0: float
    x1: float
    t0: float
    t1: float
    nx: int
    nt: int

    def __post_init__(self):
        if self.nx < 3:
            raise ValueError(f"need nx >= 3, got {self.nx}")
        if self.nt < 1:
            raise ValueError(f"need nt >= 1, got {self.nt}")
        if not (self.x0 < self.x1 and self.t0 < self.t1):
            raise ValueError("domain bounds are not ordered")

    @property
    def dx(self):
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def dt(self):
        return (self.t1 - self.t0) / self.nt

    @property
    def xs(self):
        return np.linspace(self.x0, self.x1, self.nx)

    @property
    def ts(self):
        return self.t0 + self.dt * np.arange(self.nt + 1)

    @classmethod
    def make(cls, cfg: StefanConfig, nx: int, dt: float):
        """Grid with nx nodes and a time step snapped so nt*dt fills the window."""
        if dt <= 0.0:
            raise ValueError(f"need dt > 0, got {dt}")
        nt = max(1, round((cfg.t1 - cfg.t0) / dt))
        return cls(cfg.x0, cfg.x1, cfg.t0, cfg.t1, nx, nt)

    @classmethod
    def equal_step(cls, cfg: StefanConfig, h: float):
        """Grid with dx = h and dt as close to h as the time window allows.

        The spatial extent must be a whole multiple of h.  The time step is
        rounded to fit the window exactly, which perturbs it by well under a
        percent for the step ladders used here.
        """
        if h <= 0.0:
            raise ValueError(f"need h > 0, got {h}")
        steps = (cfg.x1 - cfg.x0) / h
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ValueError(f"h={h} does not divide the spatial extent")
        nx = int(round(steps)) + 1
        nt = max(1, round((cfg.t1 - cfg.t0) / h))
        return cls(cfg.x0, cfg.x1, cfg.t0, cfg.t1, nx, nt)


@dataclass
class Solution:
    """Space-time solution; theta[n] is the field at time grid.ts[n]."""

    grid: Grid
    theta: np.ndarray
    newton_iters: np.ndarray

    def __post_init__(self):
        if self.theta.shape != (self.grid.nt + 1, self.grid.nx):
            raise ValueError(
                f"theta shape {self.theta.shape} does not match grid "
                f"({self.grid.nt + 1}, {self.grid.nx})"
            )


def thomas_solve(lower, diag, upper, rhs):
    """Direct elimination for a tridiagonal system.

    lower[i] multiplies x[i-1] in row i (lower[0] unused), upper[i]
    multiplies x[i+1] (upper[-1] unused).

    Raises:
        SingularJacobian: a pivot magnitude fell below 1e-14.
    """
    n = len(diag)
    a = lower.tolist()
    b = diag.tolist()
    c = upper.tolist()
    d = rhs.tolist()
    cp = [0.0] * n
    dp = [0.0] * n
    piv = b[0]
    if abs(piv) < PIVOT_FLOOR:
        raise SingularJacobian(f"pivot {piv:.3e} in row 0")
    cp[0] = c[0] / piv
    dp[0] = d[0] / piv
    for i in range(1, n):
        piv = b[i] - a[i] * cp[i - 1]
        if abs(piv) < PIVOT_FLOOR:
            raise SingularJacobian(f"pivot {piv:.3e} in row {i}")
        cp[i] = c[i] / piv
        dp[i] = (d[i] - a[i] * dp[i - 1]) / piv
    x = [0.0] * n
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)


def newton_solve(residual_fn, jacobian_fn, guess, tol=1e-10, max_iter=50):
    """Damped-free Newton iteration with a tridiagonal direct solve.

    residual_fn maps a field to the nonlinear defect, jacobian_fn to the
    three diagonals (lower, diag, upper).  Returns (solution, iterations);
    a guess that already satisfies the tolerance comes back unchanged with
    zero iterations.

    Raises:
        NewtonDiverged: tolerance not met within max_iter iterations.
    """
    theta = np.array(guess, dtype=np.float64)
    for it in range(max_iter + 1):
        res = residual_fn(theta)
        if np.max(np.abs(res)) <= tol:
            return theta, it
        if it == max_iter:
            break
        lower, diag, upper = jacobian_fn(theta)
        theta = theta - thomas_solve(lower, diag, upper, res)
    raise NewtonDiverged(
        f"residual {np.max(np.abs(residual_fn(theta))):.3e} after {max_iter} iterations"
    )


def cn_step(cfg: StefanConfig, grid: Grid, theta_n, bc_left, bc_right,
            tol=1e-10, max_iter=50):
    """One Crank-Nicolson step; bc values apply at the new time level.

    Returns (theta_next, newton_iterations).
    """
    dt, dx = grid.dt, grid.dx
    inv_dx2 = 1.0 / (dx * dx)
    theta_n = np.asarray(theta_n, dtype=np.float64)

    lap_n = np.zeros_like(theta_n)
    lap_n[1:-1] = (theta_n[2:] - 2.0 * theta_n[1:-1] + theta_n[:-2]) * inv_dx2
    explicit = effective_diffusivity(cfg, theta_n) * lap_n

    def residual(theta):
        res = np.empty_like(theta)
        lap = (theta[2:] - 2.0 * theta[1:-1] + theta[:-2]) * inv_dx2
        r_mid = effective_diffusivity(cfg, theta[1:-1])
        res[1:-1] = (theta[1:-1] - theta_n[1:-1]) / dt - 0.5 * (
            r_mid * lap + explicit[1:-1]
        )
        res[0] = theta[0] - bc_left
        res[-1] = theta[-1] - bc_right
        return res

    def jacobian(theta):
        n = len(theta)
        lower = np.zeros(n)
        diag = np.ones(n)
        upper = np.zeros(n)
        lap = (theta[2:] - 2.0 * theta[1:-1] + theta[:-2]) * inv_dx2
        r_mid = effective_diffusivity(cfg, theta[1:-1])
        rp_mid = effective_diffusivity_prime(cfg, theta[1:-1])
        lower[1:-1] = -0.5 * r_mid * inv_dx2
        upper[1:-1] = -0.5 * r_mid * inv_dx2
        diag[1:-1] = 1.0 / dt - 0.5 * (rp_mid * lap - 2.0 * r_mid * inv_dx2)
        return lower, diag, upper

    guess = theta_n.copy()
    guess[0] = bc_left
    guess[-1] = bc_right
    return newton_solve(residual, jacobian, guess, tol=tol, max_iter=max_iter)


def solve(cfg: StefanConfig, grid: Grid, tol=1e-10, max_iter=50) -> Solution:
    """March the smoothed equation across the grid.

    The initial row is the exact solution sampled at t0; the hot wall is
    held at theta_l and the far wall follows the exact solution in time.
    """
    xs = grid.xs
    theta = np.empty((grid.nt + 1, grid.nx))
    theta[0] = exact_theta(cfg, grid.t0, xs)
    iters = np.zeros(grid.nt, dtype=np.int64)
    for n in range(grid.nt):
        t_next = grid.ts[n + 1]
        bc_right = exact_theta(cfg, t_next, grid.x1)
        theta[n + 1], iters[n] = cn_step(
            cfg, grid, theta[n], cfg.theta_l, bc_right, tol=tol, max_iter=max_iter
        )
    return Solution(grid, theta, iters)


def _axis_weights(values, origin, step, count):
    """Cell indices and weights on one uniform axis, exact on the nodes."""
    pos = np.clip((np.asarray(values, dtype=np.float64) - origin) / step, 0.0, count - 1)
    nearest = np.rint(pos)
    pos = np.where(np.abs(pos - nearest) < 1e-9, nearest, pos)
    idx = np.minimum(pos.astype(np.int64), count - 2)
    return idx, pos - idx


def sample_solution(sol: Solution, ts, xs):
    """Bilinear interpolation of a solution onto the product grid ts x xs.

    Sampling exactly on grid nodes reproduces the stored values bit for bit.
    """
    g = sol.grid
    it, wt = _axis_weights(ts, g.t0, g.dt, g.nt + 1)
    keep = wt == 0.0
    rows = sol.theta[it] * (1.0 - wt)[:, None] + sol.theta[it + 1] * wt[:, None]
    if np.any(keep):
        rows[keep] = sol.theta[it[keep]]

    ix, wx = _axis_weights(xs, g.x0, g.dx, g.nx)
    keep = wx == 0.0
    out = rows[:, ix] * (1.0 - wx)[None, :] + rows[:, ix + 1] * wx[None, :]
    if np.any(keep):
        out[:, keep] = rows[:, ix[keep]]
    return out


def interface_position(sol: Solution):
    """Melt-front estimate per time level from the zero crossing of theta.

    Linear interpolation between the last positive and first non-positive
    node; nan when the row does not change sign.
    """
    g = sol.grid
    out = np.full(g.nt + 1, np.nan)
    xs = g.xs
    for n in range(g.nt + 1):
        row = sol.theta[n]
        pos = row > 0.0
        if not pos[0] or pos[-1]:
            continue
        i = int(np.argmin(pos)) - 1
        out[n] = xs[i] + g.dx * row[i] / (row[i] - row[i + 1])
    return out


def convergence_study(cfg: StefanConfig, hs, h_ref, tol=1e-10, max_iter=50):
    """Relative L2 error against a fine reference for each equal step h.

    Returns (errors, slope): errors is a list of (h, error) pairs with the
    reference solution interpolated onto each coarse grid, slope the
    log-log regression slope of error against h.
    """
    hs = sorted(hs, reverse=True)
    if h_ref >= min(hs):
        raise ValueError(f"reference step {h_ref} must be finer than {min(hs)}")
    ref = solve(cfg, Grid.equal_step(cfg, h_ref), tol=tol, max_iter=max_iter)
    errors = []
    for h in hs:
        sol = solve(cfg, Grid.equal_step(cfg, h), tol=tol, max_iter=max_iter)
        ref_vals = sample_solution(ref, sol.grid.ts, sol.grid.xs)
        err = np.linalg.norm(sol.theta - ref_vals) / np.linalg.norm(ref_vals)
        errors.append((h, float(err)))
    logs_h = np.log([h for h, _ in errors])
    logs_e = np.log([e for _, e in errors])
    slope = float(np.polyfit(logs_h, logs_e, 1)[0])
    return errors, slope


def _fmt(v):
    return format(float(v), ".17g")


def save_solution(sol: Solution, cfg: StefanConfig, path_base):
    """Write `<base>.csv` (one row per time level) and `<base>.meta.json`."""
    g = sol.grid
    csv_path = str(path_base) + ".csv"
    with open(csv_path, "w") as f:
        header = ["t"] + [f"node_{i}" for i in range(g.nx)]
        f.write(",".join(header) + "\n")
        for n, t in enumerate(g.ts):
            f.write(",".join([_fmt(t)] + [_fmt(v) for v in sol.theta[n]]) + "\n")
    meta = {
        "x0": g.x0, "x1": g.x1, "t0": g.t0, "t1": g.t1,
        "nx": g.nx, "nt": g.nt,
        "dx": g.dx, "dt": g.dt,
        "newton_iters_max": int(sol.newton_iters.max(initial=0)),
        "config": {
            "fo": cfg.fo, "ste": cfg.ste, "delta": cfg.delta,
            "theta_l": cfg.theta_l, "theta_r": cfg.theta_r,
            "t0": cfg.t0, "t1": cfg.t1, "x0": cfg.x0, "x1": cfg.x1,
        },
    }
    with open(str(path_base) + ".meta.json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    return csv_path


def load_solution(path_base):
    """Read a solution written by save_solution; returns (Solution, StefanConfig)."""
    with open(str(path_base) + ".meta.json") as f:
        meta = json.load(f)
    raw = np.loadtxt(str(path_base) + ".csv", delimiter=",", skiprows=1, ndmin=2)
    grid = Grid(meta["x0"], meta["x1"], meta["t0"], meta["t1"], meta["nx"], meta["nt"])
    cfg = StefanConfig(**meta["config"])
    theta = raw[:, 1:]
    return Solution(grid, theta, np.zeros(grid.nt, dtype=np.int64)), cfg


def reference_cache_path(root, cfg: StefanConfig, h):
    """Deterministic file stem for a cached reference solve."""
    tag = (
        f"fd_fo{cfg.fo:g}_ste{cfg.ste:g}_d{cfg.delta:g}"
        f"_tl{cfg.theta_l:g}_tr{cfg.theta_r:g}_h{h:g}"
    )
    return os.path.join(root, tag.replace("-", "m").replace(".", "p"))


def reference_solution(cfg: StefanConfig, h=1.0 / 1024.0, cache_dir=None):
    """Equal-step solve at resolution h, optionally cached on disk."""
    if cache_dir is None:
        return solve(cfg, Grid.equal_step(cfg, h))
    base = reference_cache_path(cache_dir, cfg, h)
    if os.path.exists(base + ".csv") and os.path.exists(base + ".meta.json"):
        sol, _ = load_solution(base)
        return sol
    sol = solve(cfg, Grid.equal_step(cfg, h))
    os.makedirs(cache_dir, exist_ok=True)
    save_solution(sol, cfg, base)
    return sol

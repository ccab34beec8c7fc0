"""Training point generation.

Three point families feed the loss: initial points at the starting time with
exact-solution targets, boundary points on the two walls, and residual
(collocation) points in the interior of the space-time window.  All of them
are drawn by Latin Hypercube Sampling so every axis is stratified: dividing
an axis range into n equal bins, each bin holds exactly one point.

The time-marching curriculum trains on windows [t0, t0 + k*dt] of growing
length.  Stage point counts follow the fixed schedule (1000 points for the
first stage, 500 more per stage) and earlier stages' residual points are
reused verbatim, with new points drawn only in the newly added time slab.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonIntegerStages
from .physics import StefanConfig, exact_theta


def _resolve_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def lhs(n, bounds, seed):
    """Latin Hypercube sample of n points, one per axis bin, shape (n, d).

    bounds is a sequence of (lo, hi) pairs, one per dimension.  Points are
    placed uniformly at random inside their bins; bin assignment is an
    independent permutation per axis.
    """
    if n < 1:
        raise ValueError(f"need at least one point, got n={n}")
    bounds = np.atleast_2d(np.asarray(bounds, dtype=np.float64))
    if bounds.shape[1] != 2 or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError(f"bounds must be (lo, hi) pairs with lo < hi, got {bounds!r}")
    rng = _resolve_rng(seed)
    cols = []
    for lo, hi in bounds:
        bins = rng.permutation(n)
        offsets = rng.uniform(size=n)
        cols.append(lo + (bins + offsets) * ((hi - lo) / n))
    return np.column_stack(cols)


@dataclass
class SampleSet:
    """The three point families with their supervision targets.

    Initial points live at t = t0 (only x is stored); boundary points carry
    their own times and wall coordinates; residual points are interior (t, x)
    pairs with no target (the equation itself is the supervision).
    """

    initial_x: np.ndarray
    initial_target: np.ndarray
    boundary_t: np.ndarray
    boundary_x: np.ndarray
    boundary_target: np.ndarray
    residual_t: np.ndarray
    residual_x: np.ndarray

    def __post_init__(self):
        if self.initial_x.shape != self.initial_target.shape:
            raise ValueError("initial points and targets must align")
        if not (self.boundary_t.shape == self.boundary_x.shape == self.boundary_target.shape):
            raise ValueError("boundary arrays must align")
        if self.residual_t.shape != self.residual_x.shape:
            raise ValueError("residual arrays must align")
        for arr in (self.initial_x, self.initial_target, self.boundary_t,
                    self.boundary_x, self.boundary_target,
                    self.residual_t, self.residual_x):
            if not np.all(np.isfinite(arr)):
                raise ValueError("sample sets must be finite")

    @property
    def counts(self):
        return (self.initial_x.size, self.boundary_t.size, self.residual_t.size)


def _draw_initial(cfg: StefanConfig, n0, stream):
    x = lhs(n0, [(cfg.x0, cfg.x1)], stream)[:, 0]
    return x, np.asarray(exact_theta(cfg, cfg.t0, x))


def _draw_boundary(cfg: StefanConfig, nb, stream):
    """Both walls, left first; an odd count leaves the extra point on the left."""
    rng = _resolve_rng(stream)
    n_left = nb - nb // 2
    t_left = lhs(n_left, [(cfg.t0, cfg.t1)], rng)[:, 0]
    parts_t = [t_left]
    parts_x = [np.full(n_left, cfg.x0)]
    parts_g = [np.full(n_left, cfg.theta_l)]
    if nb // 2:
        t_right = lhs(nb // 2, [(cfg.t0, cfg.t1)], rng)[:, 0]
        parts_t.append(t_right)
        parts_x.append(np.full(nb // 2, cfg.x1))
        parts_g.append(np.asarray(exact_theta(cfg, t_right, cfg.x1)))
    return np.concatenate(parts_t), np.concatenate(parts_x), np.concatenate(parts_g)


def build_sample_set(cfg: StefanConfig, n0=1024, nb=256, nr=10000, seed=0) -> SampleSet:
    """Draw all three families; independent RNG stream per family."""
    if min(n0, nb, nr) < 1:
        raise ValueError(f"counts must be >= 1, got {n0}, {nb}, {nr}")
    s_init, s_bound, s_res = _as_seed_sequence(seed).spawn(3)
    x_init, target_init = _draw_initial(cfg, n0, s_init)
    bt, bx, bg = _draw_boundary(cfg, nb, s_bound)
    pts = lhs(nr, [(cfg.t0, cfg.t1), (cfg.x0, cfg.x1)], s_res)
    return SampleSet(
        initial_x=x_init,
        initial_target=target_init,
        boundary_t=bt,
        boundary_x=bx,
        boundary_target=bg,
        residual_t=pts[:, 0],
        residual_x=pts[:, 1],
    )


@dataclass(frozen=True)
class CurriculumStage:
    k: int
    t_end: float
    n_residual: int
    n_iterations: int


@dataclass(frozen=True)
class CurriculumSchedule:
    dt_seq: float
    stages: tuple

    @property
    def total_new_points(self):
        return self.stages[-1].n_residual

    @property
    def total_iterations(self):
        return sum(s.n_iterations for s in self.stages)


def build_curriculum(cfg: StefanConfig, dt_seq=0.05, base_nr=1000, incr=500,
                     budget=1e8) -> CurriculumSchedule:
    """Stage schedule: window growth, residual counts, per-stage iterations.

    The iteration count of stage k keeps n_iterations * n_residual close to
    the budget, so early (small) stages train longest.
    """
    if dt_seq <= 0 or base_nr < 1 or incr < 0 or budget <= 0:
        raise ValueError("curriculum parameters must be positive")
    span = cfg.t1 - cfg.t0
    n_stages = int(round(span / dt_seq))
    if n_stages < 1 or abs(n_stages * dt_seq - span) > 1e-9 * max(span, 1.0):
        raise NonIntegerStages(
            f"window length {span} is not an integer multiple of dt_seq={dt_seq}")
    stages = []
    for k in range(1, n_stages + 1):
        t_end = cfg.t1 if k == n_stages else cfg.t0 + k * dt_seq
        n_res = base_nr + (k - 1) * incr
        n_it = int(round(budget / n_res))
        if n_it < 1:
            raise ValueError(f"budget {budget} gives no iterations at stage {k}")
        stages.append(CurriculumStage(k, t_end, n_res, n_it))
    return CurriculumSchedule(dt_seq, tuple(stages))


def curriculum_samples(cfg: StefanConfig, schedule: CurriculumSchedule,
                       n0=1024, nb=256, seed=0) -> list:
    """Per-stage SampleSets with nested residual points.

    Initial and boundary families are drawn once and shared by every stage.
    Stage k's residual set extends stage k-1's with points sampled in the new
    time slab only, so earlier points reappear verbatim.
    """
    s_init, s_bound, s_res = _as_seed_sequence(seed).spawn(3)
    x_init, target_init = _draw_initial(cfg, n0, s_init)
    bt, bx, bg = _draw_boundary(cfg, nb, s_bound)
    rng_res = _resolve_rng(s_res)

    sets = []
    res_t = np.empty(0)
    res_x = np.empty(0)
    t_lo = cfg.t0
    for stage in schedule.stages:
        n_new = stage.n_residual - res_t.size
        pts = lhs(n_new, [(t_lo, stage.t_end), (cfg.x0, cfg.x1)], rng_res)
        res_t = np.concatenate([res_t, pts[:, 0]])
        res_x = np.concatenate([res_x, pts[:, 1]])
        sets.append(SampleSet(
            initial_x=x_init,
            initial_target=target_init,
            boundary_t=bt,
            boundary_x=bx,
            boundary_target=bg,
            residual_t=res_t.copy(),
            residual_x=res_x.copy(),
        ))
        t_lo = stage.t_end
    return sets


def dump_samples(samples: SampleSet, path, t0):
    """One-file CSV export of all families for inspection."""
    with open(path, "w") as f:
        f.write("family,t,x,target\n")
        for x, g in zip(samples.initial_x, samples.initial_target):
            f.write(f"initial,{t0:.17g},{x:.17g},{g:.17g}\n")
        for t, x, g in zip(samples.boundary_t, samples.boundary_x, samples.boundary_target):
            f.write(f"boundary,{t:.17g},{x:.17g},{g:.17g}\n")
        for t, x in zip(samples.residual_t, samples.residual_x):
            f.write(f"residual,{t:.17g},{x:.17g},\n")

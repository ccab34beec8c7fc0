"""Network training for the melting problem.

The composite loss penalizes the smoothed-enthalpy equation residual at
collocation points plus the initial and boundary mismatches.  Four weighting
regimes are implemented on top of full-batch Adam:

  uniform    all three loss terms weighted 1
  static     initial-condition weight raised to a fixed value (default 100)
  dynamic    initial/boundary weights tracked from gradient statistics, so no
             term's gradient drowns the others
  pointwise  per-point trainable weights passed through bounded increasing
             masks, ascended while the network descends (min-max)

plus the time-marching curriculum (seq-uniform / seq-static / seq-dynamic),
which trains the same regimes on windows of growing time span with nested
collocation sets.  Every run is deterministic in (config, settings, seed):
reruns reproduce the history byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff, evaluation, physics, sampling
from .autodiff import Jet2, Mlp, ParamVector
from .errors import NanLoss

REGIMES = ("uniform", "static", "dynamic", "pointwise",
           "seq-uniform", "seq-static", "seq-dynamic")


@dataclass(frozen=True)
class LossBreakdown:
    l_r: float
    l_0: float
    l_b: float
    weighted_total: float


@dataclass(frozen=True)
class LrSchedule:
    """Exponentially decaying rate, continuous in the iteration index."""

    eta: float = 1e-3
    gamma: float = 0.9
    kappa: float = 8000.0

    def __post_init__(self):
        if self.eta <= 0 or not 0 < self.gamma <= 1 or self.kappa <= 0:
            raise ValueError(f"bad learning-rate schedule {self}")

    def rate(self, t):
        return self.eta * self.gamma ** (t / self.kappa)


@dataclass
class AdamState:
    """Moment estimates over a list of parameter arrays."""

    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays):
        return cls([np.zeros_like(a) for a in arrays],
                   [np.zeros_like(a) for a in arrays])


def adam_step(state: AdamState, arrays, grads, lr):
    """One bias-corrected update, in place on the parameter arrays."""
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for arr, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class MaskParams:
    """Bounded increasing map for per-point weights: alpha*sigmoid(beta*(w-m))."""

    alpha: float
    beta: float
    m: float


INITIAL_MASK = MaskParams(alpha=1000.0, beta=0.1, m=2.0)
RESIDUAL_MASK = MaskParams(alpha=1.0, beta=1.0, m=5.0)


def mask(w, p: MaskParams):
    return p.alpha / (1.0 + np.exp(-p.beta * (np.asarray(w, dtype=np.float64) - p.m)))


def mask_prime(w, p: MaskParams):
    s = mask(w, p) / p.alpha
    return p.alpha * p.beta * s * (1.0 - s)


@dataclass
class PointWeights:
    """Trainable per-point weights for the initial and residual families."""

    w_init: np.ndarray
    w_res: np.ndarray
    init_mask: MaskParams = INITIAL_MASK
    res_mask: MaskParams = RESIDUAL_MASK

    @classmethod
    def uniform_init(cls, n0, nr, seed):
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(size=n0), rng.uniform(size=nr))

    def init_values(self):
        return mask(self.w_init, self.init_mask)

    def res_values(self):
        return mask(self.w_res, self.res_mask)


def dynamic_reweight(omega, grad_r, grad_fam, alpha=0.6, original=False):
    """New family weight from gradient statistics.

    Follows omega <- (1-alpha)*omega + alpha * max|grad_r| / (omega*mean|grad_fam|),
    with the current weight kept in the denominator; original=True drops it
    (the variant of the annealing scheme this rule descends from).  A
    degenerate family gradient (mean 0) leaves the weight unchanged.
    """
    if omega <= 0:
        raise ValueError(f"weight must stay positive, got {omega}")
    mean_fam = float(np.mean(np.abs(grad_fam.flat()))) if isinstance(
        grad_fam, ParamVector) else float(np.mean(np.abs(grad_fam)))
    max_r = float(np.max(np.abs(grad_r.flat()))) if isinstance(
        grad_r, ParamVector) else float(np.max(np.abs(grad_r)))
    if mean_fam == 0.0:
        return omega
    target = max_r / mean_fam if original else max_r / (omega * mean_fam)
    return (1.0 - alpha) * omega + alpha * target


class ResidualLoss:
    """Jet loss head: mean of (optionally mask-weighted) squared residuals.

    After a call, sq_errors holds the per-point squared residuals; the
    min-max regime differentiates the mask weights through them.
    """

    def __init__(self, cfg: physics.StefanConfig, mask_vals=1.0):
        self.cfg = cfg
        self.mask_vals = mask_vals
        self.sq_errors = None

    def __call__(self, jet: Jet2):
        cfg = self.cfg
        c = 1.0 / cfg.ste
        slope = physics.phase_indicator_prime(jet.v, cfg.delta)
        r = (1.0 + c * slope) * jet.dt - cfg.fo * jet.dxx
        self.sq_errors = r * r
        n = r.size
        w = (2.0 / n) * self.mask_vals * r
        curv = physics.phase_indicator_second(jet.v, cfg.delta)
        seed = Jet2(w * (c * curv * jet.dt), w * (1.0 + c * slope),
                    np.zeros(n), w * (-cfg.fo))
        return float(np.mean(self.mask_vals * self.sq_errors)), seed


class MismatchLoss:
    """Value loss head: mean of (optionally mask-weighted) squared mismatch."""

    def __init__(self, targets, mask_vals=1.0):
        self.targets = targets
        self.mask_vals = mask_vals
        self.sq_errors = None

    def __call__(self, out):
        e = out - self.targets
        self.sq_errors = e * e
        seed = (2.0 / e.size) * self.mask_vals * e
        return float(np.mean(self.mask_vals * self.sq_errors)), seed


def residual(net: Mlp, cfg: physics.StefanConfig, t, x):
    """Pointwise equation residual of the network prediction."""
    jet = autodiff.forward_jet(net, t, x)
    slope = physics.phase_indicator_prime(jet.v, cfg.delta)
    return (1.0 + slope / cfg.ste) * jet.dt - cfg.fo * jet.dxx


def _family_passes(net, cfg, samples, masks=None):
    """Loss, parameter gradient, and squared errors for all three families."""
    mask_r = 1.0 if masks is None else mask(masks.w_res, masks.res_mask)
    mask_i = 1.0 if masks is None else mask(masks.w_init, masks.init_mask)
    head_r = ResidualLoss(cfg, mask_r)
    l_r, g_r = autodiff.loss_param_grad(net, samples.residual_t,
                                        samples.residual_x, head_r)
    head_i = MismatchLoss(samples.initial_target, mask_i)
    t0 = np.full(samples.initial_x.size, cfg.t0)
    l_0, g_0 = autodiff.value_loss_param_grad(net, t0, samples.initial_x, head_i)
    head_b = MismatchLoss(samples.boundary_target)
    l_b, g_b = autodiff.value_loss_param_grad(net, samples.boundary_t,
                                              samples.boundary_x, head_b)
    return (l_r, g_r, head_r.sq_errors), (l_0, g_0, head_i.sq_errors), (l_b, g_b)


def assemble_loss(net: Mlp, cfg: physics.StefanConfig, samples,
                  weights=(1.0, 1.0, 1.0), masks=None) -> LossBreakdown:
    """Loss terms under scalar weights (omega_0, omega_b, omega_r) or masks."""
    (l_r, _, _), (l_0, _, _), (l_b, _) = _family_passes(net, cfg, samples, masks)
    if masks is None:
        omega_0, omega_b, omega_r = weights
        total = omega_0 * l_0 + omega_b * l_b + omega_r * l_r
    else:
        total = l_0 + l_b + l_r
    return LossBreakdown(l_r, l_0, l_b, total)


@dataclass(frozen=True)
class TrainSettings:
    """Everything a run depends on besides the physics config and the seed."""

    regime: str = "uniform"
    n_iter: int = 100000
    layer_sizes: tuple = (2, 20, 20, 20, 20, 20, 20, 1)
    n_initial: int = 1024
    n_boundary: int = 256
    n_residual: int = 10000
    eta: float = 1e-3
    gamma: float = 0.9
    kappa: float = 0.0  # 0 resolves per regime: 5000 for pointwise, 8000 otherwise
    static_omega0: float = 100.0
    reweight_every: int = 1000
    reweight_alpha: float = 0.6
    original_annealing: bool = False
    ascent_lr: float = 1e-3
    eval_every: int = 500
    budget: float = 1e8
    dt_seq: float = 0.05
    base_nr: int = 1000
    incr_nr: int = 500
    stage_loss_threshold: float = 0.0  # 0 disables early stage advance

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; choose from {REGIMES}")
        if self.n_iter < 0 or self.eval_every < 1 or self.reweight_every < 1:
            raise ValueError("iteration counts must be positive")

    def resolved_kappa(self):
        if self.kappa > 0:
            return self.kappa
        return 5000.0 if self.regime == "pointwise" else 8000.0

    def schedule(self):
        return LrSchedule(self.eta, self.gamma, self.resolved_kappa())


@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    l_r: float
    l_0: float
    l_b: float
    omega_0: float
    omega_b: float
    omega_r: float
    lr: float
    rel_l2: float  # nan between metric checkpoints


HISTORY_COLUMNS = ("iteration", "l_r", "l_0", "l_b", "omega_0", "omega_b",
                   "omega_r", "lr", "rel_l2")


@dataclass(frozen=True)
class StageRecord:
    """Curriculum stage summary, evaluated on the stage's own time window."""

    k: int
    t_end: float
    end_iteration: int
    rel_l2_window: float


@dataclass
class TrainResult:
    net: Mlp
    history: list
    final_rel_l2: float
    omegas: tuple
    point_weights: PointWeights = None
    stage_records: list = field(default_factory=list)


def save_history(rows, path):
    with open(path, "w") as f:
        f.write(",".join(HISTORY_COLUMNS) + "\n")
        for r in rows:
            cells = [str(r.iteration)]
            cells += [format(v, ".17g") for v in
                      (r.l_r, r.l_0, r.l_b, r.omega_0, r.omega_b, r.omega_r, r.lr)]
            cells.append("" if math.isnan(r.rel_l2) else format(r.rel_l2, ".17g"))
            f.write(",".join(cells) + "\n")


def load_history(path):
    rows = []
    with open(path) as f:
        header = f.readline().strip().split(",")
        if tuple(header) != HISTORY_COLUMNS:
            raise ValueError(f"unexpected history header {header}")
        for line in f:
            cells = line.rstrip("\n").split(",")
            vals = [float(c) for c in cells[1:8]]
            rel = float(cells[8]) if cells[8] else float("nan")
            rows.append(HistoryRow(int(cells[0]), *vals, rel))
    return rows


class _Metric:
    """Lattice error against the reference, or nan when no reference given."""

    def __init__(self, cfg, reference, t_end=None):
        self.grid = None
        self.ref = None
        if reference is not None:
            self.grid = evaluation.EvalGrid.for_config(cfg, t_end=t_end)
            self.ref = evaluation.reference_field(reference, self.grid)

    def __call__(self, net):
        if self.ref is None:
            return float("nan")
        return evaluation.rel_l2(evaluation.net_field(net, self.grid), self.ref)


def _check_finite(losses, iteration):
    if not all(math.isfinite(v) for v in losses):
        raise NanLoss(iteration,
                      f"loss became non-finite at iteration {iteration}: {losses}")


class _Run:
    """Shared state of one optimization loop across curriculum stages."""

    def __init__(self, cfg, settings, seed):
        self.cfg = cfg
        self.settings = settings
        s_net, s_samples, s_weights = np.random.SeedSequence(seed).spawn(3)
        self.sample_seed = s_samples
        self.net = autodiff.xavier_init(settings.layer_sizes, s_net,
                                        bounds=(cfg.t0, cfg.t1, cfg.x0, cfg.x1))
        self.adam = AdamState.for_arrays(self.net.weights + self.net.biases)
        self.schedule = settings.schedule()
        self.omega_0 = 1.0
        self.omega_b = 1.0
        self.omega_r = 1.0
        if settings.regime in ("static", "seq-static"):
            self.omega_0 = settings.static_omega0
        self.masks = None
        self.adam_w = None
        if settings.regime == "pointwise":
            self.masks = PointWeights.uniform_init(
                settings.n_initial, settings.n_residual, s_weights)
            self.adam_w = AdamState.for_arrays([self.masks.w_init, self.masks.w_res])
        self.dynamic = settings.regime in ("dynamic", "seq-dynamic")
        self.iteration = 0
        self.history = []
        self.stage_records = []

    def run_block(self, samples, n_iter, metric, stop_below=0.0):
        """n_iter full-batch iterations on one sample set; returns last loss."""
        s = self.settings
        total = float("nan")
        for _ in range(n_iter):
            self.iteration += 1
            lr = self.schedule.rate(self.iteration - 1)
            (l_r, g_r, e2_r), (l_0, g_0, e2_0), (l_b, g_b) = _family_passes(
                self.net, self.cfg, samples, self.masks)
            _check_finite((l_r, l_0, l_b), self.iteration)
            if self.dynamic and self.iteration % s.reweight_every == 0:
                self.omega_0 = dynamic_reweight(self.omega_0, g_r, g_0,
                                                s.reweight_alpha, s.original_annealing)
                self.omega_b = dynamic_reweight(self.omega_b, g_r, g_b,
                                                s.reweight_alpha, s.original_annealing)
            grad = ParamVector.zeros_like(self.net)
            grad.add_scaled(g_r, self.omega_r)
            grad.add_scaled(g_0, self.omega_0)
            grad.add_scaled(g_b, self.omega_b)
            if self.masks is not None:
                # ascent on the point weights, from the same iterate as the
                # descent step (simultaneous min-max update)
                gw_i = mask_prime(self.masks.w_init, self.masks.init_mask) \
                    * e2_0 / e2_0.size
                gw_r = mask_prime(self.masks.w_res, self.masks.res_mask) \
                    * e2_r / e2_r.size
                adam_step(self.adam, self.net.weights + self.net.biases,
                          grad.weights + grad.biases, lr)
                adam_step(self.adam_w, [self.masks.w_init, self.masks.w_res],
                          [-gw_i, -gw_r], s.ascent_lr)
            else:
                adam_step(self.adam, self.net.weights + self.net.biases,
                          grad.weights + grad.biases, lr)
            total = self.omega_0 * l_0 + self.omega_b * l_b + self.omega_r * l_r
            rel = float("nan")
            if self.iteration % s.eval_every == 0:
                rel = metric(self.net)
            self.history.append(HistoryRow(self.iteration, l_r, l_0, l_b,
                                           self.omega_0, self.omega_b,
                                           self.omega_r, lr, rel))
            if stop_below > 0.0 and total < stop_below:
                break
        return total


def train(cfg: physics.StefanConfig, settings: TrainSettings, seed,
          reference=None) -> TrainResult:
    """Run one training job; reference (FD solution or field) enables metrics.

    Curriculum regimes train their stages in sequence on nested sample sets,
    carrying network parameters, optimizer state, the iteration counter, and
    dynamic weights across stage boundaries.
    """
    run = _Run(cfg, settings, seed)
    if settings.regime.startswith("seq-"):
        schedule = sampling.build_curriculum(cfg, settings.dt_seq,
                                             settings.base_nr, settings.incr_nr,
                                             settings.budget)
        stage_sets = sampling.curriculum_samples(cfg, schedule,
                                                 settings.n_initial,
                                                 settings.n_boundary,
                                                 run.sample_seed)
        full_metric = _Metric(cfg, reference)
        for stage, samples in zip(schedule.stages, stage_sets):
            run.run_block(samples, stage.n_iterations, full_metric,
                          stop_below=settings.stage_loss_threshold)
            window = _Metric(cfg, reference, t_end=stage.t_end)
            run.stage_records.append(StageRecord(
                stage.k, stage.t_end, run.iteration, window(run.net)))
        final = full_metric(run.net)
    else:
        samples = sampling.build_sample_set(cfg, settings.n_initial,
                                            settings.n_boundary,
                                            settings.n_residual,
                                            run.sample_seed)
        metric = _Metric(cfg, reference)
        run.run_block(samples, settings.n_iter, metric)
        final = metric(run.net)
    return TrainResult(run.net, run.history, final,
                       (run.omega_0, run.omega_b, run.omega_r),
                       run.masks, run.stage_records)

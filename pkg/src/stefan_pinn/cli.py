"""Command line interface.

Subcommands cover the closed-form solution (exact), the finite-difference
reference (fd, converge), network training (train, ensemble) and checkpoint
evaluation (eval).  Options resolve in three layers: library defaults, then
an INI file passed with --config ([problem] and [train] sections), then
explicit command line flags.  Each run echoes its resolved configuration
into the output directory so it can be repeated with --config alone.

Reports are delimited text; unless --no-figures is given, the matching PNG
figures land next to them.

Exit codes: 0 on success, 2 for configuration problems, 3 when a numerical
procedure fails (root bracketing, Newton divergence, non-finite loss,
degenerate reference).
"""

import argparse
import configparser
import csv
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, autodiff, evaluation, fd, figures, physics, sampling, training
from .errors import (
    NanLoss,
    NewtonDiverged,
    NonIntegerStages,
    NoRootBracket,
    SingularJacobian,
    ZeroReference,
)

NUMERIC_ERRORS = (NoRootBracket, NewtonDiverged, SingularJacobian, NanLoss,
                  ZeroReference)

PROBLEM_KEYS = tuple(f.name for f in fields(physics.StefanConfig))
TRAIN_KEYS = tuple(f.name for f in fields(training.TrainSettings))


def _parse_step(text):
    """Step sizes accept plain decimals or fractions like 1/256."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _parse_floats(text):
    return tuple(float(v) for v in text.split(","))


def _parse_ints(text):
    return tuple(int(v) for v in text.split(","))


def _load_ini(path):
    ini = configparser.ConfigParser()
    with open(path) as fh:
        ini.read_file(fh)
    for section in ini.sections():
        if section == "problem":
            known = PROBLEM_KEYS
        elif section == "train":
            known = TRAIN_KEYS
        else:
            raise ValueError(f"unknown config section [{section}]")
        for key in ini.options(section):
            if key not in known:
                raise ValueError(f"unknown key {key!r} in [{section}]")
    return ini


def _ini_value(ini, section, key, cast):
    if ini is None or not ini.has_option(section, key):
        return None
    if cast is bool:
        return ini.getboolean(section, key)
    return cast(ini.get(section, key))


def _build_cfg(args, ini):
    kwargs = {}
    for name in PROBLEM_KEYS:
        value = getattr(args, name, None)
        if value is None:
            value = _ini_value(ini, "problem", name, float)
        if value is not None:
            kwargs[name] = value
    return physics.StefanConfig(**kwargs)


_TRAIN_CASTS = {
    "regime": str,
    "n_iter": int,
    "layer_sizes": _parse_ints,
    "n_initial": int,
    "n_boundary": int,
    "n_residual": int,
    "reweight_every": int,
    "original_annealing": bool,
    "eval_every": int,
    "base_nr": int,
    "incr_nr": int,
}


def _build_settings(args, ini):
    kwargs = {}
    for name in TRAIN_KEYS:
        value = getattr(args, name, None)
        if value is None:
            value = _ini_value(ini, "train", name, _TRAIN_CASTS.get(name, float))
        if value is not None:
            kwargs[name] = value
    return training.TrainSettings(**kwargs)


def _cache_root():
    env = os.environ.get("STEFAN_PINN_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "stefan-pinn"


def _reference(cfg, kind, h_ref):
    if kind == "none":
        return None
    if kind == "exact":
        return cfg
    return fd.reference_solution(cfg, h_ref, cache_dir=str(_cache_root() / "fd"))


def _out_dir(args):
    if args.out:
        base = Path(args.out)
    else:
        root = Path(os.environ.get("STEFAN_PINN_OUT", "runs"))
        base = root / f"{args.command}-{time.strftime('%Y%m%d-%H%M%S')}"
    base.mkdir(parents=True, exist_ok=True)
    return base


def _echo_config(out, cfg, settings=None):
    ini = configparser.ConfigParser()
    ini["problem"] = {k: repr(getattr(cfg, k)) for k in PROBLEM_KEYS}
    if settings is not None:
        sect = {}
        for k in TRAIN_KEYS:
            v = getattr(settings, k)
            if isinstance(v, tuple):
                sect[k] = ",".join(str(s) for s in v)
            elif isinstance(v, str):
                sect[k] = v
            else:
                sect[k] = repr(v)
        ini["train"] = sect
    with open(out / "config.ini", "w") as fh:
        ini.write(fh)


def _write_kv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for key, value in rows:
            w.writerow([key, value])


def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _slice_times(cfg):
    return (cfg.t0, 0.5 * (cfg.t0 + cfg.t1), cfg.t1)


def _grid(args, cfg):
    return evaluation.EvalGrid.for_config(cfg, nt=args.nt or 500,
                                          nx=args.nx or 500)


def cmd_exact(args, ini):
    cfg = _build_cfg(args, ini)
    out = _out_dir(args)
    _echo_config(out, cfg)
    grid = _grid(args, cfg)
    field = evaluation.exact_field(cfg, grid)
    evaluation.save_field(field, grid, out / "field.csv")
    lam = physics.solve_lambda0(cfg)
    times = _parse_floats(args.times) if args.times else _slice_times(cfg)
    rows = [("lambda0", repr(lam))]
    profile = []
    xs = np.linspace(cfg.x0, cfg.x1, args.nx or 500)
    for t in times:
        rows.append((f"front_t{t:g}", repr(physics.melt_front(cfg, t))))
        theta = np.asarray(physics.exact_theta(cfg, t, xs))
        profile.extend((t, x, v) for x, v in zip(xs, theta))
    _write_kv(out / "summary.csv", rows)
    _write_table(out / "profiles.csv", ["t", "x", "theta"], profile)
    if not args.no_figures:
        figures.exact_profiles(cfg, out / "profiles.png", times=times)
        figures.field_heatmap(field, grid, out / "field.png")
    print(f"lambda0 = {lam:.12f}")
    print(f"wrote {out}")
    return 0


def cmd_fd(args, ini):
    cfg = _build_cfg(args, ini)
    out = _out_dir(args)
    _echo_config(out, cfg)
    h = _parse_step(args.h)
    t0 = time.time()
    sol = fd.solve(cfg, fd.Grid.equal_step(cfg, h), tol=args.tol,
                   max_iter=args.max_iter)
    seconds = time.time() - t0
    fd.save_solution(sol, cfg, str(out / "solution"))
    front = fd.interface_position(sol)
    exact_front = np.array([physics.melt_front(cfg, t) for t in sol.grid.ts])
    _write_table(out / "front.csv", ["t", "x_front", "x_front_exact"],
                 zip(sol.grid.ts, front, exact_front))
    gap = np.nanmax(np.abs(front - exact_front))
    _write_kv(out / "summary.csv", [
        ("h", repr(h)), ("nx", sol.grid.nx), ("nt", sol.grid.nt),
        ("seconds", f"{seconds:.2f}"), ("max_front_gap", repr(float(gap))),
    ])
    if not args.no_figures:
        figures.field_heatmap(sol.theta, sol.grid, out / "field.png")
    print(f"solved {sol.grid.nt} steps x {sol.grid.nx} nodes "
          f"in {seconds:.2f}s, front gap {gap:.3e}")
    print(f"wrote {out}")
    return 0


def cmd_converge(args, ini):
    cfg = _build_cfg(args, ini)
    out = _out_dir(args)
    _echo_config(out, cfg)
    hs = [_parse_step(s) for s in args.steps.split(",")]
    h_ref = _parse_step(args.h_ref)
    errors, slope = fd.convergence_study(cfg, hs, h_ref)
    rows = []
    for i, (h, err) in enumerate(errors):
        ratio = errors[i - 1][1] / err if i else float("nan")
        rows.append((repr(h), repr(err), repr(ratio)))
    _write_table(out / "convergence.csv", ["h", "rel_l2", "ratio"], rows)
    _write_kv(out / "summary.csv", [("slope", repr(slope)),
                                    ("h_ref", repr(h_ref))])
    if not args.no_figures:
        figures.convergence([h for h, _ in errors], [e for _, e in errors],
                            out / "convergence.png")
    for h, err in errors:
        print(f"h={h:.6g}  rel_l2={err:.4e}")
    print(f"slope = {slope:.3f}")
    print(f"wrote {out}")
    return 0


def _train_outputs(out, cfg, settings, result, args, seconds):
    training.save_history(result.history, out / "history.csv")
    autodiff.save_checkpoint(result.net, out / "net.txt")
    if result.stage_records:
        _write_table(out / "stages.csv",
                     ["k", "t_end", "end_iteration", "rel_l2_window"],
                     [(s.k, repr(s.t_end), s.end_iteration, repr(s.rel_l2_window))
                      for s in result.stage_records])
    omega_0, omega_b, omega_r = result.omegas
    _write_kv(out / "summary.csv", [
        ("regime", settings.regime),
        ("iterations", result.history[-1].iteration if result.history else 0),
        ("seed", args.seed),
        ("final_rel_l2", repr(result.final_rel_l2)),
        ("omega_0", repr(omega_0)), ("omega_b", repr(omega_b)),
        ("omega_r", repr(omega_r)),
        ("seconds", f"{seconds:.2f}"),
    ])


def cmd_train(args, ini):
    cfg = _build_cfg(args, ini)
    settings = _build_settings(args, ini)
    out = _out_dir(args)
    _echo_config(out, cfg, settings)
    reference = _reference(cfg, args.reference, _parse_step(args.h_ref))
    t0 = time.time()
    result = training.train(cfg, settings, seed=args.seed, reference=reference)
    seconds = time.time() - t0
    _train_outputs(out, cfg, settings, result, args, seconds)
    if args.dump_samples:
        seq = np.random.SeedSequence(args.seed).spawn(3)[1]
        if settings.regime.startswith("seq-"):
            schedule = sampling.build_curriculum(
                cfg, settings.dt_seq, settings.base_nr, settings.incr_nr,
                settings.budget)
            stage_sets = sampling.curriculum_samples(
                cfg, schedule, settings.n_initial, settings.n_boundary, seq)
            samples = stage_sets[-1]
        else:
            samples = sampling.build_sample_set(
                cfg, settings.n_initial, settings.n_boundary,
                settings.n_residual, seq)
        sampling.dump_samples(samples, out / "samples.csv", cfg.t0)
    if not args.no_figures:
        figures.loss_history(result.history, out / "loss.png")
        figures.error_history(result.history, out / "error.png")
        if settings.regime in ("static", "dynamic", "seq-static", "seq-dynamic"):
            figures.weight_history(result.history, out / "weights.png")
        figures.profile_slices(cfg, result.net, out / "profiles.png",
                               times=_slice_times(cfg))
        figures.front_position(cfg, result.net, out / "front.png")
        if reference is not None:
            grid = _grid(args, cfg)
            _, err = evaluation.evaluate(result.net, reference, grid)
            figures.field_heatmap(np.abs(err), grid, out / "error_field.png",
                                  label="absolute error")
        if result.point_weights is not None:
            seq = np.random.SeedSequence(args.seed).spawn(3)[1]
            samples = sampling.build_sample_set(
                cfg, settings.n_initial, settings.n_boundary,
                settings.n_residual, seq)
            figures.mask_values(result.point_weights, samples, out / "masks.png")
    print(f"{settings.regime}: {len(result.history)} iterations in "
          f"{seconds:.1f}s, final rel_l2 = {result.final_rel_l2:.4e}")
    print(f"wrote {out}")
    return 0


def cmd_eval(args, ini):
    cfg = _build_cfg(args, ini)
    out = _out_dir(args)
    _echo_config(out, cfg)
    net = autodiff.load_checkpoint(args.net)
    reference = _reference(cfg, args.reference, _parse_step(args.h_ref))
    grid = _grid(args, cfg)
    rel, err = evaluation.evaluate(net, reference, grid)
    pred = evaluation.net_field(net, grid)
    evaluation.save_field(pred, grid, out / "field.csv")
    evaluation.save_field(err, grid, out / "error.csv")
    _write_kv(out / "summary.csv", [
        ("net", args.net), ("reference", args.reference),
        ("rel_l2", repr(rel)),
    ])
    if not args.no_figures:
        figures.field_heatmap(pred, grid, out / "field.png")
        figures.field_heatmap(np.abs(err), grid, out / "error_field.png",
                              label="absolute error")
        figures.profile_slices(cfg, net, out / "profiles.png",
                               times=_slice_times(cfg))
        figures.front_position(cfg, net, out / "front.png")
    print(f"rel_l2 = {rel:.4e}")
    print(f"wrote {out}")
    return 0


def cmd_ensemble(args, ini):
    cfg = _build_cfg(args, ini)
    settings = _build_settings(args, ini)
    out = _out_dir(args)
    _echo_config(out, cfg, settings)
    reference = _reference(cfg, args.reference, _parse_step(args.h_ref))
    seeds = _parse_ints(args.seeds)

    def run_one(seed):
        result = training.train(cfg, settings, seed=seed, reference=reference)
        sub = out / f"seed-{seed}"
        sub.mkdir(exist_ok=True)
        training.save_history(result.history, sub / "history.csv")
        autodiff.save_checkpoint(result.net, sub / "net.txt")
        return result.final_rel_l2

    report = evaluation.run_ensemble(run_one, seeds)
    rows = [(s, repr(report.per_seed[s])) for s in sorted(report.per_seed)]
    rows += [(s, f"failed: {msg}") for s, msg in sorted(report.failures.items())]
    _write_table(out / "ensemble.csv", ["seed", "rel_l2"], rows)
    _write_kv(out / "summary.csv", [
        ("regime", settings.regime),
        ("n_seeds", len(seeds)), ("n_ok", report.n_ok),
        ("rel_l2_mean", repr(report.rel_l2_mean)),
        ("rel_l2_std", repr(report.rel_l2_std)),
    ])
    if not args.no_figures and report.per_seed:
        figures.ensemble_errors(report, out / "ensemble.png")
    print(f"{settings.regime}: rel_l2 = {report.rel_l2_mean:.4e} "
          f"+/- {report.rel_l2_std:.1e} over {report.n_ok} seeds")
    print(f"wrote {out}")
    return 0


def _add_problem_flags(parser):
    g = parser.add_argument_group("problem")
    g.add_argument("--fo", type=float, help="Fourier number")
    g.add_argument("--ste", type=float, help="Stefan number")
    g.add_argument("--delta", type=float, help="phase-indicator half-width")
    g.add_argument("--theta-l", dest="theta_l", type=float,
                   help="hot wall temperature")
    g.add_argument("--theta-r", dest="theta_r", type=float,
                   help="cold far-field temperature")
    g.add_argument("--t0", type=float, help="window start time")
    g.add_argument("--t1", type=float, help="window end time")
    g.add_argument("--x0", type=float, help="left wall position")
    g.add_argument("--x1", type=float, help="right wall position")


def _add_io_flags(parser):
    g = parser.add_argument_group("output")
    g.add_argument("--out", help="output directory (default: "
                   "$STEFAN_PINN_OUT/<command>-<timestamp>)")
    g.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering")
    g.add_argument("--nt", type=int, help="evaluation grid rows (default 500)")
    g.add_argument("--nx", type=int, help="evaluation grid columns (default 500)")


def _add_train_flags(parser):
    g = parser.add_argument_group("training")
    g.add_argument("--regime", choices=training.REGIMES,
                   help="loss-weighting strategy")
    g.add_argument("--iterations", dest="n_iter", type=int,
                   help="Adam iterations (ignored by seq-* regimes)")
    g.add_argument("--layers", dest="layer_sizes", type=_parse_ints,
                   help="comma list, e.g. 2,20,20,1")
    g.add_argument("--n-initial", dest="n_initial", type=int)
    g.add_argument("--n-boundary", dest="n_boundary", type=int)
    g.add_argument("--n-residual", dest="n_residual", type=int)
    g.add_argument("--eta", type=float, help="initial learning rate")
    g.add_argument("--gamma", type=float, help="learning-rate decay factor")
    g.add_argument("--kappa", type=float,
                   help="decay interval in iterations (0 = per-regime default)")
    g.add_argument("--omega0", dest="static_omega0", type=float,
                   help="initial-family weight for the static regime")
    g.add_argument("--reweight-every", dest="reweight_every", type=int)
    g.add_argument("--reweight-alpha", dest="reweight_alpha", type=float)
    g.add_argument("--original-annealing", dest="original_annealing",
                   action="store_const", const=True,
                   help="drop the current weight from the reweight denominator")
    g.add_argument("--ascent-lr", dest="ascent_lr", type=float)
    g.add_argument("--eval-every", dest="eval_every", type=int)
    g.add_argument("--budget", type=float,
                   help="total point evaluations for seq-* schedules")
    g.add_argument("--dt-seq", dest="dt_seq", type=float,
                   help="time-slab width for seq-* schedules")
    g.add_argument("--base-nr", dest="base_nr", type=int)
    g.add_argument("--incr-nr", dest="incr_nr", type=int)
    g.add_argument("--stage-threshold", dest="stage_loss_threshold", type=float,
                   help="advance a stage early below this loss (0 = never)")
    g.add_argument("--reference", choices=("fd", "exact", "none"), default="fd",
                   help="error metric reference (default fd)")
    g.add_argument("--h-ref", dest="h_ref", default="1/1024",
                   help="step for the fd reference (default 1/1024)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stefan-pinn",
        description="Two-phase melting benchmark: exact solution, "
                    "finite-difference reference, and network training.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="INI file with [problem] and [train]")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="closed-form solution report")
    _add_problem_flags(p)
    _add_io_flags(p)
    p.add_argument("--times", help="comma list of profile times")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("fd", help="finite-difference reference solve")
    _add_problem_flags(p)
    _add_io_flags(p)
    p.add_argument("--h", default="1/256", help="space/time step (default 1/256)")
    p.add_argument("--tol", type=float, default=1e-10,
                   help="Newton tolerance per step")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=50,
                   help="Newton iteration cap per step")
    p.set_defaults(func=cmd_fd)

    p = sub.add_parser("converge", help="step-size refinement study")
    _add_problem_flags(p)
    _add_io_flags(p)
    p.add_argument("--steps", default="1/64,1/128,1/256",
                   help="comma list of steps (default 1/64,1/128,1/256)")
    p.add_argument("--h-ref", dest="h_ref", default="1/1024",
                   help="reference step (default 1/1024)")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("train", help="train one network")
    _add_problem_flags(p)
    _add_io_flags(p)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-samples", dest="dump_samples", action="store_true",
                   help="write the collocation points to samples.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    _add_problem_flags(p)
    _add_io_flags(p)
    p.add_argument("--net", required=True, help="checkpoint file")
    p.add_argument("--reference", choices=("fd", "exact"), default="fd")
    p.add_argument("--h-ref", dest="h_ref", default="1/1024")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble", help="train across seeds and aggregate")
    _add_problem_flags(p)
    _add_io_flags(p)
    _add_train_flags(p)
    p.add_argument("--seeds", default="0,1,2", help="comma list of seeds")
    p.set_defaults(func=cmd_ensemble)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        ini = _load_ini(args.config) if args.config else None
        return args.func(args, ini)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except NonIntegerStages as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

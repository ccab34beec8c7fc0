"""Point generation checks: stratification, targets, curriculum schedule."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefan_pinn import physics, sampling
from stefan_pinn.errors import NonIntegerStages


def bin_indices(points, lo, hi, n):
    idx = np.floor((points - lo) / (hi - lo) * n).astype(int)
    return np.clip(idx, 0, n - 1)


def assert_stratified(points, lo, hi):
    n = points.size
    assert np.all(points >= lo) and np.all(points <= hi)
    assert np.array_equal(np.sort(bin_indices(points, lo, hi, n)), np.arange(n))


class TestLhs:
    @pytest.mark.parametrize("n", [1, 10, 256, 1024])
    def test_per_axis_stratification(self, n):
        pts = sampling.lhs(n, [(0.05, 1.0), (-1.0, 2.0)], seed=42)
        assert pts.shape == (n, 2)
        assert_stratified(pts[:, 0], 0.05, 1.0)
        assert_stratified(pts[:, 1], -1.0, 2.0)

    def test_one_dimensional(self):
        pts = sampling.lhs(16, [(0.0, 1.0)], seed=0)
        assert pts.shape == (16, 1)
        assert_stratified(pts[:, 0], 0.0, 1.0)

    def test_determinism(self):
        a = sampling.lhs(64, [(0.0, 1.0), (0.0, 1.0)], seed=7)
        b = sampling.lhs(64, [(0.0, 1.0), (0.0, 1.0)], seed=7)
        c = sampling.lhs(64, [(0.0, 1.0), (0.0, 1.0)], seed=8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    @given(st.integers(1, 200), st.integers(0, 2**32 - 1),
           st.floats(-5, 5), st.floats(0.01, 10))
    @settings(max_examples=50, deadline=None)
    def test_stratification_property(self, n, seed, lo, width):
        pts = sampling.lhs(n, [(lo, lo + width)], seed=seed)
        assert_stratified(pts[:, 0], lo, lo + width)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            sampling.lhs(0, [(0.0, 1.0)], seed=0)
        with pytest.raises(ValueError):
            sampling.lhs(4, [(1.0, 1.0)], seed=0)


@pytest.fixture(scope="module")
def samples(cfg):
    return sampling.build_sample_set(cfg, n0=128, nb=64, nr=500, seed=3)


class TestBuildSampleSet:
    def test_counts(self, samples):
        assert samples.counts == (128, 64, 500)

    def test_initial_targets_are_exact_solution(self, cfg, samples):
        want = physics.exact_theta(cfg, cfg.t0, samples.initial_x)
        assert np.array_equal(samples.initial_target, np.asarray(want))
        assert_stratified(samples.initial_x, cfg.x0, cfg.x1)

    def test_boundary_walls(self, cfg, samples):
        left = samples.boundary_x == cfg.x0
        right = samples.boundary_x == cfg.x1
        assert left.sum() == right.sum() == 32
        assert np.all(samples.boundary_target[left] == cfg.theta_l)
        want_right = physics.exact_theta(cfg, samples.boundary_t[right], cfg.x1)
        assert np.array_equal(samples.boundary_target[right], np.asarray(want_right))
        assert_stratified(samples.boundary_t[left], cfg.t0, cfg.t1)
        assert_stratified(samples.boundary_t[right], cfg.t0, cfg.t1)

    def test_residual_stratified_both_axes(self, cfg, samples):
        assert_stratified(samples.residual_t, cfg.t0, cfg.t1)
        assert_stratified(samples.residual_x, cfg.x0, cfg.x1)

    def test_determinism_and_seed_sensitivity(self, cfg):
        a = sampling.build_sample_set(cfg, n0=32, nb=16, nr=64, seed=1)
        b = sampling.build_sample_set(cfg, n0=32, nb=16, nr=64, seed=1)
        c = sampling.build_sample_set(cfg, n0=32, nb=16, nr=64, seed=2)
        assert np.array_equal(a.residual_t, b.residual_t)
        assert np.array_equal(a.initial_x, b.initial_x)
        assert not np.array_equal(a.residual_t, c.residual_t)

    def test_families_use_independent_streams(self, cfg):
        small = sampling.build_sample_set(cfg, n0=32, nb=16, nr=64, seed=1)
        big = sampling.build_sample_set(cfg, n0=32, nb=16, nr=128, seed=1)
        # growing one family must not disturb the others
        assert np.array_equal(small.initial_x, big.initial_x)
        assert np.array_equal(small.boundary_t, big.boundary_t)

    def test_bad_counts(self, cfg):
        with pytest.raises(ValueError):
            sampling.build_sample_set(cfg, n0=0, nb=16, nr=64, seed=1)

    def test_dump_csv(self, cfg, samples, tmp_path):
        path = tmp_path / "samples.csv"
        sampling.dump_samples(samples, path, cfg.t0)
        lines = path.read_text().splitlines()
        assert lines[0] == "family,t,x,target"
        assert len(lines) == 1 + 128 + 64 + 500
        kinds = {line.split(",")[0] for line in lines[1:]}
        assert kinds == {"initial", "boundary", "residual"}


class TestCurriculum:
    def test_paper_constants(self, cfg):
        sched = sampling.build_curriculum(cfg)
        assert len(sched.stages) == 19
        assert [s.n_residual for s in sched.stages] == list(range(1000, 10001, 500))
        assert sched.total_new_points == 10000
        assert sched.stages[0].n_iterations == 100000
        assert sched.stages[-1].t_end == cfg.t1
        for s in sched.stages:
            assert s.t_end == pytest.approx(cfg.t0 + s.k * 0.05, abs=1e-12)

    @pytest.mark.parametrize("budget", [1e8, 1e6])
    def test_budget_rule_within_one_percent(self, cfg, budget):
        sched = sampling.build_curriculum(cfg, budget=budget)
        for s in sched.stages:
            assert abs(s.n_iterations * s.n_residual - budget) <= 0.01 * budget

    def test_non_integer_window_rejected(self, cfg):
        with pytest.raises(NonIntegerStages):
            sampling.build_curriculum(cfg, dt_seq=0.07)

    def test_tiny_budget_rejected(self, cfg):
        with pytest.raises(ValueError):
            sampling.build_curriculum(cfg, budget=100)

    def test_stage_sets_nested(self, cfg):
        sched = sampling.build_curriculum(cfg, budget=1e6)
        sets = sampling.curriculum_samples(cfg, sched, n0=32, nb=16, seed=5)
        assert len(sets) == 19
        for prev, cur in zip(sets, sets[1:]):
            n = prev.residual_t.size
            assert np.array_equal(cur.residual_t[:n], prev.residual_t)
            assert np.array_equal(cur.residual_x[:n], prev.residual_x)
        assert sets[-1].residual_t.size == 10000

    def test_new_points_confined_to_new_slab(self, cfg):
        sched = sampling.build_curriculum(cfg, budget=1e6)
        sets = sampling.curriculum_samples(cfg, sched, n0=8, nb=4, seed=6)
        t_lo = cfg.t0
        for stage, sset in zip(sched.stages, sets):
            new_t = sset.residual_t[stage.n_residual - (500 if stage.k > 1 else 1000):]
            assert np.all(new_t >= t_lo)
            assert np.all(new_t <= stage.t_end)
            t_lo = stage.t_end

    def test_initial_and_boundary_fixed_across_stages(self, cfg):
        sched = sampling.build_curriculum(cfg, budget=1e6)
        sets = sampling.curriculum_samples(cfg, sched, n0=16, nb=8, seed=7)
        plain = sampling.build_sample_set(cfg, n0=16, nb=8, nr=1, seed=7)
        for sset in sets:
            assert np.array_equal(sset.initial_x, plain.initial_x)
            assert np.array_equal(sset.boundary_t, plain.boundary_t)

    def test_determinism(self, cfg):
        sched = sampling.build_curriculum(cfg, budget=1e6)
        a = sampling.curriculum_samples(cfg, sched, n0=8, nb=4, seed=9)
        b = sampling.curriculum_samples(cfg, sched, n0=8, nb=4, seed=9)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.residual_t, sb.residual_t)

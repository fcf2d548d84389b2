import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import MPOX_IC, mpox_params, random_simplex
from fracpinn.errors import DomainError, NonConvergenceError
from fracpinn.fracops import caputo_l1_all, l1_weights
from fracpinn.fracsolver import (
    SolverConfig,
    Trajectory,
    peak_height,
    peak_time,
    simulate,
    simulate_classical_rk4,
)
from fracpinn.model import EpidemicParams, SimplexState, rhs

DISEASE_FREE = SimplexState(0.7, 0.0, 0.0, 0.2, 0.1)


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestSimulate:
    @pytest.mark.parametrize("scheme", ["implicit", "explicit"])
    def test_disease_free_constant(self, scheme):
        tr = simulate(DISEASE_FREE, mpox_params(0.8), 0.5, 50, SolverConfig(scheme=scheme))
        assert np.all(tr.states == DISEASE_FREE.as_array())

    def test_first_row_is_ic(self):
        tr = simulate(MPOX_IC, mpox_params(0.9), 0.5, 10)
        assert np.array_equal(tr.states[0], MPOX_IC.as_array())
        assert tr.states.shape == (11, 5)

    @pytest.mark.parametrize("alpha", [0.6, 0.9, 1.0])
    def test_conservation(self, alpha):
        tr = simulate(MPOX_IC, mpox_params(alpha), 0.5, 600)
        assert np.max(np.abs(tr.states.sum(axis=1) - 1.0)) < 1e-12

    def test_alpha_one_matches_rk4(self):
        tr = simulate(MPOX_IC, mpox_params(1.0), 0.05, 6000)
        ref = simulate_classical_rk4(MPOX_IC, mpox_params(1.0), 0.01, 30000)
        assert rel_l2(tr.states, ref.states[::5]) < 1e-3

    @pytest.mark.parametrize("alpha", [0.7, 0.95])
    def test_implicit_step_relation(self, alpha):
        # the L1 relation with F at the new node holds at every step
        dt = 0.5
        p = mpox_params(alpha)
        tr = simulate(MPOX_IC, p, dt, 200)
        lhs = caputo_l1_all(tr.states, l1_weights(alpha, dt, 200))
        assert np.max(np.abs(lhs - rhs(tr.states[1:], p))) < 1e-12

    def test_explicit_step_relation(self):
        dt, p = 0.5, mpox_params(0.8)
        tr = simulate(MPOX_IC, p, dt, 100, SolverConfig(scheme="explicit"))
        lhs = caputo_l1_all(tr.states, l1_weights(0.8, dt, 100))
        assert np.max(np.abs(lhs - rhs(tr.states[:-1], p))) < 1e-12

    @pytest.mark.parametrize("dt", [0.1, 0.05])
    def test_implicit_vs_explicit(self, dt):
        n = int(round(60 / dt))
        imp = simulate(MPOX_IC, mpox_params(0.9), dt, n)
        exp = simulate(MPOX_IC, mpox_params(0.9), dt, n, SolverConfig(scheme="explicit"))
        assert rel_l2(exp.states, imp.states) < 5 * dt

    def test_grid_refinement(self):
        alpha = 0.8
        p = mpox_params(alpha)
        ref = simulate(MPOX_IC, p, 0.025, 1600).states[::8]
        coarse = simulate(MPOX_IC, p, 0.2, 200).states
        mid = simulate(MPOX_IC, p, 0.1, 400).states[::2]
        e1, e2 = np.max(np.abs(coarse - ref)), np.max(np.abs(mid - ref))
        # at worst first-order: halving dt shrinks the error by at least ~2x
        assert e2 < 0.6 * e1

    def test_nonconvergence(self):
        with pytest.raises(NonConvergenceError):
            simulate(MPOX_IC, EpidemicParams(0.9, 0.9, 0.9, 0.9, 1.0), 5.0, 3,
                     SolverConfig(fixed_point_tol=1e-15, fixed_point_max_iter=1))

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            simulate(MPOX_IC, mpox_params(), 0.0, 3)
        with pytest.raises(DomainError):
            simulate(MPOX_IC, mpox_params(), 0.1, 0)
        with pytest.raises(DomainError):
            SolverConfig(scheme="rk45")
        with pytest.raises(DomainError):
            SolverConfig(fixed_point_tol=0.0)

    @given(st.integers(0, 10_000), st.floats(0.6, 1.0), st.sampled_from([0.25, 0.5, 1.0]))
    def test_positive(self, seed, alpha, dt):
        rng = np.random.default_rng(seed)
        p = EpidemicParams(rng.uniform(0.1, 0.4), rng.uniform(0.077, 0.3), rng.uniform(0.036, 0.1),
                           rng.uniform(0.001, 0.03), alpha)
        tr = simulate(random_simplex(rng), p, dt, 200)
        assert tr.states.min() > -1e-12
        assert np.max(np.abs(tr.states.sum(axis=1) - 1.0)) < 1e-12

    @given(st.integers(0, 10_000), st.sampled_from([0.25, 0.5, 1.0]))
    def test_monotone_at_alpha_one(self, seed, dt):
        rng = np.random.default_rng(seed)
        p = EpidemicParams(rng.uniform(0.1, 0.4), rng.uniform(0.077, 0.3), rng.uniform(0.036, 0.1),
                           rng.uniform(0.001, 0.03), 1.0)
        x = simulate(random_simplex(rng), p, dt, 200).states
        assert np.all(np.diff(x[:, 0]) <= 1e-15)
        assert np.all(np.diff(x[:, 3]) >= -1e-15)
        assert np.all(np.diff(x[:, 4]) >= -1e-15)

    def test_fractional_rebound(self):
        # With alpha < 1 a sign-definite Caputo derivative does not make s monotone:
        # s = s0 - I^alpha[force] drifts back up once the epidemic has passed.
        x = simulate(MPOX_IC, mpox_params(0.8), 1.0, 600).states
        ds = np.diff(x[:, 0])
        assert ds[:50].max() < 0
        assert ds[-50:].min() > 0


class TestRk4:
    def test_disease_free(self):
        tr = simulate_classical_rk4(DISEASE_FREE, mpox_params(), 1.0, 20)
        assert np.all(tr.states == DISEASE_FREE.as_array())

    def test_conservation(self):
        tr = simulate_classical_rk4(MPOX_IC, mpox_params(), 0.5, 600)
        assert np.max(np.abs(tr.states.sum(axis=1) - 1.0)) < 1e-12

    def test_fourth_order(self):
        p, T = mpox_params(), 60.0
        ref = simulate_classical_rk4(MPOX_IC, p, 0.1, 600).states[-1, 2]
        errs = []
        for dt in (2.0, 1.0):
            errs.append(abs(simulate_classical_rk4(MPOX_IC, p, dt, int(T / dt)).states[-1, 2] - ref))
        assert 12.0 < errs[0] / errs[1] < 20.0


class TestPeaks:
    def test_monotone_decreasing(self):
        states = np.zeros((5, 5))
        states[:, 2] = [0.5, 0.4, 0.3, 0.2, 0.1]
        assert peak_time(Trajectory(0.5, states)) == 0.0

    def test_interior_and_ties(self):
        states = np.zeros((12, 5))
        states[:, 2] = 0.1
        states[7, 2] = 0.4
        assert peak_time(Trajectory(0.25, states)) == 7 * 0.25
        states[9, 2] = 0.4
        assert peak_time(Trajectory(0.25, states)) == 7 * 0.25
        assert peak_height(Trajectory(0.25, states)) == 0.4

    def test_memory_delays_and_flattens(self):
        runs = [simulate(MPOX_IC, mpox_params(a), 0.5, 600) for a in (1.0, 0.95, 0.9)]
        times = [peak_time(r) for r in runs]
        heights = [peak_height(r) for r in runs]
        assert times == sorted(times)
        assert heights == sorted(heights, reverse=True)


class TestCsv:
    def test_round_trip(self, tmp_path):
        tr = simulate(MPOX_IC, mpox_params(0.9), 0.5, 40)
        path = tmp_path / "traj.csv"
        tr.to_csv(path)
        assert path.read_text().splitlines()[0] == "t,s,e,i,r,d"
        back = Trajectory.from_csv(path)
        assert back.dt == 0.5
        assert np.array_equal(back.states, tr.states)

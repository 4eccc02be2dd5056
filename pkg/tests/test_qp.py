import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from dflgap.errors import Infeasible
from dflgap.facility import FLInstance, to_smoothed_qp
from dflgap.harness import random_qp
from dflgap.qp import QpProblem, differentiate_wrt_cost, kkt_residuals, solve
from dflgap.synthetic import make_rng

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def central_difference(problem, upstream, step=1e-5):
    n = problem.n_var
    out = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        hi = solve(problem.with_cost(problem.c + e)).z
        lo = solve(problem.with_cost(problem.c - e)).z
        out[i] = upstream @ (hi - lo) / (2 * step)
    return out


def dykstra_projection(x0, sets, sweeps):
    """Dykstra's alternating projections onto an intersection of convex sets."""
    x = x0.copy()
    incr = [np.zeros_like(x0) for _ in sets]
    for _ in range(sweeps):
        for j, proj in enumerate(sets):
            y = proj(x + incr[j])
            incr[j] = x + incr[j] - y
            x = y
    return x


def halfspace(a, beta):
    a = np.asarray(a, dtype=float)

    def proj(x):
        viol = a @ x - beta
        return x - max(viol, 0.0) * a / (a @ a)

    return proj


def hyperplane(a, beta):
    a = np.asarray(a, dtype=float)
    return lambda x: x - (a @ x - beta) * a / (a @ a)


class TestSolveExamples:
    def test_projection_onto_hyperplane(self):
        p = QpProblem(Q=np.eye(2), c=np.zeros(2), A=[[1.0, 1.0]], b=[1.0])
        sol = solve(p)
        np.testing.assert_allclose(sol.z, [0.5, 0.5], atol=1e-12)

    def test_box_corner(self):
        G = np.vstack([-np.eye(2), np.eye(2)])
        p = QpProblem(Q=np.eye(2), c=np.ones(2), G=G, h=[0, 0, 1, 1])
        sol = solve(p)
        np.testing.assert_allclose(sol.z, [0, 0], atol=1e-8)
        np.testing.assert_allclose(sol.lam[:2], [1, 1], atol=1e-8)
        np.testing.assert_allclose(sol.lam[2:], [0, 0], atol=1e-8)

    def test_facility_qp_matches_projected_gradient(self):
        # with step 1/(2 zeta) one gradient step lands on -c/(2 zeta), so
        # projected gradient reduces to a single Euclidean projection
        inst = FLInstance(2, 2, 1)
        rng = np.random.default_rng(3)
        w = rng.uniform(-5, 5, (2, 2))
        sq = to_smoothed_qp(inst, w, zeta=10.0)
        p = sq.problem
        sets = []
        for c in range(2):
            row = np.zeros(6)
            row[2 * c : 2 * c + 2] = 1
            sets.append(hyperplane(row, 1.0))
        for c in range(2):
            for f in range(2):
                a = np.zeros(6)
                a[2 * c + f], a[4 + f] = 1, -1
                sets.append(halfspace(a, 0.0))
        sets.append(halfspace([0, 0, 0, 0, 1, 1], 1.0))
        sets.append(lambda x: np.clip(x, 0.0, 1.0))
        x = np.zeros(6)
        for _ in range(100):  # projected gradient iterations
            x = dykstra_projection(x - (p.Q @ x + p.c) / 20.0, sets, 1000)
        sol = solve(p)
        assert abs(p.objective(sol.z) - p.objective(x)) <= 1e-6
        np.testing.assert_allclose(sol.z, x, atol=1e-5)

    def test_infeasible(self):
        p = QpProblem(Q=np.eye(1), c=[0.0], G=[[1.0], [-1.0]], h=[-1.0, -1.0])
        with pytest.raises(Infeasible):
            solve(p)

    def test_equality_only(self):
        p = QpProblem(Q=2 * np.eye(3), c=[1.0, 0, -1], A=[[1, 1, 1]], b=[3.0])
        sol = solve(p)
        np.testing.assert_allclose(sol.z, [0.5, 1.0, 1.5], atol=1e-12)


class TestDifferentiate:
    def test_inactive_box(self):
        G = np.vstack([-np.eye(3), np.eye(3)])
        c = np.array([-0.2, -0.5, -0.7])
        p = QpProblem(Q=np.eye(3), c=c, G=G, h=np.concatenate([np.zeros(3), np.ones(3)]))
        u = np.array([1.0, -2.0, 3.0])
        np.testing.assert_allclose(differentiate_wrt_cost(p, solve(p), u), -u, atol=1e-8)

    def test_hyperplane_projection(self):
        p = QpProblem(Q=np.eye(2), c=[0.3, -0.1], A=[[1.0, 1.0]], b=[1.0])
        u = np.array([2.0, -1.0])
        a = np.ones(2)
        expected = -(np.eye(2) - np.outer(a, a) / 2) @ u
        g = differentiate_wrt_cost(p, solve(p), u)
        np.testing.assert_allclose(g, expected, atol=1e-10)
        np.testing.assert_allclose(g, central_difference(p, u), atol=1e-7)

    def test_degenerate_active_set_is_handled(self):
        p = QpProblem(Q=np.eye(1), c=[-1.0], G=[[1.0], [1.0]], h=[0.0, 0.0])
        g = differentiate_wrt_cost(p, solve(p), np.ones(1))
        assert np.all(np.isfinite(g))
        assert abs(g[0]) < 1e-6

    def test_sparse_more_active_rows_than_variables(self):
        # three copies of z >= 0, all active: structurally singular KKT
        G = sp.vstack([-sp.identity(2)] * 3, format="csr")
        p = QpProblem(Q=sp.identity(2, format="csr"), c=[1.0, 2.0], G=G, h=np.zeros(6))
        g = differentiate_wrt_cost(p, solve(p), np.array([1.0, -1.0]))
        assert np.abs(g).max() < 1e-6

    def test_random_against_finite_differences(self):
        rng = make_rng(7)
        for _ in range(20):
            p, _ = random_qp(rng, max_var=12, max_ineq=20)
            u = rng.standard_normal(p.n_var)
            g = differentiate_wrt_cost(p, solve(p), u)
            fd = central_difference(p, u)
            assert np.abs(g - fd).max() <= 1e-4 * max(np.abs(fd).max(), 1e-12)


class TestKktResiduals:
    def test_perturbed_optimum(self):
        p = QpProblem(Q=np.eye(2), c=[1.0, -1.0])
        sol = solve(p)
        assert kkt_residuals(p, sol.z, sol.nu, sol.lam).stationarity < 1e-12
        z = sol.z + np.array([0.1, 0.0])
        assert kkt_residuals(p, z, sol.nu, sol.lam).stationarity > 0

    def test_equality_violation(self):
        p = QpProblem(Q=np.eye(2), c=np.zeros(2), A=[[1.0, 1.0]], b=[0.7])
        res = kkt_residuals(p, np.array([0.5, 0.5]), np.zeros(1), np.zeros(0))
        assert res.eq_feasibility == pytest.approx(0.3)


class TestSolverProperties:
    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_solution_invariants(self, seed):
        p, z_true = random_qp(make_rng(seed))
        sol = solve(p)
        res = kkt_residuals(p, sol.z, sol.nu, sol.lam)
        assert np.all(sol.lam >= 0)
        assert res.within(1e-8)
        assert np.all(p.G @ sol.z <= p.h + 1e-8 * res.scale)
        np.testing.assert_allclose(sol.z, z_true, atol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_unique_from_other_start(self, seed):
        rng = make_rng(seed)
        p, _ = random_qp(rng)
        start = (rng.standard_normal(p.n_var), rng.uniform(0.5, 5, p.n_ineq), rng.uniform(0.5, 5, p.n_ineq))
        a, b = solve(p), solve(p, start=start)
        assert np.abs(a.z - b.z).max() <= 1e-6

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_duality_measure_nonincreasing(self, seed):
        p, _ = random_qp(make_rng(seed))
        mu = solve(p).mu_history
        for k in range(3, len(mu)):
            assert mu[k] <= 1.1 * mu[k - 1]

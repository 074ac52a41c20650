import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import table_for
from oracles import implicit_euler_p2, p1_mass_matrix
from nlneumann import ConfigError, DescentConfig, DiscreteFunction, SolverError, UsageError, \
    descend, gagliardo, j_p, prox_solve, prox_step, root_find_monotone, solve_poisson
from nlneumann.solvers import prox_objective


class TestDescentConfig:
    def test_defaults(self):
        cfg = DescentConfig()
        assert (cfg.grad_tol, cfg.armijo_c, cfg.backtrack_ratio, cfg.max_iter) == \
            (1e-8, 1e-4, 0.5, 50_000)

    @pytest.mark.parametrize("kw", [dict(max_iter=0), dict(grad_tol=0.0), dict(armijo_c=1.0),
                                    dict(backtrack_ratio=0.0), dict(initial_step=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            DescentConfig(**kw)


class TestDescend:
    def test_quadratic(self):
        target = np.linspace(-1, 2, 7)
        u, st_ = descend(lambda u: float(np.sum((u - target) ** 2)),
                         lambda u: 2 * (u - target), np.zeros(7))
        assert st_.converged
        np.testing.assert_allclose(u, target, atol=1e-8)
        assert st_.is_monotone()

    def test_ill_conditioned_quadratic_with_diagonal_scaling(self):
        d = np.logspace(0, 4, 12)
        obj = lambda u: float(0.5 * np.sum(d * (u - 1) ** 2))
        grad = lambda u: d * (u - 1)
        u, st_ = descend(obj, grad, np.zeros(12), precond=1 / d)
        np.testing.assert_allclose(u, 1.0, atol=1e-8)
        assert st_.iterations <= 3

    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_norm_power_has_zero_minimiser(self, p):
        table = table_for(p, 0.5)
        start = DiscreteFunction(table.mesh, np.linspace(-1, 1, table.mesh.n_nodes))
        rep = solve_poisson(0.0, table, u0=start)
        # the gradient of ||u||^p / p is O(|u|^(p-1)), which sets the attainable accuracy
        assert np.max(np.abs(rep.u.values)) < 10 * 1e-8 ** (1 / (p - 1))
        assert rep.stats.is_monotone()

    def test_unique_minimiser_from_two_starts(self, rng):
        A = rng.standard_normal((6, 6))
        A = A @ A.T + 6 * np.eye(6)
        b = rng.standard_normal(6)
        obj = lambda u: float(0.5 * u @ A @ u - b @ u + 0.25 * np.sum(u ** 4))
        grad = lambda u: A @ u - b + u ** 3
        cfg = DescentConfig(grad_tol=1e-12)
        u1, s1 = descend(obj, grad, rng.standard_normal(6), cfg)
        u2, s2 = descend(obj, grad, 5 * rng.standard_normal(6), cfg)
        np.testing.assert_allclose(u1, u2, atol=1e-8)
        assert s1.is_monotone() and s2.is_monotone()

    def test_non_finite_start(self):
        with pytest.raises(SolverError) as err:
            descend(lambda u: np.inf, lambda u: u, np.ones(3))
        assert err.value.stats is not None

    def test_trace_never_increases(self, rng):
        # nonsmooth at zero, the setting of p < 2
        obj = lambda u: float(np.sum(np.abs(u - 0.3) ** 1.5))
        grad = lambda u: 1.5 * j_p(u - 0.3, 1.5)
        _, st_ = descend(obj, grad, rng.standard_normal(5), DescentConfig(max_iter=300))
        assert np.all(np.diff(st_.objective_trace) <= 0)

    def test_returns_discrete_function(self):
        table = table_for(2.0, 0.5)
        u0 = DiscreteFunction(table.mesh, np.ones(table.mesh.n_nodes))
        u, _ = descend(lambda v: float(np.sum((v - 2) ** 2)), lambda v: 2 * (v - 2), u0)
        assert isinstance(u, DiscreteFunction) and u.mesh is table.mesh


class TestRootFind:
    def test_linear(self):
        assert root_find_monotone(lambda t: t - 0.3, (0, 1)) == pytest.approx(0.3, abs=1e-12)

    def test_odd_symmetry(self):
        phi = lambda t: j_p(t - 1, 3) + j_p(t + 1, 3)
        assert abs(root_find_monotone(phi, (-1, 1))) <= 1e-12

    def test_cubic(self):
        t = root_find_monotone(lambda t: t ** 3 - 2, (0, 2), tol=1e-14)
        assert t == pytest.approx(2 ** (1 / 3), abs=1e-13)

    def test_bad_bracket(self):
        with pytest.raises(UsageError):
            root_find_monotone(lambda t: t - 3, (0, 1))

    @given(c=st.floats(-10, 10), p=st.floats(1.1, 4))
    def test_shifted_power(self, c, p):
        phi = lambda t: j_p(t - c, p)
        t = root_find_monotone(phi, (-11, 11), tol=1e-11)
        assert abs(phi(t)) <= 1e-11 or abs(t - c) <= 1e-11
        exact = root_find_monotone(phi, (-11, 11), tol=1e-13, ftol=0.0)
        assert abs(exact - c) <= 1e-12


class TestProxStep:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_constant_is_stationary(self, p):
        table = table_for(p, 0.5)
        u = DiscreteFunction(table.mesh, np.full(table.mesh.n_nodes, 0.4))
        np.testing.assert_allclose(prox_step(u, 0.01, table).values, 0.4, atol=1e-12)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_minimality(self, p, rng):
        table = table_for(p, 0.5)
        prev = rng.standard_normal(table.mesh.n_nodes)
        obj, _ = prox_objective(table, prev, 0.05)
        v, stats = prox_solve(DiscreteFunction(table.mesh, prev), 0.05, table,
                              DescentConfig(grad_tol=1e-6 if p < 2 else 1e-8))
        assert obj(v.values) <= obj(prev)
        assert gagliardo(v, table).seminorm_p <= gagliardo(prev, table).seminorm_p
        assert stats.is_monotone()

    def test_p2_dense_oracle(self, rng):
        table = table_for(2.0, 0.5)
        mesh = table.mesh
        prev = rng.standard_normal(mesh.n_nodes)
        K = table.quadratic_form_matrix()
        M = p1_mass_matrix(mesh.nodes, mesh.node_interior)
        ref = implicit_euler_p2(K, M, prev, 0.01, 1)[1]
        got = prox_step(DiscreteFunction(mesh, prev), 0.01, table).values
        np.testing.assert_allclose(got, ref, atol=1e-8)

    @settings(max_examples=15)
    @given(seed=st.integers(0, 2 ** 32 - 1), tau=st.floats(1e-3, 1.0))
    def test_p2_nonexpansive(self, seed, tau):
        table = table_for(2.0, 0.5)
        mesh = table.mesh
        M = p1_mass_matrix(mesh.nodes, mesh.node_interior)
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((2, mesh.n_nodes))
        pa = prox_step(DiscreteFunction(mesh, a), tau, table).values
        pb = prox_step(DiscreteFunction(mesh, b), tau, table).values
        dist = lambda x: float(np.sqrt(max(x @ M @ x, 0.0)))
        assert dist(pa - pb) <= dist(a - b) + 1e-8

    def test_rejects_non_positive_tau(self):
        table = table_for(2.0, 0.5)
        with pytest.raises(ConfigError):
            prox_step(DiscreteFunction(table.mesh, np.zeros(table.mesh.n_nodes)), 0.0, table)

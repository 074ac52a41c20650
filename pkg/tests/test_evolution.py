import numpy as np
import pytest

from conftest import table_for
from oracles import implicit_euler_p2, p1_mass_matrix
from nlneumann import ConfigError, DescentConfig, DiscreteFunction, SolverError, build_mesh, \
    energy, heat_solve, interpolate, mass, profile
from nlneumann.evolution import PROFILES, profile_function


def tol_for(p):
    # below p = 2 the gradient of the step functional cannot be resolved to 1e-8
    # near nearly flat states; see the noise floor in nlneumann.solvers
    return 1e-6 if p < 2 else 1e-8


class TestMass:
    def test_unit_constant(self):
        mesh = build_mesh((0, 1), 8, 1.0, 2)
        assert mass(interpolate(mesh, lambda x: 1.0)) == pytest.approx(1.0, rel=1e-15)

    def test_hat(self):
        mesh = build_mesh((0, 1), 8, 1.0, 2)
        vals = np.zeros(mesh.n_nodes)
        vals[2 + 3] = 1.0
        assert mass(DiscreteFunction(mesh, vals)) == pytest.approx(mesh.h_interior, rel=1e-15)

    def test_odd(self):
        mesh = build_mesh((0, 1), 8, 1.0, 2)
        assert abs(mass(interpolate(mesh, lambda x: np.sin(2 * np.pi * x)))) < 1e-15

    def test_exterior_ignored(self):
        mesh = build_mesh((0, 1), 8, 1.0, 2)
        u = interpolate(mesh, lambda x: np.where((x < 0) | (x > 1), 5.0, 1.0))
        assert mass(u) == pytest.approx(1.0)


class TestProfiles:
    @pytest.mark.parametrize("name", PROFILES)
    def test_named(self, name):
        mesh = build_mesh((0, 2), 8, 1.0, 2)
        u = profile(name, mesh)
        assert np.all(np.isfinite(u.values)) and u.values.max() == pytest.approx(1.0)

    def test_hat_shape(self):
        f = profile_function("hat", (0, 1))
        np.testing.assert_allclose(f(np.array([0.25, 0.5, 0.625, 0.9])), [0, 1, 0.5, 0])

    def test_unknown(self):
        with pytest.raises(ConfigError, match="gaussian"):
            profile_function("sawtooth", (0, 1))


class TestHeatSolve:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_constant_is_stationary(self, p):
        table = table_for(p, 0.5)
        u0 = profile("constant", table.mesh)
        trace = heat_solve(u0, 0.01, 5, table)
        assert trace.energy == [0.0] * 6
        assert trace.max_mass_drift() == 0.0
        np.testing.assert_array_equal(trace.snapshots[-1][1].values, 1.0)

    def test_p2_matches_dense_oracle(self):
        table = table_for(2.0, 0.5, n_interior=16, n_exterior=4)
        mesh = table.mesh
        u0 = profile("hat", mesh)
        times = [0.01 * k for k in range(1, 101)]
        trace = heat_solve(u0, 0.01, 100, table, snapshot_times=times)
        K = table.quadratic_form_matrix()
        M = p1_mass_matrix(mesh.nodes, mesh.node_interior)
        ref = implicit_euler_p2(K, M, u0.values, 0.01, 100)
        assert len(trace.snapshots) == 100
        for k, (t, u) in enumerate(trace.snapshots, start=1):
            assert t == pytest.approx(0.01 * k)
            np.testing.assert_allclose(u.values, ref[k], atol=1e-8)
            assert trace.energy[k] == pytest.approx(ref[k] @ K @ ref[k], abs=1e-8)

    @pytest.mark.parametrize("p,tau,steps", [(1.5, 0.05, 40), (2.0, 0.01, 100), (3.0, 1.0, 100)])
    def test_invariants_and_long_run_limit(self, p, tau, steps):
        table = table_for(p, 0.5, n_interior=16, n_exterior=4)
        u0 = profile("hat", table.mesh)
        gt = tol_for(p)
        trace = heat_solve(u0, tau, steps, table, cfg=DescentConfig(grad_tol=gt))
        m = np.asarray(trace.mass)
        e = np.asarray(trace.energy)
        assert np.max(np.abs(np.diff(m))) <= 10 * gt
        assert np.all(np.diff(e) <= 1e-12 * e[0])
        final = trace.snapshots[-1][1]
        assert np.max(np.abs(final.values - mass(u0))) < 1e-3
        assert all(st.converged and st.is_monotone() for st in trace.step_stats)

    def test_energy_helper(self):
        table = table_for(2.0, 0.5)
        u = profile("gaussian", table.mesh)
        assert energy(u, table) == pytest.approx(u.values @ table.quadratic_form_matrix()
                                                 @ u.values, rel=1e-12)

    def test_snapshot_times(self):
        table = table_for(2.0, 0.5)
        trace = heat_solve(profile("hat", table.mesh), 0.1, 5, table, snapshot_times=[0.2, 0.25])
        assert [t for t, _ in trace.snapshots] == pytest.approx([0.2, 0.3, 0.5])
        assert len(trace.times) == len(trace.mass) == len(trace.energy) == 6
        assert len(trace.step_stats) == 5

    def test_failure_keeps_partial_trace(self):
        table = table_for(3.0, 0.5)
        with pytest.raises(SolverError) as err:
            heat_solve(profile("step", table.mesh), 0.5, 3, table,
                       cfg=DescentConfig(max_iter=1, grad_tol=1e-14))
        assert err.value.trace.times == [0.0]

    @pytest.mark.parametrize("kw", [dict(tau=0.0, n_steps=1), dict(tau=0.1, n_steps=0)])
    def test_bad_arguments(self, kw):
        table = table_for(2.0, 0.5)
        with pytest.raises(ConfigError):
            heat_solve(profile("hat", table.mesh), table=table, **kw)

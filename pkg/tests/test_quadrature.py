import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import table_for
from nlneumann import DiscreteFunction, DomainError, GeometryError, Params, build_mesh, \
    build_quad_table, gagliardo, interpolate, kernel, tail_report
from nlneumann.quadrature import gauss_jacobi01, graded_rule, tail_weight

# [u]^p of the hat function at the middle interior node, from tests/oracles.py
# (nested adaptive quadrature split at the diagonal, tolerance 1e-11)
HAT_ORACLE = {
    # (n_interior, n_exterior, p, s): value
    (2, 1, 2.0, 0.5): 4.646083077834953,
    (4, 2, 2.0, 0.25): 2.4448196419043686,
    (4, 2, 1.5, 0.5): 5.233941365722426,
    (4, 2, 3.0, 0.75): 26.654437873135553,
}

# [u]^p of u = default_rng(100 + k).standard_normal(9) on the 8-element mesh
RANDOM_ORACLE = {
    (0, 1.5, 0.75): 35.35939779390212,
    (1, 2.0, 0.5): 19.620925142575285,
    (2, 3.0, 0.25): 34.05456902711481,
}


class TestKernel:
    def test_unit_distance(self):
        assert kernel(0.0, 1.0, Params(2, 0.5)) == 1.0

    def test_half_distance(self):
        assert kernel(0.0, 0.5, Params(2, 0.5)) == pytest.approx(4.0, rel=1e-15)

    def test_diagonal(self):
        with pytest.raises(DomainError):
            kernel(0.0, 0.0, Params(2, 0.5))

    @given(x=st.floats(-3, 3), d=st.floats(1e-3, 3), p=st.floats(1.1, 4), s=st.floats(0.05, 0.95))
    def test_symmetric_and_decreasing(self, x, d, p, s):
        prm = Params(p, s)
        assert kernel(x, x + d, prm) == kernel(x + d, x, prm)
        assert kernel(x, x + 2 * d, prm) < kernel(x, x + d, prm)


class TestTailWeight:
    def test_ps_one(self):
        # per side d^{-1}/1 with d = 1, so 2 in total when both ends sit at distance 1
        mesh = build_mesh((0, 1), 4, 0.5, 1)
        assert tail_weight(0.5, mesh, Params(2, 0.5)) == pytest.approx(2.0)

    def test_ps_three_halves(self):
        mesh = build_mesh((0, 1), 4, 0.5, 1)
        assert tail_weight(0.5, mesh, Params(3, 0.5)) == pytest.approx(4.0 / 3.0)

    def test_outside_collar(self):
        mesh = build_mesh((0, 1), 4, 0.5, 1)
        with pytest.raises(GeometryError):
            tail_weight(1.5, mesh, Params(2, 0.5))

    def test_small_ps_flags_short_collar(self):
        mesh = build_mesh((0, 1), 8, 1.0, 2)
        short = tail_report(mesh, Params(1.1, 0.02))
        long = tail_report(build_mesh((0, 1), 8, 100.0, 2), Params(3, 0.9))
        assert not short.sufficient
        assert short.max_tail > 1.0 / (1.1 * 0.02)
        assert long.sufficient


class TestRules:
    @pytest.mark.parametrize("beta", [-0.9, -0.5, 0.0, 0.5])
    def test_gauss_jacobi_moments(self, beta):
        t, w = gauss_jacobi01(6, beta)
        for k in range(12):
            assert np.sum(w * t ** k) == pytest.approx(1.0 / (k + 1 + beta), rel=1e-12)

    def test_graded_rule_endpoint_singularity(self):
        # int_0^1 x^{-1/2} dx = 2 with the singular point at an endpoint
        x, w = graded_rule(0.0, 1.0, 0.0, 8)
        assert np.sum(w / np.sqrt(x)) == pytest.approx(2.0, rel=1e-6)

    def test_graded_rule_nearby_point(self):
        x, w = graded_rule(0.0, 1.0, -0.01, 8)
        exact = 2 * (np.sqrt(1.01) - np.sqrt(0.01))
        assert np.sum(w / np.sqrt(x + 0.01)) == pytest.approx(exact, rel=1e-10)

    def test_graded_rule_rejects_inner_point(self):
        with pytest.raises(DomainError):
            graded_rule(0.0, 1.0, 0.3, 8)


class TestQuadTable:
    def test_constant_has_zero_seminorm(self):
        table = table_for(2.0, 0.5, n_interior=2, n_exterior=1)
        u = DiscreteFunction(table.mesh, np.ones(table.mesh.n_nodes))
        assert gagliardo(u, table).seminorm_p == 0.0

    def test_no_exterior_exterior_pairs(self):
        table = table_for(2.0, 0.5, n_interior=2, n_exterior=1)
        inside = table.mesh.element_interior
        E, F = table.pairs.T
        assert np.all(inside[E] | inside[F])
        # and every admissible unordered pair is present exactly once
        ne = table.mesh.n_elements
        expected = {(e, f) for e in range(ne) for f in range(e, ne) if inside[e] or inside[f]}
        assert {tuple(map(int, pr)) for pr in table.pairs} == expected

    def test_weights_positive_finite(self):
        for p, s in [(1.5, 0.25), (2.0, 0.5), (3.0, 0.9)]:
            w = table_for(p, s).w
            assert np.all(np.isfinite(w)) and np.all(w > 0)

    @pytest.mark.parametrize("key", sorted(HAT_ORACLE))
    def test_hat_matches_adaptive_oracle(self, key):
        n, ne, p, s = key
        table = table_for(p, s, n_interior=n, n_exterior=ne)
        vals = np.zeros(table.mesh.n_nodes)
        vals[ne + n // 2] = 1.0
        got = gagliardo(DiscreteFunction(table.mesh, vals), table).seminorm_p
        assert got == pytest.approx(HAT_ORACLE[key], rel=1e-4)

    @pytest.mark.parametrize("key", sorted(RANDOM_ORACLE))
    def test_random_p1_matches_adaptive_oracle(self, key):
        k, p, s = key
        table = table_for(p, s, n_interior=4, n_exterior=2)
        vals = np.random.default_rng(100 + k).standard_normal(table.mesh.n_nodes)
        got = gagliardo(DiscreteFunction(table.mesh, vals), table).seminorm_p
        assert got == pytest.approx(RANDOM_ORACLE[key], rel=1e-4)

    def test_swapped_table_is_the_same_rule(self):
        table = table_for(1.5, 0.5)
        sw = table.swapped()
        u = np.random.default_rng(1).standard_normal(table.mesh.n_nodes)
        a = gagliardo(u, table).seminorm_p
        b = gagliardo(u, sw).seminorm_p
        assert b == pytest.approx(a, rel=1e-13)

    def test_ordered_pairs_cover_both_orders(self):
        table = table_for(2.0, 0.5, n_interior=2, n_exterior=1)
        seen = [(e, f) for e, f, *_ in table.ordered_pairs()]
        assert len(seen) == len(set(seen))
        assert all((f, e) in seen for e, f in seen)
        total = sum(float(np.sum(w)) for *_, w in table.ordered_pairs())
        assert total == pytest.approx(float(np.sum(table.w)), rel=1e-14)

    @pytest.mark.parametrize("p,s", [(2.0, 0.5), (1.5, 0.25), (3.0, 0.75)])
    def test_refinement_is_cauchy(self, p, s):
        u = lambda x: np.sin(2 * x) + 0.5 * x * x
        vals = []
        for n in (4, 8, 16, 32):
            mesh = build_mesh((0, 1), n, 1.0, n // 2)
            vals.append(gagliardo(interpolate(mesh, u), build_quad_table(mesh, Params(p, s)))
                        .seminorm_p)
        gaps = np.abs(np.diff(vals))
        assert np.all(gaps[1:] < 0.5 * gaps[:-1])

    def test_matrix_view_only_for_p2(self):
        table = table_for(2.0, 0.5)
        K = table.quadratic_form_matrix()
        u = np.random.default_rng(3).standard_normal(table.mesh.n_nodes)
        assert u @ K @ u == pytest.approx(gagliardo(u, table).seminorm_p, rel=1e-12)
        np.testing.assert_allclose(K, K.T, atol=1e-12)
        with pytest.raises(Exception, match="p = 2"):
            table_for(3.0, 0.5).quadratic_form_matrix()

    def test_mesh_mismatch(self):
        table = table_for(2.0, 0.5)
        other = build_mesh((0, 1), 8, 1.0, 2)
        with pytest.raises(Exception, match="different meshes"):
            gagliardo(DiscreteFunction(other, np.zeros(other.n_nodes)), table)

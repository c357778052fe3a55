import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracwave import (ConfigurationError, Nonlinearity, SpectralField,
                      build_mode_table, frac_power_apply, l2_norm,
                      minimal_cutoff_for_modes, nonlinearity_apply, project,
                      trig_apply)


def field_of(table, coeffs):
    return SpectralField(table, np.asarray(coeffs, dtype=float))


class TestModeTable:
    def test_eigenvalues_2d_smallest(self):
        t = build_mode_table(2, 2, 0.5)
        assert np.allclose(sorted(t.eigenvalues), np.pi ** 2 * np.array([2, 5, 5, 8]))
        assert t.eigenvalues[0] == pytest.approx(19.7392088, abs=1e-6)

    def test_single_mode_1d(self):
        t = build_mode_table(1, 1, 1.0)
        assert len(t) == 1
        assert t.eigenvalues[0] == pytest.approx(np.pi ** 2, rel=1e-15)

    def test_table1_largest(self):
        t = build_mode_table(2, 36, 0.8)
        assert len(t) == 1296

    @pytest.mark.parametrize("dim,n", [(1, 64), (2, 16)])
    def test_eigenvalue_formula_recomputed(self, dim, n):
        t = build_mode_table(dim, n, 0.6)
        for pos in range(len(t)):
            idx = t.indices[pos]
            expect = np.pi ** 2 * float(np.sum(idx.astype(float) ** 2))
            assert t.eigenvalues[pos] == expect

    def test_sorted_and_reproducible(self):
        a = build_mode_table(2, 12, 0.9)
        b = build_mode_table(2, 12, 0.9)
        assert np.all(np.diff(a.eigenvalues) >= 0)
        assert np.array_equal(a.indices, b.indices)

    def test_tie_break_lexicographic(self):
        t = build_mode_table(2, 3, 0.5)
        # lambda = 5 pi^2 twice: (1,2) before (2,1)
        pos = np.nonzero(np.isclose(t.eigenvalues, 5 * np.pi ** 2))[0]
        assert t.indices[pos[0]].tolist() == [1, 2]
        assert t.indices[pos[1]].tolist() == [2, 1]

    def test_cached_powers_accuracy(self, table_2d):
        for mult in (0.5, -0.5, 1.0, -1.0, -1.5):
            p = mult * table_2d.alpha
            assert np.allclose(table_2d.power(p), table_2d.eigenvalues ** p,
                               rtol=1e-14, atol=0)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            build_mode_table(3, 4, 0.5)
        with pytest.raises(ConfigurationError):
            build_mode_table(2, 4, 0.0)
        with pytest.raises(ConfigurationError):
            build_mode_table(2, 0, 0.5)

    def test_minimal_cutoff_prefix_is_true_prefix(self):
        # the first 778 sorted modes must coincide with those of a much
        # larger lattice
        n = minimal_cutoff_for_modes(2, 778, 0.5)
        small = build_mode_table(2, n, 0.5)
        big = build_mode_table(2, 2 * n, 0.5)
        assert np.array_equal(small.indices[:778], big.indices[:778])


class TestFracPower:
    def test_zero_power_identity(self, table_2d, rng):
        f = field_of(table_2d, rng.standard_normal(len(table_2d)))
        assert np.array_equal(frac_power_apply(f, 0.0).coeffs, f.coeffs)

    def test_eigenvalue_action(self):
        t = build_mode_table(1, 1, 1.0)
        f = field_of(t, [1.0])
        assert frac_power_apply(f, 1.0).coeffs[0] == pytest.approx(np.pi ** 2, rel=1e-15)

    def test_power_round_trip(self, table_2d, rng):
        f = field_of(table_2d, rng.standard_normal(len(table_2d)))
        back = frac_power_apply(frac_power_apply(f, -table_2d.alpha / 2), table_2d.alpha / 2)
        assert np.allclose(back.coeffs, f.coeffs, rtol=1e-13)


class TestTrig:
    def test_time_zero(self, table_2d, rng):
        f = field_of(table_2d, rng.standard_normal(len(table_2d)))
        assert np.array_equal(trig_apply(f, 0.0, "cos").coeffs, f.coeffs)
        assert not trig_apply(f, 0.0, "sin").coeffs.any()

    def test_quarter_period_single_mode(self):
        t = build_mode_table(1, 1, 1.0)
        f = field_of(t, [2.0])
        quarter = (np.pi / 2) / t.frequencies[0]
        assert abs(trig_apply(f, quarter, "cos").coeffs[0]) <= 1e-12
        assert trig_apply(f, quarter, "sin").coeffs[0] == pytest.approx(2.0, rel=1e-12)

    @given(t=st.floats(min_value=0.0, max_value=50.0))
    @settings(max_examples=40, deadline=None)
    def test_pythagorean_identity(self, table_2d, t):
        f = field_of(table_2d, np.ones(len(table_2d)))
        c = trig_apply(f, t, "cos").coeffs
        s = trig_apply(f, t, "sin").coeffs
        assert np.allclose(c * c + s * s, 1.0, atol=1e-12)

    @given(a=st.floats(min_value=0.0, max_value=10.0),
           b=st.floats(min_value=0.0, max_value=10.0))
    @settings(max_examples=40, deadline=None)
    def test_addition_law(self, table_2d, a, b):
        f = field_of(table_2d, np.ones(len(table_2d)))
        lhs = trig_apply(f, a + b, "cos").coeffs
        rhs = (trig_apply(f, a, "cos").coeffs * trig_apply(f, b, "cos").coeffs
               - trig_apply(f, a, "sin").coeffs * trig_apply(f, b, "sin").coeffs)
        assert np.allclose(lhs, rhs, atol=1e-12)


class TestProject:
    def test_full_and_zero(self, table_2d, rng):
        f = field_of(table_2d, rng.standard_normal(len(table_2d)))
        assert np.array_equal(project(f, len(table_2d)).coeffs, f.coeffs)
        assert np.array_equal(project(f, len(table_2d) + 5).coeffs, f.coeffs)
        assert not project(f, 0).coeffs.any()

    def test_idempotent_and_self_adjoint(self, table_2d, rng):
        f = field_of(table_2d, rng.standard_normal(len(table_2d)))
        g = field_of(table_2d, rng.standard_normal(len(table_2d)))
        once = project(f, 10)
        assert np.array_equal(project(once, 10).coeffs, once.coeffs)
        lhs = np.dot(project(f, 10).coeffs, g.coeffs)
        rhs = np.dot(f.coeffs, project(g, 10).coeffs)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    @pytest.mark.parametrize("nu", [0.5, 1.0, 2.0])
    def test_truncation_bound(self, nu):
        # ||(P_N - I) xi||^2 <= lambda_{N+1}^{-nu} ||A^{nu/2} xi||^2 evaluated
        # directly on a field with coefficients lambda^{-nu/2 - 0.6}
        t = build_mode_table(2, 12, 0.8)
        coeffs = t.eigenvalues ** (-nu / 2 - 0.6)
        f = field_of(t, coeffs)
        for count in (5, 20, 60, 120):
            residual = f.coeffs.copy()
            residual[:count] = 0.0
            lhs = float(np.sum(residual ** 2))
            rhs = t.eigenvalues[count] ** (-nu) * float(
                np.sum(t.eigenvalues ** nu * f.coeffs ** 2))
            assert lhs <= rhs * (1 + 1e-12)


class TestNorm:
    def test_examples(self, table_2d):
        assert l2_norm(field_of(table_2d, np.zeros(len(table_2d)))) == 0.0
        c = np.zeros(len(table_2d))
        c[0] = 3.0
        assert l2_norm(field_of(table_2d, c)) == 3.0

    def test_half_product_sine(self):
        # sin(pi x1) sin(pi x2) / 2 has coefficient 1/4 against 2 sin sin
        t = build_mode_table(2, 4, 0.5)
        c = np.zeros(len(t))
        c[0] = 0.25
        assert l2_norm(field_of(t, c)) == pytest.approx(0.25)


def analytic_square_of_quarter_phi11(table):
    """Exact expansion of (sin(pi x1) sin(pi x2) / 2)^2 in the 2D basis."""
    def one_dim(i):
        if i == 2:
            return 0.0
        return -2.0 * (1.0 - (-1.0) ** i) / (np.pi * i * (i * i - 4.0))

    vals = np.array([0.5 * one_dim(i) * one_dim(j) for i, j in table.indices])
    return vals


class TestNonlinearity:
    def test_identity_exact(self, table_2d, rng):
        f = field_of(table_2d, rng.standard_normal(len(table_2d)))
        out = nonlinearity_apply(Nonlinearity.identity(), f)
        assert np.allclose(out.coeffs, f.coeffs, atol=1e-12)

    def test_linear_polynomial_through_grid_is_exact(self, table_2d, rng):
        # exercises the DST round trip: f(u) = u via the collocation path
        f = field_of(table_2d, rng.standard_normal(len(table_2d)))
        out = nonlinearity_apply(Nonlinearity.polynomial(0.0, 1.0), f)
        assert np.allclose(out.coeffs, f.coeffs, atol=1e-12)

    def test_square_zero_field(self, table_2d):
        f = field_of(table_2d, np.zeros(len(table_2d)))
        out = nonlinearity_apply(Nonlinearity.square(), f)
        assert not out.coeffs.any()

    def test_square_of_first_mode_matches_analytic_expansion(self):
        # collocation carries a sine-basis aliasing tail that shrinks like
        # (q n)^-3; check the value at q=2 and the decay at q=8
        t = build_mode_table(2, 8, 0.5)
        c = np.zeros(len(t))
        c[0] = 0.25
        f = field_of(t, c)
        expect = analytic_square_of_quarter_phi11(t)
        err2 = np.abs(nonlinearity_apply(Nonlinearity.square(), f, q=2).coeffs - expect).max()
        err8 = np.abs(nonlinearity_apply(Nonlinearity.square(), f, q=8).coeffs - expect).max()
        assert err2 <= 5e-5
        assert err8 <= err2 / 8

    def test_square_agrees_with_finer_grid_quadrature(self, rng):
        # independent oracle: dense sine-grid quadrature at a 10x finer grid.
        # Products of sines are not band-limited in the sine basis, so the
        # collocation carries an aliasing tail; assert its measured size at
        # q=2 and its decay under oversampling.
        t = build_mode_table(2, 6, 0.5)
        coeffs = rng.standard_normal(len(t)) * 0.3
        f = field_of(t, coeffs)

        grid = 10 * 2 * t.per_dim_cutoff
        x = np.arange(1, grid + 1) / (grid + 1)
        s1 = np.sin(np.pi * np.outer(t.indices[:, 0], x))
        s2 = np.sin(np.pi * np.outer(t.indices[:, 1], x))
        values = np.einsum("m,mx,my->xy", coeffs * 2.0, s1, s2)
        sq = values * values
        ref = 2.0 * np.einsum("xy,mx,my->m", sq, s1, s2) / (grid + 1) ** 2

        scale = np.abs(ref).max()
        err2 = np.abs(nonlinearity_apply(Nonlinearity.square(), f, q=2).coeffs - ref).max()
        err8 = np.abs(nonlinearity_apply(Nonlinearity.square(), f, q=8).coeffs - ref).max()
        assert err2 <= 2e-2 * scale
        assert err8 <= err2 / 50

    def test_affine_with_offset(self, table_2d):
        f = field_of(table_2d, np.zeros(len(table_2d)))
        out = nonlinearity_apply(Nonlinearity.affine(1.0, 0.0), f)
        # expansion of the constant 1: per-axis coefficient sqrt(2)(1-(-1)^i)/(i pi)
        idx = table_2d.indices
        expect = np.ones(len(table_2d))
        for d in range(2):
            i = idx[:, d].astype(float)
            expect *= np.sqrt(2.0) * (1.0 - (-1.0) ** i) / (i * np.pi)
        assert np.allclose(out.coeffs, expect, atol=1e-14)

    def test_unsupported_spec_rejected(self, table_2d):
        f = field_of(table_2d, np.zeros(len(table_2d)))
        with pytest.raises(ConfigurationError):
            nonlinearity_apply("cubic", f)
        with pytest.raises(ConfigurationError):
            nonlinearity_apply(Nonlinearity.square(), f, q=1)

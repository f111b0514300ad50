import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from viscohj import parabolic as PB
from viscohj import schrod as SC
from viscohj.grid import Field, field_from_function, make_grid

from conftest import smooth_field


def scalar_op(a, n=4):
    g = make_grid(1, n)
    return g, SC.assemble_A(PB.LinearPdeCoefficients(g, a, 0.0, 0.0))


def heat_case(n=64, nu=0.1):
    g = make_grid(1, n)
    co = PB.LinearPdeCoefficients(g, 0.0, 0.0, nu)
    return g, co, SC.assemble_A(co)


class TestAssemble:
    def test_scalar_decay(self):
        g, op = scalar_op(-1.0)
        np.testing.assert_allclose(op.A1, 0.0, atol=1e-15)
        np.testing.assert_allclose(op.A2, -np.eye(4), atol=1e-15)
        assert op.lambda_max == pytest.approx(-1.0)

    def test_advection_is_unitary(self):
        g = make_grid(1, 16)
        op = SC.assemble_A(PB.LinearPdeCoefficients(g, 0.0, 0.7, 0.0))
        np.testing.assert_allclose(op.A2, 0.0, atol=1e-13)
        np.testing.assert_allclose(op.A1, op.A1.conj().T, atol=1e-13)
        assert np.linalg.norm(op.A1) > 1

    def test_heat_spectrum(self):
        g, co, op = heat_case(32, 0.1)
        np.testing.assert_allclose(op.A1, 0.0, atol=1e-12)
        ev = np.sort(np.linalg.eigvalsh(op.A2))
        sym = np.sort(co.symbol("discrete").real.ravel())
        np.testing.assert_allclose(ev, sym, atol=1e-9)
        assert op.lambda_max <= 1e-10

    def test_split_identities(self):
        g = make_grid(2, 6)
        c = np.array([[0.05, 0.01], [0.01, 0.03]])
        op = SC.assemble_A(PB.LinearPdeCoefficients(g, np.linspace(-1, 0.2, 36).reshape(6, 6), [0.3, -0.1], c))
        np.testing.assert_allclose(op.A1, op.A1.conj().T, atol=1e-12)
        np.testing.assert_allclose(op.A2, op.A2.conj().T, atol=1e-12)
        np.testing.assert_allclose(op.A1 + 1j * op.A2, op.A, atol=1e-14)

    def test_time_dependent_rejected(self):
        g = make_grid(1, 8)
        with pytest.raises(SC.SchrodError):
            SC.assemble_A(PB.LinearPdeCoefficients(g, lambda t: np.full(8, t), 0.0, 0.1))


class TestAncilla:
    def test_profile_reconstruction(self):
        anc = SC.AncillaGrid(4, 4, 64)
        rebuilt = anc.to_xi(anc.profile_coefficients()[:, None])[:, 0]
        np.testing.assert_allclose(rebuilt, anc.profile, atol=1e-13)

    def test_odd_count_rejected(self):
        with pytest.raises(SC.SchrodError):
            SC.AncillaGrid(4, 4, 63)

    def test_window_too_small(self):
        g, op = scalar_op(3.8)
        with pytest.raises(SC.SchrodError, match="R >"):
            SC.schrod_evolve(Field(g, np.ones(4)), op, SC.AncillaGrid(4, 4, 64), 1.0)

    def test_default_window_covers_growth(self):
        g, op = scalar_op(0.5)
        anc = SC.default_ancilla(op, 1.0)
        assert anc.R >= 0.5 + 3 * anc.dxi
        assert anc.N % 2 == 0

    def test_default_ignores_unexcited_stiff_modes(self):
        g, co, op = heat_case(64, 0.1)
        u0 = field_from_function(g, lambda x: np.cos(2 * np.pi * x))
        assert SC.default_ancilla(op, 0.1, u0).R == pytest.approx(4 + 8 * np.pi**2 * 0.1 * 0.1, rel=1e-2)
        assert SC.default_ancilla(op, 0.1).R > 5


class TestEvolveRecover:
    def test_zero_dynamics(self, rng):
        g = make_grid(1, 8)
        op = SC.assemble_A(PB.LinearPdeCoefficients(g, 0.0, 0.0, 0.0))
        u0 = Field(g, rng.standard_normal(8))
        st_ = SC.schrod_evolve(u0, op, SC.AncillaGrid(4, 4, 64), 0.7)
        rec = SC.recover(st_)
        np.testing.assert_allclose(rec.u.values, u0.values, atol=1e-12)
        assert rec.norm_estimate == pytest.approx(u0.norm_l2(), rel=1e-12)

    def test_scalar_decay(self):
        g, op = scalar_op(-1.0)
        u0 = Field(g, np.ones(4))
        rec = SC.recover(SC.schrod_evolve(u0, op, SC.default_ancilla(op, 1.0, u0, N=128), 1.0))
        np.testing.assert_allclose(rec.u.values, np.exp(-1.0), rtol=1e-3)
        assert rec.norm_estimate / u0.norm_l2() == pytest.approx(np.exp(-1.0), rel=1e-3)

    def test_heat_matches_evolve(self):
        g, co, op = heat_case(64, 0.1)
        u0 = field_from_function(g, lambda x: np.cos(2 * np.pi * x))
        rec = SC.recover(SC.schrod_evolve(u0, op, SC.AncillaGrid(4, 4, 64), 0.1))
        ref = PB.evolve(u0, co, 0.1, PB.IntegratorConfig("spectral_exact")).values
        assert np.linalg.norm(rec.u.values - ref) / np.linalg.norm(ref) <= 1e-3

    def test_growth_branch(self):
        g = make_grid(1, 16)
        co = PB.LinearPdeCoefficients(g, 0.5, 0.0, 0.01)
        op = SC.assemble_A(co)
        assert op.lambda_max == pytest.approx(0.5)
        u0 = field_from_function(g, lambda x: 1 + 0.5 * np.sin(2 * np.pi * x))
        st_ = SC.schrod_evolve(u0, op, SC.AncillaGrid(6, 6, 128), 1.0)
        assert st_.xi_star > 0.5
        rec = SC.recover(st_)
        ref = linalg.expm(op.M) @ u0.flat()
        assert np.linalg.norm(rec.u.values - ref) / np.linalg.norm(ref) <= 1e-3

    def test_default_window_on_sharp_data(self):
        g = make_grid(1, 64)
        co = PB.LinearPdeCoefficients(g, 0.0, 0.0, 0.05)
        op = SC.assemble_A(co)
        u0 = field_from_function(g, lambda x: np.exp((np.cos(2 * np.pi * x) - 1) / 0.1))
        rec = SC.recover(SC.schrod_evolve(u0, op, SC.default_ancilla(op, 0.1, u0), 0.1))
        ref = PB.evolve(u0, co, 0.1, PB.IntegratorConfig("spectral_exact")).values
        assert np.linalg.norm(rec.u.values - ref) / np.linalg.norm(ref) <= 1e-3

    def test_norm_conserved(self, rng):
        g = make_grid(1, 16)
        op = SC.assemble_A(PB.LinearPdeCoefficients(g, -0.3, 0.4, 0.05))
        u0 = smooth_field(g, rng)
        anc = SC.AncillaGrid(4, 4, 32)
        st_ = SC.schrod_evolve(u0, op, anc, 0.5)
        w0 = anc.to_xi(anc.profile_coefficients()[:, None] * u0.flat()[None, :])
        assert st_.norm() == pytest.approx(np.linalg.norm(w0), rel=1e-10)

    def test_block_matches_full(self, rng):
        g = make_grid(1, 8)
        op = SC.assemble_A(PB.LinearPdeCoefficients(g, 0.2, 0.3, 0.02))
        u0 = smooth_field(g, rng)
        anc = SC.AncillaGrid(5, 5, 64)
        full = SC.evolve_full(u0, op, anc, 0.4)
        np.testing.assert_allclose(SC.schrod_evolve(u0, op, anc, 0.4).xi_state(), full, atol=1e-10)

    def test_slice_independence(self):
        g, co, op = heat_case(64, 0.1)
        u0 = field_from_function(g, lambda x: np.cos(2 * np.pi * x) + 2)
        st_ = SC.schrod_evolve(u0, op, SC.AncillaGrid(4, 4, 64), 0.1)
        rec = SC.recover(st_)
        for j in (st_.j_star + 1, st_.j_star + 5, st_.j_star + 10):
            sl = SC.slice_u(st_, j).values.real
            assert np.linalg.norm(sl - rec.u.values) / np.linalg.norm(rec.u.values) <= 1e-2

    def test_p_succ_monotone(self):
        g, co, op = heat_case(16, 0.1)
        st_ = SC.schrod_evolve(Field(g, np.ones(16)), op, SC.AncillaGrid(4, 4, 64), 0.1)
        ps = [SC.success_probability(st_, j) for j in range(st_.j_star, 64)]
        assert np.all(np.diff(ps) <= 1e-15)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(-2.0, 0.0), st.floats(-1.0, 1.0), st.floats(0.0, 0.05), st.floats(0.05, 1.0))
    def test_unitarity_property(self, a, b, c, T):
        g = make_grid(1, 8)
        op = SC.assemble_A(PB.LinearPdeCoefficients(g, a, b, c))
        u0 = Field(g, np.cos(2 * np.pi * g.coords_1d) + 1.5)
        anc = SC.AncillaGrid(4, 4, 32)
        st_ = SC.schrod_evolve(u0, op, anc, T)
        w0 = np.linalg.norm(anc.profile) * u0.norm_l2()
        assert st_.norm() == pytest.approx(w0, rel=1e-10)


class TestComplexity:
    def test_grid_forms(self):
        assert SC.norm_grid_forms(2, 64) == (128.0, 8192.0)

    def test_mu_modes(self):
        assert SC.mu_factor(0.01, "optimal") == pytest.approx(4.605170186, abs=1e-9)
        assert SC.mu_factor(0.01, "uniform") == pytest.approx(100.0)
        with pytest.raises(ValueError):
            SC.mu_factor(0.01, "other")

    def test_query_complexity_value(self):
        mu = np.log(100.0)
        want = (8192 * 0.5 * mu + np.log(mu / (0.01 * 0.8))) / 0.8
        assert SC.query_complexity(128, 8192, 0.5, 0.01, 0.8) == pytest.approx(want, rel=1e-14)

    def test_halving_norm_at_least_doubles(self):
        q1 = SC.query_complexity(10, 100, 1.0, 0.01, 1.0)
        q2 = SC.query_complexity(10, 100, 1.0, 0.01, 0.5)
        assert q2 >= 2 * q1

    def test_norm_forms(self):
        assert SC.norm_value_forms(0.01, 2) == pytest.approx((2**1.5 * 10, 400.0))
        assert SC.norm_gradient_forms(0.1, 2) == pytest.approx((2**2.5 * 10, 1600.0))

    def test_time_dependent_cost_forms(self):
        assert SC.cost_heat_first_order(2, 0.1, 0.01, 1.0, 1.0, 1.0) == pytest.approx(2 * (20 + 10) * 10)
        assert SC.cost_general_parabolic(2, 1.0, -0.5, 0.1, 0.01, 2.0) == pytest.approx(8 * 20.5 * 10 / 2)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscohj import oracles
from viscohj import parabolic as PB
from viscohj import problems as P
from viscohj.grid import Field, field_from_function, make_grid

from conftest import smooth_field


def cos_field(n=64):
    g = make_grid(1, n)
    return field_from_function(g, lambda x: np.cos(2 * np.pi * x))


class TestCoefficients:
    def test_quadratic_zero_potential(self):
        prob = P.ProblemSpec(P.half_quadratic(), P.zero_potential(), P.cosine_bump(), 0.1)
        co = PB.coefficients_quadratic(prob, make_grid(1, 16))
        assert np.all(np.asarray(co.a) == 0)
        np.testing.assert_allclose(co.c, [[0.1]])
        np.testing.assert_allclose(co.b, [0.0])

    def test_quadratic_source(self):
        prob = P.ProblemSpec(P.half_quadratic(), P.constant_potential(2.0), P.cosine_bump(), 0.5)
        co = PB.coefficients_quadratic(prob, make_grid(1, 16))
        np.testing.assert_allclose(co.a, 2.0)

    def test_quadratic_time_dependent(self):
        V = P.PotentialSpec(lambda t, x: t + 0 * x, time_dependent=True)
        prob = P.ProblemSpec(P.half_quadratic(), V, P.cosine_bump(), 0.5)
        co = PB.coefficients_quadratic(prob, make_grid(1, 16))
        assert co.time_dependent
        np.testing.assert_allclose(co.a_at(3.0), 3.0)

    def test_general_printed_and_empirical(self):
        prob = P.ProblemSpec(P.quadratic(2), P.zero_potential(), P.cosine_bump(), 0.1)
        g = make_grid(2, 8)
        np.testing.assert_allclose(PB.coefficients_general(prob, g, "printed").c, 0.1 * np.eye(2))
        np.testing.assert_allclose(PB.coefficients_general(prob, g).c, 0.05 * np.eye(2))
        np.testing.assert_allclose(PB.coefficients_general(prob, g, h=0.01).c, 0.05 * np.eye(2), rtol=1e-6, atol=1e-15)

    def test_general_shift_drift(self):
        prob = P.ProblemSpec(P.quadratic(2, shift=[1.0, 1.0]), P.zero_potential(), P.cosine_bump(), 0.1)
        np.testing.assert_allclose(PB.coefficients_general(prob, make_grid(2, 8)).b, [1.0, 1.0])

    def test_general_singular(self):
        prob = P.ProblemSpec(P.KineticSpec("quartic"), P.zero_potential(), P.cosine_bump(), 0.1)
        with pytest.raises(P.SingularDiffusionError):
            PB.coefficients_general(prob, make_grid(1, 8), h=0.01)

    def test_rejects_indefinite_c(self):
        with pytest.raises(ValueError):
            PB.LinearPdeCoefficients(make_grid(2, 8), 0.0, 0.0, [[1.0, 2.0], [2.0, 1.0]])


class TestEvolve:
    def test_heat_mode(self):
        u0 = cos_field()
        co = PB.LinearPdeCoefficients(u0.grid, 0.0, 0.0, 0.1)
        ref = np.exp(-4 * np.pi**2 * 0.01)
        assert ref == pytest.approx(0.67383, abs=5e-6)
        out = PB.evolve(u0, co, 0.1).values
        dx = u0.grid.dx
        discrete = np.exp(-0.1 * 0.1 * 4 * np.sin(np.pi * dx) ** 2 / dx**2)
        np.testing.assert_allclose(out, discrete * u0.values, atol=1e-9)
        np.testing.assert_allclose(out, ref * u0.values, atol=(2 * np.pi) ** 4 * dx**2 / 12 * 0.01 * ref)
        cont = PB.evolve(u0, co, 0.1, PB.IntegratorConfig("spectral_exact", symbol="continuum")).values
        np.testing.assert_allclose(cont, ref * u0.values, atol=1e-13)

    def test_pure_source(self):
        u0 = cos_field()
        co = PB.LinearPdeCoefficients(u0.grid, 0.7, 0.0, 0.0)
        np.testing.assert_allclose(PB.evolve(u0, co, 0.5).values, np.exp(0.35) * u0.values, rtol=1e-6)

    def test_advection(self):
        u0 = cos_field(128)
        co = PB.LinearPdeCoefficients(u0.grid, 0.0, 0.25, 0.0)
        rk = PB.evolve(u0, co, 1.0).values
        sp = PB.evolve(u0, co, 1.0, PB.IntegratorConfig("spectral_exact")).values
        assert np.max(np.abs(rk - sp)) <= 1e-6
        exact = np.cos(2 * np.pi * (u0.grid.coords_1d + 0.25))
        cont = PB.evolve(u0, co, 1.0, PB.IntegratorConfig("spectral_exact", symbol="continuum")).values
        np.testing.assert_allclose(cont, exact, atol=1e-12)

    def test_rk4_matches_spectral_2d_mixed(self, rng):
        g = make_grid(2, 32)
        u0 = smooth_field(g, rng)
        co = PB.LinearPdeCoefficients(g, -0.3, [0.2, -0.1], [[0.02, 0.005], [0.005, 0.01]])
        rk = PB.evolve(u0, co, 0.2).values
        sp = PB.evolve(u0, co, 0.2, PB.IntegratorConfig("spectral_exact")).values
        assert np.max(np.abs(rk - sp)) <= 1e-6

    def test_spatial_order(self):
        errs, ns = [], [16, 32, 64, 128]
        for n in ns:
            g = make_grid(1, n)
            u0 = field_from_function(g, lambda x: np.exp(np.cos(2 * np.pi * x)))
            co = PB.LinearPdeCoefficients(g, 0.0, 0.3, 0.05)
            rk = PB.evolve(u0, co, 0.1).values
            sp = PB.evolve(u0, co, 0.1, PB.IntegratorConfig("spectral_exact", symbol="continuum")).values
            errs.append(np.max(np.abs(rk - sp)))
        slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
        assert abs(slope - 2.0) <= 0.3

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=15, deadline=None)
    def test_maximum_principle(self, seed):
        g = make_grid(1, 32)
        u0 = smooth_field(g, np.random.default_rng(seed))
        u0 = u0.with_values(u0.values + 1.5)
        out = PB.evolve(u0, PB.LinearPdeCoefficients(g, 0.0, 0.0, 0.05), 0.05).values
        assert out.min() >= u0.values.min() - 1e-10
        assert out.max() <= u0.values.max() + 1e-10

    def test_semigroup(self, rng):
        g = make_grid(1, 32)
        u0 = smooth_field(g, rng)
        co = PB.LinearPdeCoefficients(g, 0.1, 0.2, 0.02)
        cfg = PB.IntegratorConfig(h_t=1e-3)
        one = PB.evolve(u0, co, 0.1, cfg).values
        two = PB.evolve(PB.evolve(u0, co, 0.04, cfg), co, 0.06, cfg).values
        assert np.max(np.abs(one - two)) <= 1e-9

    def test_cfl_violation(self):
        u0 = cos_field()
        co = PB.LinearPdeCoefficients(u0.grid, 0.0, 0.0, 0.1)
        with pytest.raises(PB.CFLError):
            PB.evolve(u0, co, 0.1, PB.IntegratorConfig(h_t=0.01))

    def test_nan_abort_reports_step(self):
        u0 = cos_field()
        vals = u0.values.copy()
        vals[3] = 1e307
        co = PB.LinearPdeCoefficients(u0.grid, 50.0, 0.0, 0.0)
        with pytest.raises(PB.NumericalAbort) as exc, np.errstate(over="ignore", invalid="ignore"):
            PB.evolve(u0.with_values(vals), co, 1.0)
        assert exc.value.step >= 1

    def test_euler_option(self):
        u0 = cos_field(32)
        co = PB.LinearPdeCoefficients(u0.grid, 0.0, 0.0, 0.1)
        eu = PB.evolve(u0, co, 0.1, PB.IntegratorConfig("explicit_euler", h_t=1e-4)).values
        sp = PB.evolve(u0, co, 0.1, PB.IntegratorConfig("spectral_exact")).values
        assert np.max(np.abs(eu - sp)) <= 1e-4

    def test_spectral_needs_constant(self):
        g = make_grid(1, 16)
        co = PB.LinearPdeCoefficients(g, np.linspace(0, 1, 16), 0.0, 0.1)
        with pytest.raises(ValueError):
            PB.evolve(Field(g, np.ones(16)), co, 0.1, PB.IntegratorConfig("spectral_exact"))


class TestSolveS:
    def test_zero_fixed(self):
        prob = P.ProblemSpec(P.half_quadratic(), P.zero_potential(), lambda x: np.zeros_like(x), 0.1)
        S = PB.solve_S(prob, make_grid(1, 32), 0.3)
        np.testing.assert_allclose(S.values, 0.0, atol=1e-14)

    def test_matches_direct_viscous_hj(self):
        prob = P.ProblemSpec(P.half_quadratic(), P.zero_potential(), P.cosine_bump(), 0.05)
        g = make_grid(1, 256)
        S = PB.solve_S(prob, g, 0.1).values
        ref = oracles.viscous_hj_direct(prob, g, 0.1)
        # both are second order in dx on the same mesh
        assert np.max(np.abs(S - ref.field.values)) <= 2 * ref.self_error + 1e-3

    def test_general_matches_march(self):
        from viscohj import entropy as E

        prob = P.ProblemSpec(P.quadratic(), P.cosine_potential(1.0), P.cosine_bump(), 0.05)
        g = make_grid(1, 512)
        S = PB.solve_S(prob, g, 0.1, pipeline="general", h=1e-3).values
        M = E.march(prob, P.SchemeParams(1e-3, 0.1), g, []).final.S_nu.values
        assert np.max(np.abs(S - M)) <= 0.05

    def test_bad_pipeline(self):
        prob = P.ProblemSpec(P.half_quadratic(), P.zero_potential(), P.cosine_bump(), 0.1)
        with pytest.raises(ValueError):
            PB.solve_S(prob, make_grid(1, 16), 0.1, pipeline="other")

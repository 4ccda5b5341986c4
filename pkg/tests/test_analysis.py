from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nslab.analysis import (
    AnalysisError,
    RateFit,
    gradient_l2_norm_direct,
    gradient_l2_squared,
    lp_norm,
    lp_norm_values,
    oneil_check,
    rate_fit,
    sigma_exponents,
    sigma_of,
    r_of_q,
    sobolev_seminorm,
    spacetime_norm,
    spacetime_norm_values,
    weak_lp_norm,
    weak_lp_norm_values,
)
from nslab.evolution import Trajectory
from nslab.spectral import ScalarField, VectorField, dealias, heat_semigroup, make_grid

TWO_PI = 2 * np.pi


@pytest.fixture
def grid16():
    return make_grid(16, TWO_PI)


def scalar_as_vector(grid, values):
    z = np.zeros_like(values)
    return VectorField(grid, np.stack([values, z, z]))


class TestLpNorm:
    def test_zero(self, grid16):
        assert lp_norm(VectorField.zeros(grid16), 3) == 0.0

    def test_constant_p2(self, grid16):
        u = scalar_as_vector(grid16, np.full((16,) * 3, 2.5))
        assert lp_norm(u, 2) == pytest.approx(2.5 * np.sqrt(grid16.volume), rel=1e-14)

    def test_single_cell_p1(self, grid16):
        a = np.zeros((16,) * 3)
        a[3, 4, 5] = 7.0
        assert lp_norm(scalar_as_vector(grid16, a), 1) == pytest.approx(7.0 * grid16.cell_measure, rel=1e-14)

    def test_euclidean_magnitude(self, grid16):
        u = VectorField(grid16, np.stack([np.full((16,) * 3, 3.0), np.full((16,) * 3, 4.0), np.zeros((16,) * 3)]))
        assert lp_norm(u, np.inf) == pytest.approx(5.0)

    def test_rejects_small_p(self, grid16):
        with pytest.raises(AnalysisError):
            lp_norm(VectorField.zeros(grid16), 0.5)

    def test_large_p_no_overflow(self):
        assert lp_norm_values(np.array([1e200, 1e200]), 1.0, 8) == pytest.approx(1e200 * 2 ** (1 / 8))


class TestWeakNorm:
    def test_indicator(self, grid16):
        a = np.zeros((16,) * 3)
        a.ravel()[:37] = 1.0
        p = 2.5
        assert weak_lp_norm(scalar_as_vector(grid16, a), p) == pytest.approx(
            (37 * grid16.cell_measure) ** (1 / p), rel=1e-14)

    def test_constant(self, grid16):
        u = scalar_as_vector(grid16, np.full((16,) * 3, 0.3))
        assert weak_lp_norm(u, 3) == pytest.approx(0.3 * grid16.volume ** (1 / 3), rel=1e-14)

    @pytest.mark.parametrize("p", [2.5, 3.0])
    def test_power_profile(self, p):
        g = make_grid(64, TWO_PI)
        r = g.radius()
        a = np.where(r >= 2 * g.h, np.where(r > 0, r, 1.0) ** (-3 / p), 0.0)
        w = weak_lp_norm(ScalarField(g, a), p)
        target = (4 * np.pi / 3) ** (1 / p)
        assert abs(w / target - 1) <= 0.15

    def test_rejects_p_le_1(self, grid16):
        with pytest.raises(AnalysisError):
            weak_lp_norm(VectorField.zeros(grid16), 1.0)


@settings(max_examples=100, deadline=None)
@given(a=arrays(np.float64, 64, elements=st.floats(0, 1e6)), p=st.floats(1.01, 8.0), cell=st.floats(1e-3, 10.0))
def test_weak_below_strong(a, p, cell):
    assert weak_lp_norm_values(a, cell, p) <= lp_norm_values(a, cell, p) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(a=arrays(np.float64, 64, elements=st.floats(0, 1e3)), lam=st.floats(1e-3, 1e3), p=st.floats(1.1, 5.0))
def test_weak_norm_homogeneous(a, lam, p):
    assert weak_lp_norm_values(lam * a, 1.0, p) == pytest.approx(lam * weak_lp_norm_values(a, 1.0, p), rel=1e-12,
                                                                abs=1e-300)


class TestHeatBounds:
    def _profiles(self, grid, p):
        # |x|^{-3/p} capped at its value one cell from the origin, plus bounded profiles
        r = grid.radius()
        rng = np.random.default_rng(0)
        yield np.minimum(np.where(r > 0, r, grid.h) ** (-3 / p), grid.h ** (-3 / p))
        yield np.where(r <= 0.6, 1.0, 0.0)
        yield rng.standard_normal((grid.n,) * 3)

    @pytest.mark.parametrize("t", [1e-3, 1e-2, 0.1, 0.5])
    @pytest.mark.parametrize("p", [2.5, 3.0])
    def test_weak_norm_persistence(self, t, p):
        g = make_grid(32, TWO_PI)
        for prof in self._profiles(g, p):
            u = scalar_as_vector(g, prof)
            assert weak_lp_norm(heat_semigroup(u, t), p) <= 1.01 * weak_lp_norm(u, p)

    @pytest.mark.parametrize("t", [1e-2, 0.1, 0.5])
    def test_weak_to_strong_smoothing(self, t):
        g = make_grid(32, TWO_PI)
        q, p = 2.5, 6.0
        factor = (4 * np.pi * t) ** (-1.5 * (1 / q - 1 / p))
        for prof in list(self._profiles(g, q))[:2]:
            u = scalar_as_vector(g, prof)
            assert lp_norm(heat_semigroup(u, t), p) <= factor * weak_lp_norm(u, q) * 1.05


class TestSobolev:
    def test_s0_is_l2(self, grid16):
        u = VectorField(grid16, np.random.default_rng(1).standard_normal((3, 16, 16, 16)))
        assert sobolev_seminorm(u, 0) == lp_norm(u, 2)

    def test_single_mode(self, grid16):
        x1 = grid16.coords[0]
        u = scalar_as_vector(grid16, np.cos(2 * x1) + 0 * grid16.radius())
        assert sobolev_seminorm(u, 1) == pytest.approx(2 * lp_norm(u, 2), rel=1e-13)

    def test_s1_matches_gradient(self, grid16):
        c = np.fft.fftn(np.random.default_rng(2).standard_normal((3, 16, 16, 16)), axes=(1, 2, 3))
        c[:, 0, 0, 0] = 0
        u = dealias(VectorField(grid16, c, "spectral"))  # the Nyquist plane has no real derivative
        h1 = sobolev_seminorm(u, 1)
        assert h1 == pytest.approx(np.sqrt(gradient_l2_squared(u)), rel=1e-12)
        assert h1 == pytest.approx(gradient_l2_norm_direct(u), rel=1e-12)


class TestSpacetime:
    def _traj(self, grid, times, amps):
        base = scalar_as_vector(grid, np.ones((grid.n,) * 3))
        return Trajectory(tuple(times), tuple(a * base for a in amps), "derived"), lp_norm(base, 3)

    def test_zero(self, grid16):
        z = VectorField.zeros(grid16)
        traj = Trajectory((0.0, 0.5, 1.0), (z, z, z), "derived")
        assert spacetime_norm(traj, 2, 3) == 0.0

    def test_constant(self, grid16):
        traj, f = self._traj(grid16, [0, 0.5, 1.5, 2.0], [1, 1, 1, 1])
        assert spacetime_norm(traj, 4, 3) == pytest.approx(2.0 ** 0.25 * f, rel=1e-14)

    def test_linear(self, grid16):
        ts = np.linspace(0, 1, 201)
        traj, f = self._traj(grid16, ts, ts / 1.0)
        got = spacetime_norm(traj, 2, 3) / f
        assert got == pytest.approx(1 / np.sqrt(3), rel=1e-4)

    def test_unsorted(self, grid16):
        z = VectorField.zeros(grid16)
        traj = SimpleNamespace(times=(0.0, 1.0, 0.5), snapshots=(z, z, z))
        with pytest.raises(AnalysisError):
            spacetime_norm(traj, 2, 3)

    def test_bad_index(self, grid16):
        z = VectorField.zeros(grid16)
        traj = Trajectory((0.0, 0.5, 1.0), (z, z, z), "derived")
        with pytest.raises(AnalysisError):
            spacetime_norm(traj, 0.5, 3)

    def test_running_values(self):
        t = np.linspace(0, 1, 11)
        vals = spacetime_norm_values(t, np.ones_like(t), 2)
        np.testing.assert_allclose(vals, np.sqrt(t), rtol=1e-14)


class TestRateFit:
    def test_exact_power_law(self):
        t = np.geomspace(1e-5, 1, 9)
        fit = rate_fit(list(zip(t, 7 * t**0.25)), (1e-5, 1))
        assert abs(fit.slope - 0.25) <= 1e-12
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.n_points == 9

    def test_constant(self):
        fit = rate_fit([(t, 3.0) for t in (0.1, 0.2, 0.3)], (0.1, 0.3))
        assert abs(fit.slope) <= 1e-12 and fit.r_squared == 1.0

    def test_two_term(self):
        t = np.geomspace(1e-6, 1e-4, 12)
        fit = rate_fit(list(zip(t, t**0.25 + t**0.5)), (1e-6, 1e-4))
        assert 0.25 <= fit.slope <= 0.27

    def test_too_few_points(self):
        with pytest.raises(AnalysisError, match="at least 3"):
            rate_fit([(0.1, 1.0), (0.2, 2.0), (0.9, 1.0)], (0.1, 0.3))

    def test_nonpositive(self):
        with pytest.raises(AnalysisError, match="positive"):
            rate_fit([(0.1, 1.0), (0.2, 0.0), (0.3, 1.0)], (0.1, 0.3))

    def test_record_invariants(self):
        with pytest.raises(AnalysisError):
            RateFit(1.0, 0.0, 1.0, (2.0, 1.0), 5)
        with pytest.raises(AnalysisError):
            RateFit(1.0, 0.0, 1.0, (1.0, 2.0), 2)

    @settings(max_examples=100, deadline=None)
    @given(a=st.floats(-3, 3), c=st.floats(1e-3, 1e3), lo=st.floats(-8, -2), span=st.floats(0.5, 4))
    def test_recovers_power_law(self, a, c, lo, span):
        t = np.logspace(lo, lo + span, 7)
        fit = rate_fit(list(zip(t, c * t**a)), (t[0], t[-1]))
        assert abs(fit.slope - a) <= 1e-9


class TestSigma:
    def test_p3(self):
        e = sigma_exponents(3)
        assert e.sigma == 0.5 and e.long_time == 0.5

    def test_p_five_halves_exact(self):
        e = sigma_exponents(Fraction(5, 2))
        assert e.sigma == Fraction(1, 6)
        assert e.long_time == Fraction(1, 4)

    def test_endpoint_limit(self):
        assert sigma_of(2 + 1e-9) < 1e-9

    @pytest.mark.parametrize("p", [2.0, 3.5, 1.0])
    def test_range(self, p):
        with pytest.raises(AnalysisError):
            sigma_exponents(p)

    def test_r_of_q(self):
        assert r_of_q(Fraction(2)) == 4
        assert r_of_q(Fraction(9, 4)) == 3
        with pytest.raises(AnalysisError):
            r_of_q(3)

    @settings(max_examples=200, deadline=None)
    @given(p=st.fractions(min_value=Fraction(201, 100), max_value=3))
    def test_sigma_below_heat_order(self, p):
        e = sigma_exponents(p)
        assert 0 < e.sigma <= Fraction(1, 2)
        assert e.sigma <= e.heat_lemma_order
        if p == 3:
            assert e.sigma == e.heat_lemma_order
        else:
            assert e.sigma < e.heat_lemma_order

    @settings(max_examples=100, deadline=None)
    @given(p=st.fractions(min_value=Fraction(201, 100), max_value=Fraction(299, 100)),
           d=st.fractions(min_value=Fraction(1, 1000), max_value=Fraction(1, 100)))
    def test_sigma_increasing(self, p, d):
        assert sigma_of(p) < sigma_of(min(p + d, Fraction(3)))


class TestOneil:
    def _grid(self):
        return make_grid(16, TWO_PI)

    def test_zero(self):
        g = self._grid()
        f = ScalarField(g, np.random.default_rng(0).standard_normal((16,) * 3))
        assert oneil_check(f, ScalarField(g, np.zeros((16,) * 3)), 3, 1.5) == (0.0, 0.0)

    def test_spike(self):
        g = self._grid()
        a = np.zeros((16,) * 3)
        a[2, 3, 4] = 5.0
        gv = np.abs(np.random.default_rng(1).standard_normal((16,) * 3))
        lhs, rhs = oneil_check(ScalarField(g, a), ScalarField(g, gv), 3, 1.5)
        assert lhs == pytest.approx(5.0 * g.cell_measure * gv.max(), rel=1e-12)
        assert lhs <= rhs

    def test_disjoint_balls_brute_force(self):
        g = self._grid()
        x1, x2, x3 = g.coords
        fa = ((x1 + 1.5) ** 2 + x2**2 + x3**2 <= 1.0).astype(float)
        ga = ((x1 - 1.5) ** 2 + x2**2 + x3**2 <= 1.0).astype(float)
        lhs, rhs = oneil_check(ScalarField(g, fa), ScalarField(g, ga), 2.5, 2.5 / 1.5)
        # direct O(n^6) convolution over the support of f
        src = np.argwhere(fa > 0)
        best = 0.0
        for shift in np.argwhere(np.ones((16,) * 3)):
            idx = (shift[None, :] - src) % 16
            best = max(best, ga[idx[:, 0], idx[:, 1], idx[:, 2]].sum() * g.cell_measure)
        assert lhs == pytest.approx(best, rel=1e-10)
        assert lhs <= rhs

    def test_not_conjugate(self):
        g = self._grid()
        f = ScalarField(g, np.ones((16,) * 3))
        with pytest.raises(AnalysisError, match="conjugate"):
            oneil_check(f, f, 3, 2)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.floats(2.05, 6.0))
    def test_random_pairs(self, seed, p):
        g = self._grid()
        rng = np.random.default_rng(seed)
        f = ScalarField(g, rng.standard_normal((16,) * 3) * (rng.random((16,) * 3) < 0.3))
        gv = ScalarField(g, rng.standard_normal((16,) * 3) ** 3)
        lhs, rhs = oneil_check(f, gv, p, p / (p - 1))
        assert lhs <= rhs * 1.01

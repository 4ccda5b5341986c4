from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nslab.analysis import lp_norm
from nslab.calderon import (
    SplitError,
    lorentz_split,
    optimal_threshold,
    product_spread,
    scaling_audit,
    scaling_exponent_of_threshold,
    decay_bracket,
    threshold_exponents,
    truncate,
)
from nslab.lab.data import DatumSpec, make_datum
from nslab.spectral import VectorField, divergence_residual, leray_project, make_grid

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def mimic():
    g = make_grid(64, TWO_PI)
    return make_datum(DatumSpec("homogeneous_mimic", p=3.0, eps_core=2 * g.L / g.n, R_env=g.L / 4), g)


def random_solenoidal(grid, seed):
    rng = np.random.default_rng(seed)
    c = np.fft.fftn(rng.standard_normal((3,) + (grid.n,) * 3), axes=(1, 2, 3))
    c[:, 0, 0, 0] = 0
    return leray_project(VectorField(grid, c, "spectral"))


class TestSplit:
    def test_inactive_truncation(self):
        g = make_grid(16, TWO_PI)
        u = random_solenoidal(g, 0)
        s = lorentz_split(u, 1.01 * lp_norm(u, np.inf))
        assert s.u_bar is u
        assert np.all(s.u_tilde.spectral == 0) and s.u_tilde_l2 == 0

    def test_reassembly_and_divergence(self, mimic):
        N = 0.3 * lp_norm(mimic, np.inf)
        s = lorentz_split(mimic, N)
        scale = np.max(np.abs(mimic.spectral))
        assert np.max(np.abs(s.u_bar.spectral + s.u_tilde.spectral - mimic.spectral)) <= 1e-12 * scale
        assert divergence_residual(s.u_bar) <= 1e-10
        assert divergence_residual(s.u_tilde) <= 1e-10
        assert s.truncated_sup <= N * (1 + 1e-14)
        assert s.projection_factor <= 2.0

    def test_bar_shrinks_with_N(self, mimic):
        top = lp_norm(mimic, np.inf)
        sups = [lorentz_split(mimic, f * top).u_bar_sup for f in (0.3, 0.1, 0.03, 0.01)]
        assert all(b < a for a, b in zip(sups, sups[1:]))
        assert sups[-1] <= 0.02 * top

    def test_two_level_truncation(self):
        g = make_grid(16, TWO_PI)
        a = np.zeros((3, 16, 16, 16))
        a[0, :4] = 1.0
        a[1, 8:10] = -4.0
        b = truncate(VectorField(g, a), 2.0)
        np.testing.assert_array_equal(b[0, :4], 1.0)
        np.testing.assert_array_equal(b[1, 8:10], -2.0)
        mag = np.sqrt(np.sum(b**2, axis=0))
        cells_one, cells_two = 4 * 256, 2 * 256
        assert np.sum(mag**2) * g.cell_measure == pytest.approx((cells_one + 4 * cells_two) * g.cell_measure)
        assert mag.max() == 2.0

    def test_tilde_nonincreasing(self, mimic):
        top = lp_norm(mimic, np.inf)
        norms = [lorentz_split(mimic, f * top).u_tilde_l2 for f in (0.01, 0.03, 0.1, 0.3, 1.0)]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(norms, norms[1:]))
        assert norms[-1] == 0

    @pytest.mark.parametrize("N", [0.0, -1.0])
    def test_rejects_nonpositive(self, N):
        g = make_grid(16, TWO_PI)
        with pytest.raises(SplitError):
            lorentz_split(VectorField.zeros(g), N)


class TestThreshold:
    def test_unit(self):
        assert optimal_threshold(3, 4, 1.0, 1.0) == 1.0

    def test_p3_alpha4(self):
        a, beta = threshold_exponents(Fraction(3), Fraction(4))
        assert (a, beta) == (Fraction(-1, 2), -3)
        assert optimal_threshold(3, 4, 0.04, 2.0) == pytest.approx(0.04**-0.5 * 2.0**-3, rel=1e-14)

    @pytest.mark.parametrize("p", [Fraction(5, 2), Fraction(11, 4), Fraction(3)])
    @pytest.mark.parametrize("alpha", [Fraction(7, 2), Fraction(4)])
    def test_dimension(self, p, alpha):
        assert scaling_exponent_of_threshold(p, alpha) == -1

    def test_alpha4_gives_sigma(self):
        # N^{-(p-2)} carries t^{sigma(p)}
        for p in (Fraction(5, 2), Fraction(3), Fraction(21, 10)):
            a, _ = threshold_exponents(p, Fraction(4))
            assert -a * (p - 2) == (p - 2) / (2 * (4 - p))

    @pytest.mark.parametrize("args", [(2.0, 4, 1, 1), (3, 3.0, 1, 1), (3, 4, 0.0, 1), (3, 4, 1, 0.0), (3.5, 4, 1, 1)])
    def test_ranges(self, args):
        with pytest.raises(SplitError):
            optimal_threshold(*args)

    @settings(max_examples=200, deadline=None)
    @given(p=st.floats(2.01, 3.0), alpha=st.floats(3.01, 4.0), t=st.floats(1e-4, 1e2), m=st.floats(1e-2, 1e2),
           lam=st.floats(0.1, 10.0))
    def test_multiplicative(self, p, alpha, t, m, lam):
        a, beta = threshold_exponents(p, alpha)
        logs = [a * np.log(t * x) + beta * np.log(m * y) for x in (1, lam, lam**2) for y in (1, lam, lam**2)]
        assume(max(abs(v) for v in logs) < 600)
        base = optimal_threshold(p, alpha, t, m)
        assert optimal_threshold(p, alpha, lam * t, m) == pytest.approx(base * lam**a, rel=1e-10)
        assert optimal_threshold(p, alpha, t, lam * m) == pytest.approx(base * lam**beta, rel=1e-10)
        scaled = optimal_threshold(p, alpha, lam**2 * t, lam ** (3 / p - 1) * m)
        assert scaled == pytest.approx(base / lam, rel=1e-9)

    def test_bracket_balanced_at_optimum(self):
        # at the optimal N both terms of the bracket scale alike in t
        p, alpha, m = 3.0, 4.0, 1.3
        vals = [decay_bracket(p, alpha, optimal_threshold(p, alpha, t, m), t, m) / t**0.5 for t in (1e-3, 1e-2, 1e-1)]
        assert max(vals) / min(vals) == pytest.approx(1.0, abs=1e-12)


class TestAudit:
    def test_bounded_data(self):
        g = make_grid(16, TWO_PI)
        u = random_solenoidal(g, 3)
        top = lp_norm(u, np.inf)
        rows = scaling_audit(u, 3.0, [1.1 * top, 2 * top, 5 * top])
        assert all(r.tilde_l2_sq == 0 for r in rows)

    def test_too_few(self):
        g = make_grid(16, TWO_PI)
        with pytest.raises(SplitError):
            scaling_audit(VectorField.zeros(g), 3.0, [1.0, 2.0])

    def test_mimic_products(self, mimic):
        # thresholds whose level sets sit between the envelope and the smoothed core
        lo, hi = 1 / (np.pi / 2), lp_norm(mimic, np.inf) / 3
        rows = scaling_audit(mimic, 3.0, np.geomspace(lo, hi, 3))
        assert product_spread(r.tilde_product for r in rows) < 3.0
        assert product_spread(r.bar_product for r in rows) < 3.0
        tl = [r.tilde_l2_sq for r in rows]
        assert all(b <= a for a, b in zip(tl, tl[1:]))

    def test_overflow_reported(self):
        with pytest.raises(SplitError, match="representable"):
            optimal_threshold(3.0, 3.001, 1.0, 1e-3)

    def test_spread(self):
        assert product_spread([1, 2, 4]) == 4.0
        assert product_spread([1, 0]) == float("inf")

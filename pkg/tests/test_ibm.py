import math

import numpy as np
import pytest

from coneexit import bm, ibm
from coneexit.cones import PolarPoint, Wedge2D
from coneexit.errors import ConfigError, NearDiagonalError
from coneexit.special import beta_tail_integral, log_gamma

PI = math.pi
HALF_PLANE = Wedge2D(PI)
Z_HP = PolarPoint(1.0, PI / 2)
CRITICAL = Wedge2D(PI / 2)
Z_CR = PolarPoint(1.0, PI / 4)
NARROW = Wedge2D(PI / 4)
Z_NA = PolarPoint(1.0, PI / 8)


class TestRegimes:
    def test_selection(self):
        assert ibm.regime(HALF_PLANE) == "sub"
        assert ibm.regime(CRITICAL) == "critical"
        assert ibm.regime(NARROW) == "super"

    def test_exponents(self):
        sub = ibm.ibm_asymptote(HALF_PLANE, Z_HP)
        assert (sub.density_exponent, sub.tail_exponent) == (3.0, 2.0)
        assert not sub.log_correction
        crit = ibm.ibm_asymptote(CRITICAL, Z_CR)
        assert (crit.density_exponent, crit.tail_exponent) == (5.0, 4.0)
        assert crit.log_correction
        sup = ibm.ibm_asymptote(NARROW, Z_NA)
        assert (sup.density_exponent, sup.tail_exponent) == pytest.approx((7.0, 6.0))
        assert not sup.log_correction


class TestAsymptoteConstants:
    def test_half_plane_constant_is_two(self):
        # all factors are elementary for the half-plane bisector start
        asy = ibm.ibm_asymptote(HALF_PLANE, Z_HP)
        assert asy.constant == pytest.approx(2.0, rel=1e-12)

    def test_critical_constant(self):
        asy = ibm.ibm_asymptote(CRITICAL, Z_CR)
        assert asy.constant == pytest.approx(64.0 / PI**2, rel=1e-12)

    def test_super_constant(self):
        asy = ibm.ibm_asymptote(NARROW, Z_NA)
        want = 64.0 * (math.sqrt(2.0) - 1.0) / PI
        assert asy.constant == pytest.approx(want, rel=1e-5)

    def test_positive_in_all_regimes(self):
        for cone, z in (
            (Wedge2D(2.7), PolarPoint(1.3, 1.1)),
            (Wedge2D(PI / 2), PolarPoint(0.5, 0.3)),
            (Wedge2D(1.0), PolarPoint(2.0, 0.4)),
        ):
            assert ibm.ibm_asymptote(cone, z).constant > 0.0

    def test_sub_regime_w_integral_at_p1(self):
        assert beta_tail_integral(1.0) == pytest.approx(PI / 2.0, rel=1e-13)

    def test_tail_density_consistency(self):
        # -d/dr (tail) reproduces the density form exactly in the pure
        # power regimes
        for cone, z in ((HALF_PLANE, Z_HP), (NARROW, Z_NA)):
            asy = ibm.ibm_asymptote(cone, z)
            assert asy.tail_constant * asy.tail_exponent == pytest.approx(
                asy.constant, rel=1e-12
            )
        # critical regime: -d/dr [c r^-4 ln r] = c r^-5 (4 ln r - 1), i.e.
        # the density form times (ln r - 1/4)/ln r
        crit = ibm.ibm_asymptote(CRITICAL, Z_CR)
        r = 250.0
        d = 0.01
        fd = -(crit.tail(r + d) - crit.tail(r - d)) / (2.0 * d)
        want = crit.density(r) * (math.log(r) - 0.25) / math.log(r)
        assert fd == pytest.approx(want, rel=1e-6)


class TestMomentCriterion:
    @pytest.mark.parametrize(
        "cone,p,finite",
        [
            (HALF_PLANE, 1.9, True),
            (HALF_PLANE, 2.0, False),
            (CRITICAL, 3.99, True),
            (CRITICAL, 4.0, False),
            (NARROW, 5.9, True),
            (NARROW, 6.0, False),
        ],
    )
    def test_boundaries(self, cone, p, finite):
        assert ibm.moment_finite(cone, p) is finite

    def test_invalid_order(self):
        with pytest.raises(ConfigError):
            ibm.moment_finite(HALF_PLANE, 0.0)


class TestSideProbability:
    def test_gamblers_ruin(self):
        assert ibm.exit_side_probability(1.0, 3.0) == pytest.approx(0.75)

    def test_symmetry(self):
        assert ibm.exit_side_probability(2.5, 2.5) == 0.5

    def test_complementary(self):
        u, v = 0.7, 1.9
        total = ibm.exit_side_probability(u, v) + ibm.exit_side_probability(v, u)
        assert total == pytest.approx(1.0, rel=1e-15)

    def test_validation(self):
        with pytest.raises(ConfigError):
            ibm.exit_side_probability(0.0, 1.0)


class TestRadialDensity:
    def test_nonnegative_on_grid(self):
        for r in (0.25, 0.5, 2.0, 4.0, 16.0):
            assert ibm.ibm_radial_density(HALF_PLANE, Z_HP, r) >= 0.0

    def test_near_diagonal_rejected(self):
        with pytest.raises(NearDiagonalError):
            ibm.ibm_radial_density(HALF_PLANE, Z_HP, 1.0001)

    def test_matches_asymptote_far_out(self):
        asy = ibm.ibm_asymptote(HALF_PLANE, Z_HP)
        got = ibm.ibm_radial_density(HALF_PLANE, Z_HP, 64.0)
        assert got == pytest.approx(asy.density(64.0), rel=0.10)

    def test_first_term_reaches_lemma_limit(self):
        # r^{alpha+p1} I_1 -> C(z) 2^{p1/2} rho^alpha G(alpha+p1/2)/G(alpha+1) h0
        c_z = bm.survival_asymptote(HALF_PLANE, Z_HP)
        alpha = p1 = 1.0
        limit = (
            c_z
            * 2.0 ** (0.5 * p1)
            * math.exp(log_gamma(alpha + 0.5 * p1) - log_gamma(alpha + 1.0))
            * beta_tail_integral(p1)
        )
        r = 1000.0
        term1 = ibm.ibm_single_term(HALF_PLANE, Z_HP, r, 1)
        weight = 4.0 / PI  # S_1 m_1 at the bisector
        i1 = term1 / (r ** (-1.0) * weight)
        assert i1 * r ** (alpha + p1) == pytest.approx(limit, rel=5e-3)

    def test_first_term_dominates(self):
        r = 32.0
        lead = ibm.ibm_single_term(HALF_PLANE, Z_HP, r, 1)
        rest = sum(ibm.ibm_single_term(HALF_PLANE, Z_HP, r, j) for j in (3, 5, 7, 9))
        assert abs(rest / lead) < 0.05

    @pytest.mark.parametrize(
        "cone,z,expected",
        [
            (HALF_PLANE, Z_HP, -3.0),
            (NARROW, Z_NA, -7.0),
        ],
    )
    def test_loglog_slope_pure_power(self, cone, z, expected):
        r1, r2 = 32.0, 128.0
        d1 = ibm.ibm_radial_density(cone, z, r1, tol=1e-7)
        d2 = ibm.ibm_radial_density(cone, z, r2, tol=1e-7)
        slope = math.log(d2 / d1) / math.log(r2 / r1)
        assert slope == pytest.approx(expected, abs=0.15)

    def test_loglog_slope_critical(self):
        # slope -5 up to the log correction, which adds 1/ln r
        r1, r2 = 32.0, 128.0
        d1 = ibm.ibm_radial_density(CRITICAL, Z_CR, r1, tol=1e-7)
        d2 = ibm.ibm_radial_density(CRITICAL, Z_CR, r2, tol=1e-7)
        slope = math.log(d2 / d1) / math.log(r2 / r1)
        corrected = slope - 1.0 / math.log(math.sqrt(r1 * r2))
        assert corrected == pytest.approx(-5.0, abs=0.15)

    def test_doubling_terms_stable(self):
        # envelope-governed truncation: adding outer terms moves nothing
        base = ibm.ibm_radial_density(HALF_PLANE, Z_HP, 4.0, tol=1e-6)
        lead_terms = sum(
            ibm.ibm_single_term(HALF_PLANE, Z_HP, 4.0, j) for j in (1, 3, 5, 7, 9, 11)
        )
        assert base == pytest.approx(lead_terms, rel=1e-4)


class TestNormalization:
    def test_total_mass_with_mc_bridge(self):
        # the series is certified away from the diagonal; the band around
        # r = rho that the spectral cap cannot resolve is bridged by a
        # Monte Carlo mass estimate
        from coneexit import mc
        from coneexit.special import QuadratureSpec, integrate_adaptive

        cone, z = CRITICAL, Z_CR
        band = (0.75, 1.35)
        spec = QuadratureSpec(abs_tol=1e-9, rel_tol=1e-5, max_subdivisions=600)
        f = lambda r: ibm.ibm_radial_density(cone, z, r, tol=1e-6)
        lo, _ = integrate_adaptive(f, 1e-7, band[0], spec, points=[0.1, 0.4])
        hi, _ = integrate_adaptive(f, band[1], 64.0, spec, points=[2.0, 8.0, 32.0])
        tail = ibm.ibm_asymptote(cone, z).tail(64.0)
        h = 1e-3
        batch = mc.sample_ibm_exit_batch(cone, z, h, 60_000, seed=71, workers=4,
                                         max_steps=10**7)
        radii = batch.exit_radius / mc.bias_dilation(cone, z, h)
        band_mass = float(((radii >= band[0]) & (radii <= band[1])).mean())
        total = lo + hi + tail + band_mass
        se = math.sqrt(band_mass * (1 - band_mass) / len(batch))
        assert total == pytest.approx(1.0, abs=5e-3 + 3.0 * se)


class TestCdfGrid:
    def test_monotone_cumulative(self):
        grid = np.geomspace(2.0, 16.0, 9)
        cum = ibm.ibm_radial_cdf_grid(HALF_PLANE, Z_HP, grid, tol=1e-5)
        assert cum[0] == 0.0
        assert np.all(np.diff(cum) > 0.0)

    def test_validation(self):
        with pytest.raises(ConfigError):
            ibm.ibm_radial_cdf_grid(HALF_PLANE, Z_HP, [2.0, 2.0, 3.0])


class TestIbmTail:
    def test_refuses_moderate_radii(self):
        with pytest.raises(ConfigError):
            ibm.ibm_tail(HALF_PLANE, Z_HP, 5.0)

    def test_exponents_through_values(self):
        assert ibm.ibm_tail(HALF_PLANE, Z_HP, 40.0) / ibm.ibm_tail(
            HALF_PLANE, Z_HP, 80.0
        ) == pytest.approx(4.0, rel=1e-12)
        assert ibm.ibm_tail(NARROW, Z_NA, 40.0) / ibm.ibm_tail(
            NARROW, Z_NA, 80.0
        ) == pytest.approx(2.0**6, rel=1e-12)

import math

import numpy as np
import pytest

from coneexit import bm
from coneexit.cones import CircularCone3D, HalfSpace, PolarPoint, Wedge2D
from coneexit.errors import ConfigError, NearDiagonalError
from coneexit.special import QuadratureSpec, integrate_adaptive

PI = math.pi
HALF_PLANE = Wedge2D(PI)
BISECTOR = PolarPoint(1.0, PI / 2)
QUARTER = Wedge2D(PI / 2)
Q_START = PolarPoint(1.0, PI / 4)


def cauchy_density(r, rho=1.0):
    return 2.0 * rho / (PI * (rho * rho + r * r))


def cauchy_tail(r):
    return 1.0 - 2.0 / PI * math.atan(r)


class TestHeatKernel:
    def test_symmetry(self):
        x = PolarPoint(1.0, PI / 2)
        y = PolarPoint(2.0, PI / 4)
        a = bm.heat_kernel(HALF_PLANE, 1.0, x, y)
        b = bm.heat_kernel(HALF_PLANE, 1.0, y, x)
        assert a == pytest.approx(b, rel=1e-12)

    def test_method_of_images_oracle(self):
        # half-plane kernel is the Gaussian difference on (0,1) vs (sqrt2, sqrt2)
        t = 1.0
        x = PolarPoint(1.0, PI / 2)
        y = PolarPoint(2.0, PI / 4)
        xc = np.array([0.0, 1.0])
        yc = np.array([2.0 * math.cos(PI / 4), 2.0 * math.sin(PI / 4)])
        yr = yc * np.array([1.0, -1.0])
        gauss = lambda u, v: math.exp(-np.sum((u - v) ** 2) / (2 * t)) / (2 * PI * t)
        want = gauss(xc, yc) - gauss(xc, yr)
        got = bm.heat_kernel(HALF_PLANE, t, x, y)
        assert got == pytest.approx(want, rel=1e-8)

    def test_submarkov_mass(self):
        # integral over the cone is at most 1 (radial-angular quadrature)
        cone, x, t = QUARTER, Q_START, 0.5
        xs, ws = np.polynomial.legendre.leggauss(40)
        thetas = 0.25 * PI * (xs + 1.0)
        wq = 0.25 * PI * ws

        def radial(r):
            if r <= 0:
                return 0.0
            vals = [
                bm.heat_kernel(cone, t, x, PolarPoint(r, float(th)), tol=1e-9)
                for th in thetas
            ]
            return float(np.dot(wq, vals)) * r

        mass, _ = integrate_adaptive(
            radial, 1e-9, math.inf, QuadratureSpec(1e-7, 1e-7, 300), points=[0.5, 1.0, 2.0, 5.0]
        )
        assert mass <= 1.0 + 1e-6
        assert mass == pytest.approx(bm.survival(cone, x, t), rel=1e-5)

    def test_validation(self):
        with pytest.raises(ConfigError):
            bm.heat_kernel(HALF_PLANE, -1.0, BISECTOR, BISECTOR)
        with pytest.raises(ConfigError):
            bm.heat_kernel(HALF_PLANE, 1.0, PolarPoint(1.0, 4.0), BISECTOR)


class TestJointExitDensity:
    def test_positive_on_grid(self):
        for t in (0.2, 1.0, 5.0):
            for r in (0.5, 1.5, 3.0):
                v = bm.joint_exit_density(QUARTER, t, Q_START, PolarPoint(r, 0.0))
                assert v > 0.0

    def test_rejects_interior_point(self):
        with pytest.raises(ConfigError):
            bm.joint_exit_density(QUARTER, 1.0, Q_START, PolarPoint(1.0, 0.3))

    def test_time_marginal_is_survival_derivative(self):
        # integral over the boundary of the joint density = -dS/dt
        cone, x, t = QUARTER, Q_START, 0.8

        def boundary_integral(tt):
            f = lambda r: bm.joint_exit_radial_density(cone, tt, x, r) if r > 0 else 0.0
            val, _ = integrate_adaptive(
                f, 1e-9, math.inf, QuadratureSpec(1e-10, 1e-9, 400), points=[0.5, 1.0, 2.0]
            )
            return val

        dt = 1e-3
        fd = -(bm.survival(cone, x, t + dt) - bm.survival(cone, x, t - dt)) / (2 * dt)
        assert boundary_integral(t) == pytest.approx(fd, abs=1e-4, rel=1e-3)

    def test_normalization(self):
        # total exit mass equals one for a wedge (tau finite a.s.); the
        # time integral starts where the spectral cap resolves the series,
        # below which the unexited mass is exponentially negligible
        cone, x = QUARTER, Q_START
        t_floor = 0.02

        def boundary_integral(t):
            f = lambda r: bm.joint_exit_radial_density(cone, t, x, r) if r > 0 else 0.0
            val, _ = integrate_adaptive(
                f, 1e-9, math.inf, QuadratureSpec(1e-10, 1e-8, 400),
                points=[0.5, 1.0, 2.0],
            )
            return val

        total, _ = integrate_adaptive(
            boundary_integral, t_floor, math.inf, QuadratureSpec(1e-6, 1e-5, 500),
            points=[0.1, 0.5, 2.0, 20.0],
        )
        missed = 1.0 - bm.survival(cone, x, t_floor)
        assert missed < 1e-4
        assert total + missed == pytest.approx(1.0, abs=1e-3)


class TestRadialDensity:
    @pytest.mark.parametrize("r", [0.25, 0.5, 2.0, 4.0, 8.0])
    def test_cauchy_closed_loop(self, r):
        got = bm.exit_radial_density(HALF_PLANE, BISECTOR, r)
        assert got == pytest.approx(cauchy_density(r), rel=1e-10)

    def test_general_rho_closed_loop(self):
        x = PolarPoint(2.5, PI / 2)
        for r in (0.5, 1.0, 4.0, 9.0):
            got = bm.exit_radial_density(HALF_PLANE, x, r)
            assert got == pytest.approx(cauchy_density(r, 2.5), rel=1e-10)

    def test_conformal_quarter_plane(self):
        # z -> z^2 pushes the quarter-plane law to the half-plane Cauchy law
        for r in (0.3, 0.7, 1.8, 2.0, 5.0):
            got = bm.exit_radial_density(QUARTER, Q_START, r)
            want = (4.0 / PI) * r / (1.0 + r**4)
            assert got == pytest.approx(want, rel=1e-9)

    def test_halfspace3_poisson_kernel(self):
        cone = CircularCone3D(PI / 2)
        x = PolarPoint(1.0, 0.0)
        for r in (0.3, 2.0, 10.0):
            got = bm.exit_radial_density(cone, x, r)
            want = r / (1.0 + r * r) ** 1.5
            assert got == pytest.approx(want, rel=1e-10)

    def test_near_diagonal_rejected_then_bridged(self):
        with pytest.raises(NearDiagonalError):
            bm.exit_radial_density(HALF_PLANE, BISECTOR, 1.0001)
        for r in (0.99, 1.0, 1.01):
            got = bm.exit_radial_density_bridged(HALF_PLANE, BISECTOR, r)
            assert got == pytest.approx(cauchy_density(r), rel=1e-7)

    def test_truncation_bound_dominates_refinement(self):
        val, diag = bm.exit_radial_density(
            QUARTER, Q_START, 1.4, tol=1e-4, return_diagnostics=True
        )
        tight = bm.exit_radial_density(QUARTER, Q_START, 1.4, tol=1e-13)
        assert abs(val - tight) <= diag["remainder_bound"] + 1e-14
        assert diag["terms_used"] >= 1

    def test_radial_law_wrapper(self):
        law = bm.radial_law(HALF_PLANE, BISECTOR)
        assert law.density(2.0) == pytest.approx(cauchy_density(2.0), rel=1e-7)
        assert law.tail(8.0) == pytest.approx(cauchy_tail(8.0), rel=1e-3)
        assert law.asymptote.exponent == pytest.approx(1.0)


class TestRadialTail:
    def test_cauchy_tail(self):
        for r in (2.0, 8.0, 50.0):
            got = bm.exit_radial_tail(HALF_PLANE, BISECTOR, r)
            assert got == pytest.approx(cauchy_tail(r), rel=2e-4)

    def test_monotone_to_zero(self):
        rs = [1.5, 2.0, 4.0, 8.0, 16.0, 64.0]
        vals = [bm.exit_radial_tail(HALF_PLANE, BISECTOR, r) for r in rs]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.02

    def test_against_termwise_series_oracle(self):
        # the tail integral of each series term is exact in closed form
        for cone, x in ((HALF_PLANE, BISECTOR), (QUARTER, Q_START), (Wedge2D(2.2), PolarPoint(1.0, 0.8))):
            for r in (2.0, 6.0, 20.0):
                quad_route = bm.exit_radial_tail(cone, x, r)
                series_route = bm._tail_series(cone, x, r)
                assert quad_route == pytest.approx(series_route, rel=1e-3)

    def test_matches_asymptote_at_50rho(self):
        for cone, x in ((HALF_PLANE, BISECTOR), (Wedge2D(2 * PI / 3), PolarPoint(1.0, PI / 3))):
            asy = bm.bm_tail_asymptote(cone, x)
            tail = bm.exit_radial_tail(cone, x, 50.0)
            assert 50.0 ** asy.exponent * tail == pytest.approx(asy.constant, rel=0.02)

    def test_derivative_matches_density(self):
        # fourth-order central difference of the tail against the density
        r, d = 2.5, 0.02
        stencil = [
            (1, bm.exit_radial_tail(HALF_PLANE, BISECTOR, r + d, tol=1e-10)),
            (-8, bm.exit_radial_tail(HALF_PLANE, BISECTOR, r + 0.5 * d, tol=1e-10)),
            (8, bm.exit_radial_tail(HALF_PLANE, BISECTOR, r - 0.5 * d, tol=1e-10)),
            (-1, bm.exit_radial_tail(HALF_PLANE, BISECTOR, r - d, tol=1e-10)),
        ]
        fd = sum(c * v for c, v in stencil) / (6.0 * d)
        density = bm.exit_radial_density(HALF_PLANE, BISECTOR, r)
        assert fd == pytest.approx(density, abs=1e-6)

    def test_too_close_rejected(self):
        with pytest.raises(ConfigError):
            bm.exit_radial_tail(HALF_PLANE, BISECTOR, 1.01)


class TestTailAsymptote:
    def test_half_plane_constant(self):
        asy = bm.bm_tail_asymptote(HALF_PLANE, BISECTOR)
        assert asy.constant == pytest.approx(2.0 / PI, rel=1e-13)
        assert asy.exponent == pytest.approx(1.0, rel=1e-14)

    def test_conformal_constant(self):
        # quarter plane from the bisector: exact tail is (2/pi) atan(1/r^2) * rho^2
        asy = bm.bm_tail_asymptote(QUARTER, Q_START)
        assert asy.constant == pytest.approx(2.0 / PI, rel=1e-12)
        asy2 = bm.bm_tail_asymptote(QUARTER, PolarPoint(3.0, PI / 4))
        assert asy2.constant == pytest.approx(2.0 / PI * 9.0, rel=1e-12)

    def test_positive_everywhere(self):
        for cone, x in (
            (Wedge2D(0.9), PolarPoint(1.0, 0.3)),
            (CircularCone3D(2.0), PolarPoint(2.0, 0.7)),
            (HalfSpace(6), PolarPoint(1.0, 0.2)),
        ):
            assert bm.bm_tail_asymptote(cone, x).constant > 0.0


class TestSurvival:
    def test_half_plane_reflection_law(self):
        for t in (0.25, 1.0, 4.0, 100.0):
            got = bm.survival(HALF_PLANE, BISECTOR, t)
            assert got == pytest.approx(math.erf(1.0 / math.sqrt(2.0 * t)), rel=1e-7)

    def test_small_time_clamp(self):
        assert bm.survival(HALF_PLANE, BISECTOR, 1e-4) == 1.0

    def test_decreasing(self):
        ts = [0.1, 0.5, 1.0, 5.0, 50.0]
        vals = [bm.survival(QUARTER, Q_START, t) for t in ts]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_halfspace3_reflection_law(self):
        cone = CircularCone3D(PI / 2)
        got = bm.survival(cone, PolarPoint(1.0, 0.0), 1.0)
        assert got == pytest.approx(math.erf(1.0 / math.sqrt(2.0)), rel=1e-7)

    def test_asymptote_constant(self):
        assert bm.survival_asymptote(HALF_PLANE, BISECTOR) == pytest.approx(
            math.sqrt(2.0 / PI), rel=1e-12
        )

    def test_asymptote_reached(self):
        c = bm.survival_asymptote(QUARTER, Q_START)
        t = 1e4
        assert t * bm.survival(QUARTER, Q_START, t) == pytest.approx(c, rel=0.02)

    def test_curve_interpolant_accuracy(self):
        curve = bm.survival_curve(HALF_PLANE, BISECTOR)
        ts = np.geomspace(curve.t_lo * 1.1, 1e7, 25)
        want = np.array([math.erf(1.0 / math.sqrt(2.0 * t)) for t in ts])
        got = curve(ts)
        np.testing.assert_allclose(got, want, rtol=2e-5)
        assert curve.seam_mismatch < 1e-4


class TestMeanExitTime:
    def test_infinite_for_wide_wedges(self):
        assert bm.mean_exit_time(HALF_PLANE, BISECTOR) == math.inf
        assert bm.mean_exit_time(QUARTER, Q_START) == math.inf

    def test_quarter_wedge_closed_form(self):
        # E tau = rho^2 (sec a - 1) / 2 on the bisector of a wedge with a < pi/2
        cone = Wedge2D(PI / 4)
        x = PolarPoint(1.0, PI / 8)
        want = (math.sqrt(2.0) - 1.0) / 2.0
        assert bm.mean_exit_time(cone, x) == pytest.approx(want, rel=1e-5)

    def test_diffusive_scaling(self):
        cone = Wedge2D(PI / 4)
        one = bm.mean_exit_time(cone, PolarPoint(1.0, PI / 8))
        two = bm.mean_exit_time(cone, PolarPoint(2.0, PI / 8))
        assert two == pytest.approx(4.0 * one, rel=1e-6)

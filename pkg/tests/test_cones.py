import math

import numpy as np
import pytest
import scipy.special as sc

from coneexit.cones import (
    CircularCone3D,
    HalfSpace,
    PolarPoint,
    Wedge2D,
    boundary_functional,
    format_cone,
    interior_functional,
    legendre_nu_roots,
    legendre_p,
    legendre_p_dx,
    p1,
    p1_exact,
    parse_cone,
    spectrum,
)
from coneexit.errors import ConfigError, UnsupportedSpectrumError

PI = math.pi


class TestParsing:
    def test_round_trips(self):
        for text in ("wedge:a=1.5", "halfspace:n=4", "cone3d:theta0=0.7"):
            assert format_cone(parse_cone(text)).startswith(text.split("=")[0])

    def test_values(self):
        assert parse_cone("wedge:a=1.5") == Wedge2D(1.5)
        assert parse_cone("halfspace:n=3") == HalfSpace(3)
        assert parse_cone("cone3d:theta0=0.7") == CircularCone3D(0.7)

    @pytest.mark.parametrize(
        "bad",
        ["", "wedge", "wedge:b=1", "circle:r=1", "wedge:a=zero", "halfspace:n=x"],
    )
    def test_malformed(self, bad):
        with pytest.raises(ConfigError):
            parse_cone(bad)

    def test_invariants(self):
        with pytest.raises(ConfigError):
            Wedge2D(0.0)
        with pytest.raises(ConfigError):
            Wedge2D(2 * PI)
        with pytest.raises(ConfigError):
            HalfSpace(1)
        with pytest.raises(ConfigError):
            CircularCone3D(PI)
        with pytest.raises(ConfigError):
            PolarPoint(-1.0, 0.5)


class TestLegendre:
    @pytest.mark.parametrize("nu", [0.3, 1.0, 1.77, 4.3, 12.6, 61.2])
    @pytest.mark.parametrize("x", [-0.9, -0.2, 0.0, 0.5, 0.95])
    def test_against_scipy(self, nu, x):
        assert legendre_p(nu, x) == pytest.approx(sc.lpmv(0, nu, x), rel=1e-10, abs=1e-11)

    @pytest.mark.parametrize("nu", [0.6, 1.77, 6.2, 44.0])
    def test_derivative_by_finite_differences(self, nu):
        for x in (-0.5, 0.2, 0.8):
            h = 1e-6
            fd = (legendre_p(nu, x + h) - legendre_p(nu, x - h)) / (2.0 * h)
            assert legendre_p_dx(nu, x) == pytest.approx(fd, rel=2e-5, abs=1e-8)

    def test_hemisphere_roots_are_odd_integers(self):
        roots = legendre_nu_roots(0.0, 4)
        assert roots == pytest.approx([1.0, 3.0, 5.0, 7.0], abs=1e-11)

    def test_root_residuals_and_ordering(self):
        x0 = math.cos(PI / 3)
        roots = legendre_nu_roots(x0, 30)
        assert all(b > a for a, b in zip(roots, roots[1:]))
        assert max(abs(legendre_p(nu, x0)) for nu in roots) < 1e-10

    def test_vector_evaluation(self):
        xs = np.linspace(-0.8, 0.99, 40)
        got = legendre_p(4.25, xs)
        want = sc.lpmv(0, 4.25, xs)
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-11)


class TestWedgeSpectrum:
    def test_half_plane_ground_entry(self):
        sd = spectrum(Wedge2D(PI), 1)
        assert sd.lambdas[0] == pytest.approx(1.0, rel=1e-14)
        assert sd.alphas[0] == pytest.approx(1.0, rel=1e-14)
        assert sd.ps[0] == pytest.approx(1.0, rel=1e-14)

    def test_functional_examples(self):
        a = PI
        assert interior_functional(Wedge2D(a), 1) == pytest.approx(
            (2.0 / PI) * math.sqrt(2.0 * a), rel=1e-13
        )
        assert boundary_functional(Wedge2D(a), 1) == pytest.approx(
            2.0 * math.sqrt(2.0 / a), rel=1e-13
        )
        assert boundary_functional(Wedge2D(a), 2) == 0.0

    def test_generic_aperture_functionals(self):
        a = 2.2
        sd = spectrum(Wedge2D(a), 3)
        assert sd.D[0] == pytest.approx((2.0 / PI) * math.sqrt(2.0 * a), rel=1e-13)
        assert sd.S[0] == pytest.approx(2.0 * math.sqrt(2.0 / a) * (PI / a), rel=1e-13)

    def test_paper_weight_convention(self):
        a = 2 * PI / 3
        unit = spectrum(Wedge2D(a), 2, "unit")
        paper = spectrum(Wedge2D(a), 2, "paper")
        np.testing.assert_allclose(paper.S, unit.S * math.sin(0.5 * a), rtol=1e-14)

    def test_p1_values(self):
        assert p1(Wedge2D(PI / 4)) == pytest.approx(4.0, rel=1e-14)
        assert p1(Wedge2D(2 * PI / 3)) == pytest.approx(1.5, rel=1e-14)
        assert p1(Wedge2D(PI / 2)) == pytest.approx(2.0, rel=1e-14)
        for n in (2, 3, 5, 9):
            assert p1(HalfSpace(n)) == 1.0

    def test_p1_exact_rational_detection(self):
        val, frac = p1_exact(Wedge2D(PI / 2))
        assert frac == 2 and val == 2.0
        val, frac = p1_exact(Wedge2D(2 * PI / 3))
        assert float(frac) == 1.5
        _, frac = p1_exact(Wedge2D(1.234567))
        assert frac is None
        val, frac = p1_exact(HalfSpace(7))
        assert frac == 1


class TestCone3DSpectrum:
    def test_hemisphere_matches_halfspace3(self):
        sd = spectrum(CircularCone3D(PI / 2), 3)
        np.testing.assert_allclose(sd.nus, [1.0, 3.0, 5.0], atol=1e-11)
        np.testing.assert_allclose(sd.lambdas, [2.0, 12.0, 30.0], atol=1e-9)
        assert sd.alphas[0] == pytest.approx(1.5, rel=1e-12)
        assert sd.ps[0] == pytest.approx(1.0, rel=1e-11)
        hs = spectrum(HalfSpace(3), 3)
        np.testing.assert_allclose(hs.lambdas, sd.lambdas, rtol=1e-13)
        np.testing.assert_allclose(hs.S, sd.S, rtol=1e-13)

    @pytest.mark.parametrize(
        "cone",
        [Wedge2D(PI / 3), Wedge2D(4.0), CircularCone3D(PI / 3), CircularCone3D(2.2)],
    )
    def test_alpha_lambda_identity(self, cone):
        sd = spectrum(cone, 8)
        shift = (0.5 * cone.ambient_dim - 1.0) ** 2
        np.testing.assert_allclose(sd.alphas**2 - sd.lambdas, shift, atol=1e-12)
        assert np.all(sd.ps > 0.0)
        assert np.all(np.diff(sd.lambdas) > 0.0)

    @pytest.mark.parametrize("cone", [Wedge2D(1.1), CircularCone3D(PI / 3)])
    def test_weyl_growth_bounded(self, cone):
        # the table holds the axisymmetric subsequence, whose counting is
        # linear in alpha for every family (the (n-1)-power law belongs to
        # the full 2-D spectrum of the cap)
        sd = spectrum(cone, 40)
        ratio = sd.alphas / np.arange(1, 41)
        assert ratio.max() / ratio.min() < 10.0

    @pytest.mark.parametrize(
        "cone", [Wedge2D(2 * PI / 3), CircularCone3D(PI / 3), CircularCone3D(2.2)]
    )
    def test_orthonormality(self, cone):
        sd = spectrum(cone, 6)
        if isinstance(cone, Wedge2D):
            xs, ws = np.polynomial.legendre.leggauss(300)
            thetas = 0.5 * (xs + 1.0) * cone.aperture
            weights = 0.5 * cone.aperture * ws
        else:
            c = math.cos(cone.half_angle)
            xs, ws = np.polynomial.legendre.leggauss(400)
            grid = 0.5 * (xs + 1.0) * (1.0 - c) + c
            thetas = np.arccos(grid)
            weights = 2.0 * PI * 0.5 * (1.0 - c) * ws
        gram = np.array(
            [
                [float(np.sum(sd.m(i, thetas) * sd.m(j, thetas) * weights)) for j in range(1, 7)]
                for i in range(1, 7)
            ]
        )
        assert np.max(np.abs(gram - np.eye(6))) < 1e-8

    def test_ground_state_positive_and_hopf(self):
        for cone in (Wedge2D(2.2), CircularCone3D(PI / 3), HalfSpace(4)):
            sd = spectrum(cone, 1)
            thetas = np.linspace(1e-3, cone.theta_max - 1e-3, 50)
            assert np.all(sd.m(1, thetas) > 0.0)
            assert all(d > 0.0 for d in sd.normal_derivative(1))
            assert sd.S[0] > 0.0

    def test_supported_table_exhaustion(self):
        with pytest.raises(UnsupportedSpectrumError):
            spectrum(HalfSpace(5), 2)
        with pytest.raises(ConfigError):
            spectrum(Wedge2D(1.0), 0)

    def test_halfspace_high_dim_ground_entry(self):
        sd = spectrum(HalfSpace(5), 1)
        assert sd.lambdas[0] == 4.0
        assert sd.ps[0] == pytest.approx(1.0, rel=1e-13)
        # normalization of m_1 = c cos(theta) over the hemisphere by
        # quadrature; the azimuthal factor is the area of S^{n-2} = S^3
        xs, ws = np.polynomial.legendre.leggauss(200)
        phis = 0.25 * PI * (xs + 1.0)
        wq = 0.25 * PI * ws
        omega3 = 2.0 * PI**2
        mass = float(np.sum(sd.m(1, phis) ** 2 * np.sin(phis) ** 3 * wq)) * omega3
        assert mass == pytest.approx(1.0, rel=1e-10)


class TestGeometryHelpers:
    @pytest.mark.parametrize("a", [PI / 4, PI / 2, PI, 2.6, 4.5, 5.9])
    def test_wedge_contains_matches_angle(self, a):
        cone = Wedge2D(a)
        pts = np.random.default_rng(3).normal(size=(5000, 2))
        phi = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * PI)
        ref = (phi > 0) & (phi < a)
        assert np.array_equal(cone.contains(pts), ref)

    def test_cone3d_contains(self):
        cone = CircularCone3D(PI / 3)
        pts = np.random.default_rng(4).normal(size=(5000, 3))
        angle = np.arccos(pts[:, 2] / np.linalg.norm(pts, axis=1))
        assert np.array_equal(cone.contains(pts), angle < PI / 3)

    def test_to_cartesian_and_boundary_theta(self):
        cone = Wedge2D(PI / 2)
        x = cone.to_cartesian(2.0, PI / 4)
        np.testing.assert_allclose(x, [math.sqrt(2.0), math.sqrt(2.0)], rtol=1e-14)
        assert cone.boundary_theta(np.array([[3.0, 0.0]]))[0] == pytest.approx(0.0, abs=1e-12)
        cone3 = CircularCone3D(0.9)
        x3 = cone3.to_cartesian(1.0, 0.9)
        assert cone3.boundary_theta(np.array([x3]))[0] == pytest.approx(0.9, rel=1e-12)

    def test_boundary_distance(self):
        assert Wedge2D(PI).boundary_distance(2.0, PI / 2) == pytest.approx(2.0)
        assert Wedge2D(PI / 2).boundary_distance(1.0, PI / 4) == pytest.approx(
            math.sin(PI / 4)
        )
        assert CircularCone3D(PI / 3).boundary_distance(1.0, 0.0) == pytest.approx(
            math.sin(PI / 3)
        )
        assert HalfSpace(3).boundary_distance(2.0, 0.0) == pytest.approx(2.0)

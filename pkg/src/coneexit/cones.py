"""Cone families and the Dirichlet spectral data of their generating domains.

A generalized cone is the set of rays from the origin through a domain D on
the unit sphere.  Three families are supported: planar wedges, n-dimensional
half-spaces, and 3-D circular cones.  Each exposes the eigenvalues and
L2-normalized eigenfunctions of the Laplace-Beltrami operator on D with
Dirichlet boundary conditions, together with the boundary and interior
functionals that enter every constant of the exit laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ConfigError, NonConvergenceError, RootBracketError, UnsupportedSpectrumError
from .special import log_gamma

__all__ = [
    "Wedge2D",
    "HalfSpace",
    "CircularCone3D",
    "PolarPoint",
    "SpectralData",
    "parse_cone",
    "format_cone",
    "spectrum",
    "p1",
    "p1_exact",
    "boundary_functional",
    "interior_functional",
    "legendre_p",
    "legendre_p_dx",
    "legendre_nu_roots",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Wedge2D:
    """Planar wedge of aperture ``a`` radians, 0 < a < 2*pi."""

    aperture: float

    def __post_init__(self):
        if not 0.0 < self.aperture < TWO_PI:
            raise ConfigError(f"wedge aperture must lie in (0, 2*pi), got {self.aperture!r}")

    @property
    def ambient_dim(self) -> int:
        return 2

    @property
    def theta_max(self) -> float:
        return self.aperture

    def bisector(self) -> float:
        return 0.5 * self.aperture

    def contains(self, points: np.ndarray) -> np.ndarray:
        # cross-product membership; avoids arctan2 in the sampler hot loop
        pts = np.atleast_2d(points)
        x, y = pts[:, 0], pts[:, 1]
        a = self.aperture
        cross_a = y * math.cos(a) - x * math.sin(a)
        if a <= math.pi:
            return (y > 0.0) & (cross_a < 0.0)
        # reflex wedge: complement is the cone between the a-edge and 2*pi
        return ~((y < 0.0) & (cross_a > 0.0)) & ((x != 0.0) | (y != 0.0))

    def to_cartesian(self, rho: float, theta: float) -> np.ndarray:
        return np.array([rho * math.cos(theta), rho * math.sin(theta)])

    def boundary_theta(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)

    def boundary_distance(self, rho: float, theta: float) -> float:
        d0 = rho * math.sin(theta) if theta <= 0.5 * math.pi else rho
        d1 = (
            rho * math.sin(self.aperture - theta)
            if self.aperture - theta <= 0.5 * math.pi
            else rho
        )
        return min(d0, d1)


@dataclass(frozen=True)
class HalfSpace:
    """Half-space {x_n > 0} in R^n, n >= 2; D is a hemisphere."""

    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError(f"half-space dimension must be >= 2, got {self.dim!r}")

    @property
    def ambient_dim(self) -> int:
        return self.dim

    @property
    def theta_max(self) -> float:
        return 0.5 * math.pi

    def bisector(self) -> float:
        return 0.0

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return pts[:, -1] > 0.0

    def to_cartesian(self, rho: float, theta: float) -> np.ndarray:
        x = np.zeros(self.dim)
        x[0] = rho * math.sin(theta)
        x[-1] = rho * math.cos(theta)
        return x

    def boundary_theta(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        norms = np.linalg.norm(pts, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            ct = np.where(norms > 0.0, pts[:, -1] / np.maximum(norms, 1e-300), 0.0)
        return np.arccos(np.clip(ct, -1.0, 1.0))

    def boundary_distance(self, rho: float, theta: float) -> float:
        return rho * math.cos(theta)


@dataclass(frozen=True)
class CircularCone3D:
    """Right circular cone in R^3 with half-angle theta0, 0 < theta0 < pi."""

    half_angle: float

    def __post_init__(self):
        if not 0.0 < self.half_angle < math.pi:
            raise ConfigError(f"cone half-angle must lie in (0, pi), got {self.half_angle!r}")

    @property
    def ambient_dim(self) -> int:
        return 3

    @property
    def theta_max(self) -> float:
        return self.half_angle

    def bisector(self) -> float:
        return 0.0

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        norms = np.linalg.norm(pts, axis=1)
        return pts[:, 2] > norms * math.cos(self.half_angle)

    def to_cartesian(self, rho: float, theta: float) -> np.ndarray:
        return np.array([rho * math.sin(theta), 0.0, rho * math.cos(theta)])

    def boundary_theta(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        norms = np.linalg.norm(pts, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            ct = np.where(norms > 0.0, pts[:, 2] / np.maximum(norms, 1e-300), 1.0)
        return np.arccos(np.clip(ct, -1.0, 1.0))

    def boundary_distance(self, rho: float, theta: float) -> float:
        gap = self.half_angle - theta
        return rho * math.sin(gap) if gap <= 0.5 * math.pi else rho


ConeFamily = Wedge2D | HalfSpace | CircularCone3D


@dataclass(frozen=True)
class PolarPoint:
    """Point (rho, theta): radius and angular coordinate in the closed domain."""

    rho: float
    theta: float

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ConfigError(f"radius must be positive, got {self.rho!r}")


def parse_cone(text: str) -> ConeFamily:
    """Parse a cone specification string.

    Accepted forms: ``wedge:a=<radians>``, ``halfspace:n=<int>``,
    ``cone3d:theta0=<radians>``.
    """
    try:
        kind, _, arg = text.partition(":")
        key, _, value = arg.partition("=")
        kind = kind.strip().lower()
        key = key.strip().lower()
        if kind == "wedge" and key == "a":
            return Wedge2D(float(value))
        if kind == "halfspace" and key == "n":
            return HalfSpace(int(value))
        if kind == "cone3d" and key == "theta0":
            return CircularCone3D(float(value))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"malformed cone spec {text!r}: {exc}") from exc
    raise ConfigError(
        f"unrecognized cone spec {text!r}; expected wedge:a=<rad>, "
        "halfspace:n=<int>, or cone3d:theta0=<rad>"
    )


def format_cone(cone: ConeFamily) -> str:
    if isinstance(cone, Wedge2D):
        return f"wedge:a={cone.aperture!r}"
    if isinstance(cone, HalfSpace):
        return f"halfspace:n={cone.dim}"
    return f"cone3d:theta0={cone.half_angle!r}"


# ---------------------------------------------------------------------------
# Legendre functions of real degree


def _hyp_series_scalar(nu: float, u: float, derivative: bool = False) -> float:
    if derivative:
        term = -nu * (nu + 1.0)
        total = term
        k = 1
    else:
        term = 1.0
        total = 1.0
        k = 0
    small_streak = 0
    while True:
        coeff = (k - nu) * (k + nu + 1.0) / ((k + 1.0) ** 2)
        if derivative:
            term *= coeff * u * ((k + 1.0) / k)
        else:
            term *= coeff * u
        k += 1
        total += term
        if k > nu and abs(term) <= 1e-16 * max(abs(total), 1e-30):
            small_streak += 1
            if small_streak >= 2:
                return total
        else:
            small_streak = 0
        if k > 200000:
            raise NonConvergenceError(f"Legendre series stalled for nu={nu}")


def _hyp_series(nu: float, u, derivative: bool = False):
    """F(-nu, nu+1; 1; u) or its u-derivative, adaptively truncated.

    Terms are added until they fall below 1e-16 of the running partial sum
    (twice in a row, past the coefficient growth region).  ``u`` may be a
    scalar or an ndarray with entries in [0, 1).
    """
    if np.isscalar(u) or np.asarray(u).ndim == 0:
        return _hyp_series_scalar(nu, float(u), derivative)
    u_arr = np.asarray(u, dtype=float)
    if derivative:
        term = np.full_like(u_arr, -nu * (nu + 1.0))
        total = term.copy()
        k = 1
    else:
        term = np.ones_like(u_arr)
        total = np.ones_like(u_arr)
        k = 0
    small_streak = 0
    while True:
        coeff = (k - nu) * (k + nu + 1.0) / ((k + 1.0) ** 2)
        if derivative:
            term = term * coeff * u_arr * ((k + 1.0) / k)
        else:
            term = term * coeff * u_arr
        k += 1
        total = total + term
        scale = np.maximum(np.abs(total), 1e-30)
        if k > nu and np.all(np.abs(term) <= 1e-16 * scale):
            small_streak += 1
            if small_streak >= 2:
                return total
        else:
            small_streak = 0
        if k > 200000:
            raise NonConvergenceError(f"Legendre series stalled for nu={nu}")


def _legendre_chain(nu: float, x_arr):
    """(P_nu(x), P_{nu-1}(x)) for nu >= 1, stable for large degrees.

    The hypergeometric series suffers catastrophic cancellation once the
    degree exceeds ~15, so it is only used for the fractional base degree;
    the rest of the way is covered by the three-term recurrence in the
    degree, which is forward-stable for oscillatory P_nu on (-1, 1).
    """
    steps = int(math.floor(nu - 1.0 + 1e-13))
    mu = nu - 1.0 - steps  # base degree in [0, 1)
    u = 0.5 * (1.0 - x_arr)
    p_prev = _hyp_series(mu, u)
    p_cur = _hyp_series(mu + 1.0, u)
    m = mu + 1.0
    for _ in range(steps):
        p_prev, p_cur = p_cur, ((2.0 * m + 1.0) * x_arr * p_cur - m * p_prev) / (m + 1.0)
        m += 1.0
    return p_cur, p_prev


def legendre_p(nu: float, x):
    """Legendre function P_nu(x) of real degree nu >= 0, -1 < x <= 1."""
    scalar = np.isscalar(x) or np.asarray(x).ndim == 0
    x_val = float(x) if scalar else np.asarray(x, dtype=float)
    if np.any(np.asarray(x_val) <= -1.0) or np.any(np.asarray(x_val) > 1.0):
        raise ValueError("argument must lie in (-1, 1]")
    if nu < 1.0:
        out = _hyp_series(nu, 0.5 * (1.0 - x_val))
    else:
        out, _ = _legendre_chain(nu, x_val)
    return float(out) if scalar else out


def legendre_p_dx(nu: float, x):
    """Derivative dP_nu/dx at x, same domain as :func:`legendre_p`."""
    scalar = np.isscalar(x) or np.asarray(x).ndim == 0
    x_val = float(x) if scalar else np.asarray(x, dtype=float)
    if np.any(np.asarray(x_val) <= -1.0) or np.any(np.asarray(x_val) > 1.0):
        raise ValueError("argument must lie in (-1, 1]")
    if nu < 1.0:
        out = -0.5 * _hyp_series(nu, 0.5 * (1.0 - x_val), derivative=True)
    else:
        # (1 - x^2) P_nu'(x) = nu [P_{nu-1}(x) - x P_nu(x)]
        p_cur, p_prev = _legendre_chain(nu, x_val)
        out = nu * (p_prev - x_val * p_cur) / (1.0 - x_val * x_val)
    return float(out) if scalar else out


def legendre_nu_roots(x0: float, count: int, scan_limit: float = 20000.0) -> list[float]:
    """First ``count`` positive degrees nu with P_nu(x0) = 0.

    Brackets by stepping in nu, then refines by bisection with a final
    secant polish.  Raises RootBracketError if the scan range is exhausted.
    """
    theta0 = math.acos(x0)
    step = min(1.0, 0.45 * math.pi / theta0)
    roots: list[float] = []
    nu_lo = 0.0
    f_lo = legendre_p(0.0, x0)  # equals 1
    nu = 0.0
    while len(roots) < count:
        nu_next = nu + step
        if nu_next > scan_limit:
            raise RootBracketError(
                f"exhausted bracket scan at nu={nu:.1f} after {len(roots)} roots "
                f"(requested {count}) for cos(theta0)={x0!r}"
            )
        f_next = legendre_p(nu_next, x0)
        if f_lo == 0.0:
            roots.append(nu)
        elif f_lo * f_next < 0.0:
            roots.append(_refine_root(x0, nu, nu_next, f_lo, f_next))
        nu, f_lo = nu_next, f_next
    return roots


def _refine_root(x0: float, lo: float, hi: float, f_lo: float, f_hi: float) -> float:
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        f_mid = legendre_p(mid, x0)
        if f_mid == 0.0:
            return mid
        if f_lo * f_mid < 0.0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
        if hi - lo < 1e-13 * (1.0 + hi):
            break
    # secant polish
    if f_hi != f_lo:
        return lo - f_lo * (hi - lo) / (f_hi - f_lo)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Spectral data


class SpectralData:
    """First J axisymmetric Dirichlet spectral entries of a cone family.

    Treat instances as immutable values; all fields are fixed at
    construction.  Entry indices ``j`` are 1-based throughout.
    """

    def __init__(self, cone, lambdas, S, D, m_eval, dn_eval, convention):
        self.cone = cone
        self.n = cone.ambient_dim
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.J = self.lambdas.size
        half_shift = 0.5 * self.n - 1.0
        self.alphas = np.sqrt(self.lambdas + half_shift**2)
        self.ps = self.alphas - half_shift
        self.S = np.asarray(S, dtype=float)
        self.D = np.asarray(D, dtype=float)
        self._m_eval = m_eval
        self._dn_eval = dn_eval
        self.convention = convention

    def m(self, j: int, theta):
        """L2(D)-normalized eigenfunction m_j at angular coordinate theta."""
        if not 1 <= j <= self.J:
            raise IndexError(f"spectral entry {j} outside 1..{self.J}")
        return self._m_eval(j, theta)

    def m_all(self, theta: float) -> np.ndarray:
        """Vector (m_1(theta), ..., m_J(theta))."""
        return np.array([self._m_eval(j, theta) for j in range(1, self.J + 1)])

    def normal_derivative(self, j: int):
        """Inward normal derivative of m_j on each boundary component."""
        if not 1 <= j <= self.J:
            raise IndexError(f"spectral entry {j} outside 1..{self.J}")
        return self._dn_eval(j)


def _wedge_spectrum(cone: Wedge2D, J: int, convention: str) -> SpectralData:
    a = cone.aperture
    js = np.arange(1, J + 1, dtype=float)
    lambdas = (js * math.pi / a) ** 2
    amp = math.sqrt(2.0 / a)
    freq = math.pi / a

    def m_eval(j, theta):
        return amp * np.sin(j * freq * np.asarray(theta, dtype=float))

    def dn_eval(j):
        # inward derivatives at the two edges theta = 0 and theta = a
        d0 = amp * j * freq
        d1 = amp * j * freq * (-1.0) ** (j + 1)
        return (d0, d1)

    weight = math.sin(0.5 * a) if convention == "paper" else 1.0
    S = np.array([weight * sum(dn_eval(int(j))) for j in js])
    D = np.array(
        [amp * (a / (j * math.pi)) * (1.0 - (-1.0) ** int(j)) for j in js]
    )
    return SpectralData(cone, lambdas, S, D, m_eval, dn_eval, convention)


def _cone3d_spectrum(cone: CircularCone3D, J: int, convention: str) -> SpectralData:
    c = math.cos(cone.half_angle)
    sin0 = math.sin(cone.half_angle)
    nus = legendre_nu_roots(c, J)
    norms = []
    dps = []
    for idx, nu in enumerate(nus):
        # the j-th eigenfunction has ~j half-oscillations on the cap
        nodes = max(80, 48 + 8 * (idx + 1))
        x_gl, w_gl = np.polynomial.legendre.leggauss(nodes)
        xs = 0.5 * (x_gl + 1.0) * (1.0 - c) + c
        ws = 0.5 * (1.0 - c) * w_gl
        sq = float(np.sum(legendre_p(nu, xs) ** 2 * ws))
        norms.append(1.0 / math.sqrt(2.0 * math.pi * sq))
        dps.append(legendre_p_dx(nu, c))
    nus_arr = np.array(nus)
    norms_arr = np.array(norms)
    dps_arr = np.array(dps)
    lambdas = nus_arr * (nus_arr + 1.0)

    def m_eval(j, theta):
        th = np.asarray(theta, dtype=float)
        return norms_arr[j - 1] * legendre_p(nus_arr[j - 1], np.cos(th))

    def dn_eval(j):
        # inward normal on the cap boundary points toward decreasing theta
        return (norms_arr[j - 1] * sin0 * dps_arr[j - 1],)

    # boundary functional against the cone's true lateral surface measure:
    # sigma(dy) = r^{n-2} (arclength on the boundary circle) dr, so the
    # angular weight sin(theta0) pairs with the unit-azimuth measure 2*pi
    S = 2.0 * math.pi * sin0**2 * norms_arr * dps_arr
    D = 2.0 * math.pi * norms_arr * (1.0 - c * c) * dps_arr / lambdas
    data = SpectralData(cone, lambdas, S, D, m_eval, dn_eval, convention)
    data.nus = nus_arr
    return data


def _halfspace_first_entry(n: int):
    # m_1 = c_n cos(theta); closed-form normalization over the hemisphere
    log_omega = math.log(2.0) + 0.5 * (n - 1) * math.log(math.pi) - log_gamma(0.5 * (n - 1))
    log_int = (
        log_gamma(1.5)
        + log_gamma(0.5 * (n - 1))
        - log_gamma(0.5 * n + 1.0)
        - math.log(2.0)
    )
    c_n = math.exp(-0.5 * (log_omega + log_int))
    omega = math.exp(log_omega)
    return c_n, omega


def _halfspace_spectrum(cone: HalfSpace, J: int, convention: str) -> SpectralData:
    n = cone.dim
    if n == 3:
        base = _cone3d_spectrum(CircularCone3D(0.5 * math.pi), J, convention)
        return SpectralData(
            cone, base.lambdas, base.S, base.D, base._m_eval, base._dn_eval, convention
        )
    if n == 2:
        # hemicircle arc; theta measured from the axis, edge at theta = pi/2
        js = np.arange(1, J + 1, dtype=float)
        lambdas = js**2
        amp = math.sqrt(2.0 / math.pi)

        def m_eval(j, theta):
            th = np.asarray(theta, dtype=float)
            return amp * np.sin(j * (th + 0.5 * math.pi))

        def dn_eval(j):
            d0 = amp * j
            d1 = amp * j * (-1.0) ** (j + 1)
            return (d0, d1)

        S = np.array([sum(dn_eval(int(j))) for j in js])
        D = np.array([amp * (2.0 / j) if int(j) % 2 else 0.0 for j in js])
        return SpectralData(cone, lambdas, S, D, m_eval, dn_eval, convention)
    # n >= 4: only the ground entry is tabulated
    if J > 1:
        raise UnsupportedSpectrumError(
            f"half-space spectra with n={n} support only j=1 (requested J={J})"
        )
    c_n, omega = _halfspace_first_entry(n)

    def m_eval(j, theta):
        return c_n * np.cos(np.asarray(theta, dtype=float))

    def dn_eval(j):
        return (c_n,)

    lambdas = np.array([float(n - 1)])
    S = np.array([c_n * omega])
    D = np.array([c_n * omega / (n - 1.0)])
    return SpectralData(cone, lambdas, S, D, m_eval, dn_eval, convention)


@lru_cache(maxsize=256)
def spectrum(cone: ConeFamily, J: int, convention: str = "unit") -> SpectralData:
    """First J axisymmetric spectral entries of the cone family.

    ``convention`` selects the boundary weight for n = 2: ``"unit"`` uses
    w = 1 (the default, validated against the exact half-plane law) and
    ``"paper"`` uses the literal w = sin(a/2).  For n >= 3 the weight is
    sin(theta0) under either name.
    """
    if J < 1:
        raise ConfigError(f"J must be >= 1, got {J!r}")
    if convention not in ("unit", "paper"):
        raise ConfigError(f"unknown boundary weight convention {convention!r}")
    if isinstance(cone, Wedge2D):
        return _wedge_spectrum(cone, J, convention)
    if isinstance(cone, CircularCone3D):
        return _cone3d_spectrum(cone, J, convention)
    if isinstance(cone, HalfSpace):
        return _halfspace_spectrum(cone, J, convention)
    raise ConfigError(f"unknown cone family {cone!r}")


def p1(cone: ConeFamily) -> float:
    """Harmonic-measure tail exponent p_1 of the cone."""
    if isinstance(cone, Wedge2D):
        return math.pi / cone.aperture
    if isinstance(cone, HalfSpace):
        return 1.0
    return float(spectrum(cone, 1).ps[0])


def p1_exact(cone: ConeFamily):
    """p_1 as (float, Fraction or None).

    The Fraction is set when p_1 is exactly rational: half-spaces always,
    and wedges whose aperture is a rational multiple of pi (detected to
    1e-12 relative).  Regime classification uses the Fraction when present.
    """
    if isinstance(cone, HalfSpace):
        return 1.0, Fraction(1)
    if isinstance(cone, Wedge2D):
        ratio = Fraction(cone.aperture / math.pi).limit_denominator(10**6)
        if ratio > 0 and abs(cone.aperture - float(ratio) * math.pi) < 1e-12 * cone.aperture:
            frac = Fraction(ratio.denominator, ratio.numerator)
            return float(frac), frac
        return math.pi / cone.aperture, None
    return p1(cone), None


def boundary_functional(cone: ConeFamily, j: int, convention: str = "unit") -> float:
    """S_j: weighted boundary integral of the inward normal derivative of m_j."""
    return float(spectrum(cone, j, convention).S[j - 1])


def interior_functional(cone: ConeFamily, j: int) -> float:
    """D_j: integral of m_j over the generating domain."""
    return float(spectrum(cone, j).D[j - 1])

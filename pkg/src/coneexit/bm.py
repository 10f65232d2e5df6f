"""Brownian-motion laws in a cone.

Heat kernel of the killed motion, joint exit (time, place) law, radial
exit-place density and tail with their asymptotics, the survival function
with its polynomial decay constant, and the mean exit time.  Everything is
an eigenfunction series over the cone's spectral data; truncation is
controlled at runtime by the geometric envelope of the terms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from .cones import ConeFamily, HalfSpace, PolarPoint, Wedge2D, p1, p1_exact, spectrum
from .errors import ConfigError, NearDiagonalError, NonConvergenceError
from .special import (
    BesselOrderSet,
    QuadratureSpec,
    contraction_ratio,
    integrate_adaptive,
    log_gamma,
)

__all__ = [
    "TailAsymptote",
    "RadialLaw",
    "SurvivalCurve",
    "heat_kernel",
    "joint_exit_density",
    "joint_exit_radial_density",
    "exit_radial_density",
    "exit_radial_density_bridged",
    "exit_radial_tail",
    "bm_tail_asymptote",
    "radial_law",
    "survival",
    "survival_asymptote",
    "survival_curve",
    "mean_exit_time",
    "series_cap",
]

DEFAULT_EPS_MIN = 1e-3

# Gaussian factor cutoff: exp(-42) ~ 5e-19, below double-precision relevance
_GAUSS_CUT = 84.0


def series_cap(cone: ConeFamily) -> int:
    """Maximum number of spectral terms used for the family."""
    if isinstance(cone, Wedge2D):
        return 200
    if isinstance(cone, HalfSpace):
        return 200 if cone.dim == 2 else (60 if cone.dim == 3 else 1)
    return 60


def _block_schedule(cap: int) -> list[int]:
    js = [8, 16, 32, 64, 128]
    out = [j for j in js if j < cap]
    out.append(cap)
    return out


@lru_cache(maxsize=64)
def _order_blocks(cone: ConeFamily, convention: str):
    """[(lo, hi, BesselOrderSet)] slices covering the full spectral table."""
    cap = series_cap(cone)
    sd = spectrum(cone, cap, convention)
    blocks = []
    lo = 0
    for hi in _block_schedule(cap):
        blocks.append((lo, hi, BesselOrderSet(sd.alphas[lo:hi])))
        lo = hi
    return sd, blocks


def _sum_scaled_bessel(cone, convention, z, weights, tol):
    """sum_j weights[j] * e^{-z} I_{alpha_j}(z), truncated adaptively.

    Blocks of orders are added until the largest term in the newest block
    falls below tol times the running total and the order has passed the
    Bessel hump (alpha > z); exhausting the table raises.
    """
    sd, blocks = _order_blocks(cone, convention)
    total = 0.0
    peak = 0.0
    for lo, hi, oset in blocks:
        terms = weights[lo:hi] * oset.ive(z)
        total += float(terms.sum())
        block_max = float(np.max(np.abs(terms))) if terms.size else 0.0
        peak = max(peak, block_max)
        scale = max(abs(total), 1e-6 * peak, 1e-300)
        alpha_last = sd.alphas[hi - 1]
        if alpha_last >= z:
            # past the Bessel hump: orders beyond decay super-geometrically
            if block_max <= tol * scale:
                return total
        else:
            # I_alpha(z) decreases in alpha, so the orders still short of the
            # hump are each bounded by the last computed magnitude (with a
            # polynomial allowance for weight growth)
            spacing = sd.alphas[-1] - sd.alphas[-2] if sd.J > 1 else 1.0
            count = max((z - alpha_last) / spacing, 1.0)
            if block_max * count * (z / alpha_last) ** 2 <= tol * scale:
                return total
    if sd.J == 1 and isinstance(cone, HalfSpace):
        return total  # single tabulated entry; remainder not representable
    raise NonConvergenceError(
        f"spectral series not converged at z={z:.4g} with {sd.J} terms "
        f"(last block max {block_max:.3e} vs scale {scale:.3e})",
        estimate=total,
    )


@lru_cache(maxsize=4096)
def _pair_weights(cone, convention, theta, eta):
    sd, _ = _order_blocks(cone, convention)
    return np.array([sd.m(j, theta) * sd.m(j, eta) for j in range(1, sd.J + 1)])


@lru_cache(maxsize=4096)
def _boundary_weights(cone, convention, theta):
    """S_j m_j(theta) for j = 1..J."""
    sd, _ = _order_blocks(cone, convention)
    return sd.S * sd.m_all(theta)


@lru_cache(maxsize=4096)
def _interior_weights(cone, convention, theta):
    """D_j m_j(theta) for j = 1..J."""
    sd, _ = _order_blocks(cone, convention)
    return sd.D * sd.m_all(theta)


@lru_cache(maxsize=4096)
def _edge_weights(cone, convention, theta, component):
    """(d m_j / d n at boundary component) * m_j(theta)."""
    sd, _ = _order_blocks(cone, convention)
    return np.array(
        [sd.normal_derivative(j)[component] * sd.m(j, theta) for j in range(1, sd.J + 1)]
    )


def _check_interior(cone: ConeFamily, point: PolarPoint) -> None:
    # the axis (theta = 0) is interior except for wedges, whose angular
    # domain has boundary at both ends
    lo_ok = point.theta > 0.0 if isinstance(cone, Wedge2D) else point.theta >= 0.0
    if not (lo_ok and point.theta < cone.theta_max):
        raise ConfigError(
            f"angular coordinate {point.theta!r} is not interior to the cone "
            f"(angular domain up to {cone.theta_max!r})"
        )


def heat_kernel(
    cone: ConeFamily,
    t: float,
    x: PolarPoint,
    y: PolarPoint,
    tol: float = 1e-10,
    convention: str = "unit",
) -> float:
    """Transition density of Brownian motion killed at the cone boundary.

    Symmetric in (x, y); nonnegative (tiny negative round-off is clamped
    to zero with a warning).
    """
    if t <= 0.0:
        raise ConfigError(f"time must be positive, got {t!r}")
    _check_interior(cone, x)
    _check_interior(cone, y)
    rho, r = x.rho, y.rho
    gauss = (rho - r) ** 2 / (2.0 * t)
    if gauss > _GAUSS_CUT:
        return 0.0
    n = cone.ambient_dim
    weights = _pair_weights(cone, convention, x.theta, y.theta)
    z = rho * r / t
    s = _sum_scaled_bessel(cone, convention, z, weights, tol)
    value = (rho * r) ** (1.0 - 0.5 * n) / t * math.exp(-gauss) * s
    if value < 0.0:
        if value < -1e-8 * abs(s):
            warnings.warn(
                f"heat kernel clamped a non-tiny negative value {value:.3e}",
                RuntimeWarning,
                stacklevel=2,
            )
        value = 0.0
    return value


def _boundary_component(cone: ConeFamily, theta: float) -> int:
    """Which boundary component an angular coordinate sits on."""
    if isinstance(cone, Wedge2D):
        if abs(theta) <= 1e-9:
            return 0
        if abs(theta - cone.aperture) <= 1e-9 * max(1.0, cone.aperture):
            return 1
        raise ConfigError(f"theta={theta!r} is not on the wedge boundary")
    if abs(theta - cone.theta_max) <= 1e-9 * max(1.0, cone.theta_max):
        return 0
    raise ConfigError(f"theta={theta!r} is not on the cone boundary")


def joint_exit_density(
    cone: ConeFamily,
    t: float,
    x: PolarPoint,
    y: PolarPoint,
    tol: float = 1e-10,
    convention: str = "unit",
) -> float:
    """Joint density of (exit place, exit time) against sigma(dy) dt.

    ``y`` must lie on the boundary (away from the vertex); the value is the
    half inward-normal derivative of the heat kernel there.
    """
    if t <= 0.0:
        raise ConfigError(f"time must be positive, got {t!r}")
    _check_interior(cone, x)
    component = _boundary_component(cone, y.theta)
    rho, r = x.rho, y.rho
    gauss = (rho - r) ** 2 / (2.0 * t)
    if gauss > _GAUSS_CUT:
        return 0.0
    n = cone.ambient_dim
    weights = _edge_weights(cone, convention, x.theta, component)
    s = _sum_scaled_bessel(cone, convention, rho * r / t, weights, tol)
    value = 0.5 / r * (rho * r) ** (1.0 - 0.5 * n) / t * math.exp(-gauss) * s
    return max(value, 0.0)


def joint_exit_radial_density(
    cone: ConeFamily,
    t: float,
    x: PolarPoint,
    r: float,
    tol: float = 1e-10,
    convention: str = "unit",
) -> float:
    """Joint density of (exit radius, exit time): the boundary integral of
    the joint exit density over the sphere-section at radius r."""
    if t <= 0.0 or r <= 0.0:
        raise ConfigError("time and radius must be positive")
    _check_interior(cone, x)
    rho = x.rho
    gauss = (rho - r) ** 2 / (2.0 * t)
    if gauss > _GAUSS_CUT:
        return 0.0
    n = cone.ambient_dim
    weights = _boundary_weights(cone, convention, x.theta)
    s = _sum_scaled_bessel(cone, convention, rho * r / t, weights, tol)
    value = (
        0.5
        * r ** (0.5 * n - 2.0)
        * rho ** (1.0 - 0.5 * n)
        / t
        * math.exp(-gauss)
        * s
    )
    return max(value, 0.0)


@dataclass(frozen=True)
class TailAsymptote:
    """Power-law descriptor: constant * r^{-exponent} (times log r if set)."""

    constant: float
    exponent: float
    log_correction: bool = False

    def __call__(self, r: float) -> float:
        value = self.constant * r ** (-self.exponent)
        return value * math.log(r) if self.log_correction else value


def _radial_series(cone, convention, x, r, tol, eps_min, want_terms=False):
    rho = x.rho
    q = contraction_ratio(rho, r)
    gam = 2.0 * q / (1.0 + q * q)
    if gam > 1.0 - eps_min:
        raise NearDiagonalError(
            f"gamma={gam:.6f} exceeds 1 - eps_min (r={r!r} too close to rho={rho!r})"
        )
    sd, _ = _order_blocks(cone, convention)
    weights = _boundary_weights(cone, convention, x.theta)
    log_q = math.log(q)
    total = 0.0
    used = 0
    small_streak = 0
    terms = []
    for j in range(sd.J):
        term = weights[j] / sd.alphas[j] * math.exp(sd.alphas[j] * log_q)
        total += term
        used = j + 1
        if want_terms:
            terms.append(term)
        if abs(term) <= tol * max(abs(total), 1e-300):
            small_streak += 1
            if small_streak >= 3:
                break
        else:
            small_streak = 0
    else:
        raise NonConvergenceError(
            f"radial series not converged with {sd.J} terms at r={r!r} (q={q:.4f})",
            estimate=total,
        )
    # geometric remainder envelope in q; the weight scale looks back past
    # parity zeros (symmetric starts annihilate alternate terms)
    spacing = sd.alphas[-1] - sd.alphas[-2] if sd.J > 1 else 1.0
    decay = math.exp(spacing * log_q)
    look = range(max(used - 4, 0), used)
    w_scale = max(abs(weights[j]) / sd.alphas[j] for j in look)
    envelope = w_scale * math.exp(sd.alphas[used - 1] * log_q)
    remainder = envelope * decay / max(1.0 - decay, 1e-12)
    return total, used, remainder, terms


def exit_radial_density(
    cone: ConeFamily,
    x: PolarPoint,
    r: float,
    tol: float = 1e-10,
    eps_min: float = DEFAULT_EPS_MIN,
    convention: str = "unit",
    return_diagnostics: bool = False,
):
    """Density of |exit place| at radius r (series form, r away from rho).

    Raises NearDiagonalError when the contraction variable exceeds
    1 - eps_min; use :func:`exit_radial_density_bridged` there.
    """
    if r <= 0.0:
        raise ConfigError(f"radius must be positive, got {r!r}")
    _check_interior(cone, x)
    n = cone.ambient_dim
    total, used, remainder, _ = _radial_series(cone, convention, x, r, tol, eps_min)
    value = 0.5 * r ** (0.5 * n - 2.0) * x.rho ** (1.0 - 0.5 * n) * total
    value = max(value, 0.0)
    if return_diagnostics:
        scale = 0.5 * r ** (0.5 * n - 2.0) * x.rho ** (1.0 - 0.5 * n)
        return value, {"terms_used": used, "remainder_bound": abs(scale) * remainder}
    return value


def exit_radial_density_bridged(
    cone: ConeFamily,
    x: PolarPoint,
    r: float,
    tol: float = 1e-8,
    eps_min: float = DEFAULT_EPS_MIN,
    convention: str = "unit",
) -> float:
    """Radial exit density valid across the r = rho diagonal.

    Outside the excluded band this is the series; inside it (or when the
    contraction ratio sits so close to 1 that the spectral cap cannot meet
    the tolerance) the density is recovered by integrating the joint
    (radius, time) density over time, where the diagonal is a removable gap.
    """
    try:
        return exit_radial_density(cone, x, r, tol, eps_min, convention)
    except (NearDiagonalError, NonConvergenceError):
        pass
    sd, _ = _order_blocks(cone, convention)
    alpha_max = float(sd.alphas[-1])
    rho = x.rho
    t_floor = rho * r / (0.6 * alpha_max)
    d = cone.boundary_distance(rho, x.theta)
    neglected = math.exp(-d * d / (2.0 * t_floor))
    if neglected > 0.1 * tol:
        raise NonConvergenceError(
            f"cannot bridge the diagonal: early-exit mass bound {neglected:.2e} "
            f"exceeds the error budget at t_floor={t_floor:.3e}"
        )

    def integrand(t):
        return joint_exit_radial_density(cone, t, x, r, tol=1e-3 * tol, convention=convention)

    spec = QuadratureSpec(abs_tol=1e-300, rel_tol=0.1 * tol, max_subdivisions=400)
    scale = rho * r
    cuts = [scale * f for f in (0.01, 0.1, 1.0, 10.0, 100.0)]
    value, _ = integrate_adaptive(integrand, t_floor, math.inf, spec, points=cuts)
    return max(value, 0.0)


def bm_tail_asymptote(
    cone: ConeFamily, x: PolarPoint, convention: str = "unit"
) -> TailAsymptote:
    """Exact power-law asymptote of P(|exit| > r).

    The constant is rho^{p1} S_1 m_1(theta) / (2 p1 alpha_1), the r -> inf
    limit of the leading series term integrated over (r, inf).
    """
    _check_interior(cone, x)
    sd = spectrum(cone, 1, convention)
    p = float(sd.ps[0])
    alpha1 = float(sd.alphas[0])
    constant = x.rho**p * float(sd.S[0]) * float(sd.m(1, x.theta)) / (2.0 * p * alpha1)
    return TailAsymptote(constant=constant, exponent=p)


def exit_radial_tail(
    cone: ConeFamily,
    x: PolarPoint,
    r: float,
    tol: float = 1e-9,
    eps_min: float = DEFAULT_EPS_MIN,
    convention: str = "unit",
) -> float:
    """P(|exit place| > r) for r beyond the diagonal band.

    Adaptive quadrature of the radial density up to the completion radius
    R* = max(50 rho, 4 r), then the tail asymptote beyond R*.
    """
    rho = x.rho
    delta_min = math.sqrt(2.0 * eps_min)
    if r <= rho * (1.0 + delta_min):
        raise ConfigError(
            f"tail requires r > rho (1 + {delta_min:.4f}); got r={r!r}, rho={rho!r}"
        )
    r_star = max(50.0 * rho, 4.0 * r)
    spec = QuadratureSpec(abs_tol=1e-300, rel_tol=0.1 * tol, max_subdivisions=600)
    value, _ = integrate_adaptive(
        lambda s: exit_radial_density(cone, x, s, tol=1e-2 * tol, convention=convention),
        r,
        r_star,
        spec,
    )
    asym = bm_tail_asymptote(cone, x, convention)
    return value + asym(r_star)


def _tail_series(cone, x, r, convention="unit", tol=1e-12):
    """Termwise-exact tail sum_j S_j m_j rho^{p_j} r^{-p_j} / (2 alpha_j p_j).

    Valid for r > rho; used as an independent oracle for the quadrature
    route (the integral of each series term is exact in closed form).
    """
    sd, _ = _order_blocks(cone, convention)
    weights = _boundary_weights(cone, convention, x.theta)
    total = 0.0
    streak = 0
    for j in range(sd.J):
        term = (
            weights[j]
            / (2.0 * sd.alphas[j] * sd.ps[j])
            * math.exp(sd.ps[j] * math.log(x.rho / r))
        )
        total += term
        if abs(term) <= tol * max(abs(total), 1e-300):
            streak += 1
            if streak >= 3:
                return total
        else:
            streak = 0
    raise NonConvergenceError(f"tail series not converged at r={r!r}", estimate=total)


@dataclass(frozen=True)
class RadialLaw:
    """Exit-place magnitude law with its large-r asymptote."""

    cone: ConeFamily
    start: PolarPoint
    asymptote: TailAsymptote
    eps_min: float = DEFAULT_EPS_MIN
    convention: str = "unit"

    def density(self, r: float, tol: float = 1e-8) -> float:
        return exit_radial_density_bridged(
            self.cone, self.start, r, tol, self.eps_min, self.convention
        )

    def tail(self, r: float, tol: float = 1e-9) -> float:
        return exit_radial_tail(
            self.cone, self.start, r, tol, self.eps_min, self.convention
        )


def radial_law(cone: ConeFamily, x: PolarPoint, convention: str = "unit") -> RadialLaw:
    return RadialLaw(cone, x, bm_tail_asymptote(cone, x, convention))


# ---------------------------------------------------------------------------
# Survival


def _survival_t_min(cone: ConeFamily, rho: float) -> float:
    """Smallest time at which the spectral cap resolves the radial integrand."""
    sd, _ = _order_blocks(cone, "unit")
    alpha_max = float(sd.alphas[-1])
    root = 0.5 * (-math.sqrt(_GAUSS_CUT) + math.sqrt(_GAUSS_CUT + 3.6 * alpha_max))
    return rho * rho / (root * root)


def survival(
    cone: ConeFamily,
    x: PolarPoint,
    t: float,
    tol: float = 1e-8,
    convention: str = "unit",
) -> float:
    """P_x(exit time > t), by radial quadrature of the heat kernel.

    The angular integral collapses onto the interior functionals D_j.
    """
    if t <= 0.0:
        raise ConfigError(f"time must be positive, got {t!r}")
    _check_interior(cone, x)
    rho = x.rho
    n = cone.ambient_dim
    t_min = _survival_t_min(cone, rho)
    if t < t_min:
        d = cone.boundary_distance(rho, x.theta)
        bound = math.exp(-d * d / (2.0 * t))
        if bound > 0.1 * tol:
            raise NonConvergenceError(
                f"survival at t={t!r} needs more than the spectral cap: "
                f"early-exit bound {bound:.2e} not below tolerance"
            )
        return 1.0
    weights = _interior_weights(cone, convention, x.theta)

    def integrand(r):
        gauss = (rho - r) ** 2 / (2.0 * t)
        if gauss > _GAUSS_CUT or r <= 0.0:
            return 0.0
        s = _sum_scaled_bessel(cone, convention, rho * r / t, weights, 1e-3 * tol)
        return (rho * r) ** (1.0 - 0.5 * n) / t * math.exp(-gauss) * s * r ** (n - 1.0)

    spec = QuadratureSpec(abs_tol=1e-300, rel_tol=0.1 * tol, max_subdivisions=600)
    value, _ = integrate_adaptive(integrand, 0.0, math.inf, spec)
    return min(max(value, 0.0), 1.0)


def survival_asymptote(
    cone: ConeFamily, x: PolarPoint, convention: str = "unit"
) -> float:
    """C(x): the constant in P_x(tau > t) ~ C(x) t^{-p1/2}."""
    _check_interior(cone, x)
    sd = spectrum(cone, 1, convention)
    p = float(sd.ps[0])
    n = cone.ambient_dim
    gammas = log_gamma(0.5 * (p + n)) - log_gamma(p + 0.5 * n)
    return (
        (0.5 * x.rho**2) ** (0.5 * p)
        * math.exp(gammas)
        * float(sd.D[0])
        * float(sd.m(1, x.theta))
    )


class SurvivalCurve:
    """t -> P_x(tau > t), interpolated between exact quadrature nodes.

    Below ``t_lo`` the curve is 1 to within a documented exponential bound;
    beyond ``t_hi`` the polynomial asymptote C(x) t^{-p1/2} takes over.
    """

    def __init__(self, cone, x, convention="unit", tol=1e-8, points_per_decade=24):
        _check_interior(cone, x)
        self.cone = cone
        self.start = x
        self.constant = survival_asymptote(cone, x, convention)
        self.exponent = 0.5 * p1(cone)
        rho = x.rho
        d = cone.boundary_distance(rho, x.theta)
        self.t_lo = max(d * d / 70.0, 1.02 * _survival_t_min(cone, rho))
        if math.exp(-d * d / (2.0 * self.t_lo)) > 1e-10:
            raise NonConvergenceError(
                "survival curve cannot certify the small-time clamp for this start"
            )
        self.t_hi = 1e6 * rho * rho
        decades = math.log10(self.t_hi / self.t_lo)
        count = max(int(decades * points_per_decade), 16)
        ts = np.geomspace(self.t_lo, self.t_hi, count)
        vals = np.array([survival(cone, x, float(t), tol, convention) for t in ts])
        self._interp = PchipInterpolator(np.log(ts), np.log(vals), extrapolate=False)
        self.seam_mismatch = abs(
            self.constant * self.t_hi ** (-self.exponent) / vals[-1] - 1.0
        )

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        t_arr = np.atleast_1d(t_arr).copy()
        out = np.empty_like(t_arr)
        low = t_arr <= self.t_lo
        high = t_arr >= self.t_hi
        mid = ~(low | high)
        out[low] = 1.0
        out[high] = self.constant * t_arr[high] ** (-self.exponent)
        if np.any(mid):
            out[mid] = np.exp(self._interp(np.log(t_arr[mid])))
        return float(out[0]) if scalar else out


@lru_cache(maxsize=64)
def survival_curve(
    cone: ConeFamily, x: PolarPoint, convention: str = "unit", tol: float = 1e-8
) -> SurvivalCurve:
    """Cached survival-curve interpolant for a (cone, start) pair."""
    return SurvivalCurve(cone, x, convention, tol)


def mean_exit_time(cone: ConeFamily, x: PolarPoint, convention: str = "unit") -> float:
    """E_x(tau), finite exactly when p1 > 2 (otherwise +inf).

    Integrates the survival curve, completing the tail with the exact
    asymptote.
    """
    _check_interior(cone, x)
    p, frac = p1_exact(cone)
    if frac is not None:
        if frac <= 2:
            return math.inf
    elif p <= 2.0 + 1e-9:
        return math.inf
    curve = survival_curve(cone, x, convention)
    spec = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-8, max_subdivisions=800)
    mid, _ = integrate_adaptive(lambda t: float(curve(t)), curve.t_lo, curve.t_hi, spec)
    head = curve.t_lo  # survival = 1 below t_lo within the documented bound
    tail = (
        curve.constant
        * curve.t_hi ** (1.0 - curve.exponent)
        / (curve.exponent - 1.0)
    )
    return head + mid + tail

"""Iterated-Brownian-motion exit-place laws in a cone.

The exact series density (an outer spectral sum whose coefficients are
double integrals against the one-sided exit-time survival function), the
three-regime tail asymptotics with their constants, the moment-finiteness
criterion, and the gambler's-ruin side probability that underlies the
sampler decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bm import _boundary_weights, _order_blocks, _sum_scaled_bessel, mean_exit_time, survival_curve
from .cones import ConeFamily, PolarPoint, p1_exact, spectrum
from .errors import ConfigError, NearDiagonalError, NonConvergenceError
from .special import QuadratureSpec, beta_tail_integral, contraction_ratio, integrate_adaptive, log_gamma

__all__ = [
    "IbmAsymptote",
    "ibm_radial_density",
    "ibm_radial_cdf_grid",
    "ibm_asymptote",
    "ibm_tail",
    "moment_finite",
    "exit_side_probability",
    "regime",
]

DEFAULT_EPS_MIN = 1e-3

# per-decade Gauss-Legendre rule in log w for the survival integral; the
# integrand has structure both at w ~ s/c (survival transition) and w ~ 1
_GL8 = np.polynomial.legendre.leggauss(8)


def _survival_w_integral(curve, ratio: float) -> float:
    """int_0^inf (1+w)^{-2} P(tau > ratio * w) dw for ratio = c / s > 0.

    Composite log-spaced quadrature across every decade carrying structure,
    with analytic stubs for the flat head and the power-law tail.
    """
    scale = 1.0 / ratio
    w_lo = 1e-3 * min(scale, 1.0)
    w_hi = 1e4 * max(scale, 1.0)
    decades = math.log10(w_hi / w_lo)
    panels = max(int(math.ceil(decades)), 1)
    edges = np.geomspace(w_lo, w_hi, panels + 1)
    logs = np.log(edges)
    xg, wg = _GL8
    mids = 0.5 * (logs[1:] + logs[:-1])
    halfs = 0.5 * (logs[1:] - logs[:-1])
    nodes = np.exp(mids[:, None] + halfs[:, None] * xg[None, :]).ravel()
    weights = (halfs[:, None] * wg[None, :]).ravel() * nodes
    body = float(np.dot(weights, curve(ratio * nodes) / (1.0 + nodes) ** 2))
    head = w_lo / (1.0 + w_lo) * float(curve(0.5 * ratio * w_lo))
    p2 = curve.exponent  # p1 / 2
    tail = (
        curve.constant
        * ratio ** (-p2)
        * w_hi ** (-1.0 - p2)
        / (1.0 + p2)
    )
    return body + head + tail


def regime(cone: ConeFamily) -> str:
    """IBM tail regime: 'sub' (p1 < 2), 'critical' (p1 = 2), 'super' (p1 > 2).

    Wedges with aperture a rational multiple of pi are classified by exact
    rational arithmetic; otherwise a 1e-9 tolerance decides equality.
    """
    p, frac = p1_exact(cone)
    if frac is not None:
        if frac < 2:
            return "sub"
        if frac == 2:
            return "critical"
        return "super"
    if abs(p - 2.0) <= 1e-9:
        return "critical"
    return "sub" if p < 2.0 else "super"


@dataclass(frozen=True)
class IbmAsymptote:
    """Large-r behavior of the IBM exit-place law at a fixed start.

    density ~ constant * r^{-density_exponent} and
    tail ~ tail_constant * r^{-tail_exponent}, each times log r in the
    critical regime.
    """

    regime: str
    constant: float
    density_exponent: float
    tail_exponent: float
    log_correction: bool

    @property
    def tail_constant(self) -> float:
        if self.regime == "sub":
            return self.constant / (2.0 * (self.tail_exponent / 2.0))
        if self.regime == "critical":
            return self.constant / 4.0
        return self.constant / self.tail_exponent

    def density(self, r: float) -> float:
        value = self.constant * r ** (-self.density_exponent)
        return value * math.log(r) if self.log_correction else value

    def tail(self, r: float) -> float:
        value = self.tail_constant * r ** (-self.tail_exponent)
        return value * math.log(r) if self.log_correction else value


def ibm_asymptote(cone: ConeFamily, z: PolarPoint, convention: str = "unit") -> IbmAsymptote:
    """Regime, exponents, and the constant of the IBM exit-place asymptote."""
    sd = spectrum(cone, 1, convention)
    p = float(sd.ps[0])
    n = cone.ambient_dim
    rho = z.rho
    m1 = float(sd.m(1, z.theta))
    s1 = float(sd.S[0])
    d1 = float(sd.D[0])
    reg = regime(cone)
    if reg == "sub":
        gammas = math.exp(
            log_gamma(0.5 * (p + n))
            + log_gamma(0.5 * (3.0 * p + n) - 1.0)
            - 2.0 * log_gamma(p + 0.5 * n)
        )
        a = rho ** (2 * p) * m1 * m1 * gammas * d1 * s1 * beta_tail_integral(p)
        return IbmAsymptote(reg, a, 2.0 * p + 1.0, 2.0 * p, False)
    if reg == "critical":
        a = 2.0 / (1.0 + 0.5 * n) * rho**4 * m1 * m1 * d1 * s1
        return IbmAsymptote(reg, a, 5.0, 4.0, True)
    a = 2.0 * rho**p * m1 * s1 * mean_exit_time(cone, z, convention)
    return IbmAsymptote(reg, a, p + 3.0, p + 2.0, False)


def ibm_tail(cone: ConeFamily, z: PolarPoint, r: float, convention: str = "unit") -> float:
    """Asymptotic P(|IBM exit| > r); only valid deep in the tail (r >= 10 rho)."""
    if r < 10.0 * z.rho:
        raise ConfigError(
            f"asymptotic tail requires r >= 10 rho; got r={r!r}, rho={z.rho!r}"
        )
    return ibm_asymptote(cone, z, convention).tail(r)


def moment_finite(cone: ConeFamily, p: float) -> bool:
    """Whether E |IBM exit place|^p is finite (p > 0)."""
    if not p > 0.0:
        raise ConfigError(f"moment order must be positive, got {p!r}")
    p1_val, frac = p1_exact(cone)
    reg = regime(cone)
    if reg == "sub":
        bound = 2.0 * (float(frac) if frac is not None else p1_val)
    elif reg == "critical":
        bound = 4.0
    else:
        bound = (float(frac) if frac is not None else p1_val) + 2.0
    return p < bound


def exit_side_probability(u: float, v: float) -> float:
    """P(the clock exits (-u, v) at -u) = v / (u + v): gambler's ruin from 0."""
    if not (u > 0.0 and v > 0.0):
        raise ConfigError(f"interval endpoints must be positive, got {u!r}, {v!r}")
    return v / (u + v)


def _term_integral(cone, z, r, weights, tol, convention):
    """sum_j weights_j I_j where I_j is the (s, w) double integral of the
    exit-time-weighted Bessel kernel.  The survival integral over the
    transformed variable u is a fixed composite rule; the s integral is
    adaptive on (0, s_cap], with the dropped tail bounded analytically
    (the spectral table cannot resolve orders past gamma * s_cap).
    """
    rho = z.rho
    q = contraction_ratio(rho, r)
    gam = 2.0 * q / (1.0 + q * q)
    curve = survival_curve(cone, z, convention)
    c = 0.5 * (rho * rho + r * r)
    decay = 1.0 - gam
    sd, _ = _order_blocks(cone, convention)
    alpha_max = float(sd.alphas[-1])
    s_cap = 0.95 * alpha_max / gam

    def integrand(s):
        if s <= 0.0:
            return 0.0
        expo = decay * s
        if expo > 700.0:
            return 0.0
        g = _survival_w_integral(curve, c / s)
        bessel = _sum_scaled_bessel(cone, convention, gam * s, weights, 0.05 * tol)
        return math.exp(-expo) / s * g * bessel

    spec = QuadratureSpec(abs_tol=1e-300, rel_tol=0.2 * tol, max_subdivisions=500)
    # geometric breakpoints keep the localized peak visible on wide ranges
    cuts = []
    cut = 1.0
    while cut < s_cap:
        cuts.append(cut)
        cut *= 4.0
    value, _ = integrate_adaptive(integrand, 0.0, s_cap, spec, points=cuts)
    # tail beyond s_cap: G <= 1, the weighted Bessel sum decreases in s past
    # the hump, and exp(-decay * s)/s integrates to less than e^{-x}/x
    x = decay * s_cap
    if x < 500.0:
        bessel_cap = _sum_scaled_bessel(
            cone, convention, gam * s_cap, np.abs(weights), 1e-3
        )
        tail_bound = bessel_cap * math.exp(-x) / x
        if tail_bound > tol * max(abs(value), 1e-300):
            raise NonConvergenceError(
                f"IBM series tail beyond the spectral cap is not negligible "
                f"(bound {tail_bound:.2e} vs value {value:.2e} at r={r!r})",
                estimate=value,
                error=tail_bound,
            )
    return value


def ibm_radial_density(
    cone: ConeFamily,
    z: PolarPoint,
    r: float,
    tol: float = 1e-6,
    eps_min: float = DEFAULT_EPS_MIN,
    convention: str = "unit",
) -> float:
    """Density of |IBM exit place| at radius r (series form, r away from rho)."""
    if r <= 0.0:
        raise ConfigError(f"radius must be positive, got {r!r}")
    q = contraction_ratio(z.rho, r)
    gam = 2.0 * q / (1.0 + q * q)
    if gam > 1.0 - eps_min:
        raise NearDiagonalError(
            f"gamma={gam:.6f} exceeds 1 - eps_min (r={r!r} too close to rho={z.rho!r})"
        )
    n = cone.ambient_dim
    weights = _boundary_weights(cone, convention, z.theta)
    total = _term_integral(cone, z, r, weights, tol, convention)
    value = r ** (0.5 * n - 2.0) * z.rho ** (1.0 - 0.5 * n) * total
    return max(value, 0.0)


def ibm_single_term(
    cone: ConeFamily,
    z: PolarPoint,
    r: float,
    j: int,
    tol: float = 1e-8,
    convention: str = "unit",
) -> float:
    """The j-th outer-series contribution to the IBM radial density
    (prefactor included); used to examine term dominance."""
    sd, _ = _order_blocks(cone, convention)
    weights = np.zeros(sd.J)
    weights[j - 1] = sd.S[j - 1] * sd.m(j, z.theta)
    total = _term_integral(cone, z, r, weights, tol, convention)
    n = cone.ambient_dim
    return r ** (0.5 * n - 2.0) * z.rho ** (1.0 - 0.5 * n) * total


def ibm_radial_cdf_grid(
    cone: ConeFamily,
    z: PolarPoint,
    r_grid,
    tol: float = 1e-6,
    convention: str = "unit",
):
    """Cumulative integral of the IBM radial density along an increasing grid.

    Returns an array c with c[0] = 0 and c[i] = integral of the density
    over (r_grid[0], r_grid[i]), computed per interval with a 7-point
    Gauss rule in log r.
    """
    grid = np.asarray(r_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0.0):
        raise ConfigError("r_grid must be an increasing 1-D grid")
    xg, wg = np.polynomial.legendre.leggauss(7)
    out = np.zeros(grid.size)
    acc = 0.0
    logs = np.log(grid)
    for i in range(grid.size - 1):
        mid = 0.5 * (logs[i + 1] + logs[i])
        half = 0.5 * (logs[i + 1] - logs[i])
        for xx, ww in zip(xg, wg):
            rr = math.exp(mid + half * xx)
            acc += half * ww * ibm_radial_density(cone, z, rr, tol, convention=convention) * rr
        out[i + 1] = acc
    return out

"""Monte Carlo oracle for the exit laws.

Brownian exits are sampled by a blocked Euler walk (exact Gaussian skeleton
of the motion, exit detected on the step grid and refined to the boundary
crossing).  IBM exits compose two independent Brownian exits through the
gambler's-ruin side probability, so no clock discretization enters the exit
place.  IBM exit times embed a 1-D clock walk in the two exit times.  All
streams are counter-based and reproducible bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cones import ConeFamily, PolarPoint, format_cone, parse_cone
from .errors import ConfigError, InsufficientTailDataError

__all__ = [
    "RngSpec",
    "SampleBatch",
    "TailFit",
    "sample_bm_exit",
    "sample_bm_exit_batch",
    "sample_ibm_exit",
    "sample_ibm_exit_batch",
    "sample_ibm_exit_time_batch",
    "choose_ibm_side",
    "estimate_tail_exponent",
    "ks_distance",
]

DEFAULT_MAX_STEPS = 10**8
_BLOCK_ELEMENT_CAP = 3_000_000  # paths * block * dim elements per draw

# boundary-layer constant of discretely monitored Brownian crossing
# (expected overshoot scale): exits behave as if started one layer farther in
OVERSHOOT_BETA = 0.5826


def bias_dilation(cone: ConeFamily, start: PolarPoint, h: float) -> float:
    """Multiplicative O(sqrt(h)) inflation of sampled exit radii.

    Discrete monitoring misses within-step crossings, which to first order
    moves the start one overshoot layer away from the boundary; by cone
    self-similarity that dilates the exit-radius law.  Dividing sampled
    radii by this factor removes the leading bias.
    """
    d = cone.boundary_distance(start.rho, start.theta)
    return 1.0 + OVERSHOOT_BETA * math.sqrt(h) / d


@dataclass(frozen=True)
class RngSpec:
    """Counter-based stream identity: (seed, stream, algorithm).

    The same triple reproduces the same draws bit for bit, independent of
    how many other streams exist.
    """

    seed: int
    stream: int = 0
    algorithm: str = "philox4x64"

    def generator(self) -> np.random.Generator:
        if self.algorithm != "philox4x64":
            raise ConfigError(f"unknown RNG algorithm {self.algorithm!r}")
        key = np.array([self.seed % 2**64, self.stream % 2**64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass
class SampleBatch:
    """Completed exit samples plus run provenance.

    Truncated paths (step budget exhausted) are excluded from the arrays;
    their count is kept in ``meta['truncated']`` and their indices stay
    vacant in ``path_index``.
    """

    exit_time: np.ndarray
    exit_radius: np.ndarray
    boundary_coord: np.ndarray
    stream: np.ndarray
    path_index: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.exit_time.size

    def to_csv(self, path) -> None:
        """Write samples as CSV with a JSON provenance sidecar (same stem)."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            fh.write("exit_time,exit_radius,boundary_coord,stream,path_index\n")
            for t, r, b, s, i in zip(
                self.exit_time, self.exit_radius, self.boundary_coord,
                self.stream, self.path_index,
            ):
                fh.write(f"{float(t)!r},{float(r)!r},{float(b)!r},{int(s)},{int(i)}\n")
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path) -> "SampleBatch":
        path = Path(path)
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:3] != ["exit_time", "exit_radius", "boundary_coord"]:
                raise ConfigError(f"{path} does not look like a sample batch CSV")
            for row in reader:
                rows.append(row)
        data = np.array(rows, dtype=object)
        meta_path = path.with_suffix(".json")
        meta = {}
        if meta_path.exists():
            with open(meta_path) as fh:
                meta = json.load(fh)
        if rows:
            exit_time = data[:, 0].astype(float)
            exit_radius = data[:, 1].astype(float)
            boundary = data[:, 2].astype(float)
            stream = data[:, 3].astype(int)
            idx = data[:, 4].astype(int)
        else:
            exit_time = exit_radius = boundary = np.empty(0)
            stream = idx = np.empty(0, dtype=int)
        return cls(exit_time, exit_radius, boundary, stream, idx, meta)

    @property
    def cone(self) -> ConeFamily:
        return parse_cone(self.meta["cone"])


def _refine_crossing(cone, inside_pts, outside_pts, iters: int = 45):
    """Fraction along each segment where the boundary is crossed (bisection)."""
    lo = np.zeros(inside_pts.shape[0])
    hi = np.ones(inside_pts.shape[0])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pts = inside_pts + mid[:, None] * (outside_pts - inside_pts)
        ins = cone.contains(pts)
        lo = np.where(ins, mid, lo)
        hi = np.where(ins, hi, mid)
    lam = 0.5 * (lo + hi)
    return lam, inside_pts + lam[:, None] * (outside_pts - inside_pts)


def _halfspace_normal_axis(cone) -> int | None:
    """Coordinate index of the boundary-normal axis for flat-boundary cones.

    A wedge of aperture exactly pi is the upper half-plane; half-spaces are
    flat by definition.  Returns None for genuinely angular geometries.
    """
    from .cones import HalfSpace, Wedge2D

    if isinstance(cone, Wedge2D) and cone.aperture == math.pi:
        return 1
    if isinstance(cone, HalfSpace):
        return cone.ambient_dim - 1
    return None


def _walk_exits_flat(cone, x0, h, n_paths, rng, max_steps, axis):
    """Euler walk specialized to a flat boundary.

    Only the boundary-normal coordinate is stepped; at the crossing the
    tangential coordinates are drawn from their exact conditional law
    N(x0, (full steps + lambda^2) h), which reproduces the joint law of
    the full-dimensional walk with linear crossing interpolation.
    """
    dim = cone.ambient_dim
    sqrt_h = math.sqrt(h)
    y = np.full(n_paths, float(x0[axis]))
    idx = np.arange(n_paths)
    exit_time = np.full(n_paths, np.nan)
    exit_points = np.full((n_paths, dim), np.nan)
    completed = np.zeros(n_paths, dtype=bool)
    tangential = [i for i in range(dim) if i != axis]
    steps_done = 0
    block = 16
    while idx.size and steps_done < max_steps:
        cap = max(int(_BLOCK_ELEMENT_CAP / idx.size), 1)
        b = int(min(block, cap, max_steps - steps_done))
        incr = rng.standard_normal((idx.size, b)) * sqrt_h
        path = y[:, None] + np.cumsum(incr, axis=1)
        out = path <= 0.0
        out_any = out.any(axis=1)
        if np.any(out_any):
            rows = np.nonzero(out_any)[0]
            first = np.argmax(out[rows], axis=1)
            prev = np.where(first == 0, y[rows], path[rows, np.maximum(first - 1, 0)])
            nxt = path[rows, first]
            lam = prev / (prev - nxt)
            full = steps_done + first
            orig = idx[rows]
            exit_time[orig] = (full + lam) * h
            spread = np.sqrt((full + lam * lam) * h)
            draws = rng.standard_normal((rows.size, dim - 1))
            for k, col in enumerate(tangential):
                exit_points[orig, col] = x0[col] + spread * draws[:, k]
            exit_points[orig, axis] = 0.0
            completed[orig] = True
        keep = ~out_any
        y = path[keep, -1]
        idx = idx[keep]
        steps_done += b
        block = min(block * 2, 8192)
    return exit_time, exit_points, completed


def _walk_exits(cone, x0, h, n_paths, rng, max_steps):
    """Blocked Euler walk until exit for n_paths paths.

    Returns (exit_time, exit_points, completed_mask); times include the
    within-step crossing fraction.
    """
    axis = _halfspace_normal_axis(cone)
    if axis is not None:
        return _walk_exits_flat(cone, x0, h, n_paths, rng, max_steps, axis)
    dim = cone.ambient_dim
    sqrt_h = math.sqrt(h)
    pos = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    idx = np.arange(n_paths)
    exit_time = np.full(n_paths, np.nan)
    exit_points = np.full((n_paths, dim), np.nan)
    completed = np.zeros(n_paths, dtype=bool)
    steps_done = 0
    block = 16
    while idx.size and steps_done < max_steps:
        cap = max(int(_BLOCK_ELEMENT_CAP / (idx.size * dim)), 1)
        b = int(min(block, cap, max_steps - steps_done))
        incr = rng.standard_normal((idx.size, b, dim)) * sqrt_h
        path = pos[:, None, :] + np.cumsum(incr, axis=1)
        inside = cone.contains(path.reshape(-1, dim)).reshape(idx.size, b)
        out_any = ~inside.all(axis=1)
        if np.any(out_any):
            rows = np.nonzero(out_any)[0]
            first = np.argmax(~inside[rows], axis=1)
            prev = np.where(
                (first == 0)[:, None], pos[rows], path[rows, np.maximum(first - 1, 0)]
            )
            nxt = path[rows, first]
            lam, pts = _refine_crossing(cone, prev, nxt)
            orig = idx[rows]
            exit_time[orig] = (steps_done + first + lam) * h
            exit_points[orig] = pts
            completed[orig] = True
        keep = ~out_any
        pos = path[keep, -1]
        idx = idx[keep]
        steps_done += b
        block = min(block * 2, 4096)
    return exit_time, exit_points, completed


def _boundary_coordinate(cone, points) -> np.ndarray:
    """Canonical angular coordinate of exit points.

    Wedge exits snap to the nearest edge angle (the refined crossing can
    land a rounding hair past either edge line, including just below the
    zero edge where the raw angle reads ~2 pi).
    """
    from .cones import Wedge2D

    theta = cone.boundary_theta(points)
    if isinstance(cone, Wedge2D):
        a = cone.aperture
        dist0 = np.minimum(theta, 2.0 * math.pi - theta)
        return np.where(dist0 <= np.abs(theta - a), 0.0, a)
    return theta


def _worker_sizes(n: int, workers: int) -> list[int]:
    base, extra = divmod(n, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def _batch_meta(cone, start, h, n, seed, workers, process, max_steps, truncated, extra=None):
    meta = {
        "algorithm": "philox4x64",
        "cone": format_cone(cone),
        "start": [start.rho, start.theta],
        "h": h,
        "n": n,
        "seed": seed,
        "workers": workers,
        "process": process,
        "max_steps": max_steps,
        "truncated": truncated,
        "columns": "exit_time,exit_radius,boundary_coord,stream,path_index",
    }
    if extra:
        meta.update(extra)
    return meta


def sample_bm_exit_batch(
    cone: ConeFamily,
    start: PolarPoint,
    h: float,
    n: int,
    seed: int,
    workers: int = 4,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> SampleBatch:
    """Sample n Brownian exits; deterministic for fixed (seed, workers)."""
    if h <= 0.0 or n < 1 or workers < 1:
        raise ConfigError("h must be positive and n, workers >= 1")
    x0 = cone.to_cartesian(start.rho, start.theta)
    times, radii, coords, streams, indices = [], [], [], [], []
    truncated = 0
    offset = 0
    for w, size in enumerate(_worker_sizes(n, workers)):
        if size == 0:
            continue
        rng = RngSpec(seed, w).generator()
        t, pts, done = _walk_exits(cone, x0, h, size, rng, max_steps)
        truncated += int(np.sum(~done))
        times.append(t[done])
        radii.append(np.linalg.norm(pts[done], axis=1))
        coords.append(_boundary_coordinate(cone, pts[done]))
        streams.append(np.full(int(done.sum()), w, dtype=int))
        indices.append(offset + np.nonzero(done)[0])
        offset += size
    meta = _batch_meta(cone, start, h, n, seed, workers, "bm", max_steps, truncated)
    return SampleBatch(
        np.concatenate(times), np.concatenate(radii), np.concatenate(coords),
        np.concatenate(streams), np.concatenate(indices), meta,
    )


def sample_bm_exit(
    cone: ConeFamily,
    start: PolarPoint,
    h: float,
    rng: np.random.Generator | RngSpec,
    max_steps: int = DEFAULT_MAX_STEPS,
):
    """Single Brownian exit draw: (exit time, exit point as PolarPoint).

    The walk uses Gaussian increments of variance h per coordinate; the
    location bias of grid-based exit detection is O(sqrt(h)).
    """
    if isinstance(rng, RngSpec):
        rng = rng.generator()
    x0 = cone.to_cartesian(start.rho, start.theta)
    t, pts, done = _walk_exits(cone, x0, h, 1, rng, max_steps)
    if not done[0]:
        raise ConfigError(
            f"path exhausted its {max_steps}-step budget; resample or raise the budget"
        )
    radius = float(np.linalg.norm(pts[0]))
    return float(t[0]), PolarPoint(radius, float(_boundary_coordinate(cone, pts[:1])[0]))


def choose_ibm_side(tau_minus, tau_plus, uniforms):
    """Side indicator for the IBM composition: True picks the X^- exit.

    Conditional on the two exit times the indicator is Bernoulli with
    success probability tau_plus / (tau_minus + tau_plus).
    """
    tau_minus = np.asarray(tau_minus, dtype=float)
    tau_plus = np.asarray(tau_plus, dtype=float)
    return np.asarray(uniforms) < tau_plus / (tau_minus + tau_plus)


def sample_ibm_exit_batch(
    cone: ConeFamily,
    start: PolarPoint,
    h: float,
    n: int,
    seed: int,
    workers: int = 4,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> SampleBatch:
    """Sample n IBM exit places via the two-sided decomposition.

    Each sample draws two independent Brownian exits and keeps one side by
    the gambler's-ruin probability; the exit place is exact in distribution
    given the Brownian samples.  ``exit_time`` records the clock-side
    Brownian exit time of the chosen side.
    """
    if h <= 0.0 or n < 1 or workers < 1:
        raise ConfigError("h must be positive and n, workers >= 1")
    x0 = cone.to_cartesian(start.rho, start.theta)
    times, radii, coords, streams, indices = [], [], [], [], []
    truncated = 0
    offset = 0
    for w, size in enumerate(_worker_sizes(n, workers)):
        if size == 0:
            continue
        rng = RngSpec(seed, w).generator()
        t_m, pts_m, done_m = _walk_exits(cone, x0, h, size, rng, max_steps)
        t_p, pts_p, done_p = _walk_exits(cone, x0, h, size, rng, max_steps)
        u = rng.random(size)
        done = done_m & done_p
        truncated += int(np.sum(~done))
        pick_minus = choose_ibm_side(t_m, t_p, u)
        t = np.where(pick_minus, t_m, t_p)
        pts = np.where(pick_minus[:, None], pts_m, pts_p)
        times.append(t[done])
        radii.append(np.linalg.norm(pts[done], axis=1))
        coords.append(_boundary_coordinate(cone, pts[done]))
        streams.append(np.full(int(done.sum()), w, dtype=int))
        indices.append(offset + np.nonzero(done)[0])
        offset += size
    meta = _batch_meta(cone, start, h, n, seed, workers, "ibm", max_steps, truncated)
    return SampleBatch(
        np.concatenate(times), np.concatenate(radii), np.concatenate(coords),
        np.concatenate(streams), np.concatenate(indices), meta,
    )


def sample_ibm_exit(
    cone: ConeFamily,
    start: PolarPoint,
    h: float,
    rng: np.random.Generator | RngSpec,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> PolarPoint:
    """Single IBM exit place draw."""
    if isinstance(rng, RngSpec):
        rng = rng.generator()
    x0 = cone.to_cartesian(start.rho, start.theta)
    t_m, pts_m, done_m = _walk_exits(cone, x0, h, 1, rng, max_steps)
    t_p, pts_p, done_p = _walk_exits(cone, x0, h, 1, rng, max_steps)
    if not (done_m[0] and done_p[0]):
        raise ConfigError(
            f"path exhausted its {max_steps}-step budget; resample or raise the budget"
        )
    pick = bool(choose_ibm_side(t_m, t_p, rng.random(1))[0])
    pts = pts_m if pick else pts_p
    return PolarPoint(
        float(np.linalg.norm(pts[0])), float(_boundary_coordinate(cone, pts[:1])[0])
    )


def _clock_walk(u, v, rng, h_scale, budget, return_side: bool = False):
    """Exit times of 1-D walks from 0 out of (-u[i], v[i]).

    Step variance is h_scale * min(u, v)^2 per path, so the nearer barrier
    is resolved uniformly across the batch.
    """
    m = u.size
    h_y = h_scale * np.minimum(u, v) ** 2
    sqrt_h = np.sqrt(h_y)
    y = np.zeros(m)
    idx = np.arange(m)
    eta = np.full(m, np.nan)
    completed = np.zeros(m, dtype=bool)
    lower_side = np.zeros(m, dtype=bool)
    steps_done = 0
    block = 32
    while idx.size and steps_done < budget:
        cap = max(int(_BLOCK_ELEMENT_CAP / max(idx.size, 1)), 1)
        b = int(min(block, cap, budget - steps_done))
        incr = rng.standard_normal((idx.size, b)) * sqrt_h[idx][:, None]
        path = y[:, None] + np.cumsum(incr, axis=1)
        below = path <= -u[idx][:, None]
        above = path >= v[idx][:, None]
        out = below | above
        out_any = out.any(axis=1)
        if np.any(out_any):
            rows = np.nonzero(out_any)[0]
            first = np.argmax(out[rows], axis=1)
            prev = np.where(first == 0, y[rows], path[rows, np.maximum(first - 1, 0)])
            nxt = path[rows, first]
            hit_below = below[rows, first]
            barrier = np.where(hit_below, -u[idx[rows]], v[idx[rows]])
            lam = (barrier - prev) / (nxt - prev)
            orig = idx[rows]
            eta[orig] = (steps_done + first + lam) * h_y[orig]
            completed[orig] = True
            lower_side[orig] = hit_below
        keep = ~out_any
        y = path[keep, -1]
        idx = idx[keep]
        steps_done += b
        block = min(block * 2, 65536)
    if return_side:
        return eta, completed, lower_side
    return eta, completed


def sample_ibm_exit_time_batch(
    cone: ConeFamily,
    start: PolarPoint,
    h: float,
    n: int,
    seed: int,
    workers: int = 4,
    max_steps: int = DEFAULT_MAX_STEPS,
    clock_h_rel: float = 4e-3,
    clock_budget: int = 10**7,
) -> SampleBatch:
    """Sample n IBM exit times.

    Draws the two one-sided Brownian exit times, then runs the 1-D clock
    walk from 0 until it leaves (-tau_minus, tau_plus); the clock's exit
    time is the IBM exit time.  ``exit_radius`` and ``boundary_coord`` are
    NaN for this process.
    """
    if h <= 0.0 or n < 1 or workers < 1:
        raise ConfigError("h must be positive and n, workers >= 1")
    x0 = cone.to_cartesian(start.rho, start.theta)
    times, streams, indices = [], [], []
    truncated = 0
    offset = 0
    for w, size in enumerate(_worker_sizes(n, workers)):
        if size == 0:
            continue
        rng = RngSpec(seed, w).generator()
        t_m, _, done_m = _walk_exits(cone, x0, h, size, rng, max_steps)
        t_p, _, done_p = _walk_exits(cone, x0, h, size, rng, max_steps)
        done = done_m & done_p
        safe_m = np.where(done, t_m, 1.0)
        safe_p = np.where(done, t_p, 1.0)
        eta, clock_done = _clock_walk(safe_m, safe_p, rng, clock_h_rel, clock_budget)
        ok = done & clock_done
        truncated += int(np.sum(~ok))
        times.append(eta[ok])
        streams.append(np.full(int(ok.sum()), w, dtype=int))
        indices.append(offset + np.nonzero(ok)[0])
        offset += size
    total = int(sum(len(t) for t in times))
    meta = _batch_meta(
        cone, start, h, n, seed, workers, "ibm_time", max_steps, truncated,
        extra={"clock_h_rel": clock_h_rel, "clock_budget": clock_budget},
    )
    nan = np.full(total, np.nan)
    return SampleBatch(
        np.concatenate(times), nan, nan.copy(),
        np.concatenate(streams), np.concatenate(indices), meta,
    )


@dataclass(frozen=True)
class TailFit:
    """Log-log least-squares fit of the empirical survival on a dyadic grid."""

    slope: float
    stderr: float
    n_tail: int
    grid: np.ndarray
    survival: np.ndarray
    curvature: float

    @property
    def is_power_law(self) -> bool:
        return abs(self.curvature) < 0.1


def _grid_survival(sorted_values, grid):
    n = sorted_values.size
    counts = n - np.searchsorted(sorted_values, grid, side="right")
    return counts / n


def estimate_tail_exponent(
    samples, r_min: float, r_max: float, batches: int = 10
) -> TailFit:
    """Slope of log empirical survival vs log r over a dyadic grid.

    Requires at least 100 samples above r_min and r_max / r_min >= 4.
    The standard error comes from batch means over 10 sample slices, the
    curvature diagnostic from a quadratic refit.
    """
    values = np.sort(np.asarray(samples, dtype=float))
    if not (r_min > 0.0 and r_max / r_min >= 4.0):
        raise ConfigError("need r_min > 0 and r_max / r_min >= 4")
    levels = int(math.floor(math.log2(r_max / r_min) + 1e-9))
    grid = r_min * 2.0 ** np.arange(levels + 1)
    n_tail = int(values.size - np.searchsorted(values, r_min, side="right"))
    if n_tail < 100:
        raise InsufficientTailDataError(
            f"only {n_tail} samples above r_min={r_min!r}; need at least 100"
        )
    surv = _grid_survival(values, grid)
    keep = surv > 0.0
    if keep.sum() < 3:
        raise InsufficientTailDataError(
            f"only {int(keep.sum())} populated grid levels in [{r_min}, {r_max}]"
        )
    lx = np.log(grid[keep])
    ly = np.log(surv[keep])
    slope, _ = np.polyfit(lx, ly, 1)
    quad = np.polyfit(lx, ly, 2)[0] if keep.sum() >= 4 else 0.0
    raw = np.asarray(samples, dtype=float)
    edges = np.linspace(0, raw.size, batches + 1).astype(int)
    batch_slopes = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        chunk = np.sort(raw[lo:hi])
        s = _grid_survival(chunk, grid)
        k = s > 0.0
        if k.sum() >= 2:
            bs, _ = np.polyfit(np.log(grid[k]), np.log(s[k]), 1)
            batch_slopes.append(bs)
    if len(batch_slopes) >= 2:
        stderr = float(np.std(batch_slopes, ddof=1) / math.sqrt(len(batch_slopes)))
    else:
        stderr = math.inf
    return TailFit(float(slope), stderr, n_tail, grid, surv, float(quad))


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov sup distance between samples and a model CDF."""
    values = np.sort(np.asarray(samples, dtype=float))
    if values.size == 0:
        raise ConfigError("need at least one sample")
    try:
        model = np.asarray(cdf(values), dtype=float)
        if model.shape != values.shape:
            raise TypeError
    except TypeError:
        model = np.array([float(cdf(v)) for v in values])
    n = values.size
    upper = np.arange(1, n + 1) / n - model
    lower = model - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))

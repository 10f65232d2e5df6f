"""Batch command-line front end.

Subcommands compute spectral tables, exit densities and tails, survival
curves, IBM asymptotics, Monte Carlo sample batches, and series-vs-samples
comparisons; ``report`` additionally renders figures next to the delimited
output.  Exit codes: 0 success, 2 configuration error, 3 numeric
non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import bm, ibm, mc
from .cones import ConeFamily, PolarPoint, Wedge2D, format_cone, p1, parse_cone, spectrum
from .errors import ConeExitError, ConfigError, NearDiagonalError, NonConvergenceError

__all__ = ["main", "RunConfig"]


@dataclass
class RunConfig:
    """Everything a run needs; embedded verbatim in JSON output."""

    command: str
    cone: str
    rho: float = 1.0
    theta: float | None = None
    grid_start: float | None = None
    grid_stop: float | None = None
    grid_count: int | None = None
    grid_log: bool = True
    r: float | None = None
    tol: float = 1e-8
    max_terms: int = 8
    process: str = "bm"
    n: int = 10000
    h: float = 1e-3
    seed: int = 0
    workers: int = 4
    max_steps: int = mc.DEFAULT_MAX_STEPS
    r_min: float | None = None
    r_max: float | None = None
    samples: str | None = None
    bias_correction: bool = True
    with_mc: int = 0
    format: str = "csv"
    output: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = asdict(self)
        return {k: v for k, v in data.items() if v is not None}


def _resolve_theta(cone: ConeFamily, raw: str) -> float:
    if raw == "bisector":
        return cone.bisector()
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"theta must be a number in radians or 'bisector', got {raw!r}") from exc


def _add_cone_args(p: argparse.ArgumentParser, with_start: bool = True) -> None:
    p.add_argument("--cone", required=True, help="wedge:a=<rad> | halfspace:n=<int> | cone3d:theta0=<rad>")
    if with_start:
        p.add_argument("--rho", type=float, default=1.0, help="start radius (default 1)")
        p.add_argument("--theta", default="bisector", help="start angle in radians, or 'bisector'")


def _add_grid_args(p: argparse.ArgumentParser, axis: str) -> None:
    p.add_argument(f"--{axis}", type=float, default=None, help=f"single {axis} value")
    p.add_argument(f"--{axis}-start", type=float, default=None)
    p.add_argument(f"--{axis}-stop", type=float, default=None)
    p.add_argument(f"--{axis}-count", type=int, default=None)
    p.add_argument("--linear", action="store_true", help="linear grid instead of log-spaced")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", default=None, help="output path (default: stdout)")


def _grid(args, axis: str):
    single = getattr(args, axis)
    start = getattr(args, f"{axis}_start")
    stop = getattr(args, f"{axis}_stop")
    count = getattr(args, f"{axis}_count")
    if single is not None:
        return np.array([single])
    if start is None or stop is None or count is None:
        raise ConfigError(
            f"provide --{axis} or all of --{axis}-start/--{axis}-stop/--{axis}-count"
        )
    if not (start > 0 and stop > start and count >= 2):
        raise ConfigError(f"{axis} grid must be increasing and positive with count >= 2")
    if args.linear:
        return np.linspace(start, stop, count)
    return np.geomspace(start, stop, count)


def _emit(config: RunConfig, columns: list[str], rows: list[tuple], record: dict | None = None):
    """Write delimited or JSON output with full config provenance."""
    if config.format == "json":
        payload = {
            "config": config.to_dict(),
            "columns": columns,
            "rows": [list(row) for row in rows],
        }
        if record:
            payload["record"] = record
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        lines = [",".join(columns)]
        for row in rows:
            lines.append(
                ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row)
            )
        if record:
            lines.append("# " + json.dumps(record, sort_keys=True))
        text = "\n".join(lines) + "\n"
    if config.output:
        Path(config.output).write_text(text)
    else:
        sys.stdout.write(text)


def _start_point(args, cone: ConeFamily) -> PolarPoint:
    return PolarPoint(args.rho, _resolve_theta(cone, args.theta))


def _cmd_spectrum(args) -> int:
    cone = parse_cone(args.cone)
    config = RunConfig(
        command="spectrum", cone=args.cone, max_terms=args.terms,
        format=args.format, output=args.output,
    )
    sd = spectrum(cone, args.terms)
    rows = [
        (j + 1, float(sd.lambdas[j]), float(sd.alphas[j]), float(sd.ps[j]),
         float(sd.S[j]), float(sd.D[j]))
        for j in range(sd.J)
    ]
    _emit(config, ["j", "lambda", "alpha", "p", "S", "D"], rows)
    return 0


def _cmd_density(args) -> int:
    cone = parse_cone(args.cone)
    start = _start_point(args, cone)
    rs = _grid(args, "r")
    config = RunConfig(
        command="density", cone=args.cone, rho=start.rho, theta=start.theta,
        process=args.process, tol=args.tol, format=args.format, output=args.output,
        r=args.r, grid_start=args.r_start, grid_stop=args.r_stop,
        grid_count=args.r_count, grid_log=not args.linear,
    )
    rows = []
    for r in rs:
        if args.process == "bm":
            val = bm.exit_radial_density_bridged(cone, start, float(r), tol=args.tol)
        else:
            val = ibm.ibm_radial_density(cone, start, float(r), tol=args.tol)
        rows.append((float(r), float(val)))
    _emit(config, ["r", "density"], rows)
    return 0


def _cmd_tail(args) -> int:
    cone = parse_cone(args.cone)
    start = _start_point(args, cone)
    rs = _grid(args, "r")
    config = RunConfig(
        command="tail", cone=args.cone, rho=start.rho, theta=start.theta,
        process=args.process, tol=args.tol, format=args.format, output=args.output,
        r=args.r, grid_start=args.r_start, grid_stop=args.r_stop,
        grid_count=args.r_count, grid_log=not args.linear,
    )
    if args.process == "bm":
        asy = bm.bm_tail_asymptote(cone, start)
        rows = [
            (float(r), bm.exit_radial_tail(cone, start, float(r), tol=args.tol), asy(float(r)))
            for r in rs
        ]
        record = {"constant": asy.constant, "exponent": asy.exponent}
    else:
        record_asy = ibm.ibm_asymptote(cone, start)
        rows = [(float(r), ibm.ibm_tail(cone, start, float(r)), record_asy.tail(float(r))) for r in rs]
        record = {
            "regime": record_asy.regime,
            "constant": record_asy.constant,
            "tail_exponent": record_asy.tail_exponent,
            "log_correction": record_asy.log_correction,
        }
    _emit(config, ["r", "tail", "asymptote"], rows, record)
    return 0


def _cmd_survival(args) -> int:
    cone = parse_cone(args.cone)
    start = _start_point(args, cone)
    ts = _grid(args, "t")
    config = RunConfig(
        command="survival", cone=args.cone, rho=start.rho, theta=start.theta,
        tol=args.tol, format=args.format, output=args.output,
        r=args.t, grid_start=args.t_start, grid_stop=args.t_stop,
        grid_count=args.t_count, grid_log=not args.linear,
    )
    c_x = bm.survival_asymptote(cone, start)
    expo = 0.5 * p1(cone)
    rows = [
        (float(t), bm.survival(cone, start, float(t), tol=args.tol), c_x * float(t) ** (-expo))
        for t in ts
    ]
    _emit(config, ["t", "survival", "asymptote"], rows, {"constant": c_x, "exponent": expo})
    return 0


def _cmd_asymptote(args) -> int:
    cone = parse_cone(args.cone)
    start = _start_point(args, cone)
    config = RunConfig(
        command="asymptote", cone=args.cone, rho=start.rho, theta=start.theta,
        process=args.process, format=args.format, output=args.output,
    )
    if args.process == "bm":
        asy = bm.bm_tail_asymptote(cone, start)
        record = {
            "process": "bm",
            "constant": asy.constant,
            "tail_exponent": asy.exponent,
            "log_correction": False,
        }
        rows = [(asy.constant, asy.exponent)]
        _emit(config, ["constant", "tail_exponent"], rows, record)
    else:
        asy = ibm.ibm_asymptote(cone, start)
        record = {
            "process": "ibm",
            "regime": asy.regime,
            "constant": asy.constant,
            "density_exponent": asy.density_exponent,
            "tail_exponent": asy.tail_exponent,
            "tail_constant": asy.tail_constant,
            "log_correction": asy.log_correction,
        }
        rows = [(asy.regime, asy.constant, asy.density_exponent, asy.tail_exponent,
                 int(asy.log_correction))]
        _emit(
            config,
            ["regime", "constant", "density_exponent", "tail_exponent", "log_correction"],
            rows,
            record,
        )
    return 0


def _default_workers() -> int:
    env = os.environ.get("CONEEXIT_WORKERS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            raise ConfigError(f"CONEEXIT_WORKERS must be an integer, got {env!r}")
    return 4


def _run_simulation(cone, start, args):
    if args.process == "bm":
        return mc.sample_bm_exit_batch(
            cone, start, args.h, args.n, args.seed, args.workers, args.max_steps
        )
    if args.process == "ibm":
        return mc.sample_ibm_exit_batch(
            cone, start, args.h, args.n, args.seed, args.workers, args.max_steps
        )
    return mc.sample_ibm_exit_time_batch(
        cone, start, args.h, args.n, args.seed, args.workers, args.max_steps
    )


def _cmd_simulate(args) -> int:
    cone = parse_cone(args.cone)
    start = _start_point(args, cone)
    if args.workers is None:
        args.workers = _default_workers()
    batch = _run_simulation(cone, start, args)
    out = Path(args.output)
    batch.to_csv(out)
    sys.stdout.write(
        f"wrote {len(batch)} samples to {out} "
        f"(truncated {batch.meta['truncated']}, sidecar {out.with_suffix('.json')})\n"
    )
    return 0


def _windowed_model_cdf(cone, start, process, r_lo, r_hi, tol):
    """(grid, conditional CDF on [r_lo, r_hi]) from the series laws."""
    if process == "bm":
        t_lo = bm.exit_radial_tail(cone, start, r_lo, tol=tol)
        t_hi = bm.exit_radial_tail(cone, start, r_hi, tol=tol)
        grid = np.geomspace(r_lo, r_hi, 257)
        tails = np.array([bm.exit_radial_tail(cone, start, float(r), tol=tol) for r in grid])
        cdf = (t_lo - tails) / (t_lo - t_hi)
    else:
        grid = np.geomspace(r_lo, r_hi, 65)
        cum = ibm.ibm_radial_cdf_grid(cone, start, grid, tol=max(tol, 1e-6))
        cdf = cum / cum[-1]
    cdf = np.clip(cdf, 0.0, 1.0)
    cdf[0], cdf[-1] = 0.0, 1.0
    return grid, cdf


def _cmd_compare(args) -> int:
    cone = parse_cone(args.cone)
    start = _start_point(args, cone)
    if args.samples:
        batch = mc.SampleBatch.from_csv(args.samples)
        h = batch.meta.get("h", args.h)
        process = batch.meta.get("process", args.process)
    else:
        if args.workers is None:
            args.workers = _default_workers()
        batch = _run_simulation(cone, start, args)
        h = args.h
        process = args.process
    if process not in ("bm", "ibm"):
        raise ConfigError(f"compare supports bm and ibm sample batches, got {process!r}")
    r_lo = args.r_min if args.r_min is not None else 2.0 * start.rho
    r_hi = args.r_max if args.r_max is not None else 64.0 * start.rho
    config = RunConfig(
        command="compare", cone=args.cone, rho=start.rho, theta=start.theta,
        process=process, n=args.n, h=h, seed=args.seed,
        workers=args.workers or 0, r_min=r_lo, r_max=r_hi,
        samples=args.samples, bias_correction=not args.no_bias_correction,
        format=args.format, output=args.output, tol=args.tol,
    )
    radii = batch.exit_radius
    if not args.no_bias_correction:
        radii = radii / mc.bias_dilation(cone, start, h)
    window = radii[(radii >= r_lo) & (radii <= r_hi)]
    if window.size < 10:
        raise ConfigError(
            f"only {window.size} samples fall in the window [{r_lo}, {r_hi}]"
        )
    grid, cdf = _windowed_model_cdf(cone, start, process, r_lo, r_hi, args.tol)
    from scipy.interpolate import PchipInterpolator

    cdf_fn = PchipInterpolator(np.log(grid), cdf)
    ks = mc.ks_distance(window, lambda r: np.clip(cdf_fn(np.log(r)), 0.0, 1.0))
    ks_critical = 1.63 / math.sqrt(window.size)
    bias_envelope = 0.05 * math.sqrt(h)
    # expected slope: the same dyadic-grid fit applied to the model's own
    # survival, so pre-asymptotic and logarithmic corrections are included
    if process == "bm":
        asym_slope = -p1(cone)
        tail_hi = bm.exit_radial_tail(cone, start, r_hi, tol=args.tol)
        mass_norm = bm.exit_radial_tail(cone, start, r_lo, tol=args.tol) - tail_hi
    else:
        asy = ibm.ibm_asymptote(cone, start)
        asym_slope = -asy.tail_exponent
        tail_hi = asy.tail(r_hi)
        cum = ibm.ibm_radial_cdf_grid(cone, start, np.geomspace(r_lo, r_hi, 33))
        mass_norm = float(cum[-1])
    levels = int(math.floor(math.log2(r_hi / r_lo) + 1e-9))
    fit_grid = r_lo * 2.0 ** np.arange(levels + 1)
    model_surv = np.array(
        [tail_hi + (1.0 - float(cdf_fn(math.log(r)))) * mass_norm for r in fit_grid]
    )
    model_slope = float(np.polyfit(np.log(fit_grid), np.log(model_surv), 1)[0])
    fit_record: dict = {
        "asymptotic_tail_slope": asym_slope,
        "model_window_slope": model_slope,
    }
    try:
        fit = mc.estimate_tail_exponent(radii, r_lo, r_hi)
        fit_record.update(
            fitted_slope=fit.slope, stderr=fit.stderr, n_tail=fit.n_tail,
            slope_ok=bool(abs(fit.slope - model_slope) <= max(3.5 * fit.stderr, 0.15)),
        )
    except ConeExitError as exc:
        fit_record.update(fit_error=str(exc))
    record = {
        "process": process,
        "n_window": int(window.size),
        "ks": ks,
        "ks_critical_1pct": ks_critical,
        "bias_envelope": bias_envelope,
        "ks_ok": bool(ks <= ks_critical + bias_envelope),
        "truncated": batch.meta.get("truncated"),
        **fit_record,
    }
    _emit(config, ["key", "value"], [(k, v) for k, v in sorted(record.items())], record)
    return 0


def _cmd_report(args) -> int:
    from . import report as rpt

    cone = parse_cone(args.cone)
    start = _start_point(args, cone)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    label = format_cone(cone)
    rho = start.rho

    def cfg(command, **kw):
        return RunConfig(
            command=command, cone=args.cone, rho=start.rho, theta=start.theta,
            format="csv", **kw,
        )

    mc_radii = None
    if args.with_mc:
        batch = mc.sample_ibm_exit_batch(
            cone, start, args.h, args.with_mc, args.seed, _default_workers(),
            max_steps=2_000_000,
        ) if args.process == "ibm" else mc.sample_bm_exit_batch(
            cone, start, args.h, args.with_mc, args.seed, _default_workers(),
            max_steps=2_000_000,
        )
        mc_radii = batch.exit_radius / mc.bias_dilation(cone, start, args.h)

    # density
    rs = np.geomspace(0.1 * rho, 16.0 * rho, 121)
    if args.process == "bm":
        dens = [bm.exit_radial_density_bridged(cone, start, float(r)) for r in rs]
    else:
        dens = []
        for r in rs:
            try:
                dens.append(ibm.ibm_radial_density(cone, start, float(r), tol=1e-4))
            except (NearDiagonalError, NonConvergenceError):
                dens.append(float("nan"))
    c = cfg("density", process=args.process)
    c.output = str(outdir / f"{args.process}_density.csv")
    _emit(c, ["r", "density"], list(zip(map(float, rs), map(float, dens))))
    fig = rpt.density_figure(rs, dens, f"{args.process} exit radius density, {label}", mc_radii)
    rpt.save(fig, outdir / f"{args.process}_density.png")

    # tail
    r_tail = np.geomspace(2.0 * rho, 100.0 * rho, 61)
    if args.process == "bm":
        asy = bm.bm_tail_asymptote(cone, start)
        tails = [bm.exit_radial_tail(cone, start, float(r)) for r in r_tail]
    else:
        asy = ibm.ibm_asymptote(cone, start)
        wide = np.geomspace(2.0 * rho, 1000.0 * rho, 97)
        cum = ibm.ibm_radial_cdf_grid(cone, start, wide, tol=1e-5)
        beyond = asy.tail(float(wide[-1]))
        cum_at = np.interp(np.log(r_tail), np.log(wide), cum)
        tails = list(cum[-1] - cum_at + beyond)
    c = cfg("tail", process=args.process)
    c.output = str(outdir / f"{args.process}_tail.csv")
    _emit(c, ["r", "tail"], list(zip(map(float, r_tail), map(float, tails))))
    asy_fn = asy if args.process == "bm" else _IbmTailFn(asy)
    fig = rpt.tail_figure(r_tail, tails, asy_fn, f"{args.process} exit tail, {label}")
    rpt.save(fig, outdir / f"{args.process}_tail.png")

    # survival (BM exit time law at this start)
    ts = np.geomspace(0.05 * rho**2, 1e4 * rho**2, 81)
    surv = [bm.survival(cone, start, float(t)) for t in ts]
    c_x = bm.survival_asymptote(cone, start)
    expo = 0.5 * p1(cone)
    c = cfg("survival")
    c.output = str(outdir / "survival.csv")
    _emit(c, ["t", "survival"], list(zip(map(float, ts), map(float, surv))))
    fig = rpt.survival_figure(ts, surv, c_x, expo, f"BM survival, {label}")
    rpt.save(fig, outdir / "survival.png")

    sys.stdout.write(f"report written to {outdir}\n")
    return 0


class _IbmTailFn:
    def __init__(self, asy):
        self._asy = asy
        self.exponent = asy.tail_exponent

    def __call__(self, r):
        return self._asy.tail(r)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coneexit",
        description="Exit laws of Brownian and iterated Brownian motion in cones",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="eigenvalue/functional table")
    _add_cone_args(p, with_start=False)
    p.add_argument("--terms", type=int, default=8)
    _add_output_args(p)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("density", help="radial exit density over a grid")
    _add_cone_args(p)
    p.add_argument("--process", choices=("bm", "ibm"), default="bm")
    _add_grid_args(p, "r")
    p.add_argument("--tol", type=float, default=1e-8)
    _add_output_args(p)
    p.set_defaults(func=_cmd_density)

    p = sub.add_parser("tail", help="exit tail probabilities and asymptote")
    _add_cone_args(p)
    p.add_argument("--process", choices=("bm", "ibm"), default="bm")
    _add_grid_args(p, "r")
    p.add_argument("--tol", type=float, default=1e-9)
    _add_output_args(p)
    p.set_defaults(func=_cmd_tail)

    p = sub.add_parser("survival", help="exit-time survival curve and C(x)")
    _add_cone_args(p)
    _add_grid_args(p, "t")
    p.add_argument("--tol", type=float, default=1e-8)
    _add_output_args(p)
    p.set_defaults(func=_cmd_survival)

    p = sub.add_parser("asymptote", help="tail asymptote record (bm or ibm)")
    _add_cone_args(p)
    p.add_argument("--process", choices=("bm", "ibm"), default="ibm")
    _add_output_args(p)
    p.set_defaults(func=_cmd_asymptote)

    p = sub.add_parser("simulate", help="write a Monte Carlo sample batch")
    _add_cone_args(p)
    p.add_argument("--process", choices=("bm", "ibm", "ibm-time"), default="bm")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help="default: CONEEXIT_WORKERS or 4")
    p.add_argument("--max-steps", type=int, default=mc.DEFAULT_MAX_STEPS)
    p.add_argument("--output", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="series law vs Monte Carlo samples")
    _add_cone_args(p)
    p.add_argument("--process", choices=("bm", "ibm"), default="bm")
    p.add_argument("--samples", default=None, help="existing batch CSV (else simulate inline)")
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=2_000_000)
    p.add_argument("--r-min", type=float, default=None)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--no-bias-correction", action="store_true")
    _add_output_args(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="figures + delimited data for one cone/start")
    _add_cone_args(p)
    p.add_argument("--process", choices=("bm", "ibm"), default="bm")
    p.add_argument("--with-mc", type=int, default=0, help="overlay a simulation of this size")
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergenceError, NearDiagonalError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except ConeExitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

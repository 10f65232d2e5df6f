"""Figure rendering for the CLI report path.

Matplotlib is only imported here, with the Agg backend, so library users
never pay for it.  Each plot helper returns the figure; ``save`` writes it
to a file next to the delimited data the CLI emits.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "figure.figsize": (6.0, 3.8),
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.linewidth": 0.6,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def save(fig, path) -> None:
    fig.savefig(path)
    plt.close(fig)


def density_figure(rs, values, title, mc_radii=None):
    """Radial density curve, optionally overlaid with a sample histogram."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if mc_radii is not None and len(mc_radii):
            lo, hi = float(np.min(rs)), float(np.max(rs))
            bins = np.geomspace(max(lo, 1e-6), hi, 40)
            ax.hist(
                np.asarray(mc_radii), bins=bins, density=True,
                histtype="stepfilled", alpha=0.3, color="C1", label="Monte Carlo",
            )
        ax.plot(rs, values, "C0-", lw=1.2, label="series")
        ax.set_xlabel("exit radius r")
        ax.set_ylabel("density")
        ax.set_title(title)
        ax.legend()
    return fig


def tail_figure(rs, tails, asymptote, title):
    """Log-log tail with its power-law asymptote."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.loglog(rs, tails, "C0-", lw=1.2, label="tail")
        asy = [asymptote(float(r)) for r in rs]
        ax.loglog(rs, asy, "k--", lw=0.8, label=f"~ r^-{asymptote.exponent:g}")
        ax.set_xlabel("r")
        ax.set_ylabel("P(|exit| > r)")
        ax.set_title(title)
        ax.legend()
    return fig


def survival_figure(ts, values, constant, exponent, title):
    """Log-log survival curve with the polynomial decay asymptote."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.loglog(ts, values, "C0-", lw=1.2, label="survival")
        asy = [constant * t ** (-exponent) for t in ts]
        ax.loglog(ts, asy, "k--", lw=0.8, label=f"C t^-{exponent:g}")
        ax.set_ylim(bottom=max(min(values) * 0.5, 1e-16), top=2.0)
        ax.set_xlabel("t")
        ax.set_ylabel("P(tau > t)")
        ax.set_title(title)
        ax.legend()
    return fig


def compare_figure(rs, model_cdf, sample_radii, title):
    """Windowed model CDF against the empirical CDF of the samples."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(rs, model_cdf, "C0-", lw=1.2, label="series CDF")
        xs = np.sort(np.asarray(sample_radii))
        ax.step(xs, np.arange(1, xs.size + 1) / xs.size, "C1-", lw=0.8,
                where="post", label="empirical")
        ax.set_xscale("log")
        ax.set_xlabel("r")
        ax.set_ylabel("CDF (window-conditioned)")
        ax.set_title(title)
        ax.legend()
    return fig

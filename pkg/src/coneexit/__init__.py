"""Exit-place and exit-time laws for Brownian and iterated Brownian motion
in generalized cones, with a Monte Carlo oracle and a reporting CLI."""

from .cones import (
    CircularCone3D,
    HalfSpace,
    PolarPoint,
    Wedge2D,
    boundary_functional,
    interior_functional,
    p1,
    parse_cone,
    spectrum,
)
from .bm import (
    bm_tail_asymptote,
    exit_radial_density,
    exit_radial_density_bridged,
    exit_radial_tail,
    heat_kernel,
    joint_exit_density,
    mean_exit_time,
    radial_law,
    survival,
    survival_asymptote,
    survival_curve,
)
from .ibm import (
    exit_side_probability,
    ibm_asymptote,
    ibm_radial_density,
    ibm_tail,
    moment_finite,
)
from .mc import (
    RngSpec,
    SampleBatch,
    estimate_tail_exponent,
    ks_distance,
    sample_bm_exit,
    sample_bm_exit_batch,
    sample_ibm_exit,
    sample_ibm_exit_batch,
    sample_ibm_exit_time_batch,
)

__version__ = "0.1.0"

__all__ = [
    "CircularCone3D",
    "HalfSpace",
    "PolarPoint",
    "Wedge2D",
    "RngSpec",
    "SampleBatch",
    "bm_tail_asymptote",
    "boundary_functional",
    "estimate_tail_exponent",
    "exit_radial_density",
    "exit_radial_density_bridged",
    "exit_radial_tail",
    "exit_side_probability",
    "heat_kernel",
    "ibm_asymptote",
    "ibm_radial_density",
    "ibm_tail",
    "interior_functional",
    "joint_exit_density",
    "ks_distance",
    "mean_exit_time",
    "moment_finite",
    "p1",
    "parse_cone",
    "radial_law",
    "sample_bm_exit",
    "sample_bm_exit_batch",
    "sample_ibm_exit",
    "sample_ibm_exit_batch",
    "sample_ibm_exit_time_batch",
    "spectrum",
    "survival",
    "survival_asymptote",
    "survival_curve",
    "__version__",
]

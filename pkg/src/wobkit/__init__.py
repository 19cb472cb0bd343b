"""wobkit: grid-free Monte Carlo solvers for Laplace/Poisson boundary value
problems built on boundary-integral random walks, plus a walk-on-spheres
baseline and a benchmarking harness."""

from .geometry import (
    Boundary, BoundaryError, BoundaryPoint, Hit,
    all_hits, build_boundary, closest_point, sample_boundary,
    circle_boundary, square_boundary, star_boundary,
    icosphere_boundary, box_boundary,
)
from .kernels import KernelKind, eval_kernel
from .problem import (
    BCType, DataKind, EstimatorConfig, Formulation, ProblemSpec,
    Quantity, SamplingMode, WalkSample,
)

__version__ = "0.1.0"

__all__ = [
    "Boundary", "BoundaryError", "BoundaryPoint", "Hit",
    "all_hits", "build_boundary", "closest_point", "sample_boundary",
    "circle_boundary", "square_boundary", "star_boundary",
    "icosphere_boundary", "box_boundary",
    "KernelKind", "eval_kernel",
    "BCType", "DataKind", "EstimatorConfig", "Formulation",
    "ProblemSpec", "Quantity", "SamplingMode", "WalkSample",
    "__version__",
]

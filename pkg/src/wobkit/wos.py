"""Walk-on-spheres baseline for interior Dirichlet problems.

Each walk jumps to a uniform point on the largest boundary-free sphere
around the current location and terminates inside a shell of thickness
``epsilon``, returning the Dirichlet data at the closest boundary point.
Used for bias illustration and efficiency comparisons against the
boundary-walk estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _walkcore as wc
from .estimators import FieldResult, _pack_bc, _state, _to3, _workspace, estimate_field
from .geometry import Boundary
from .problem import BCType, EstimatorConfig, Formulation, ProblemSpec, SpecError, WalkSample

__all__ = ["WosConfig", "wos_dirichlet", "wos_field"]


@dataclass
class WosConfig:
    epsilon: float = 1e-4       # absolute shell thickness
    max_steps: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise SpecError("epsilon must be positive")


def wos_dirichlet(boundary: Boundary, spec: ProblemSpec, cfg: WosConfig,
                  x0, rng: np.random.Generator) -> WalkSample:
    """One walk-on-spheres sample of the interior Dirichlet solution."""
    if spec.side != "interior":
        raise SpecError("walk on spheres supports interior problems only")
    if not np.all(spec.bc_type == int(BCType.DIRICHLET)):
        raise SpecError("walk on spheres requires Dirichlet data everywhere")
    spec.validate(boundary)
    ws = _workspace(16)
    p = _to3(x0, spec.dim)
    v, steps, flag, _ = wc.wos_sample(
        boundary.packed(), _pack_bc(spec), cfg.epsilon, cfg.max_steps,
        p[0], p[1], p[2], _state(rng), ws)
    return WalkSample(value=float(v), gradient=None, path_length_used=int(steps),
                      rays_cast=0, flagged=bool(flag))


def wos_field(boundary: Boundary, spec: ProblemSpec, cfg: WosConfig,
              points, n_samples: int, seed: int = 0) -> FieldResult:
    """Batched walk-on-spheres estimates at many points."""
    ecfg = EstimatorConfig(formulation=Formulation.WOS, N=n_samples, seed=seed)
    return estimate_field(boundary, spec, ecfg, points,
                          wos_eps=cfg.epsilon, wos_max_steps=cfg.max_steps)

"""Direction sampling, next-point selection along all-hits rays, resampled
importance selection and the balance heuristic.

``next_point_all_hits`` returns the kernel/pdf ratio already reduced to its
exact form: a uniform sphere direction with a uniform pick among the m
crossings has area density |dG/dn_y| / m at the chosen point, so the signed
ratio dG/dn_y / pdf equals -sign(dir . n) * m.  Estimator recursions only
multiply this by their own 2 * side-sign conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _geomcore as core
from .geometry import Boundary, BoundaryPoint

__all__ = [
    "NextPoint", "EscapedDomainError",
    "sample_sphere_direction", "next_point_all_hits",
    "next_point_hemisphere", "ris_select", "mis_balance",
]

_MAX_RESAMPLE = 10_000


class EscapedDomainError(RuntimeError):
    """Raised when direction resampling never finds a boundary crossing."""


@dataclass
class NextPoint:
    point: BoundaryPoint
    weight: float      # dG/dn_y over the pdf, including the 1/m pick factor
    hits_count: int


def sample_sphere_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the full sphere (pdf 1/(2 pi) in 2D,
    1/(4 pi) in 3D)."""
    if dim == 2:
        a = rng.uniform(0.0, 2.0 * math.pi)
        return np.array([math.cos(a), math.sin(a), 0.0])
    z = rng.uniform(-1.0, 1.0)
    a = rng.uniform(0.0, 2.0 * math.pi)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    return np.array([s * math.cos(a), s * math.sin(a), z])


def _pdf_area(boundary: Boundary, cos_v: float, t: float, m: int) -> float:
    c = 2.0 * math.pi if boundary.dim == 2 else 4.0 * math.pi
    return abs(cos_v) / (c * t ** (boundary.dim - 1)) / m


def next_point_all_hits(boundary: Boundary, from_point, rng: np.random.Generator,
                        exclude_element: int = -1,
                        resample_on_miss: bool = True) -> Optional[NextPoint]:
    """Sample the next boundary point by casting a uniform full-sphere ray
    and picking one of its m crossings uniformly.

    With ``resample_on_miss`` a zero-hit direction is redrawn (valid where
    every direction carries boundary measure, i.e. interior launch points);
    otherwise a miss returns None and the caller terminates its walk.
    """
    p = np.asarray(from_point, dtype=np.float64).ravel()
    if p.size == 2:
        p = np.array([p[0], p[1], 0.0])
    out_t = np.empty(core.MAX_HITS)
    out_e = np.empty(core.MAX_HITS, dtype=np.int32)
    out_c = np.empty(core.MAX_HITS)
    stack = np.empty(core.BVH_STACK, dtype=np.int32)
    geom = boundary.packed()
    attempts = _MAX_RESAMPLE if resample_on_miss else 1
    for _ in range(attempts):
        d = sample_sphere_direction(boundary.dim, rng)
        m = core.ray_all_hits(geom, p[0], p[1], p[2], d[0], d[1], d[2],
                              exclude_element, out_t, out_e, out_c, stack)
        if m == 0:
            continue
        j = int(rng.integers(m))
        t = float(out_t[j])
        e = int(out_e[j])
        cos_v = float(out_c[j])
        pdf = _pdf_area(boundary, cos_v, t, m)
        bp = BoundaryPoint(position=p + t * d, normal=boundary.normals[e].copy(),
                           element_id=e, pdf_area=pdf)
        # dG/dn_y / pdf_area reduces exactly to -sign(cos) * m
        return NextPoint(point=bp, weight=-math.copysign(float(m), cos_v),
                         hits_count=m)
    if resample_on_miss:
        raise EscapedDomainError("escaped domain: no boundary crossing found")
    return None


def next_point_hemisphere(boundary: Boundary, from_point: BoundaryPoint,
                          rng: np.random.Generator) -> NextPoint:
    """Closest-hit transition with a uniform inward-hemisphere direction
    (convex domains: the hemisphere density doubles the sphere density, so
    the weight reduces to -1/2 per step)."""
    if not boundary.convex_hint:
        raise ValueError("hemisphere sampling requires a convex-declared scene")
    p = from_point.position
    n = from_point.normal
    out_t = np.empty(core.MAX_HITS)
    out_e = np.empty(core.MAX_HITS, dtype=np.int32)
    out_c = np.empty(core.MAX_HITS)
    stack = np.empty(core.BVH_STACK, dtype=np.int32)
    geom = boundary.packed()
    for _ in range(_MAX_RESAMPLE):
        d = sample_sphere_direction(boundary.dim, rng)
        if float(d @ n) > 0.0:
            d = -d
        m = core.ray_all_hits(geom, p[0], p[1], p[2], d[0], d[1], d[2],
                              from_point.element_id, out_t, out_e, out_c, stack)
        if m == 0:
            continue
        j = int(np.argmin(out_t[:m]))
        t = float(out_t[j])
        e = int(out_e[j])
        cos_v = float(out_c[j])
        pdf = 2.0 * abs(_kern_dgdny_mag(boundary.dim, cos_v, t))
        bp = BoundaryPoint(position=p + t * d, normal=boundary.normals[e].copy(),
                           element_id=e, pdf_area=pdf)
        return NextPoint(point=bp, weight=-math.copysign(0.5, cos_v), hits_count=1)
    raise EscapedDomainError("escaped domain: no boundary crossing found")


def _kern_dgdny_mag(dim: int, cos_v: float, t: float) -> float:
    c = 2.0 * math.pi if dim == 2 else 4.0 * math.pi
    return abs(cos_v) / (c * t ** (dim - 1))


def ris_select(candidates: Sequence[tuple[BoundaryPoint, float]],
               rng: np.random.Generator) -> tuple[BoundaryPoint, float]:
    """Resampled importance selection among candidates with non-negative
    targets.  Returns (chosen point, weight) such that integrand(chosen) *
    weight is an unbiased estimate of the integral; all-zero targets fall
    back to a uniform pick with the plain importance weight."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    targets = np.array([t for _, t in candidates], dtype=np.float64)
    if np.any(~np.isfinite(targets)) or np.any(targets < 0):
        raise ValueError("targets must be finite and non-negative")
    pdfs = np.array([bp.pdf_area for bp, _ in candidates], dtype=np.float64)
    n = len(candidates)
    tsum = targets.sum()
    if tsum <= 0.0:
        j = int(rng.integers(n))
        return candidates[j][0], 1.0 / pdfs[j]
    j = int(rng.choice(n, p=targets / tsum))
    w = float(np.sum(targets / pdfs)) / (n * targets[j])
    return candidates[j][0], w


def mis_balance(pdf_a: float, pdf_b: float) -> float:
    """Balance-heuristic weight for technique a."""
    if pdf_a < 0 or pdf_b < 0:
        raise ValueError("densities must be non-negative")
    s = pdf_a + pdf_b
    if s <= 0.0:
        raise ValueError("no technique covers sample")
    return pdf_a / s

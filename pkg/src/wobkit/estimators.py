"""Public estimator API.

Single-sample operations return one path's contribution as a
``WalkSample``; ``estimate_field`` runs batched, reproducible sampling over
many evaluation points through the compiled driver and is what the harness
uses.  Results are deterministic for a fixed seed regardless of thread
count because every sample owns a counter-derived RNG stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _walkcore as wc
from ._geomcore import BVH_STACK, MAX_HITS
from .geometry import Boundary, closest_point
from .problem import (
    BCType, EstimatorConfig, Formulation, ProblemSpec, Quantity,
    SamplingMode, SpecError, WalkSample,
)

__all__ = [
    "estimate_dirichlet", "estimate_neumann_direct",
    "estimate_layer_density", "reconstruct_from_density",
    "estimate_forward_neumann", "estimate_volume_potential",
    "estimate_field", "estimate_field_bidir", "forward_field",
    "FieldResult", "snap_to_boundary",
]

_BLOCK = 4096


def _pack_bc(spec: ProblemSpec) -> tuple:
    vol = spec.volume
    if vol is None:
        lo = np.zeros(3)
        hi = np.zeros(3)
        measure = 0.0
    else:
        lo = np.asarray(vol.bbox_lo, dtype=np.float64)
        hi = np.asarray(vol.bbox_hi, dtype=np.float64)
        measure = float(vol.measure)
    return (
        spec.phi,
        1 if spec.pde == "poisson" else 0,
        float(spec.source_const),
        np.ascontiguousarray(spec.bc_type, dtype=np.uint8),
        np.ascontiguousarray(spec.data_kind, dtype=np.uint8),
        np.ascontiguousarray(spec.ref_id, dtype=np.int16),
        np.ascontiguousarray(spec.data_const, dtype=np.float64),
        np.ascontiguousarray(spec.alpha, dtype=np.float64),
        lo, hi, measure,
    )


def _workspace(vol_samples: int) -> tuple:
    return (
        np.empty(BVH_STACK, dtype=np.int32),
        np.empty(MAX_HITS, dtype=np.float64),
        np.empty(MAX_HITS, dtype=np.int32),
        np.empty(MAX_HITS, dtype=np.float64),
        np.empty(wc.RIS_MAX, dtype=np.int32),
        np.empty((wc.RIS_MAX, 3), dtype=np.float64),
        np.empty(wc.RIS_MAX, dtype=np.float64),
        np.empty((max(1, vol_samples), 3), dtype=np.float64),
    )


def _to3(p, dim) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == dim == 2:
        return np.array([p[0], p[1], 0.0])
    if p.size == 3:
        return p.astype(np.float64)
    raise ValueError("point must have dim components")


def _stream(rng: np.random.Generator) -> np.uint64:
    return np.uint64(rng.integers(0, 2**63, dtype=np.int64))


def _state(rng: np.random.Generator) -> np.uint64:
    # compiled functions return uint64 as a Python int; rewrap for reuse
    return np.uint64(wc.rng_init(_stream(rng), np.uint64(0), np.uint64(0)))


def _check_all(spec: ProblemSpec, bctype: BCType, what: str) -> None:
    if not np.all(spec.bc_type == int(bctype)):
        raise SpecError(f"{what} requires every element to carry a "
                        f"{bctype.name.lower()} condition")


def _hemi_flag(boundary: Boundary, cfg: EstimatorConfig) -> int:
    if cfg.sampling_mode is SamplingMode.CONVEX_HEMISPHERE:
        if not boundary.convex_hint:
            raise SpecError("hemisphere sampling requires a convex-declared scene")
        return 1
    return 0


def snap_to_boundary(boundary: Boundary, points) -> tuple[np.ndarray, np.ndarray]:
    """Project points onto the boundary (element interiors), returning the
    snapped positions and their element ids."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = np.zeros((pts.shape[0], 3))
    elems = np.zeros(pts.shape[0], dtype=np.int32)
    for i, p in enumerate(pts):
        p3 = _to3(p, boundary.dim)
        cp, _d, e = closest_point(boundary, p3)
        # nudge off element edges toward the element centroid
        mid = boundary.element_midpoints()[e]
        out[i] = cp + 1e-9 * (mid - cp)
        elems[i] = e
    return out, elems


# ---------------------------------------------------------------------------
# Single-sample operations
# ---------------------------------------------------------------------------


def estimate_dirichlet(boundary: Boundary, spec: ProblemSpec,
                       cfg: EstimatorConfig, x0,
                       rng: np.random.Generator) -> WalkSample:
    """One backward double-layer walk for a pure Dirichlet problem."""
    _check_all(spec, BCType.DIRICHLET, "the double-layer estimator")
    if cfg.quantity not in (Quantity.SOLUTION, Quantity.GRADIENT):
        raise SpecError("double-layer estimator supports solution or gradient")
    want_grad = cfg.quantity is Quantity.GRADIENT
    ws = _workspace(cfg.volume_samples)
    p = _to3(x0, spec.dim)
    v, gx, gy, gz, rays, used, flag, _ = wc.dirichlet_sample(
        boundary.packed(), _pack_bc(spec), cfg.M,
        _hemi_flag(boundary, cfg), 1 if want_grad else 0,
        p[0], p[1], p[2], _state(rng), ws)
    grad = np.array([gx, gy, gz])[: spec.dim] if want_grad else None
    return WalkSample(value=v, gradient=grad, path_length_used=used,
                      rays_cast=rays, flagged=bool(flag))


def estimate_neumann_direct(boundary: Boundary, spec: ProblemSpec,
                            cfg: EstimatorConfig, x,
                            rng: np.random.Generator) -> WalkSample:
    """One backward direct-equation walk for a pure Neumann problem.  For
    the boundary-trace quantity, x must lie on the boundary."""
    _check_all(spec, BCType.NEUMANN, "the direct-equation estimator")
    on_b = cfg.quantity is Quantity.BOUNDARY_SOLUTION
    want_grad = cfg.quantity is Quantity.GRADIENT
    ws = _workspace(cfg.volume_samples)
    p = _to3(x, spec.dim)
    e0 = -1
    if on_b:
        snapped, elems = snap_to_boundary(boundary, p[None, :])
        p = snapped[0]
        e0 = int(elems[0])
    v, gx, gy, gz, rays, used, flag, _ = wc.neumann_sample(
        boundary.packed(), _pack_bc(spec), cfg.M, cfg.ris_candidates,
        _hemi_flag(boundary, cfg), 1 if want_grad else 0, 1 if on_b else 0, e0,
        p[0], p[1], p[2], _state(rng), ws)
    grad = np.array([gx, gy, gz])[: spec.dim] if want_grad else None
    return WalkSample(value=v, gradient=grad, path_length_used=used,
                      rays_cast=rays, flagged=bool(flag))


def estimate_layer_density(boundary: Boundary, spec: ProblemSpec,
                           cfg: EstimatorConfig, y0,
                           rng: np.random.Generator) -> WalkSample:
    """One walk estimating the single-layer source density at a boundary
    point (any BC mix)."""
    ws = _workspace(cfg.volume_samples)
    p = _to3(y0, spec.dim)
    snapped, elems = snap_to_boundary(boundary, p[None, :])
    p = snapped[0]
    v, rays, used, flag, _ = wc.layer_density_sample(
        boundary.packed(), _pack_bc(spec), cfg.M, cfg.k, cfg.p_k,
        cfg.ris_candidates, int(elems[0]), p[0], p[1], p[2], _state(rng), ws)
    return WalkSample(value=v, gradient=None, path_length_used=used,
                      rays_cast=rays, flagged=bool(flag))


def reconstruct_from_density(boundary: Boundary, spec: ProblemSpec,
                             cfg: EstimatorConfig, x,
                             rng: np.random.Generator) -> WalkSample:
    """Reconstruct solution/gradient/normal-derivative from fresh
    single-layer density walks."""
    q = cfg.quantity
    ws = _workspace(cfg.volume_samples)
    p = _to3(x, spec.dim)
    e0 = -1
    nderiv = 0
    if q is Quantity.NORMAL_DERIVATIVE:
        snapped, elems = snap_to_boundary(boundary, p[None, :])
        p = snapped[0]
        e0 = int(elems[0])
        nderiv = 1
    elif q is Quantity.BOUNDARY_SOLUTION:
        snapped, elems = snap_to_boundary(boundary, p[None, :])
        p = snapped[0]
        e0 = int(elems[0])
    want_grad = q is Quantity.GRADIENT
    v, gx, gy, gz, rays, used, flag, _ = wc.single_layer_sample(
        boundary.packed(), _pack_bc(spec), cfg.M, cfg.k, cfg.p_k,
        cfg.ris_candidates, 1 if want_grad else 0, nderiv, e0,
        p[0], p[1], p[2], _state(rng), ws)
    grad = np.array([gx, gy, gz])[: spec.dim] if want_grad else None
    return WalkSample(value=v, gradient=grad, path_length_used=used,
                      rays_cast=rays, flagged=bool(flag))


def estimate_volume_potential(boundary: Boundary, spec: ProblemSpec,
                              cfg: EstimatorConfig, x,
                              rng: np.random.Generator) -> float:
    """Monte Carlo volume-potential estimate at x (mean over
    ``cfg.volume_samples`` rejection-sampled interior points)."""
    if spec.pde != "poisson":
        raise SpecError("volume term requires a volume-source problem")
    spec.ensure_volume(boundary)
    ws = _workspace(cfg.volume_samples)
    bc = _pack_bc(spec)
    p = _to3(x, spec.dim)
    zbuf = ws[7]
    n, ok, _ = wc.fill_volume_samples(boundary.packed(), bc, zbuf, _state(rng),
                                      ws[0], ws[1], ws[2], ws[3])
    if not ok:
        raise SpecError("thin domain; volume sampling ineffective")
    return float(wc.volume_term_value(spec.dim, bc, zbuf, n, p[0], p[1], p[2]))


# ---------------------------------------------------------------------------
# Batched field estimation
# ---------------------------------------------------------------------------


@dataclass
class FieldResult:
    points: np.ndarray          # (P, 3)
    mean: np.ndarray            # (P,)
    var: np.ndarray             # (P,) sample variance
    grad: Optional[np.ndarray]  # (P, 3) or None
    n: int
    rays: int
    flags: int
    mean_path_length: float
    block_sums: np.ndarray      # (P, B) partial sums for checkpointing
    block_size: int
    block_gsums: np.ndarray = None  # (P, B, 3) gradient partial sums

    def running_means(self, checkpoints: Sequence[int]) -> dict[int, np.ndarray]:
        """Per-point running means at sample-count checkpoints (each rounded
        up to a block boundary)."""
        out = {}
        csum = np.cumsum(self.block_sums, axis=1)
        for n in checkpoints:
            b = max(1, min(int(math.ceil(n / self.block_size)),
                           self.block_sums.shape[1]))
            eff = min(b * self.block_size, self.n)
            out[n] = csum[:, b - 1] / eff
        return out


_KIND_FOR = {
    (Formulation.DIRICHLET_DOUBLE_LAYER, Quantity.SOLUTION): wc.K_DIRICHLET,
    (Formulation.DIRICHLET_DOUBLE_LAYER, Quantity.GRADIENT): wc.K_DIRICHLET,
    (Formulation.NEUMANN_DIRECT, Quantity.SOLUTION): wc.K_NEUMANN_INT,
    (Formulation.NEUMANN_DIRECT, Quantity.GRADIENT): wc.K_NEUMANN_INT,
    (Formulation.NEUMANN_DIRECT, Quantity.BOUNDARY_SOLUTION): wc.K_NEUMANN_BND,
    (Formulation.SINGLE_LAYER_MIXED, Quantity.SOLUTION): wc.K_SINGLE_LAYER,
    (Formulation.SINGLE_LAYER_MIXED, Quantity.GRADIENT): wc.K_SINGLE_LAYER,
    (Formulation.SINGLE_LAYER_MIXED, Quantity.BOUNDARY_SOLUTION): wc.K_SINGLE_LAYER,
    (Formulation.SINGLE_LAYER_MIXED, Quantity.NORMAL_DERIVATIVE): wc.K_SINGLE_LAYER_NDERIV,
}


def estimate_field(boundary: Boundary, spec: ProblemSpec, cfg: EstimatorConfig,
                   points, elems: Optional[np.ndarray] = None,
                   wos_eps: float = 1e-4, wos_max_steps: int = 10_000,
                   density: bool = False,
                   block_size: Optional[int] = None) -> FieldResult:
    """Run cfg.N samples at each evaluation point.

    ``elems`` supplies host elements for on-boundary quantities (otherwise
    points are snapped automatically).  ``density=True`` estimates the
    single-layer density itself at boundary points."""
    spec.validate(boundary)
    dim = spec.dim
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] == 2:
        z = np.zeros((pts.shape[0], 1))
        pts = np.hstack([pts, z])
    pts = np.ascontiguousarray(pts, dtype=np.float64)

    if density:
        kind = wc.K_LAYER_DENSITY
    elif cfg.formulation is Formulation.WOS:
        kind = wc.K_WOS
        _check_all(spec, BCType.DIRICHLET, "walk on spheres")
        if spec.side != "interior":
            raise SpecError("walk on spheres supports interior problems only")
    else:
        key = (cfg.formulation, cfg.quantity)
        if key not in _KIND_FOR:
            raise SpecError(f"unsupported formulation/quantity pair {key}")
        kind = _KIND_FOR[key]
        if cfg.formulation is Formulation.DIRICHLET_DOUBLE_LAYER:
            _check_all(spec, BCType.DIRICHLET, "the double-layer estimator")
        elif cfg.formulation is Formulation.NEUMANN_DIRECT:
            _check_all(spec, BCType.NEUMANN, "the direct-equation estimator")

    needs_elem = kind in (wc.K_NEUMANN_BND, wc.K_SINGLE_LAYER_NDERIV,
                          wc.K_LAYER_DENSITY)
    if needs_elem and elems is None:
        pts, elems = snap_to_boundary(boundary, pts)
    if elems is None:
        elems = np.full(pts.shape[0], -1, dtype=np.int32)
    elems = np.ascontiguousarray(elems, dtype=np.int32)

    want_grad = cfg.quantity is Quantity.GRADIENT
    hemi = (_hemi_flag(boundary, cfg)
            if kind in (wc.K_DIRICHLET, wc.K_NEUMANN_INT, wc.K_NEUMANN_BND)
            else 0)
    if cfg.ris_candidates > wc.RIS_MAX:
        raise SpecError(f"ris_candidates capped at {wc.RIS_MAX}")

    P = pts.shape[0]
    N = cfg.N
    block = block_size if block_size else min(_BLOCK, N)
    block = max(1, min(block, N))
    B = (N + block - 1) // block
    out_sum = np.zeros((P, B))
    out_sumsq = np.zeros((P, B))
    out_min = np.zeros((P, B))
    out_max = np.zeros((P, B))
    out_gx = np.zeros((P, B))
    out_gy = np.zeros((P, B))
    out_gz = np.zeros((P, B))
    out_rays = np.zeros((P, B), dtype=np.int64)
    out_used = np.zeros((P, B), dtype=np.int64)
    out_flags = np.zeros((P, B), dtype=np.int64)

    wc.field_blocks(kind, boundary.packed(), _pack_bc(spec), cfg.M, hemi,
                    1 if want_grad else 0, cfg.ris_candidates, cfg.k, cfg.p_k,
                    wos_eps, wos_max_steps, max(1, cfg.volume_samples),
                    pts, elems, N, block, cfg.seed,
                    out_sum, out_sumsq, out_min, out_max,
                    out_gx, out_gy, out_gz,
                    out_rays, out_used, out_flags)

    total = out_sum.sum(axis=1)
    total2 = out_sumsq.sum(axis=1)
    mean = total / N
    var = np.maximum(total2 / N - mean * mean, 0.0) * (N / max(1, N - 1))
    # all-identical samples have exactly zero sample variance; the moment
    # formula would report cancellation residue instead
    degenerate = out_min.min(axis=1) == out_max.max(axis=1)
    var[degenerate] = 0.0
    grad = None
    gblocks = None
    if want_grad:
        grad = np.stack([out_gx.sum(axis=1), out_gy.sum(axis=1),
                         out_gz.sum(axis=1)], axis=1) / N
        gblocks = np.stack([out_gx, out_gy, out_gz], axis=2)
    return FieldResult(points=pts, mean=mean, var=var, grad=grad, n=N,
                       rays=int(out_rays.sum()), flags=int(out_flags.sum()),
                       mean_path_length=float(out_used.sum()) / (N * P),
                       block_sums=out_sum, block_size=block,
                       block_gsums=gblocks)


def estimate_field_bidir(boundary: Boundary, spec: ProblemSpec,
                         cfg: EstimatorConfig, points, technique: str,
                         nee_weights: Optional[np.ndarray] = None) -> FieldResult:
    """Dirichlet field with explicit boundary-sampling connections.

    ``technique`` is 'ray', 'boundary' or 'combined' (balance heuristic).
    ``nee_weights`` defaults to per-element |data| magnitudes."""
    spec.validate(boundary)
    _check_all(spec, BCType.DIRICHLET, "the bidirectional estimator")
    tech = {"ray": wc.TECH_RAY, "boundary": wc.TECH_BOUNDARY,
            "combined": wc.TECH_COMBINED}[technique]
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] == 2:
        pts = np.hstack([pts, np.zeros((pts.shape[0], 1))])
    pts = np.ascontiguousarray(pts)
    if nee_weights is None:
        mids = boundary.element_midpoints()
        nee_weights = np.abs(spec.raw_data(boundary, np.arange(boundary.n_elements), mids))
    wcdf, wtot = boundary.weighted_cdf(nee_weights)
    prods = np.diff(np.concatenate([[0.0], wcdf]))
    pdfb_elem = np.where(boundary.measures > 0,
                         prods / boundary.measures / wtot, 0.0)
    P = pts.shape[0]
    N = cfg.N
    block = min(_BLOCK, N)
    B = (N + block - 1) // block
    out_sum = np.zeros((P, B))
    out_sumsq = np.zeros((P, B))
    out_rays = np.zeros((P, B), dtype=np.int64)
    wc.bidir_blocks(tech, boundary.packed(), _pack_bc(spec), cfg.M,
                    wcdf, wtot, pdfb_elem, pts, N, block, cfg.seed,
                    out_sum, out_sumsq, out_rays)
    total = out_sum.sum(axis=1)
    total2 = out_sumsq.sum(axis=1)
    mean = total / N
    var = np.maximum(total2 / N - mean * mean, 0.0) * (N / max(1, N - 1))
    return FieldResult(points=pts, mean=mean, var=var, grad=None, n=N,
                       rays=int(out_rays.sum()), flags=0,
                       mean_path_length=float(cfg.M),
                       block_sums=out_sum, block_size=block)


def forward_field(boundary: Boundary, spec: ProblemSpec, cfg: EstimatorConfig,
                  points, n_paths: int, source_weighted: bool = True,
                  want_grad: bool = False) -> FieldResult:
    """Forward (adjoint) single-layer estimator: paths start on the
    boundary and every vertex splats its contribution to all evaluation
    points, so the whole field shares paths."""
    spec.validate(boundary)
    if spec.pde != "laplace":
        raise SpecError("the forward estimator supports zero-source problems")
    if np.any(spec.bc_type == int(BCType.DIRICHLET)):
        raise SpecError("the forward estimator needs Neumann/Robin data")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] == 2:
        pts = np.hstack([pts, np.zeros((pts.shape[0], 1))])
    pts = np.ascontiguousarray(pts)
    mids = boundary.element_midpoints()
    wabs = np.abs(spec.raw_data(boundary, np.arange(boundary.n_elements), mids))
    if source_weighted:
        # with all-zero flux there is nothing to start paths from
        if float(np.sum(wabs * boundary.measures)) <= 0.0:
            raise SpecError("empty forward source")
        wcdf, wtot = boundary.weighted_cdf(wabs)
        use_w = 1
    else:
        wcdf, wtot = boundary.weighted_cdf(np.ones(boundary.n_elements))
        use_w = 0
    P = pts.shape[0]
    block = min(_BLOCK, n_paths)
    B = (n_paths + block - 1) // block
    out_sum = np.zeros((B, P))
    out_sumsq = np.zeros((B, P))
    out_gsum = np.zeros((B, P, 3))
    out_rays = np.zeros(B, dtype=np.int64)
    wc.forward_blocks(boundary.packed(), _pack_bc(spec), cfg.M, use_w,
                      wcdf, wtot, pts, 1 if want_grad else 0,
                      n_paths, block, cfg.seed,
                      out_sum, out_sumsq, out_gsum, out_rays)
    total = out_sum.sum(axis=0)
    total2 = out_sumsq.sum(axis=0)
    mean = total / n_paths
    var = np.maximum(total2 / n_paths - mean * mean, 0.0) * (n_paths / max(1, n_paths - 1))
    grad = out_gsum.sum(axis=0) / n_paths if want_grad else None
    return FieldResult(points=pts, mean=mean, var=var, grad=grad, n=n_paths,
                       rays=int(out_rays.sum()), flags=0,
                       mean_path_length=float(cfg.M),
                       block_sums=out_sum.T.copy(), block_size=block)


def estimate_forward_neumann(boundary: Boundary, spec: ProblemSpec,
                             cfg: EstimatorConfig, eval_points,
                             n_paths: Optional[int] = None,
                             source_weighted: bool = True,
                             want_grad: bool = False) -> FieldResult:
    """Forward estimator with path reuse across all evaluation points."""
    return forward_field(boundary, spec, cfg, eval_points,
                         n_paths if n_paths is not None else cfg.N,
                         source_weighted=source_weighted, want_grad=want_grad)

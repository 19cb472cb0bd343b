"""Grid evaluation, convergence studies and solver comparisons."""

from __future__ import annotations

import math
import time
from functools import reduce
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import estimators as est
from ..problem import (
    BCType, EstimatorConfig, Formulation, Quantity, SpecError,
)
from ..references import reference_eval
from ..wos import WosConfig, wos_field
from .scene import Scene, SceneError

__all__ = ["FieldGrid", "run_field", "convergence_study", "compare_wos",
           "boundary_eval_points"]


@dataclass
class FieldGrid:
    """Per-point estimates over an evaluation grid plus run accounting."""

    scene: str
    quantity: str
    points: np.ndarray              # (P, 3)
    mean: np.ndarray                # (P,)
    var: np.ndarray                 # (P,)
    n: int
    grad: Optional[np.ndarray]      # (P, 3)
    ref: Optional[np.ndarray]       # (P,)
    abs_err: Optional[np.ndarray]   # (P,)
    wall_time: float
    rays: int
    grid_shape: Optional[tuple[int, int]]  # raster (H, W) when applicable
    grid_index: Optional[np.ndarray]       # (P,) raster cell of each point
    window: Optional[tuple[float, float, float, float]]

    def rmse(self) -> float:
        if self.abs_err is None:
            raise ValueError("no reference attached")
        return float(np.sqrt(np.mean(self.abs_err ** 2)))

    def raster(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        """Scatter per-point values into the (H, W) grid (NaN elsewhere)."""
        if self.grid_shape is None:
            raise ValueError("not a raster grid")
        img = np.full(self.grid_shape[0] * self.grid_shape[1], np.nan)
        img[self.grid_index] = self.mean if values is None else values
        return img.reshape(self.grid_shape)


def grid_points(scene: Scene) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raster evaluation points for a scene: returns (points, raster index,
    side label per point (+1 interior / -1 exterior))."""
    g = scene.grid
    x0, x1, y0, y1 = g.window
    W, H = g.res
    xs = x0 + (np.arange(W) + 0.5) * (x1 - x0) / W
    ys = y0 + (np.arange(H) + 0.5) * (y1 - y0) / H
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel(),
                    np.full(gx.size, g.plane_z if scene.dim == 3 else 0.0)],
                   axis=1)
    inside = scene.boundary.contains(pts)
    dist = np.array([_closest_dist(scene, p) for p in pts])
    keep_int = inside & (dist > g.margin)
    keep_ext = (~inside) & (dist > g.margin)
    if g.mask == "interior":
        keep = keep_int
    elif g.mask == "exterior":
        keep = keep_ext
    else:
        keep = keep_int | keep_ext
    idx = np.where(keep)[0]
    side = np.where(inside[idx], 1, -1)
    return pts[idx], idx, side


def _closest_dist(scene: Scene, p: np.ndarray) -> float:
    from ..geometry import closest_point
    _cp, d, _e = closest_point(scene.boundary, p)
    return d


def boundary_eval_points(scene: Scene, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spread on-boundary evaluation points (element interiors)."""
    b = scene.boundary
    n = b.n_elements
    sel = np.unique((np.arange(count) * n) // max(count, 1)).astype(np.int64)
    mids = b.element_midpoints()[sel]
    return mids, sel.astype(np.int32)


def run_field(scene: Scene, cfg: EstimatorConfig,
              quantity: Optional[Quantity] = None,
              threads: Optional[int] = None,
              n_forward_paths: Optional[int] = None) -> FieldGrid:
    """Estimate the configured quantity over the scene's evaluation grid.

    Deterministic for fixed (scene, cfg, seed): every sample owns a
    counter-derived stream, so thread count cannot change any mean.
    """
    if cfg.N < 1:
        raise SpecError("sample count N must be >= 1")
    if threads:
        import numba
        numba.set_num_threads(threads)
    quantity = Quantity(quantity) if quantity is not None else cfg.quantity
    t0 = time.perf_counter()

    if scene.grid.mask == "boundary":
        pts, elems = boundary_eval_points(scene, scene.grid.res[0] * scene.grid.res[1])
        side = scene.side if scene.side != "both" else "interior"
        spec = scene.spec_for(side)
        r = _run_batch(scene, spec, cfg, quantity, pts, elems, n_forward_paths)
        ref = _boundary_reference(scene, side, pts, quantity)
        return _finish(scene, quantity, pts, r, ref, None, None, None, t0)

    pts, idx, sides = grid_points(scene)
    if pts.shape[0] == 0:
        raise SceneError("evaluation grid is empty; enlarge the window or "
                         "reduce the margin")
    mean = np.empty(pts.shape[0])
    var = np.empty(pts.shape[0])
    grad = np.zeros((pts.shape[0], 3)) if quantity is Quantity.GRADIENT else None
    ref = np.full(pts.shape[0], np.nan)
    ref_grad = np.full((pts.shape[0], 3), np.nan)
    have_ref = False
    rays = 0
    flags = 0
    for side_name, sgn in (("interior", 1), ("exterior", -1)):
        sel = np.where(sides == sgn)[0]
        if sel.size == 0:
            continue
        spec = scene.spec_for(side_name)
        r = _run_batch(scene, spec, cfg, quantity, pts[sel], None, n_forward_paths)
        mean[sel] = r.mean
        var[sel] = r.var
        if grad is not None and r.grad is not None:
            grad[sel] = r.grad
        rays += r.rays
        flags += getattr(r, "flags", 0)
        rid = scene.reference_for(side_name)
        if rid is not None:
            have_ref = True
            rv, rg = reference_eval(rid, pts[sel])
            ref[sel] = rv
            ref_grad[sel] = rg
    if flags > cfg.N * pts.shape[0] * 0.01:
        raise RuntimeError(f"more than 1% of samples failed ({flags} flags)")
    out_ref = ref if have_ref else None
    abs_err = None
    if have_ref:
        if quantity is Quantity.GRADIENT:
            abs_err = np.linalg.norm((grad - ref_grad)[:, :scene.dim], axis=1)
            out_ref = np.linalg.norm(ref_grad[:, :scene.dim], axis=1)
        else:
            abs_err = np.abs(mean - ref)
    return FieldGrid(scene=scene.name, quantity=quantity.value, points=pts,
                     mean=mean, var=var, n=cfg.N, grad=grad, ref=out_ref,
                     abs_err=abs_err, wall_time=time.perf_counter() - t0,
                     rays=rays, grid_shape=(scene.grid.res[1], scene.grid.res[0]),
                     grid_index=idx, window=scene.grid.window)


def _boundary_reference(scene: Scene, side: str, pts: np.ndarray,
                        quantity: Quantity) -> Optional[np.ndarray]:
    rid = scene.reference_for(side)
    if rid is None:
        return None
    val, grad = reference_eval(rid, pts)
    return val


def _run_batch(scene: Scene, spec, cfg: EstimatorConfig, quantity: Quantity,
               pts: np.ndarray, elems, n_forward_paths, block_size=None):
    cfg_run = EstimatorConfig(
        formulation=cfg.formulation, M=cfg.M, N=cfg.N,
        sampling_mode=cfg.sampling_mode, ris_candidates=cfg.ris_candidates,
        k=cfg.k, p_k=cfg.p_k, volume_samples=cfg.volume_samples,
        quantity=quantity, seed=cfg.seed)
    if cfg.formulation is Formulation.NEUMANN_SINGLE_LAYER_FORWARD:
        return est.forward_field(scene.boundary, spec, cfg_run, pts,
                                 n_paths=n_forward_paths or cfg.N,
                                 want_grad=quantity is Quantity.GRADIENT)
    return est.estimate_field(scene.boundary, spec, cfg_run, pts, elems=elems,
                              block_size=block_size)


def _finish(scene, quantity, pts, r, ref, shape, idx, window, t0):
    abs_err = np.abs(r.mean - ref) if ref is not None else None
    return FieldGrid(scene=scene.name, quantity=quantity.value, points=pts,
                     mean=r.mean, var=r.var, n=r.n, grad=r.grad, ref=ref,
                     abs_err=abs_err, wall_time=time.perf_counter() - t0,
                     rays=r.rays, grid_shape=shape, grid_index=idx,
                     window=window)


# ---------------------------------------------------------------------------
# Convergence studies
# ---------------------------------------------------------------------------


def convergence_study(scene: Scene, cfg: EstimatorConfig,
                      n_schedule: Sequence[int], m_list: Sequence[int],
                      max_points: int = 16,
                      offset_correct: bool = False) -> list[dict]:
    """RMSE against the analytic reference at sample-count checkpoints, one
    row per (M, N).  Checkpoints reuse a single run's samples via running
    means, so one pass per M covers the whole schedule.  With
    ``offset_correct`` the common grid-mean offset is removed before the
    RMSE (the floating-constant convention of interior Neumann problems)."""
    n_schedule = sorted(int(n) for n in n_schedule)
    if not n_schedule:
        raise SpecError("empty N schedule")
    m_list = [int(m) for m in m_list]
    if not m_list:
        raise SpecError("empty M list")
    side = scene.side if scene.side != "both" else "interior"
    rid = scene.reference_for(side)
    if rid is None:
        raise SceneError("convergence study needs a reference solution")
    spec = scene.spec_for(side)
    pts, _idx, _sides = grid_points(scene)
    if pts.shape[0] > max_points:
        sel = np.linspace(0, pts.shape[0] - 1, max_points).astype(np.int64)
        pts = pts[sel]
    ref, _ = reference_eval(rid, pts)
    n_max = n_schedule[-1]
    rows = []
    for m in m_list:
        cfg_m = EstimatorConfig(
            formulation=cfg.formulation, M=m, N=n_max,
            sampling_mode=cfg.sampling_mode, ris_candidates=cfg.ris_candidates,
            k=cfg.k, p_k=cfg.p_k, volume_samples=cfg.volume_samples,
            quantity=cfg.quantity, seed=cfg.seed)
        t0 = time.perf_counter()
        block = reduce(math.gcd, n_schedule)
        block = max(1, min(block, 4096))
        r = _run_batch(scene, spec, cfg_m, cfg.quantity, pts, None, None,
                       block_size=block)
        wall = time.perf_counter() - t0
        means = r.running_means(n_schedule)
        for n in n_schedule:
            err = means[n] - ref
            if offset_correct:
                err = err - err.mean()
            rmse = float(np.sqrt(np.mean(err ** 2)))
            rows.append({
                "formulation": cfg.formulation.value, "M": m, "N": n,
                "rmse": rmse, "wall_time": wall * n / n_max,
                "rays": int(round(r.rays * n / n_max)),
            })
    return rows


def fit_loglog_slope(ns: np.ndarray, rmse: np.ndarray,
                     floor_factor: float = 3.0) -> tuple[float, float]:
    """Least-squares slope of log rmse vs log N restricted to checkpoints
    above floor_factor times the final (floor) error.  Returns
    (slope, floor)."""
    ns = np.asarray(ns, dtype=np.float64)
    rmse = np.asarray(rmse, dtype=np.float64)
    order = np.argsort(ns)
    ns = ns[order]
    rmse = rmse[order]
    floor = rmse[-1]
    keep = rmse > floor_factor * floor
    if keep.sum() < 3:
        keep = np.zeros_like(keep)
        keep[: max(3, keep.size // 2)] = True
    x = np.log10(ns[keep])
    y = np.log10(rmse[keep])
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, float(floor)


# ---------------------------------------------------------------------------
# Walk-on-spheres comparison
# ---------------------------------------------------------------------------


def compare_wos(scene: Scene, cfg: EstimatorConfig, eps_list: Sequence[float],
                m_list: Sequence[int], n_samples: int,
                max_points: int = 16) -> list[dict]:
    """Efficiency report rows for the boundary-walk and sphere-walk solvers
    on a shared Dirichlet scene.  Emits (method, param, N, rmse, wall_time,
    rays); no winner is asserted."""
    side = "interior"
    spec = scene.spec_for(side)
    if not np.all(spec.bc_type == int(BCType.DIRICHLET)):
        raise SceneError("solver comparison needs a Dirichlet scene")
    rid = scene.reference_for(side)
    if rid is None:
        raise SceneError("solver comparison needs a reference solution")
    pts, _idx, _sides = grid_points(scene)
    if pts.shape[0] > max_points:
        sel = np.linspace(0, pts.shape[0] - 1, max_points).astype(np.int64)
        pts = pts[sel]
    ref, _ = reference_eval(rid, pts)
    rows = []
    for m in m_list:
        cfg_m = EstimatorConfig(formulation=Formulation.DIRICHLET_DOUBLE_LAYER,
                                M=int(m), N=n_samples,
                                sampling_mode=cfg.sampling_mode,
                                seed=cfg.seed)
        t0 = time.perf_counter()
        r = est.estimate_field(scene.boundary, spec, cfg_m, pts)
        wall = time.perf_counter() - t0
        rows.append({"method": "wob", "param": float(m), "N": n_samples,
                     "rmse": float(np.sqrt(np.mean((r.mean - ref) ** 2))),
                     "wall_time": wall, "rays": r.rays})
    for eps in eps_list:
        wcfg = WosConfig(epsilon=float(eps), seed=cfg.seed)
        t0 = time.perf_counter()
        r = wos_field(scene.boundary, spec, wcfg, pts, n_samples, seed=cfg.seed)
        wall = time.perf_counter() - t0
        rows.append({"method": "wos", "param": float(eps), "N": n_samples,
                     "rmse": float(np.sqrt(np.mean((r.mean - ref) ** 2))),
                     "wall_time": wall,
                     "rays": int(r.mean_path_length * n_samples * pts.shape[0])})
    return rows

"""Scene configuration: a boundary, per-element boundary conditions, an
evaluation grid window and optional analytic references, loaded from a TOML
file (see docs/scene-format.md and docs/scene.schema.json)."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .. import geometry as geo
from ..problem import BCType, EstimatorConfig, ProblemSpec, SpecError
from ..references import REFERENCES

__all__ = ["Scene", "SceneError", "load_scene"]


class SceneError(ValueError):
    """Configuration file failed to parse or validate."""


@dataclass
class GridSpec:
    window: tuple[float, float, float, float] = (-1.2, 1.2, -1.2, 1.2)
    res: tuple[int, int] = (64, 64)
    mask: str = "interior"          # interior | exterior | both | boundary
    margin: float = 1e-2            # min distance from the boundary
    plane_z: float = 0.0            # slice plane for 3D scenes


@dataclass
class Scene:
    name: str
    boundary: geo.Boundary
    dim: int
    side: str                        # interior | exterior | both
    convex: bool
    specs: dict[str, ProblemSpec]    # keyed by side
    reference: dict[str, str]        # side -> reference id ('' if none)
    grid: GridSpec
    defaults: EstimatorConfig

    def spec_for(self, side: str) -> ProblemSpec:
        if side not in self.specs:
            raise SceneError(f"scene {self.name!r} has no {side} problem")
        return self.specs[side]

    def reference_for(self, side: str) -> Optional[str]:
        rid = self.reference.get(side, "")
        return rid or None


def _ctx(section: str, key: str = "") -> str:
    return f"[{section}]" + (f" {key}" if key else "")


def _build_boundary(cfg: dict, dim: int, base: Path) -> tuple[geo.Boundary, bool]:
    b = cfg.get("boundary")
    if not isinstance(b, dict):
        raise SceneError("missing [boundary] table")
    if "file" in b:
        path = base / b["file"]
        try:
            bnd = geo.build_boundary(path)
        except geo.BoundaryError as e:
            raise SceneError(f"[boundary] file {path}: {e}") from e
        return bnd, bool(b.get("convex", False))
    prim = b.get("primitive")
    try:
        if prim == "circle":
            bnd = geo.circle_boundary(n=int(b.get("segments", 512)),
                                      radius=float(b.get("radius", 1.0)),
                                      center=b.get("center", (0.0, 0.0)))
        elif prim == "square":
            bnd = geo.square_boundary(n_per_side=int(b.get("segments_per_side", 128)),
                                      half_width=float(b.get("half_width", 1.0)),
                                      center=b.get("center", (0.0, 0.0)))
        elif prim == "star":
            bnd = geo.star_boundary(points=int(b.get("points", 5)),
                                    r_outer=float(b.get("r_outer", 1.0)),
                                    r_inner=float(b.get("r_inner", 0.4)),
                                    n_segments=int(b.get("segments", 512)))
        elif prim == "sphere":
            bnd = geo.icosphere_boundary(subdivisions=int(b.get("subdivisions", 3)),
                                         radius=float(b.get("radius", 1.0)))
        elif prim == "box":
            bnd = geo.box_boundary(half_extents=b.get("half_extents", (1.0, 1.0, 1.0)))
        else:
            raise SceneError(f"[boundary] unknown primitive {prim!r}")
    except (ValueError, TypeError) as e:
        raise SceneError(f"[boundary] {e}") from e
    if bnd.dim != dim:
        raise SceneError(f"[boundary] primitive {prim!r} is {bnd.dim}D but "
                         f"[domain] dim = {dim}")
    return bnd, bool(b.get("convex", bnd.convex_hint))


_BC_NAMES = {"dirichlet": BCType.DIRICHLET, "neumann": BCType.NEUMANN,
             "robin": BCType.ROBIN}


def _data_rule(raw, ref_id: str, section: str):
    """Translate a config data entry into an assign() argument."""
    if isinstance(raw, (int, float)):
        return float(raw)
    if raw == "ref":
        if not ref_id:
            raise SceneError(f"{_ctx(section, 'data')}: 'ref' needs a "
                             "[reference] entry")
        return ref_id
    if isinstance(raw, str) and raw in REFERENCES:
        return raw
    raise SceneError(f"{_ctx(section, 'data')}: expected a number, 'ref' or a "
                     f"registered reference id, got {raw!r}")


def _select_elements(boundary: geo.Boundary, region: dict) -> np.ndarray:
    sel = region.get("select")
    mids = boundary.element_midpoints()
    if sel == "tag":
        return np.where(boundary.bc_tag == int(region["tag"]))[0]
    if sel == "angle":
        a0, a1 = (float(v) for v in region["range_deg"])
        ang = np.degrees(np.arctan2(mids[:, 1], mids[:, 0])) % 360.0
        a0 %= 360.0
        a1 %= 360.0
        if a0 <= a1:
            m = (ang >= a0) & (ang <= a1)
        else:
            m = (ang >= a0) | (ang <= a1)
        return np.where(m)[0]
    if sel == "index":
        lo, hi = (int(v) for v in region["range"])
        return np.arange(lo, hi)
    raise SceneError(f"[[bc.region]] unknown select {sel!r}")


def _apply_bc(cfg: dict, boundary: geo.Boundary, spec: ProblemSpec,
              ref_id: str) -> None:
    bc = cfg.get("bc")
    if not isinstance(bc, dict):
        raise SceneError("missing [bc] table")
    t = bc.get("type", "dirichlet")
    if t not in _BC_NAMES:
        raise SceneError(f"{_ctx('bc', 'type')}: unknown type {t!r}")
    alpha = float(bc.get("alpha", 1.0))
    spec.assign(np.arange(boundary.n_elements), _BC_NAMES[t],
                _data_rule(bc.get("data", "ref"), ref_id, "bc"), alpha)
    for region in bc.get("region", []):
        rt = region.get("type", t)
        if rt not in _BC_NAMES:
            raise SceneError(f"[[bc.region]] unknown type {rt!r}")
        elems = _select_elements(boundary, region)
        spec.assign(elems, _BC_NAMES[rt],
                    _data_rule(region.get("data", bc.get("data", "ref")),
                               ref_id, "bc.region"),
                    float(region.get("alpha", alpha)))
    rnd = bc.get("random")
    if rnd:
        types = [(_BC_NAMES[n]) for n in rnd.get("types",
                 ["dirichlet", "neumann", "robin"])]
        rng = np.random.default_rng(int(rnd.get("seed", 0)))
        draw = rng.integers(0, len(types), size=boundary.n_elements)
        for ti, bct in enumerate(types):
            elems = np.where(draw == ti)[0]
            if elems.size:
                spec.assign(elems, bct,
                            _data_rule(rnd.get("data", bc.get("data", "ref")),
                                       ref_id, "bc.random"),
                            float(rnd.get("alpha", alpha)))


def load_scene(path: str | Path) -> Scene:
    """Parse and fully validate a scene configuration file."""
    path = Path(path)
    try:
        cfg = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise SceneError(f"{path}: {e}") from e

    dom = cfg.get("domain", {})
    dim = int(dom.get("dim", 2))
    if dim not in (2, 3):
        raise SceneError(_ctx("domain", "dim") + ": must be 2 or 3")
    side = dom.get("side", "interior")
    if side not in ("interior", "exterior", "both"):
        raise SceneError(_ctx("domain", "side") +
                         ": must be interior, exterior or both")

    boundary, convex = _build_boundary(cfg, dim, path.parent)

    refs = cfg.get("reference", {})
    ref_int = str(refs.get("interior", refs.get("id", "")))
    ref_ext = str(refs.get("exterior", ""))
    for rid in (ref_int, ref_ext):
        if rid and rid not in REFERENCES:
            raise SceneError(_ctx("reference") + f": unknown id {rid!r}")

    pde_tbl = cfg.get("pde", {})
    pde = pde_tbl.get("kind", "laplace")
    if pde not in ("laplace", "poisson"):
        raise SceneError(_ctx("pde", "kind") + ": must be laplace or poisson")
    source = float(pde_tbl.get("source", 0.0))

    sides = ("interior", "exterior") if side == "both" else (side,)
    specs = {}
    for s in sides:
        ref_id = ref_int if s == "interior" else (ref_ext or ref_int)
        spec = ProblemSpec.uniform(boundary, dim, s, BCType.DIRICHLET, 0.0,
                                   pde=pde, source_const=source)
        _apply_bc(cfg, boundary, spec, ref_id)
        try:
            spec.validate(boundary)
        except SpecError as e:
            raise SceneError(f"{path}: {e}") from e
        specs[s] = spec

    g = cfg.get("grid", {})
    window = tuple(float(v) for v in g.get("window", (-1.2, 1.2, -1.2, 1.2)))
    if len(window) != 4 or window[0] >= window[1] or window[2] >= window[3]:
        raise SceneError(_ctx("grid", "window") + ": need [x0, x1, y0, y1] with "
                         "x0 < x1 and y0 < y1")
    res = tuple(int(v) for v in g.get("res", (64, 64)))
    if len(res) != 2 or res[0] < 1 or res[1] < 1:
        raise SceneError(_ctx("grid", "res") + ": need two positive integers")
    mask = g.get("mask", side if side != "both" else "both")
    if mask not in ("interior", "exterior", "both", "boundary"):
        raise SceneError(_ctx("grid", "mask") + f": unknown mask {mask!r}")
    grid = GridSpec(window=window, res=res, mask=mask,
                    margin=float(g.get("margin", 1e-2)),
                    plane_z=float(g.get("plane_z", 0.0)))

    est = cfg.get("estimator", {})
    try:
        defaults = EstimatorConfig(
            formulation=est.get("formulation", "dirichlet-double-layer"),
            M=int(est.get("M", 4)),
            N=int(est.get("N", 10_000)),
            sampling_mode=est.get("sampling", "all-hits"),
            ris_candidates=int(est.get("ris_candidates", 16)),
            k=float(est.get("k", 4.0)),
            p_k=float(est.get("p_k", 2.0 / 3.0)),
            volume_samples=int(est.get("volume_samples", 16)),
            quantity=est.get("quantity", "solution"),
            seed=int(est.get("seed", 0)),
        )
    except (ValueError, SpecError) as e:
        raise SceneError(f"{_ctx('estimator')}: {e}") from e

    name = cfg.get("name", path.stem)
    scene = Scene(name=name, boundary=boundary, dim=dim, side=side,
                  convex=convex, specs=specs,
                  reference={"interior": ref_int, "exterior": ref_ext},
                  grid=grid, defaults=defaults)
    scene.boundary.convex_hint = convex
    return scene

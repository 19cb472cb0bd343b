"""Boundary representation: oriented segment loops (2D) or triangle meshes
(3D) with outward unit normals, a surface-area-heuristic BVH, all-hits ray
queries, closest-point queries and area-measure boundary sampling.

The interior domain is always the region the normals point away from; all
walks and parity tests rely on that orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _geomcore as core

__all__ = [
    "Boundary", "Hit", "BoundaryPoint", "BoundaryError",
    "build_boundary",
    "circle_boundary", "square_boundary", "star_boundary",
    "icosphere_boundary", "box_boundary",
    "load_obj_boundary", "load_loops_csv", "boundary_from_loops",
    "all_hits", "closest_point", "sample_boundary",
]

_LEAF_SIZE = 4
_SAH_BINS = 16


class BoundaryError(ValueError):
    """Raised for non-watertight, inconsistently wound or degenerate input."""


@dataclass
class Hit:
    """One boundary crossing of a ray."""

    t: float
    point: np.ndarray
    element_id: int
    normal: np.ndarray
    front_facing: float  # sign of dot(direction, normal)


@dataclass
class BoundaryPoint:
    """A sampled point on the boundary with its area-measure density."""

    position: np.ndarray
    normal: np.ndarray
    element_id: int
    pdf_area: float


@dataclass
class Boundary:
    """Closed, consistently oriented boundary with query acceleration.

    Immutable after construction; every query is read-only and reentrant.
    """

    dim: int
    vertices: np.ndarray          # (V, 3)
    elements: np.ndarray          # (E, 2) segment or (E, 3) triangle indices
    normals: np.ndarray           # (E, 3) outward unit normals
    measures: np.ndarray          # (E,) length / area
    bc_tag: np.ndarray            # (E,) int32 boundary-condition tags
    convex_hint: bool = False

    # derived, filled in __post_init__
    p0: np.ndarray = field(init=False, repr=False)
    e1: np.ndarray = field(init=False, repr=False)
    e2: np.ndarray = field(init=False, repr=False)
    total_area: float = field(init=False)
    diameter: float = field(init=False)
    t_min: float = field(init=False)
    _bvh: tuple = field(init=False, repr=False)
    _packed: tuple = field(init=False, repr=False)

    def __post_init__(self):
        v = self.vertices
        el = self.elements
        self.p0 = np.ascontiguousarray(v[el[:, 0]], dtype=np.float64)
        self.e1 = np.ascontiguousarray(v[el[:, 1]] - v[el[:, 0]], dtype=np.float64)
        if self.dim == 3:
            self.e2 = np.ascontiguousarray(v[el[:, 2]] - v[el[:, 0]], dtype=np.float64)
        else:
            self.e2 = np.zeros_like(self.e1)
        self.total_area = float(self.measures.sum())
        lo = v.min(axis=0)
        hi = v.max(axis=0)
        self.diameter = float(np.linalg.norm(hi - lo))
        self.t_min = 1e-6 * self.diameter
        self._bvh = _build_bvh(self)
        cdf = np.cumsum(self.measures)
        bmin, bmax, left, right, start, count, perm = self._bvh
        self._packed = (
            self.dim, self.p0, self.e1, self.e2,
            np.ascontiguousarray(self.normals, dtype=np.float64),
            np.ascontiguousarray(self.measures, dtype=np.float64),
            cdf, self.total_area,
            bmin, bmax, left, right, start, count, perm,
            self.t_min, self.diameter,
        )

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def packed(self) -> tuple:
        """Flat array bundle consumed by the compiled query kernels."""
        return self._packed

    def enclosed_measure(self) -> float:
        """Exact area (2D) or volume (3D) enclosed by the boundary, via the
        divergence theorem."""
        if self.dim == 2:
            x0 = self.p0[:, 0]
            y0 = self.p0[:, 1]
            x1 = self.p0[:, 0] + self.e1[:, 0]
            y1 = self.p0[:, 1] + self.e1[:, 1]
            return float(0.5 * np.sum(x0 * y1 - x1 * y0))
        cross = np.cross(self.e1, self.e2)
        return float(np.sum(np.einsum("ij,ij->i", self.p0, cross)) / 6.0)

    def element_midpoints(self) -> np.ndarray:
        if self.dim == 2:
            return self.p0 + 0.5 * self.e1
        return self.p0 + (self.e1 + self.e2) / 3.0

    def weighted_cdf(self, weights: np.ndarray) -> tuple[np.ndarray, float]:
        """Cumulative (weight * measure) table for weighted element sampling."""
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (self.n_elements,):
            raise ValueError("weights must be per-element")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        prods = w * self.measures
        total = float(prods.sum())
        if total <= 0.0:
            raise ValueError("empty sampling support")
        return np.cumsum(prods), total

    def contains(self, points: np.ndarray, seed: int = 0) -> np.ndarray:
        """Crossing-parity interior test for a batch of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        pts3 = _to3(pts, self.dim)
        out = np.empty(pts3.shape[0], dtype=bool)
        for i, p in enumerate(pts3):
            # note: compiled functions return uint64 as a Python int; rewrap
            st = np.uint64(core.rng_init(np.uint64(seed ^ 0xC0FFEE),
                                         np.uint64(i), np.uint64(1)))
            inside, _ = core.point_inside(self._packed, p[0], p[1], p[2], st)
            out[i] = inside
        return out


# ---------------------------------------------------------------------------
# Validation helpers
# ---------------------------------------------------------------------------


def _to3(pts: np.ndarray, dim: int) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    if pts.shape[-1] == 3:
        return pts
    if pts.shape[-1] == 2 and dim == 2:
        out = np.zeros(pts.shape[:-1] + (3,))
        out[..., :2] = pts
        return out
    raise ValueError(f"expected {dim}-component points")


def _validate_2d_loops(elements: np.ndarray, n_vertices: int) -> None:
    deg = np.zeros(n_vertices, dtype=np.int64)
    out_deg = np.zeros(n_vertices, dtype=np.int64)
    for a, b in elements:
        deg[a] += 1
        deg[b] += 1
        out_deg[a] += 1
    used = deg > 0
    if not np.all(deg[used] == 2):
        raise BoundaryError("non-watertight boundary: open segment loop")
    if not np.all(out_deg[used] == 1):
        raise BoundaryError("orientation error: inconsistent segment winding")


def _validate_3d_mesh(elements: np.ndarray) -> None:
    counts: dict[tuple[int, int], list[int]] = {}
    for tri in elements:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (min(a, b), max(a, b))
            counts.setdefault(key, [0, 0])
            counts[key][0 if a < b else 1] += 1
    for key, (fwd, rev) in counts.items():
        if fwd + rev != 2:
            raise BoundaryError("non-watertight boundary: edge not shared by exactly 2 triangles")
        if fwd != 1 or rev != 1:
            raise BoundaryError("orientation error: inconsistent triangle winding")


def _finish_2d(vertices: np.ndarray, elements: np.ndarray,
               bc_tag: Optional[np.ndarray] = None,
               convex_hint: bool = False) -> Boundary:
    vertices = _to3(vertices, 2)
    elements = np.asarray(elements, dtype=np.int32)
    _validate_2d_loops(elements, vertices.shape[0])
    edge = vertices[elements[:, 1], :2] - vertices[elements[:, 0], :2]
    length = np.linalg.norm(edge, axis=1)
    scale = float(np.abs(vertices).max()) + 1.0
    if np.any(length <= 1e-12 * scale):
        raise BoundaryError("degenerate element: zero-length segment")
    # CCW loop (positive enclosed area) has outward normal (ey, -ex)
    x0 = vertices[elements[:, 0], 0]
    y0 = vertices[elements[:, 0], 1]
    x1 = vertices[elements[:, 1], 0]
    y1 = vertices[elements[:, 1], 1]
    signed_area = 0.5 * float(np.sum(x0 * y1 - x1 * y0))
    if signed_area < 0:
        elements = elements[:, ::-1].copy()
        edge = -edge
        signed_area = -signed_area
    normals = np.zeros((elements.shape[0], 3))
    normals[:, 0] = edge[:, 1] / length
    normals[:, 1] = -edge[:, 0] / length
    if bc_tag is None:
        bc_tag = np.zeros(elements.shape[0], dtype=np.int32)
    return Boundary(2, vertices, elements, normals, length,
                    np.asarray(bc_tag, dtype=np.int32), convex_hint)


def _finish_3d(vertices: np.ndarray, elements: np.ndarray,
               bc_tag: Optional[np.ndarray] = None,
               convex_hint: bool = False) -> Boundary:
    vertices = np.asarray(vertices, dtype=np.float64)
    elements = np.asarray(elements, dtype=np.int32)
    _validate_3d_mesh(elements)
    a = vertices[elements[:, 0]]
    b = vertices[elements[:, 1]]
    c = vertices[elements[:, 2]]
    cross = np.cross(b - a, c - a)
    area2 = np.linalg.norm(cross, axis=1)
    scale = float(np.abs(vertices).max()) + 1.0
    if np.any(area2 <= 1e-12 * scale * scale):
        raise BoundaryError("degenerate element: zero-area triangle")
    # enclosed signed volume decides whether the consistent winding is outward
    vol = float(np.sum(np.einsum("ij,ij->i", a, cross))) / 6.0
    if vol < 0:
        elements = elements[:, ::-1].copy()
        cross = -cross
    normals = cross / area2[:, None]
    if bc_tag is None:
        bc_tag = np.zeros(elements.shape[0], dtype=np.int32)
    return Boundary(3, vertices, elements, normals, 0.5 * area2,
                    np.asarray(bc_tag, dtype=np.int32), convex_hint)


# ---------------------------------------------------------------------------
# BVH construction (binned surface-area heuristic)
# ---------------------------------------------------------------------------


def _build_bvh(b: Boundary) -> tuple:
    n = b.n_elements
    if b.dim == 2:
        pts = np.stack([b.p0, b.p0 + b.e1], axis=1)
    else:
        pts = np.stack([b.p0, b.p0 + b.e1, b.p0 + b.e2], axis=1)
    prim_min = pts.min(axis=1)
    prim_max = pts.max(axis=1)
    if b.dim == 2:
        # give 2D boxes unit thickness so the z slab never rejects
        prim_min[:, 2] = -1.0
        prim_max[:, 2] = 1.0
    centroid = 0.5 * (prim_min + prim_max)

    max_nodes = 2 * n
    bmin = np.empty((max_nodes, 3))
    bmax = np.empty((max_nodes, 3))
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    start = np.zeros(max_nodes, dtype=np.int32)
    count = np.zeros(max_nodes, dtype=np.int32)
    perm = np.arange(n, dtype=np.int32)

    n_nodes = 0

    def half_area(lo, hi):
        d = np.maximum(hi - lo, 0.0)
        return d[0] * d[1] + d[1] * d[2] + d[2] * d[0]

    # iterative build with an explicit work stack of (node, lo, hi) ranges
    stack = [(0, 0, n)]
    n_nodes = 1
    while stack:
        node, lo, hi = stack.pop()
        ids = perm[lo:hi]
        nb_min = prim_min[ids].min(axis=0)
        nb_max = prim_max[ids].max(axis=0)
        bmin[node] = nb_min
        bmax[node] = nb_max
        m = hi - lo
        if m <= _LEAF_SIZE:
            start[node] = lo
            count[node] = m
            continue
        cmin = centroid[ids].min(axis=0)
        cmax = centroid[ids].max(axis=0)
        extent = cmax - cmin
        best_cost = math.inf
        best_axis = -1
        best_split = -1
        for axis in range(3):
            if extent[axis] <= 1e-30:
                continue
            rel = (centroid[ids, axis] - cmin[axis]) / extent[axis]
            bins = np.minimum((rel * _SAH_BINS).astype(np.int64), _SAH_BINS - 1)
            bin_counts = np.bincount(bins, minlength=_SAH_BINS)
            bin_lo = np.full((_SAH_BINS, 3), np.inf)
            bin_hi = np.full((_SAH_BINS, 3), -np.inf)
            for k in range(_SAH_BINS):
                sel = bins == k
                if bin_counts[k]:
                    bin_lo[k] = prim_min[ids[sel]].min(axis=0)
                    bin_hi[k] = prim_max[ids[sel]].max(axis=0)
            # prefix/suffix sweeps
            lacc_lo = np.minimum.accumulate(bin_lo, axis=0)
            lacc_hi = np.maximum.accumulate(bin_hi, axis=0)
            racc_lo = np.minimum.accumulate(bin_lo[::-1], axis=0)[::-1]
            racc_hi = np.maximum.accumulate(bin_hi[::-1], axis=0)[::-1]
            lcnt = np.cumsum(bin_counts)
            for k in range(_SAH_BINS - 1):
                nl = lcnt[k]
                nr = m - nl
                if nl == 0 or nr == 0:
                    continue
                cost = (nl * half_area(lacc_lo[k], lacc_hi[k])
                        + nr * half_area(racc_lo[k + 1], racc_hi[k + 1]))
                if cost < best_cost:
                    best_cost = cost
                    best_axis = axis
                    best_split = k
        if best_axis < 0:
            # all centroids coincide: median split by index
            mid = lo + m // 2
        else:
            rel = (centroid[ids, best_axis] - cmin[best_axis]) / extent[best_axis]
            bins = np.minimum((rel * _SAH_BINS).astype(np.int64), _SAH_BINS - 1)
            mask = bins <= best_split
            sel = ids[mask]
            rest = ids[~mask]
            perm[lo:lo + sel.size] = sel
            perm[lo + sel.size:hi] = rest
            mid = lo + sel.size
            if mid == lo or mid == hi:
                mid = lo + m // 2
        l_node = n_nodes
        r_node = n_nodes + 1
        n_nodes += 2
        left[node] = l_node
        right[node] = r_node
        stack.append((l_node, lo, mid))
        stack.append((r_node, mid, hi))

    return (np.ascontiguousarray(bmin[:n_nodes]),
            np.ascontiguousarray(bmax[:n_nodes]),
            left[:n_nodes], right[:n_nodes],
            start[:n_nodes], count[:n_nodes], perm)


# ---------------------------------------------------------------------------
# Primitive builders
# ---------------------------------------------------------------------------


def circle_boundary(n: int = 512, radius: float = 1.0,
                    center: Sequence[float] = (0.0, 0.0)) -> Boundary:
    """Regular n-gon discretization of a circle (CCW, outward normals)."""
    if n < 3 or radius <= 0:
        raise ValueError("circle needs n >= 3 and radius > 0")
    theta = 2.0 * np.pi * np.arange(n) / n
    verts = np.stack([center[0] + radius * np.cos(theta),
                      center[1] + radius * np.sin(theta)], axis=1)
    elems = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    return _finish_2d(verts, elems, convex_hint=True)


def square_boundary(n_per_side: int = 128, half_width: float = 1.0,
                    center: Sequence[float] = (0.0, 0.0)) -> Boundary:
    """Axis-aligned square, n_per_side segments per edge, tagged 0..3
    (right, top, left, bottom)."""
    if n_per_side < 1 or half_width <= 0:
        raise ValueError("square needs n_per_side >= 1 and half_width > 0")
    h = half_width
    cx, cy = center
    corners = np.array([[cx + h, cy - h], [cx + h, cy + h],
                        [cx - h, cy + h], [cx - h, cy - h]])
    verts = []
    tags = []
    for side in range(4):
        a = corners[side]
        bpt = corners[(side + 1) % 4]
        for k in range(n_per_side):
            verts.append(a + (bpt - a) * (k / n_per_side))
            tags.append(side)
    verts = np.asarray(verts)
    n = verts.shape[0]
    elems = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    return _finish_2d(verts, elems, bc_tag=np.asarray(tags, dtype=np.int32),
                      convex_hint=True)


def star_boundary(points: int = 5, r_outer: float = 1.0, r_inner: float = 0.4,
                  n_segments: int = 512,
                  center: Sequence[float] = (0.0, 0.0)) -> Boundary:
    """k-pointed star polygon, subdivided to roughly n_segments segments."""
    if points < 3 or r_outer <= r_inner or r_inner <= 0:
        raise ValueError("star needs points >= 3 and 0 < r_inner < r_outer")
    k = 2 * points
    base = []
    for i in range(k):
        r = r_outer if i % 2 == 0 else r_inner
        a = np.pi / 2 + 2.0 * np.pi * i / k
        base.append([center[0] + r * np.cos(a), center[1] + r * np.sin(a)])
    base = np.asarray(base)
    per_edge = max(1, n_segments // k)
    verts = []
    for i in range(k):
        a = base[i]
        b = base[(i + 1) % k]
        for s in range(per_edge):
            verts.append(a + (b - a) * (s / per_edge))
    verts = np.asarray(verts)
    n = verts.shape[0]
    elems = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    return _finish_2d(verts, elems, convex_hint=False)


def icosphere_boundary(subdivisions: int = 3, radius: float = 1.0,
                       center: Sequence[float] = (0.0, 0.0, 0.0)) -> Boundary:
    """Icosahedron subdivided and projected onto a sphere."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        edge_mid: dict[tuple[int, int], int] = {}
        vlist = list(verts)

        def midpoint(a: int, bq: int) -> int:
            key = (min(a, bq), max(a, bq))
            if key not in edge_mid:
                m = vlist[a] + vlist[bq]
                m = m / np.linalg.norm(m)
                edge_mid[key] = len(vlist)
                vlist.append(m)
            return edge_mid[key]

        new_faces = []
        for a, bq, c in faces:
            ab = midpoint(a, bq)
            bc = midpoint(bq, c)
            ca = midpoint(c, a)
            new_faces += [[a, ab, ca], [ab, bq, bc], [ca, bc, c], [ab, bc, ca]]
        verts = np.asarray(vlist)
        faces = np.asarray(new_faces, dtype=np.int64)
    verts = verts * radius + np.asarray(center)[None, :]
    return _finish_3d(verts, faces, convex_hint=True)


def box_boundary(half_extents: Sequence[float] = (1.0, 1.0, 1.0),
                 center: Sequence[float] = (0.0, 0.0, 0.0)) -> Boundary:
    """Axis-aligned box of 12 triangles, faces tagged 0..5 (+x,-x,+y,-y,+z,-z)."""
    hx, hy, hz = half_extents
    cx, cy, cz = center
    v = np.array([[sx * hx + cx, sy * hy + cy, sz * hz + cz]
                  for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                 dtype=np.float64)
    # index bits: x<<2 | y<<1 | z
    quads = [
        ((4, 5, 7, 6), 0), ((0, 2, 3, 1), 1),
        ((2, 6, 7, 3), 2), ((0, 1, 5, 4), 3),
        ((1, 3, 7, 5), 4), ((0, 4, 6, 2), 5),
    ]
    faces = []
    tags = []
    for (a, b, c, d), tag in quads:
        faces += [[a, b, c], [a, c, d]]
        tags += [tag, tag]
    return _finish_3d(v, np.asarray(faces, dtype=np.int64),
                      bc_tag=np.asarray(tags, dtype=np.int32), convex_hint=True)


# ---------------------------------------------------------------------------
# File loaders
# ---------------------------------------------------------------------------


def load_obj_boundary(path: str | Path) -> Boundary:
    """Triangle mesh from a wavefront-style text file (v/f records only).
    Normals are recomputed from the winding."""
    verts = []
    faces = []
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            if len(idx) < 3:
                raise BoundaryError("degenerate element: face with < 3 vertices")
            for k in range(1, len(idx) - 1):  # fan triangulation
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise BoundaryError("no v/f records found")
    return _finish_3d(np.asarray(verts), np.asarray(faces, dtype=np.int64))


def boundary_from_loops(loops: Sequence[np.ndarray]) -> Boundary:
    """2D boundary from one or more closed vertex loops."""
    verts = []
    elems = []
    offset = 0
    for loop in loops:
        loop = np.asarray(loop, dtype=np.float64)
        n = loop.shape[0]
        if n < 3:
            raise BoundaryError("loop with fewer than 3 vertices")
        verts.append(loop)
        idx = np.arange(n) + offset
        elems.append(np.stack([idx, np.roll(idx, -1)], axis=1))
        offset += n
    return _finish_2d(np.vstack(verts), np.vstack(elems))


def load_loops_csv(path: str | Path) -> Boundary:
    """2D loops from CSV: two columns x,y; blank lines separate loops."""
    loops = []
    current: list[list[float]] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            if current:
                loops.append(np.asarray(current))
                current = []
            continue
        parts = line.split(",")
        current.append([float(parts[0]), float(parts[1])])
    if current:
        loops.append(np.asarray(current))
    if not loops:
        raise BoundaryError("no loops found in CSV")
    return boundary_from_loops(loops)


_PRIMITIVES = {
    "circle": circle_boundary,
    "square": square_boundary,
    "star": star_boundary,
    "sphere": icosphere_boundary,
    "box": box_boundary,
}


def build_boundary(mesh_source, bc_assignment=None) -> Boundary:
    """Build a validated boundary from a primitive spec or a mesh file.

    ``mesh_source`` is either a dict like ``{"primitive": "circle", ...}``
    or a path to an OBJ (3D) / CSV loop (2D) file.  ``bc_assignment`` is an
    optional callable mapping element midpoints (E, 3) to integer tags.
    """
    if isinstance(mesh_source, dict):
        kind = mesh_source.get("primitive")
        if kind not in _PRIMITIVES:
            raise ValueError(f"unknown primitive {kind!r}")
        kwargs = {k: v for k, v in mesh_source.items() if k != "primitive"}
        b = _PRIMITIVES[kind](**kwargs)
    else:
        p = Path(mesh_source)
        if p.suffix.lower() == ".obj":
            b = load_obj_boundary(p)
        else:
            b = load_loops_csv(p)
    if bc_assignment is not None:
        tags = np.asarray(bc_assignment(b.element_midpoints()), dtype=np.int32)
        if tags.shape != (b.n_elements,):
            raise ValueError("bc_assignment must return one tag per element")
        b.bc_tag[:] = tags
    return b


# ---------------------------------------------------------------------------
# Query wrappers
# ---------------------------------------------------------------------------


def all_hits(boundary: Boundary, origin, direction,
             exclude_element: int = -1) -> list[Hit]:
    """Every boundary crossing of the half-line, sorted ascending in t."""
    o = _to3(np.asarray(origin, dtype=np.float64), boundary.dim).ravel()
    d = _to3(np.asarray(direction, dtype=np.float64), boundary.dim).ravel()
    norm = np.linalg.norm(d)
    if not math.isclose(norm, 1.0, rel_tol=1e-9):
        raise ValueError("direction must be normalized")
    out_t = np.empty(core.MAX_HITS)
    out_e = np.empty(core.MAX_HITS, dtype=np.int32)
    out_c = np.empty(core.MAX_HITS)
    stack = np.empty(core.BVH_STACK, dtype=np.int32)
    m = core.ray_all_hits(boundary.packed(), o[0], o[1], o[2],
                          d[0], d[1], d[2], exclude_element,
                          out_t, out_e, out_c, stack)
    order = np.argsort(out_t[:m], kind="stable")
    hits = []
    for i in order:
        t = float(out_t[i])
        e = int(out_e[i])
        hits.append(Hit(t=t, point=o + t * d, element_id=e,
                        normal=boundary.normals[e].copy(),
                        front_facing=float(np.sign(out_c[i]))))
    return hits


def closest_point(boundary: Boundary, x) -> tuple[np.ndarray, float, int]:
    """Closest boundary point, its distance and host element."""
    p = _to3(np.asarray(x, dtype=np.float64), boundary.dim).ravel()
    dist, e, cx, cy, cz = core.closest_point(boundary.packed(), p[0], p[1], p[2])
    return np.array([cx, cy, cz]), float(dist), int(e)


def sample_boundary(boundary: Boundary, rng: np.random.Generator,
                    weights: Optional[np.ndarray] = None) -> BoundaryPoint:
    """Area-measure boundary sample; optionally weighted per element."""
    state = np.uint64(rng.integers(0, 2**63, dtype=np.int64))
    state = np.uint64(core.rng_init(state, np.uint64(0), np.uint64(0)))
    if weights is None:
        e, x, y, z, pdf, _ = core.sample_boundary_uniform(boundary.packed(), state)
    else:
        wcdf, wtotal = boundary.weighted_cdf(weights)
        e, x, y, z, pdf, _ = core.sample_boundary_weighted(
            boundary.packed(), wcdf, wtotal, state)
    return BoundaryPoint(position=np.array([x, y, z]),
                         normal=boundary.normals[e].copy(),
                         element_id=int(e), pdf_area=float(pdf))

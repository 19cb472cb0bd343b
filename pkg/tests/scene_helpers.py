"""Shared scene builders for estimator and acceptance tests."""

from __future__ import annotations

import numpy as np

from wobkit import geometry as geo
from wobkit.problem import BCType, ProblemSpec


def rhombus(n: int = 512, half_width: float = 1.0,
            half_height: float = 0.35) -> geo.Boundary:
    """Convex rhombus with sharp tips; the tips carry slowly-contracting
    boundary-operator modes, which makes truncation bias measurable."""
    corners = np.array([[half_width, 0.0], [0.0, half_height],
                        [-half_width, 0.0], [0.0, -half_height]])
    per = n // 4
    verts = []
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        for k in range(per):
            verts.append(a + (b - a) * (k / per))
    b = geo.boundary_from_loops([np.asarray(verts)])
    b.convex_hint = True
    return b


def thin_arc_mixed_spec(boundary: geo.Boundary, data: str = "x",
                        side: str = "interior",
                        alpha: float = 1.0) -> ProblemSpec:
    """Mostly-Neumann circle with one Dirichlet and one Robin arc: carries
    all three condition types while keeping the density-walk variance flat."""
    mids = boundary.element_midpoints()
    ang = np.degrees(np.arctan2(mids[:, 1], mids[:, 0])) % 360
    spec = ProblemSpec.uniform(boundary, 2, side, BCType.NEUMANN, data)
    spec.assign(np.where((ang >= 60) & (ang <= 105))[0], BCType.DIRICHLET, data)
    spec.assign(np.where((ang >= 240) & (ang <= 285))[0], BCType.ROBIN, data,
                alpha=alpha)
    return spec


def sixspot_spec(boundary: geo.Boundary) -> ProblemSpec:
    """Zero flux except six alternating-sign spots (sparse boundary data)."""
    mids = boundary.element_midpoints()
    ang = np.degrees(np.arctan2(mids[:, 1], mids[:, 0])) % 360
    spec = ProblemSpec.uniform(boundary, 2, "interior", BCType.NEUMANN, 0.0)
    centers = [90, 150, 210, 270, 330, 30]
    signs = [1, -1, 1, -1, 1, -1]
    for c, s in zip(centers, signs):
        m = np.abs((ang - c + 180) % 360 - 180) <= 5.0
        spec.assign(np.where(m)[0], BCType.NEUMANN, float(s))
    return spec


def potential_flow_spec(square: geo.Boundary) -> ProblemSpec:
    """Inflow -1 on the left edge, outflow +1 on the right, sealed top and
    bottom; the potential is u = x up to a constant."""
    spec = ProblemSpec.uniform(square, 2, "interior", BCType.NEUMANN, 0.0)
    spec.assign(np.where(square.bc_tag == 2)[0], BCType.NEUMANN, -1.0)
    spec.assign(np.where(square.bc_tag == 0)[0], BCType.NEUMANN, 1.0)
    return spec

"""Dense boundary-element collocation oracle for 2D single-layer problems.

Independent of the Monte Carlo walkers: assembles the collocation system
for a piecewise-constant layer density with Gauss-Legendre panel quadrature
and solves it directly.  Row types follow the boundary condition at each
collocation point (element midpoint):

    Dirichlet:  S mu = u_D
    Neumann:    phi/2 mu_i + K' mu = q_N
    Robin:      phi/2 mu_i + (K' + alpha S) mu = g_R

where S is the single-layer operator and K' the adjoint double-layer
operator (normal at the collocation point).
"""

from __future__ import annotations

import numpy as np

from wobkit.geometry import Boundary
from wobkit.problem import BCType, ProblemSpec

_GX, _GW = np.polynomial.legendre.leggauss(8)


def _panel_quad(boundary: Boundary):
    """Quadrature nodes (E, Q, 2) and weights (E, Q) per segment."""
    u = 0.5 * (_GX + 1.0)
    pts = boundary.p0[:, None, :2] + u[None, :, None] * boundary.e1[:, None, :2]
    w = 0.5 * _GW[None, :] * boundary.measures[:, None]
    return pts, w


def single_layer_matrix(boundary: Boundary) -> np.ndarray:
    """S[i, j] = integral over panel j of G(x_i, y) dl(y)."""
    mids = boundary.element_midpoints()[:, :2]
    pts, w = _panel_quad(boundary)
    d = mids[:, None, None, :] - pts[None, :, :, :]
    r = np.linalg.norm(d, axis=-1)
    S = np.einsum("ijq,jq->ij", -np.log(r) / (2.0 * np.pi), w)
    # analytic self-panel integral of -log|t|/(2 pi) over the segment
    L = boundary.measures
    np.fill_diagonal(S, -L * (np.log(L / 2.0) - 1.0) / (2.0 * np.pi))
    return S


def adjoint_double_layer_matrix(boundary: Boundary) -> np.ndarray:
    """K'[i, j] = integral over panel j of dG/dn_x(x_i, y) dl(y)."""
    mids = boundary.element_midpoints()[:, :2]
    nrm = boundary.normals[:, :2]
    pts, w = _panel_quad(boundary)
    d = pts[None, :, :, :] - mids[:, None, None, :]     # y - x
    r2 = np.sum(d * d, axis=-1)
    rdn = np.einsum("ijqc,ic->ijq", d, nrm)
    K = np.einsum("ijq,jq->ij", rdn / (2.0 * np.pi * r2), w)
    np.fill_diagonal(K, 0.0)  # flat panel: (y - x) . n_x = 0
    return K


def assemble(boundary: Boundary, spec: ProblemSpec):
    """Collocation matrix and right-hand side for the given BC mix."""
    n = boundary.n_elements
    mids = boundary.element_midpoints()
    S = single_layer_matrix(boundary)
    Kp = adjoint_double_layer_matrix(boundary)
    phi = spec.phi
    rhs = spec.raw_data(boundary, np.arange(n), mids)
    A = np.empty((n, n))
    for i in range(n):
        t = spec.bc_type[i]
        if t == BCType.DIRICHLET:
            A[i] = S[i]
        elif t == BCType.NEUMANN:
            A[i] = Kp[i]
            A[i, i] += 0.5 * phi
        else:
            A[i] = Kp[i] + spec.alpha[i] * S[i]
            A[i, i] += 0.5 * phi
    return A, rhs


def solve_layer_density(boundary: Boundary, spec: ProblemSpec) -> np.ndarray:
    """Per-element single-layer density from the dense direct solve."""
    A, rhs = assemble(boundary, spec)
    return np.linalg.solve(A, rhs)


def reconstruct_solution(boundary: Boundary, mu: np.ndarray,
                         points: np.ndarray) -> np.ndarray:
    """u(x) = integral G(x, y) mu(y) dl(y) evaluated off the boundary."""
    pts, w = _panel_quad(boundary)
    x = np.atleast_2d(points)[:, :2]
    d = x[:, None, None, :] - pts[None, :, :, :]
    r = np.linalg.norm(d, axis=-1)
    G = -np.log(r) / (2.0 * np.pi)
    return np.einsum("xjq,jq,j->x", G, w, np.ones(boundary.n_elements) * 0 + mu)


def iteration_matrix(boundary: Boundary, spec: ProblemSpec, k: float) -> np.ndarray:
    """Discrete fixed-point operator of the rescaled walk recursion; its
    spectral radius predicts whether the truncated series converges."""
    n = boundary.n_elements
    S = single_layer_matrix(boundary)
    Kp = adjoint_double_layer_matrix(boundary)
    phi = spec.phi
    T = np.empty((n, n))
    for i in range(n):
        t = spec.bc_type[i]
        if t == BCType.DIRICHLET:
            T[i] = -k * S[i]
            T[i, i] += 1.0
        elif t == BCType.NEUMANN:
            T[i] = -2.0 * phi * Kp[i]
        else:
            T[i] = -2.0 * phi * (Kp[i] + spec.alpha[i] * S[i])
    return T

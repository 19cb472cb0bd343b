"""Fundamental solution of the Laplace operator and its first and second
derivatives in 2D and 3D.

Conventions: r = y - x with r = |r|.  In 3D the free-space solution is
G = 1/(4 pi r); in 2D it is G = -log(r)/(2 pi).  Derivative kinds:

* ``dG_dxk``      directional derivative in x along a unit vector e_k
* ``dG_dny``      normal derivative at y (normal n_y)
* ``dG_dnx``      normal derivative at x (normal n_x)
* ``d2G_dxk_dny`` mixed second derivative (needs e_k and n_y)

All functions broadcast over leading axes and compute r^2 once.  A query
with r below 1e-12 of the provided scale raises ``KernelSingularity`` so
callers can resample instead of silently clamping.
"""

from __future__ import annotations

import enum
import math

import numpy as np

__all__ = ["KernelKind", "KernelSingularity", "eval_kernel"]

_INV_2PI = 1.0 / (2.0 * math.pi)
_INV_4PI = 1.0 / (4.0 * math.pi)


class KernelKind(enum.Enum):
    G = "G"
    dG_dxk = "dG_dxk"
    dG_dny = "dG_dny"
    dG_dnx = "dG_dnx"
    d2G_dxk_dny = "d2G_dxk_dny"


class KernelSingularity(ValueError):
    """Source and evaluation point coincide to within the singular guard."""


def _check_unit(v: np.ndarray, name: str) -> None:
    n = np.linalg.norm(v, axis=-1)
    if not np.allclose(n, 1.0, atol=1e-9):
        raise ValueError(f"{name} must be unit length")


def eval_kernel(kind: KernelKind, dim: int, x, y,
                n_x=None, n_y=None, e_k=None,
                scale: float = 1.0):
    """Evaluate a fundamental-solution kernel for r = y - x.

    Parameters are positions (broadcastable arrays of shape (..., dim));
    the auxiliary unit vectors are required per kind.  ``scale`` sets the
    singularity guard: r < 1e-12 * scale raises ``KernelSingularity``.
    """
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    kind = KernelKind(kind)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = y[..., :dim] - x[..., :dim]
    r2 = np.sum(r * r, axis=-1)
    if np.any(r2 < (1e-12 * scale) ** 2):
        raise KernelSingularity("kernel singularity: evaluation point on source")

    if kind is KernelKind.G:
        if dim == 2:
            return -0.5 * _INV_2PI * np.log(r2)
        return _INV_4PI / np.sqrt(r2)

    if kind is KernelKind.dG_dny:
        if n_y is None:
            raise ValueError("dG_dny requires n_y")
        n_y = np.asarray(n_y, dtype=np.float64)
        _check_unit(n_y[..., :dim], "n_y")
        rdn = np.sum(r * n_y[..., :dim], axis=-1)
        if dim == 2:
            return -rdn * _INV_2PI / r2
        return -rdn * _INV_4PI / (r2 * np.sqrt(r2))

    if kind is KernelKind.dG_dnx:
        if n_x is None:
            raise ValueError("dG_dnx requires n_x")
        n_x = np.asarray(n_x, dtype=np.float64)
        _check_unit(n_x[..., :dim], "n_x")
        rdn = np.sum(r * n_x[..., :dim], axis=-1)
        if dim == 2:
            return rdn * _INV_2PI / r2
        return rdn * _INV_4PI / (r2 * np.sqrt(r2))

    if kind is KernelKind.dG_dxk:
        if e_k is None:
            raise ValueError("dG_dxk requires e_k")
        e_k = np.asarray(e_k, dtype=np.float64)
        _check_unit(e_k[..., :dim], "e_k")
        rde = np.sum(r * e_k[..., :dim], axis=-1)
        if dim == 2:
            return rde * _INV_2PI / r2
        return rde * _INV_4PI / (r2 * np.sqrt(r2))

    # d2G_dxk_dny
    if e_k is None or n_y is None:
        raise ValueError("d2G_dxk_dny requires e_k and n_y")
    e_k = np.asarray(e_k, dtype=np.float64)
    n_y = np.asarray(n_y, dtype=np.float64)
    _check_unit(e_k[..., :dim], "e_k")
    _check_unit(n_y[..., :dim], "n_y")
    rdn = np.sum(r * n_y[..., :dim], axis=-1)
    rde = np.sum(r * e_k[..., :dim], axis=-1)
    nde = np.sum(n_y[..., :dim] * e_k[..., :dim], axis=-1)
    if dim == 2:
        return _INV_2PI * (nde / r2 - 2.0 * rdn * rde / (r2 * r2))
    r3 = r2 * np.sqrt(r2)
    return _INV_4PI * (nde / r3 - 3.0 * rdn * rde / (r3 * r2))


def grad_G(dim: int, x, y, scale: float = 1.0) -> np.ndarray:
    """Full gradient of G with respect to x, shape (..., dim)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = y[..., :dim] - x[..., :dim]
    r2 = np.sum(r * r, axis=-1)
    if np.any(r2 < (1e-12 * scale) ** 2):
        raise KernelSingularity("kernel singularity: evaluation point on source")
    if dim == 2:
        return r * (_INV_2PI / r2)[..., None]
    return r * (_INV_4PI / (r2 * np.sqrt(r2)))[..., None]

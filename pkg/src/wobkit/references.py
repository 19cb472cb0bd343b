"""Registry of analytic reference fields used to manufacture boundary data
and to measure errors.

Each entry provides the field value and gradient at arbitrary points.  The
Laplace references are harmonic on their advertised side; exterior ones
decay like O(|x|^(1-d)) so the double-layer representation applies.  The
entry ``parabola-quarter`` is the particular solution of the unit-source
volume problem (its Laplacian is 1), used by the volume-term pipeline.
"""

from __future__ import annotations

import numpy as np

__all__ = ["REFERENCES", "ReferenceField", "reference_eval", "reference_ids"]


class ReferenceField:
    def __init__(self, name: str, numeric_id: int, dim: int, value, grad,
                 harmonic: bool = True):
        self.name = name
        self.numeric_id = numeric_id
        self.dim = dim
        self._value = value
        self._grad = grad
        self.harmonic = harmonic

    def value(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self._value(p[..., 0], p[..., 1],
                           p[..., 2] if p.shape[-1] > 2 else np.zeros_like(p[..., 0]))

    def grad(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        gx, gy, gz = self._grad(p[..., 0], p[..., 1],
                                p[..., 2] if p.shape[-1] > 2 else np.zeros_like(p[..., 0]))
        return np.stack([gx, gy, gz], axis=-1)


def _r2_2d(x, y):
    return x * x + y * y


_FIELDS = [
    ReferenceField("x", 1, 2, lambda x, y, z: x,
                   lambda x, y, z: (np.ones_like(x), np.zeros_like(x), np.zeros_like(x))),
    ReferenceField("saddle", 2, 2, lambda x, y, z: x * x - y * y,
                   lambda x, y, z: (2 * x, -2 * y, np.zeros_like(x))),
    ReferenceField("cubic", 3, 2, lambda x, y, z: x ** 3 - 3 * x * y * y,
                   lambda x, y, z: (3 * x * x - 3 * y * y, -6 * x * y, np.zeros_like(x))),
    ReferenceField("dipole-x", 4, 2, lambda x, y, z: x / _r2_2d(x, y),
                   lambda x, y, z: ((y * y - x * x) / _r2_2d(x, y) ** 2,
                                    -2 * x * y / _r2_2d(x, y) ** 2,
                                    np.zeros_like(x))),
    ReferenceField("quad3d", 5, 3, lambda x, y, z: x * x + y * y - 2 * z * z,
                   lambda x, y, z: (2 * x, 2 * y, -4 * z)),
    ReferenceField("xyz", 6, 3, lambda x, y, z: x * y * z,
                   lambda x, y, z: (y * z, x * z, x * y)),
    ReferenceField("dipole-z3d", 7, 3,
                   lambda x, y, z: z / (x * x + y * y + z * z) ** 1.5,
                   lambda x, y, z: (-3 * x * z / (x * x + y * y + z * z) ** 2.5,
                                    -3 * y * z / (x * x + y * y + z * z) ** 2.5,
                                    1.0 / (x * x + y * y + z * z) ** 1.5
                                    - 3 * z * z / (x * x + y * y + z * z) ** 2.5)),
    ReferenceField("pole-x-int", 9, 2,
                   lambda x, y, z: (x - 1.3) / ((x - 1.3) ** 2 + y * y),
                   lambda x, y, z: ((y * y - (x - 1.3) ** 2) / ((x - 1.3) ** 2 + y * y) ** 2,
                                    -2 * (x - 1.3) * y / ((x - 1.3) ** 2 + y * y) ** 2,
                                    np.zeros_like(x))),
    ReferenceField("pole-x-ext", 10, 2,
                   lambda x, y, z: (x - 0.8) / ((x - 0.8) ** 2 + y * y),
                   lambda x, y, z: ((y * y - (x - 0.8) ** 2) / ((x - 0.8) ** 2 + y * y) ** 2,
                                    -2 * (x - 0.8) * y / ((x - 0.8) ** 2 + y * y) ** 2,
                                    np.zeros_like(x))),
    ReferenceField("parabola-quarter", 8, 2,
                   lambda x, y, z: 0.25 * (x * x + y * y),
                   lambda x, y, z: (0.5 * x, 0.5 * y, np.zeros_like(x)),
                   harmonic=False),
]

REFERENCES: dict[str, ReferenceField] = {f.name: f for f in _FIELDS}
_BY_ID: dict[int, ReferenceField] = {f.numeric_id: f for f in _FIELDS}


def reference_ids() -> list[str]:
    return sorted(REFERENCES)


def by_numeric_id(numeric_id: int) -> ReferenceField:
    return _BY_ID[numeric_id]


def reference_eval(reference_id: str, x) -> tuple[np.ndarray, np.ndarray]:
    """Value and gradient of a registered reference field at points x."""
    if reference_id not in REFERENCES:
        raise KeyError(f"unknown reference id {reference_id!r}")
    f = REFERENCES[reference_id]
    return f.value(x), f.grad(x)

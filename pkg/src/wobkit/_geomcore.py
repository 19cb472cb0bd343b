"""Numba-compiled geometry core: RNG streams, fundamental-solution kernels,
BVH ray queries (all hits), closest-point queries and boundary sampling.

Everything here operates on the flat array bundle produced by
``geometry.Boundary.packed()`` so the hot loops stay inside nopython mode.
2D scenes live in the z=0 plane and reuse the 3D array layout.

Geometry bundle layout (a plain tuple, see ``GEOM_FIELDS``)::

    (dim, p0, e1, e2, nrm, area, cdf, total_area,
     bmin, bmax, left, right, start, count, perm, t_min, diameter)

Segments store p0 + s*e1 (e2 unused); triangles store p0 + u*e1 + v*e2.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Traversal stack depth and all-hits buffer capacity. A closed boundary with
# <= 20k elements never produces anywhere near this many crossings per ray.
BVH_STACK = 64
MAX_HITS = 256

GEOM_FIELDS = (
    "dim", "p0", "e1", "e2", "nrm", "area", "cdf", "total_area",
    "bmin", "bmax", "left", "right", "start", "count", "perm",
    "t_min", "diameter",
)

INV_2PI = 1.0 / (2.0 * math.pi)
INV_4PI = 1.0 / (4.0 * math.pi)

# Hits closer to grazing than this cosine are discarded (measure zero).
GRAZE_EPS = 1e-9

# In-element margin so sampled points never land on shared vertices/edges.
ELEM_MARGIN = 1e-6


# ---------------------------------------------------------------------------
# Counter-based RNG (splitmix64)
#
# Each (seed, stream) pair yields an independent reproducible sequence, so
# estimates are identical regardless of how work is scheduled over threads.
# ---------------------------------------------------------------------------

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _sm_mix(z):
    z = (z ^ (z >> np.uint64(30))) * _SM_MIX1
    z = (z ^ (z >> np.uint64(27))) * _SM_MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def rng_init(seed, stream_hi, stream_lo):
    """Derive a stream state from a base seed and two stream indices."""
    s = np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15)
    s ^= _sm_mix(np.uint64(stream_hi) + np.uint64(0xD1B54A32D192ED03))
    s ^= _sm_mix(np.uint64(stream_lo) + np.uint64(0x8CB92BA72F3D8DD7)) * np.uint64(0xEB44ACCAB455D165)
    return _sm_mix(s)


@njit(cache=True, inline="always")
def rng_next(state):
    state = state + _SM_GAMMA
    return _sm_mix(state), state


@njit(cache=True, inline="always")
def rng_u01(state):
    z, state = rng_next(state)
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0), state


@njit(cache=True, inline="always")
def rng_below(state, n):
    u, state = rng_u01(state)
    i = int(u * n)
    if i >= n:
        i = n - 1
    return i, state


# ---------------------------------------------------------------------------
# Fundamental solution of the Laplace operator and derivatives
#
# r = y - x, r2 = |r|^2.  2D forms use log(r2) so no square root is needed
# on the hot path; signs follow the free-space convention where the kernel
# solves  lap G + delta = 0.
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def kern_G(dim, r2):
    if dim == 2:
        return -0.5 * INV_2PI * math.log(r2)  # -log(r)/(2 pi)
    return INV_4PI / math.sqrt(r2)


@njit(cache=True, inline="always")
def kern_dG_dny(dim, rdn, r2):
    """d/dn_y of G; rdn = dot(r, n_y)."""
    if dim == 2:
        return -rdn * INV_2PI / r2
    return -rdn * INV_4PI / (r2 * math.sqrt(r2))


@njit(cache=True, inline="always")
def kern_dG_dnx(dim, rdn, r2):
    """d/dn_x of G; rdn = dot(r, n_x)."""
    if dim == 2:
        return rdn * INV_2PI / r2
    return rdn * INV_4PI / (r2 * math.sqrt(r2))


@njit(cache=True, inline="always")
def kern_gradG(dim, rx, ry, rz, r2):
    """Gradient of G with respect to x (vector over the k index)."""
    if dim == 2:
        c = INV_2PI / r2
        return rx * c, ry * c, 0.0
    c = INV_4PI / (r2 * math.sqrt(r2))
    return rx * c, ry * c, rz * c


@njit(cache=True, inline="always")
def kern_d2G_dxdny(dim, rx, ry, rz, nx, ny, nz, r2):
    """Second kernel d2 G / (dx_k dn_y) as a vector over k."""
    rdn = rx * nx + ry * ny + rz * nz
    if dim == 2:
        c = INV_2PI / r2
        d = 2.0 * rdn / r2
        return c * (nx - d * rx), c * (ny - d * ry), 0.0
    r3 = r2 * math.sqrt(r2)
    c = INV_4PI / r3
    d = 3.0 * rdn / r2
    return c * (nx - d * rx), c * (ny - d * ry), c * (nz - d * rz)


# ---------------------------------------------------------------------------
# Direction sampling
# ---------------------------------------------------------------------------


@njit(cache=True)
def sample_dir_sphere(dim, state):
    if dim == 2:
        u, state = rng_u01(state)
        a = 2.0 * math.pi * u
        return math.cos(a), math.sin(a), 0.0, state
    # Marsaglia: z uniform in [-1, 1], azimuth uniform.
    u, state = rng_u01(state)
    v, state = rng_u01(state)
    z = 2.0 * u - 1.0
    s = math.sqrt(max(0.0, 1.0 - z * z))
    a = 2.0 * math.pi * v
    return s * math.cos(a), s * math.sin(a), z, state


@njit(cache=True)
def sample_dir_hemisphere(dim, nx, ny, nz, state):
    """Uniform direction in the hemisphere opposite to the given normal."""
    dx, dy, dz, state = sample_dir_sphere(dim, state)
    if dx * nx + dy * ny + dz * nz > 0.0:
        dx, dy, dz = -dx, -dy, -dz
    return dx, dy, dz, state


# ---------------------------------------------------------------------------
# Ray intersection
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _hit_element(geom, e, ox, oy, oz, dx, dy, dz):
    """Ray/element test.  Returns (t, cos_out) with t < 0 on miss; cos_out is
    dot(direction, element normal), already filtered for grazing incidence."""
    dim = geom[0]
    p0 = geom[1]
    e1 = geom[2]
    e2 = geom[3]
    nrm = geom[4]
    t_min = geom[15]
    nx = nrm[e, 0]
    ny = nrm[e, 1]
    nz = nrm[e, 2]
    cosd = dx * nx + dy * ny + dz * nz
    if abs(cosd) < GRAZE_EPS:
        return -1.0, 0.0
    if dim == 2:
        e1x = e1[e, 0]
        e1y = e1[e, 1]
        denom = dx * e1y - dy * e1x
        if denom == 0.0:
            return -1.0, 0.0
        qx = p0[e, 0] - ox
        qy = p0[e, 1] - oy
        t = (qx * e1y - qy * e1x) / denom
        if t <= t_min:
            return -1.0, 0.0
        s = (qx * dy - qy * dx) / denom
        if s < 0.0 or s > 1.0:
            return -1.0, 0.0
        return t, cosd
    # Moller-Trumbore
    e1x = e1[e, 0]
    e1y = e1[e, 1]
    e1z = e1[e, 2]
    e2x = e2[e, 0]
    e2y = e2[e, 1]
    e2z = e2[e, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-300:
        return -1.0, 0.0
    inv = 1.0 / det
    tx = ox - p0[e, 0]
    ty = oy - p0[e, 1]
    tz = oz - p0[e, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= t_min:
        return -1.0, 0.0
    return t, cosd


@njit(cache=True)
def ray_all_hits(geom, ox, oy, oz, dx, dy, dz, exclude,
                 out_t, out_elem, out_cos, stack):
    """Collect every boundary crossing of the half-line o + t d, t > t_min.

    Both BVH children are always descended (no early-out); hits land in the
    out_* buffers unsorted.  Returns the hit count m.
    """
    bmin = geom[8]
    bmax = geom[9]
    left = geom[10]
    right = geom[11]
    start = geom[12]
    count = geom[13]
    perm = geom[14]
    t_min = geom[15]

    inv_dx = 1.0 / dx if dx != 0.0 else math.inf
    inv_dy = 1.0 / dy if dy != 0.0 else math.inf
    inv_dz = 1.0 / dz if dz != 0.0 else math.inf

    m = 0
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        # slab test against an unbounded far plane
        tx1 = (bmin[node, 0] - ox) * inv_dx
        tx2 = (bmax[node, 0] - ox) * inv_dx
        t0 = min(tx1, tx2)
        t1 = max(tx1, tx2)
        ty1 = (bmin[node, 1] - oy) * inv_dy
        ty2 = (bmax[node, 1] - oy) * inv_dy
        t0 = max(t0, min(ty1, ty2))
        t1 = min(t1, max(ty1, ty2))
        tz1 = (bmin[node, 2] - oz) * inv_dz
        tz2 = (bmax[node, 2] - oz) * inv_dz
        t0 = max(t0, min(tz1, tz2))
        t1 = min(t1, max(tz1, tz2))
        if t1 < t0 or t1 <= t_min:
            continue
        c = count[node]
        if c > 0:
            s = start[node]
            for i in range(s, s + c):
                e = perm[i]
                if e == exclude:
                    continue
                t, cosd = _hit_element(geom, e, ox, oy, oz, dx, dy, dz)
                if t > 0.0 and m < MAX_HITS:
                    out_t[m] = t
                    out_elem[m] = e
                    out_cos[m] = cosd
                    m += 1
        else:
            stack[sp] = left[node]
            sp += 1
            stack[sp] = right[node]
            sp += 1
    return m


@njit(cache=True)
def ray_all_hits_brute(geom, ox, oy, oz, dx, dy, dz, exclude,
                       out_t, out_elem, out_cos):
    """Reference all-hits query testing every element (no BVH)."""
    n = geom[1].shape[0]
    m = 0
    for e in range(n):
        if e == exclude:
            continue
        t, cosd = _hit_element(geom, e, ox, oy, oz, dx, dy, dz)
        if t > 0.0 and m < MAX_HITS:
            out_t[m] = t
            out_elem[m] = e
            out_cos[m] = cosd
            m += 1
    return m


@njit(cache=True)
def point_inside(geom, x, y, z, state):
    """Crossing-parity test with a random ray direction (odd = inside)."""
    stack = np.empty(BVH_STACK, dtype=np.int32)
    out_t = np.empty(MAX_HITS, dtype=np.float64)
    out_e = np.empty(MAX_HITS, dtype=np.int32)
    out_c = np.empty(MAX_HITS, dtype=np.float64)
    dx, dy, dz, state = sample_dir_sphere(geom[0], state)
    m = ray_all_hits(geom, x, y, z, dx, dy, dz, -1, out_t, out_e, out_c, stack)
    return (m % 2) == 1, state


# ---------------------------------------------------------------------------
# Closest point
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _closest_on_element(geom, e, x, y, z):
    dim = geom[0]
    p0 = geom[1]
    e1 = geom[2]
    e2 = geom[3]
    ax = p0[e, 0]
    ay = p0[e, 1]
    az = p0[e, 2]
    if dim == 2:
        ex = e1[e, 0]
        ey = e1[e, 1]
        qx = x - ax
        qy = y - ay
        len2 = ex * ex + ey * ey
        u = (qx * ex + qy * ey) / len2
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        cx = ax + u * ex
        cy = ay + u * ey
        d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy)
        return d2, cx, cy, 0.0
    # Triangle closest point (Ericson, Real-Time Collision Detection 5.1.5)
    abx = e1[e, 0]
    aby = e1[e, 1]
    abz = e1[e, 2]
    acx = e2[e, 0]
    acy = e2[e, 1]
    acz = e2[e, 2]
    apx = x - ax
    apy = y - ay
    apz = z - az
    d1 = abx * apx + aby * apy + abz * apz
    d2_ = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2_ <= 0.0:
        cx, cy, cz = ax, ay, az
    else:
        bx = ax + abx
        by = ay + aby
        bz = az + abz
        bpx = x - bx
        bpy = y - by
        bpz = z - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            cx, cy, cz = bx, by, bz
        else:
            vc = d1 * d4 - d3 * d2_
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                v = d1 / (d1 - d3)
                cx = ax + v * abx
                cy = ay + v * aby
                cz = az + v * abz
            else:
                ccx = ax + acx
                ccy = ay + acy
                ccz = az + acz
                cpx = x - ccx
                cpy = y - ccy
                cpz = z - ccz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    cx, cy, cz = ccx, ccy, ccz
                else:
                    vb = d5 * d2_ - d1 * d6
                    if vb <= 0.0 and d2_ >= 0.0 and d6 <= 0.0:
                        w = d2_ / (d2_ - d6)
                        cx = ax + w * acx
                        cy = ay + w * acy
                        cz = az + w * acz
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            cx = bx + w * (ccx - bx)
                            cy = by + w * (ccy - by)
                            cz = bz + w * (ccz - bz)
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            cx = ax + abx * v + acx * w
                            cy = ay + aby * v + acy * w
                            cz = az + abz * v + acz * w
    dd = (x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz)
    return dd, cx, cy, cz


@njit(cache=True, inline="always")
def _box_dist2(bmin, bmax, node, x, y, z):
    d = 0.0
    v = bmin[node, 0] - x
    if v > 0.0:
        d += v * v
    v = x - bmax[node, 0]
    if v > 0.0:
        d += v * v
    v = bmin[node, 1] - y
    if v > 0.0:
        d += v * v
    v = y - bmax[node, 1]
    if v > 0.0:
        d += v * v
    v = bmin[node, 2] - z
    if v > 0.0:
        d += v * v
    v = z - bmax[node, 2]
    if v > 0.0:
        d += v * v
    return d


@njit(cache=True)
def closest_point(geom, x, y, z):
    """Exact closest point on the boundary.  Returns (dist, elem, cx, cy, cz)."""
    bmin = geom[8]
    bmax = geom[9]
    left = geom[10]
    right = geom[11]
    start = geom[12]
    count = geom[13]
    perm = geom[14]
    stack = np.empty(BVH_STACK, dtype=np.int32)
    best = math.inf
    best_e = -1
    bx = by = bz = 0.0
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_dist2(bmin, bmax, node, x, y, z) >= best:
            continue
        c = count[node]
        if c > 0:
            s = start[node]
            for i in range(s, s + c):
                e = perm[i]
                d2, cx, cy, cz = _closest_on_element(geom, e, x, y, z)
                if d2 < best:
                    best = d2
                    best_e = e
                    bx, by, bz = cx, cy, cz
        else:
            l = left[node]
            r = right[node]
            dl = _box_dist2(bmin, bmax, l, x, y, z)
            dr = _box_dist2(bmin, bmax, r, x, y, z)
            # push farther child first so the nearer one is visited next
            if dl <= dr:
                stack[sp] = r
                sp += 1
                stack[sp] = l
                sp += 1
            else:
                stack[sp] = l
                sp += 1
                stack[sp] = r
                sp += 1
    return math.sqrt(best), best_e, bx, by, bz


# ---------------------------------------------------------------------------
# Boundary sampling
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _cdf_pick(cdf, u):
    lo = 0
    hi = cdf.shape[0] - 1
    target = u * cdf[hi]
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] < target:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def sample_point_on_element(geom, e, state):
    """Uniform point strictly inside element e; returns (x, y, z, state)."""
    dim = geom[0]
    p0 = geom[1]
    e1 = geom[2]
    e2 = geom[3]
    if dim == 2:
        u, state = rng_u01(state)
        u = ELEM_MARGIN + (1.0 - 2.0 * ELEM_MARGIN) * u
        return (p0[e, 0] + u * e1[e, 0], p0[e, 1] + u * e1[e, 1], 0.0, state)
    u, state = rng_u01(state)
    v, state = rng_u01(state)
    if u + v > 1.0:
        u = 1.0 - u
        v = 1.0 - v
    # pull slightly toward the centroid to stay off edges
    w = 1.0 - u - v
    cu = cv = cw = 1.0 / 3.0
    u = u * (1.0 - 3.0 * ELEM_MARGIN) + cu * 3.0 * ELEM_MARGIN
    v = v * (1.0 - 3.0 * ELEM_MARGIN) + cv * 3.0 * ELEM_MARGIN
    return (p0[e, 0] + u * e1[e, 0] + v * e2[e, 0],
            p0[e, 1] + u * e1[e, 1] + v * e2[e, 1],
            p0[e, 2] + u * e1[e, 2] + v * e2[e, 2], state)


@njit(cache=True)
def sample_boundary_uniform(geom, state):
    """Uniform area-measure boundary point: (elem, x, y, z, pdf, state)."""
    cdf = geom[6]
    u, state = rng_u01(state)
    e = _cdf_pick(cdf, u)
    x, y, z, state = sample_point_on_element(geom, e, state)
    return e, x, y, z, 1.0 / geom[7], state


@njit(cache=True)
def sample_boundary_weighted(geom, wcdf, wtotal, state):
    """Boundary point with element probability proportional to
    weight * area (wcdf holds the cumulative weight*area products).
    Returns (elem, x, y, z, pdf_area, state)."""
    u, state = rng_u01(state)
    e = _cdf_pick(wcdf, u)
    lo = wcdf[e - 1] if e > 0 else 0.0
    w_e = wcdf[e] - lo
    x, y, z, state = sample_point_on_element(geom, e, state)
    pdf = w_e / (wtotal * geom[5][e])
    return e, x, y, z, pdf, state

"""Numba-compiled random-walk estimators over boundary integral equations.

Every estimator here samples one path (or one forward-path block) on the
flat geometry bundle and the boundary-condition table produced by the
public API.  Weight bookkeeping follows the exact ray-sampling
cancellation: a uniform sphere direction with a uniform pick among the m
crossings has area density |dG/dn|/m at the chosen point, so kernel/pdf
ratios reduce to signed multiples of m.  Paths whose ray escapes the scene
terminate with zero recursive contribution (the escaped directions carry
no boundary measure).

The truncated recursion halves the final vertex's source contribution,
which turns the raw operator series into its convergent averaged form.

BC table layout (see ``estimators._pack_bc``)::

    (side_sign, pde, b_const, bc_type, data_kind, ref_id, data_const,
     alpha, vol_lo, vol_hi, vol_measure, volume_samples)
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from ._geomcore import (
    BVH_STACK, MAX_HITS,
    kern_G, kern_dG_dny, kern_dG_dnx, kern_gradG, kern_d2G_dxdny,
    ray_all_hits, closest_point, rng_init, rng_u01, rng_below,
    sample_dir_sphere, sample_dir_hemisphere,
    sample_boundary_uniform, sample_boundary_weighted, sample_point_on_element,
)

# estimator kind codes for the field driver
K_DIRICHLET = 0
K_NEUMANN_INT = 1
K_NEUMANN_BND = 2
K_SINGLE_LAYER = 3
K_SINGLE_LAYER_NDERIV = 4
K_LAYER_DENSITY = 5
K_WOS = 6

RIS_MAX = 64
DIVERGENCE_LIMIT = 1e6
SINGULAR_RETRIES = 16

# rng stream salts so distinct sampling purposes never collide
_SALT_FIELD = 0x51
_SALT_FORWARD = 0xF0


# ---------------------------------------------------------------------------
# Reference fields (compiled twins of references.py; cross-checked in tests)
# ---------------------------------------------------------------------------


@njit(cache=True)
def ref_value(rid, x, y, z):
    if rid == 1:
        return x
    if rid == 2:
        return x * x - y * y
    if rid == 3:
        return x * x * x - 3.0 * x * y * y
    if rid == 4:
        return x / (x * x + y * y)
    if rid == 5:
        return x * x + y * y - 2.0 * z * z
    if rid == 6:
        return x * y * z
    if rid == 7:
        r2 = x * x + y * y + z * z
        return z / (r2 * math.sqrt(r2))
    if rid == 8:
        return 0.25 * (x * x + y * y)
    if rid == 9:
        dx = x - 1.3
        return dx / (dx * dx + y * y)
    if rid == 10:
        dx = x - 0.8
        return dx / (dx * dx + y * y)
    return 0.0


@njit(cache=True)
def ref_grad(rid, x, y, z):
    if rid == 1:
        return 1.0, 0.0, 0.0
    if rid == 2:
        return 2.0 * x, -2.0 * y, 0.0
    if rid == 3:
        return 3.0 * (x * x - y * y), -6.0 * x * y, 0.0
    if rid == 4:
        r2 = x * x + y * y
        return (y * y - x * x) / (r2 * r2), -2.0 * x * y / (r2 * r2), 0.0
    if rid == 5:
        return 2.0 * x, 2.0 * y, -4.0 * z
    if rid == 6:
        return y * z, x * z, x * y
    if rid == 7:
        r2 = x * x + y * y + z * z
        r5 = r2 * r2 * math.sqrt(r2)
        r3 = r2 * math.sqrt(r2)
        return -3.0 * x * z / r5, -3.0 * y * z / r5, 1.0 / r3 - 3.0 * z * z / r5
    if rid == 8:
        return 0.5 * x, 0.5 * y, 0.0
    if rid == 9:
        dx = x - 1.3
        r2 = dx * dx + y * y
        return (y * y - dx * dx) / (r2 * r2), -2.0 * dx * y / (r2 * r2), 0.0
    if rid == 10:
        dx = x - 0.8
        r2 = dx * dx + y * y
        return (y * y - dx * dx) / (r2 * r2), -2.0 * dx * y / (r2 * r2), 0.0
    return 0.0, 0.0, 0.0


@njit(cache=True)
def source_value(bc, x, y, z):
    """Volume source term (constant in the supported scenes)."""
    return bc[2]


# ---------------------------------------------------------------------------
# Boundary data
# ---------------------------------------------------------------------------


@njit(cache=True)
def raw_bc_data(bc, e, x, y, z, nx, ny, nz):
    """Given boundary data at a point of element e (no volume correction)."""
    kind = bc[4][e]
    if kind == 0:
        return bc[6][e]
    rid = bc[5][e]
    if kind == 1:
        return ref_value(rid, x, y, z)
    gx, gy, gz = ref_grad(rid, x, y, z)
    nd = gx * nx + gy * ny + gz * nz
    if kind == 2:
        return nd
    return nd + bc[7][e] * ref_value(rid, x, y, z)


@njit(cache=True)
def fill_volume_samples(geom, bc, zbuf, state, stack, out_t, out_e, out_c):
    """Rejection-sample interior points shared by one path's volume-term
    estimates, reusing the caller's ray workspace.  Returns
    (count, ok, state); count == volume_samples on success."""
    vs = zbuf.shape[0]
    lo = bc[8]
    hi = bc[9]
    dim = geom[0]
    filled = 0
    attempts = 0
    max_attempts = 10000 * vs
    while filled < vs and attempts < max_attempts:
        attempts += 1
        u, state = rng_u01(state)
        px = lo[0] + u * (hi[0] - lo[0])
        u, state = rng_u01(state)
        py = lo[1] + u * (hi[1] - lo[1])
        pz = 0.0
        if dim == 3:
            u, state = rng_u01(state)
            pz = lo[2] + u * (hi[2] - lo[2])
        dx, dy, dz, state = sample_dir_sphere(dim, state)
        m = ray_all_hits(geom, px, py, pz, dx, dy, dz, -1,
                         out_t, out_e, out_c, stack)
        if m % 2 == 1:
            zbuf[filled, 0] = px
            zbuf[filled, 1] = py
            zbuf[filled, 2] = pz
            filled += 1
    return filled, filled == vs, state


@njit(cache=True)
def volume_term_value(dim, bc, zbuf, nz_count, x, y, z):
    """Volume potential estimate at x from the shared interior samples."""
    if nz_count == 0:
        return 0.0
    acc = 0.0
    for i in range(nz_count):
        rx = zbuf[i, 0] - x
        ry = zbuf[i, 1] - y
        rz = zbuf[i, 2] - z
        r2 = rx * rx + ry * ry + rz * rz
        acc += kern_G(dim, r2) * source_value(bc, zbuf[i, 0], zbuf[i, 1], zbuf[i, 2])
    return acc * bc[10] / nz_count


@njit(cache=True)
def volume_term_nderiv(dim, bc, zbuf, nz_count, x, y, z, nx, ny, nz):
    if nz_count == 0:
        return 0.0
    acc = 0.0
    for i in range(nz_count):
        rx = zbuf[i, 0] - x
        ry = zbuf[i, 1] - y
        rz = zbuf[i, 2] - z
        r2 = rx * rx + ry * ry + rz * rz
        rdn = rx * nx + ry * ny + rz * nz
        acc += kern_dG_dnx(dim, rdn, r2) * source_value(bc, zbuf[i, 0], zbuf[i, 1], zbuf[i, 2])
    return acc * bc[10] / nz_count


@njit(cache=True)
def volume_term_grad(dim, bc, zbuf, nz_count, x, y, z):
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for i in range(nz_count):
        rx = zbuf[i, 0] - x
        ry = zbuf[i, 1] - y
        rz = zbuf[i, 2] - z
        r2 = rx * rx + ry * ry + rz * rz
        b = source_value(bc, zbuf[i, 0], zbuf[i, 1], zbuf[i, 2])
        kx, ky, kz = kern_gradG(dim, rx, ry, rz, r2)
        gx += kx * b
        gy += ky * b
        gz += kz * b
    if nz_count == 0:
        return 0.0, 0.0, 0.0
    c = bc[10] / nz_count
    return gx * c, gy * c, gz * c


@njit(cache=True)
def boundary_data(geom, bc, e, x, y, z, zbuf, nz_count):
    """Effective boundary data for the harmonic sub-problem: the given data
    plus the volume-term trace appropriate to the element's BC type."""
    nrm = geom[4]
    nx = nrm[e, 0]
    ny = nrm[e, 1]
    nz = nrm[e, 2]
    val = raw_bc_data(bc, e, x, y, z, nx, ny, nz)
    if bc[1] == 1:  # volume source present
        t = bc[3][e]
        dim = geom[0]
        if t == 0:
            val += volume_term_value(dim, bc, zbuf, nz_count, x, y, z)
        elif t == 1:
            val += volume_term_nderiv(dim, bc, zbuf, nz_count, x, y, z, nx, ny, nz)
        else:
            val += (volume_term_nderiv(dim, bc, zbuf, nz_count, x, y, z, nx, ny, nz)
                    + bc[7][e] * volume_term_value(dim, bc, zbuf, nz_count, x, y, z))
    return val


# ---------------------------------------------------------------------------
# Ray transition and resampled boundary selection
# ---------------------------------------------------------------------------


@njit(cache=True)
def ray_step(geom, x, y, z, exclude, hemisphere, state, ws_stack, out_t, out_e, out_c):
    """One walk transition.  Full-sphere direction with a uniform pick among
    all m crossings, or (hemisphere mode) an inward hemisphere direction with
    the closest hit.  Returns (ok, elem, px, py, pz, sgn, cosv, t, m, state)."""
    dim = geom[0]
    nrm = geom[4]
    if hemisphere == 1:
        nx = nrm[exclude, 0]
        ny = nrm[exclude, 1]
        nz = nrm[exclude, 2]
        dx, dy, dz, state = sample_dir_hemisphere(dim, nx, ny, nz, state)
    else:
        dx, dy, dz, state = sample_dir_sphere(dim, state)
    m = ray_all_hits(geom, x, y, z, dx, dy, dz, exclude, out_t, out_e, out_c, ws_stack)
    if m == 0:
        return False, -1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, state
    if hemisphere == 1:
        j = 0
        for i in range(1, m):
            if out_t[i] < out_t[j]:
                j = i
        m = 1
    else:
        j, state = rng_below(state, m)
    t = out_t[j]
    cosv = out_c[j]
    sgn = 1.0 if cosv > 0.0 else -1.0
    return True, out_e[j], x + t * dx, y + t * dy, z + t * dz, sgn, cosv, t, m, state


# target modes for resampled selection of the next boundary point
RIS_ABS_G = 0
RIS_ABS_DGDNX = 1
RIS_ABS_ROBIN = 2
RIS_SOURCE = 3
RIS_ABS_GRADG = 4


@njit(cache=True)
def ris_pick(geom, bc, mode, n_cand, cx, cy, cz, cnx, cny, cnz, calpha,
             state, cand_e, cand_p, cand_t):
    """Pick one of n_cand uniform boundary candidates proportionally to a
    non-negative target, with the reweighting factor that keeps the estimate
    unbiased.  Returns (elem, px, py, pz, w, state); the caller multiplies
    its integrand by w.  All-zero targets fall back to a uniform pick with
    the plain importance weight."""
    dim = geom[0]
    guard = 1e-12 * geom[16]
    guard2 = guard * guard
    tsum = 0.0
    for i in range(n_cand):
        e = -1
        px = py = pz = 0.0
        r2 = 0.0
        for _try in range(8):
            e, px, py, pz, _pdf, state = sample_boundary_uniform(geom, state)
            rx = px - cx
            ry = py - cy
            rz = pz - cz
            r2 = rx * rx + ry * ry + rz * rz
            if r2 > guard2:
                break
        cand_e[i] = e
        cand_p[i, 0] = px
        cand_p[i, 1] = py
        cand_p[i, 2] = pz
        if r2 <= guard2:
            cand_t[i] = 0.0
            continue
        rx = px - cx
        ry = py - cy
        rz = pz - cz
        if mode == RIS_ABS_G:
            t = abs(kern_G(dim, r2))
        elif mode == RIS_ABS_DGDNX:
            rdn = rx * cnx + ry * cny + rz * cnz
            t = abs(kern_dG_dnx(dim, rdn, r2))
        elif mode == RIS_ABS_ROBIN:
            rdn = rx * cnx + ry * cny + rz * cnz
            t = abs(kern_dG_dnx(dim, rdn, r2)) + abs(calpha) * abs(kern_G(dim, r2))
        elif mode == RIS_SOURCE:
            if bc[1] == 1:
                t = abs(kern_G(dim, r2))
            else:
                nrm = geom[4]
                q = raw_bc_data(bc, e, px, py, pz,
                                nrm[e, 0], nrm[e, 1], nrm[e, 2])
                t = abs(kern_G(dim, r2) * q)
        else:
            if dim == 2:
                t = 1.0 / math.sqrt(r2)
            else:
                t = 1.0 / r2
        cand_t[i] = t
        tsum += t
    area = geom[7]
    if tsum <= 0.0:
        j, state = rng_below(state, n_cand)
        return cand_e[j], cand_p[j, 0], cand_p[j, 1], cand_p[j, 2], area, state
    u, state = rng_u01(state)
    target = u * tsum
    acc = 0.0
    j = n_cand - 1
    for i in range(n_cand):
        acc += cand_t[i]
        if acc >= target:
            j = i
            break
    w = area * tsum / (n_cand * cand_t[j])
    return cand_e[j], cand_p[j, 0], cand_p[j, 1], cand_p[j, 2], w, state


# ---------------------------------------------------------------------------
# Dirichlet problem, double-layer representation, backward walk
# ---------------------------------------------------------------------------


@njit(cache=True)
def dirichlet_sample(geom, bc, M, hemi, want_grad, x0, y0, z0, state, ws):
    """One backward walk for the Dirichlet problem.  Returns
    (value, gx, gy, gz, rays, used, flag, state)."""
    stack, out_t, out_e, out_c, cand_e, cand_p, cand_t, zbuf = ws
    dim = geom[0]
    side = bc[0]
    nz_count = 0
    flag = 0
    if bc[1] == 1:
        nz_count, ok, state = fill_volume_samples(geom, bc, zbuf, state,
                                                   stack, out_t, out_e, out_c)
        if not ok:
            return 0.0, 0.0, 0.0, 0.0, 0, 0, 1, state
    rays = 0
    # projection step from the evaluation point (full sphere; one of m hits)
    ok, e, px, py, pz, sgn, cosv, tdist, m, state = ray_step(
        geom, x0, y0, z0, -1, 0, state, stack, out_t, out_e, out_c)
    rays += 1
    val = 0.0
    gx = gy = gz = 0.0
    if ok:
        w_sol = sgn * m
        wgx = wgy = wgz = 0.0
        if want_grad:
            rx = px - x0
            ry = py - y0
            rz = pz - z0
            r2 = rx * rx + ry * ry + rz * rz
            nrm = geom[4]
            nx = nrm[e, 0]
            ny = nrm[e, 1]
            nz = nrm[e, 2]
            kx, ky, kz = kern_d2G_dxdny(dim, rx, ry, rz, nx, ny, nz, r2)
            rdn = rx * nx + ry * ny + rz * nz
            p_area = abs(kern_dG_dny(dim, rdn, r2)) / m
            wgx = -kx / p_area
            wgy = -ky / p_area
            wgz = -kz / p_area
        # accumulate the source chain along the boundary path
        s_chain = 0.0
        w_tail = 1.0
        used = 0
        for i in range(1, M + 1):
            used = i
            data = boundary_data(geom, bc, e, px, py, pz, zbuf, nz_count)
            coeff = 2.0 * side if i < M else side
            s_chain += w_tail * coeff * data
            if i == M:
                break
            ok, e2, qx, qy, qz, sgn, cosv, tdist, m, state = ray_step(
                geom, px, py, pz, e, hemi, state, stack, out_t, out_e, out_c)
            rays += 1
            if not ok:
                break
            if hemi == 1:
                w_tail *= -side * sgn
            else:
                w_tail *= -2.0 * side * sgn * m
            e = e2
            px, py, pz = qx, qy, qz
        val = w_sol * s_chain
        if want_grad:
            gx = wgx * s_chain
            gy = wgy * s_chain
            gz = wgz * s_chain
    else:
        used = 0
    if bc[1] == 1:
        val -= volume_term_value(dim, bc, zbuf, nz_count, x0, y0, z0)
        if want_grad:
            vx, vy, vz = volume_term_grad(dim, bc, zbuf, nz_count, x0, y0, z0)
            gx -= vx
            gy -= vy
            gz -= vz
    return val, gx, gy, gz, rays, used, flag, state


# ---------------------------------------------------------------------------
# Neumann problem, direct integral equation, backward walk
# ---------------------------------------------------------------------------


@njit(cache=True)
def neumann_sample(geom, bc, M, n_cand, hemi, want_grad, on_boundary, e_start,
                   x0, y0, z0, state, ws):
    """One backward walk for the Neumann problem via the direct equation.
    ``on_boundary`` evaluates the boundary trace at (e_start, x0)."""
    stack, out_t, out_e, out_c, cand_e, cand_p, cand_t, zbuf = ws
    dim = geom[0]
    side = bc[0]
    nrm = geom[4]
    nz_count = 0
    if bc[1] == 1:
        nz_count, ok, state = fill_volume_samples(geom, bc, zbuf, state,
                                                   stack, out_t, out_e, out_c)
        if not ok:
            return 0.0, 0.0, 0.0, 0.0, 0, 0, 1, state
    rays = 0
    val0 = 0.0
    g0x = g0y = g0z = 0.0
    w_sol = 1.0
    wgx = wgy = wgz = 0.0
    used = 0
    if on_boundary == 0:
        # interior/exterior evaluation: its own source sample plus projection
        se, sx, sy, sz, w, state = ris_pick(
            geom, bc, RIS_SOURCE, n_cand, x0, y0, z0, 0.0, 0.0, 0.0, 0.0,
            state, cand_e, cand_p, cand_t)
        rx = sx - x0
        ry = sy - y0
        rz = sz - z0
        r2 = rx * rx + ry * ry + rz * rz
        qd = boundary_data(geom, bc, se, sx, sy, sz, zbuf, nz_count)
        val0 = side * kern_G(dim, r2) * qd * w
        if want_grad:
            kx, ky, kz = kern_gradG(dim, rx, ry, rz, r2)
            g0x = side * kx * qd * w
            g0y = side * ky * qd * w
            g0z = side * kz * qd * w
        ok, e, px, py, pz, sgn, cosv, tdist, m, state = ray_step(
            geom, x0, y0, z0, -1, 0, state, stack, out_t, out_e, out_c)
        rays += 1
        if not ok:
            if bc[1] == 1:
                val0 -= volume_term_value(dim, bc, zbuf, nz_count, x0, y0, z0)
            return val0, g0x, g0y, g0z, rays, 0, 0, state
        w_sol = side * sgn * m
        if want_grad:
            rx = px - x0
            ry = py - y0
            rz = pz - z0
            r2 = rx * rx + ry * ry + rz * rz
            nx = nrm[e, 0]
            ny = nrm[e, 1]
            nz = nrm[e, 2]
            kx, ky, kz = kern_d2G_dxdny(dim, rx, ry, rz, nx, ny, nz, r2)
            rdn = rx * nx + ry * ny + rz * nz
            p_area = abs(kern_dG_dny(dim, rdn, r2)) / m
            wgx = -side * kx / p_area
            wgy = -side * ky / p_area
            wgz = -side * kz / p_area
    else:
        e = e_start
        px, py, pz = x0, y0, z0

    s_chain = 0.0
    w_tail = 1.0
    for i in range(1, M + 1):
        used = i
        se, sx, sy, sz, w, state = ris_pick(
            geom, bc, RIS_SOURCE, n_cand, px, py, pz, 0.0, 0.0, 0.0, 0.0,
            state, cand_e, cand_p, cand_t)
        rx = sx - px
        ry = sy - py
        rz = sz - pz
        r2 = rx * rx + ry * ry + rz * rz
        qd = boundary_data(geom, bc, se, sx, sy, sz, zbuf, nz_count)
        src = kern_G(dim, r2) * qd * w
        coeff = 2.0 * side if i < M else side
        s_chain += w_tail * coeff * src
        if i == M:
            break
        ok, e2, qx2, qy2, qz2, sgn, cosv, tdist, m, state = ray_step(
            geom, px, py, pz, e, hemi, state, stack, out_t, out_e, out_c)
        rays += 1
        if not ok:
            break
        if hemi == 1:
            w_tail *= side * sgn
        else:
            w_tail *= 2.0 * side * sgn * m
        e = e2
        px, py, pz = qx2, qy2, qz2

    val = val0 + w_sol * s_chain
    gx = g0x + wgx * s_chain
    gy = g0y + wgy * s_chain
    gz = g0z + wgz * s_chain
    if bc[1] == 1:
        val -= volume_term_value(dim, bc, zbuf, nz_count, x0, y0, z0)
        if want_grad:
            vx, vy, vz = volume_term_grad(dim, bc, zbuf, nz_count, x0, y0, z0)
            gx -= vx
            gy -= vy
            gz -= vz
    return val, gx, gy, gz, rays, used, 0, state


# ---------------------------------------------------------------------------
# Single-layer representation: density walk and reconstruction
# ---------------------------------------------------------------------------


@njit(cache=True)
def layer_density_sample(geom, bc, M, kconst, p_k, n_cand,
                         e1, x1, y1, z1, state, ws):
    """One walk estimating the single-layer source density at a boundary
    point.  Dirichlet-tagged points use the rescaled first-kind transform
    with a stay-in-place branch; Neumann/Robin points use the adjoint-kernel
    transition.  Returns (value, rays, used, flag, state)."""
    stack, out_t, out_e, out_c, cand_e, cand_p, cand_t, zbuf = ws
    dim = geom[0]
    side = bc[0]
    nrm = geom[4]
    nz_count = 0
    if bc[1] == 1:
        nz_count, okv, state = fill_volume_samples(geom, bc, zbuf, state,
                                                    stack, out_t, out_e, out_c)
        if not okv:
            return 0.0, 0, 0, 1, state
    e = e1
    px, py, pz = x1, y1, z1
    w_tail = 1.0
    acc = 0.0
    flag = 0
    used = 0
    for i in range(1, M + 1):
        used = i
        t = bc[3][e]
        data = boundary_data(geom, bc, e, px, py, pz, zbuf, nz_count)
        if t == 0:
            src = kconst * data
        else:
            src = 2.0 * side * data
        if i == M:
            acc += 0.5 * w_tail * src
            break
        acc += w_tail * src
        if t == 0:
            u, state = rng_u01(state)
            if u < p_k:
                ne, nxp, nyp, nzp, w, state = ris_pick(
                    geom, bc, RIS_ABS_G, n_cand, px, py, pz,
                    0.0, 0.0, 0.0, 0.0, state, cand_e, cand_p, cand_t)
                rx = nxp - px
                ry = nyp - py
                rz = nzp - pz
                r2 = rx * rx + ry * ry + rz * rz
                w_tail *= -(kconst / p_k) * kern_G(dim, r2) * w
                e = ne
                px, py, pz = nxp, nyp, nzp
            else:
                w_tail *= 1.0 / (1.0 - p_k)
        else:
            cnx = nrm[e, 0]
            cny = nrm[e, 1]
            cnz = nrm[e, 2]
            al = bc[7][e]
            mode = RIS_ABS_DGDNX if t == 1 else RIS_ABS_ROBIN
            ne, nxp, nyp, nzp, w, state = ris_pick(
                geom, bc, mode, n_cand, px, py, pz, cnx, cny, cnz, al,
                state, cand_e, cand_p, cand_t)
            rx = nxp - px
            ry = nyp - py
            rz = nzp - pz
            r2 = rx * rx + ry * ry + rz * rz
            rdn = rx * cnx + ry * cny + rz * cnz
            kval = kern_dG_dnx(dim, rdn, r2)
            if t == 2:
                kval += al * kern_G(dim, r2)
            w_tail *= -2.0 * side * kval * w
            e = ne
            px, py, pz = nxp, nyp, nzp
        if abs(w_tail) > DIVERGENCE_LIMIT:
            flag = 1
    return acc, 0, used, flag, state


@njit(cache=True)
def single_layer_sample(geom, bc, M, kconst, p_k, n_cand, want_grad,
                        nderiv, e_start, x0, y0, z0, state, ws):
    """Reconstruct a field quantity from fresh density-walk estimates via one
    resampled outer boundary sample.  ``nderiv`` selects the on-boundary
    normal-derivative form, which runs two independent density walks."""
    stack, out_t, out_e, out_c, cand_e, cand_p, cand_t, zbuf = ws
    dim = geom[0]
    side = bc[0]
    flag = 0
    rays = 0
    used = 0
    val = 0.0
    gx = gy = gz = 0.0
    if nderiv == 1:
        mu1, _r, u1, f1, state = layer_density_sample(
            geom, bc, M, kconst, p_k, n_cand, e_start, x0, y0, z0, state, ws)
        nrm = geom[4]
        cnx = nrm[e_start, 0]
        cny = nrm[e_start, 1]
        cnz = nrm[e_start, 2]
        se, sx, sy, sz, w, state = ris_pick(
            geom, bc, RIS_ABS_DGDNX, n_cand, x0, y0, z0, cnx, cny, cnz, 0.0,
            state, cand_e, cand_p, cand_t)
        mu2, _r, u2, f2, state = layer_density_sample(
            geom, bc, M, kconst, p_k, n_cand, se, sx, sy, sz, state, ws)
        rx = sx - x0
        ry = sy - y0
        rz = sz - z0
        r2 = rx * rx + ry * ry + rz * rz
        rdn = rx * cnx + ry * cny + rz * cnz
        val = 0.5 * side * mu1 + kern_dG_dnx(dim, rdn, r2) * w * mu2
        used = max(u1, u2)
        flag = max(f1, f2)
    else:
        mode = RIS_ABS_GRADG if want_grad else RIS_ABS_G
        se, sx, sy, sz, w, state = ris_pick(
            geom, bc, mode, n_cand, x0, y0, z0, 0.0, 0.0, 0.0, 0.0,
            state, cand_e, cand_p, cand_t)
        mu, _r, used, flag, state = layer_density_sample(
            geom, bc, M, kconst, p_k, n_cand, se, sx, sy, sz, state, ws)
        rx = sx - x0
        ry = sy - y0
        rz = sz - z0
        r2 = rx * rx + ry * ry + rz * rz
        if want_grad:
            kx, ky, kz = kern_gradG(dim, rx, ry, rz, r2)
            gx = kx * w * mu
            gy = ky * w * mu
            gz = kz * w * mu
        else:
            val = kern_G(dim, r2) * w * mu
    if bc[1] == 1:
        nz_count, okv, state = fill_volume_samples(geom, bc, zbuf, state,
                                                    stack, out_t, out_e, out_c)
        if not okv:
            return val, gx, gy, gz, rays, used, 1, state
        if nderiv == 1:
            nrm = geom[4]
            val -= volume_term_nderiv(dim, bc, zbuf, nz_count, x0, y0, z0,
                                      nrm[e_start, 0], nrm[e_start, 1], nrm[e_start, 2])
        elif want_grad:
            vx, vy, vz = volume_term_grad(dim, bc, zbuf, nz_count, x0, y0, z0)
            gx -= vx
            gy -= vy
            gz -= vz
        else:
            val -= volume_term_value(dim, bc, zbuf, nz_count, x0, y0, z0)
    return val, gx, gy, gz, rays, used, flag, state


# ---------------------------------------------------------------------------
# Walk on spheres (Dirichlet baseline)
# ---------------------------------------------------------------------------


@njit(cache=True)
def wos_sample(geom, bc, eps, max_steps, x0, y0, z0, state, ws):
    """Jump between largest empty spheres until the shell of thickness eps,
    then read the Dirichlet data at the closest boundary point."""
    stack, out_t, out_e, out_c, cand_e, cand_p, cand_t, zbuf = ws
    dim = geom[0]
    nz_count = 0
    if bc[1] == 1:
        nz_count, okv, state = fill_volume_samples(geom, bc, zbuf, state,
                                                    stack, out_t, out_e, out_c)
        if not okv:
            return 0.0, 0, 1, state
    x, y, z = x0, y0, z0
    steps = 0
    flag = 0
    while True:
        dist, e, cx, cy, cz = closest_point(geom, x, y, z)
        if dist < eps:
            val = boundary_data(geom, bc, e, cx, cy, cz, zbuf, nz_count)
            break
        if steps >= max_steps:
            val = boundary_data(geom, bc, e, cx, cy, cz, zbuf, nz_count)
            flag = 1
            break
        dx, dy, dz, state = sample_dir_sphere(dim, state)
        x += dist * dx
        y += dist * dy
        z += dist * dz
        steps += 1
    if bc[1] == 1:
        val -= volume_term_value(dim, bc, zbuf, nz_count, x0, y0, z0)
    return val, steps, flag, state


# ---------------------------------------------------------------------------
# Forward (adjoint) walk for the single-layer Neumann problem
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def forward_blocks(geom, bc, M, use_weights, wcdf, wtotal, pts, want_grad,
                   n_paths, block, seed,
                   out_sum, out_sumsq, out_gsum, out_rays):
    """Forward paths started on the boundary, splatting every vertex's
    single-layer contribution to all evaluation points.  Results land in
    per-block accumulators (block index, point index) so the reduction
    order is deterministic."""
    n_pts = pts.shape[0]
    n_blocks = out_sum.shape[0]
    dim = geom[0]
    side = bc[0]
    for b in prange(n_blocks):
        stack = np.empty(BVH_STACK, dtype=np.int32)
        out_t = np.empty(MAX_HITS, dtype=np.float64)
        out_e = np.empty(MAX_HITS, dtype=np.int32)
        out_c = np.empty(MAX_HITS, dtype=np.float64)
        contrib = np.zeros(n_pts, dtype=np.float64)
        gcontrib = np.zeros((n_pts, 3), dtype=np.float64)
        nrm = geom[4]
        lo = b * block
        hi = min(n_paths, lo + block)
        rays = 0
        for s in range(lo, hi):
            state = rng_init(np.uint64(seed), np.uint64(_SALT_FORWARD), np.uint64(s))
            if use_weights == 1:
                e, px, py, pz, pdf, state = sample_boundary_weighted(
                    geom, wcdf, wtotal, state)
            else:
                e, px, py, pz, pdf, state = sample_boundary_uniform(geom, state)
            qd = raw_bc_data(bc, e, px, py, pz, nrm[e, 0], nrm[e, 1], nrm[e, 2])
            w = 2.0 * side * qd / pdf
            for i in range(n_pts):
                contrib[i] = 0.0
                if want_grad:
                    gcontrib[i, 0] = 0.0
                    gcontrib[i, 1] = 0.0
                    gcontrib[i, 2] = 0.0
            for j in range(M):
                h = 0.5 if j == M - 1 else 1.0
                hw = h * w
                for i in range(n_pts):
                    rx = px - pts[i, 0]
                    ry = py - pts[i, 1]
                    rz = pz - pts[i, 2]
                    r2 = rx * rx + ry * ry + rz * rz
                    contrib[i] += hw * kern_G(dim, r2)
                    if want_grad:
                        kx, ky, kz = kern_gradG(dim, rx, ry, rz, r2)
                        gcontrib[i, 0] += hw * kx
                        gcontrib[i, 1] += hw * ky
                        gcontrib[i, 2] += hw * kz
                if j == M - 1:
                    break
                ok, e2, qx, qy, qz, sgn, cosv, tdist, m, state = ray_step(
                    geom, px, py, pz, e, 0, state, stack, out_t, out_e, out_c)
                rays += 1
                if not ok:
                    break
                if bc[3][e2] == 2:
                    # Robin receiving vertex: the alpha*G part of the adjoint
                    # kernel does not cancel against the ray density
                    r2t = tdist * tdist
                    kv = kern_dG_dnx(dim, -tdist * cosv, r2t)
                    kv += bc[7][e2] * kern_G(dim, r2t)
                    if dim == 2:
                        p_area = abs(cosv) / (2.0 * math.pi * tdist) / m
                    else:
                        p_area = abs(cosv) / (4.0 * math.pi * r2t) / m
                    w *= -2.0 * side * kv / p_area
                else:
                    w *= 2.0 * side * sgn * m
                e = e2
                px, py, pz = qx, qy, qz
            for i in range(n_pts):
                out_sum[b, i] += contrib[i]
                out_sumsq[b, i] += contrib[i] * contrib[i]
                if want_grad:
                    out_gsum[b, i, 0] += gcontrib[i, 0]
                    out_gsum[b, i, 1] += gcontrib[i, 1]
                    out_gsum[b, i, 2] += gcontrib[i, 2]
        out_rays[b] = rays


# ---------------------------------------------------------------------------
# Bidirectional Dirichlet estimator with direct boundary sampling
# ---------------------------------------------------------------------------

TECH_RAY = 0
TECH_BOUNDARY = 1
TECH_COMBINED = 2


@njit(cache=True)
def dirichlet_bidir_sample(geom, bc, M, technique, wcdf, wtotal, pdfb_elem,
                           x0, y0, z0, state, ws):
    """Dirichlet walk with an explicit boundary-sampling connection at each
    vertex.  ``technique`` selects pure ray sampling, pure boundary
    connection, or their balance-heuristic combination."""
    stack, out_t, out_e, out_c, cand_e, cand_p, cand_t, zbuf = ws
    dim = geom[0]
    side = bc[0]
    nrm = geom[4]
    rays = 0
    val = 0.0
    W = 1.0
    e_cur = -1
    px, py, pz = x0, y0, z0
    used = 0
    for i in range(M):
        c_term = 1.0 if i + 1 < M else 0.5
        # explicit connection to a boundary point chosen by data magnitude
        if technique != TECH_RAY:
            se, sx, sy, sz, pdf, state = sample_boundary_weighted(
                geom, wcdf, wtotal, state)
            rx = sx - px
            ry = sy - py
            rz = sz - pz
            r2 = rx * rx + ry * ry + rz * rz
            if r2 > 0.0:
                rdn = rx * nrm[se, 0] + ry * nrm[se, 1] + rz * nrm[se, 2]
                kd = kern_dG_dny(dim, rdn, r2)
                if i == 0:
                    kval = -kd
                else:
                    kval = 2.0 * side * kd
                mw = 1.0
                if technique == TECH_COMBINED:
                    # density under the ray technique for the same point
                    r = math.sqrt(r2)
                    dx = rx / r
                    dy = ry / r
                    dz = rz / r
                    mh = ray_all_hits(geom, px, py, pz, dx, dy, dz, e_cur,
                                      out_t, out_e, out_c, stack)
                    rays += 1
                    found = False
                    for hji in range(mh):
                        if out_e[hji] == se and abs(out_t[hji] - r) < 1e-6 * r + geom[15]:
                            found = True
                            break
                    if found and mh > 0:
                        pdf_a = abs(kd) / mh
                    else:
                        pdf_a = 0.0
                    mw = pdf / (pdf_a + pdf)
                data = raw_bc_data(bc, se, sx, sy, sz,
                                   nrm[se, 0], nrm[se, 1], nrm[se, 2])
                val += W * (kval / pdf) * 2.0 * side * data * c_term * mw
        # extend the path by one ray transition
        ok, e2, qx, qy, qz, sgn, cosv, tdist, m, state = ray_step(
            geom, px, py, pz, e_cur, 0, state, stack, out_t, out_e, out_c)
        rays += 1
        if not ok:
            break
        used = i + 1
        if i == 0:
            Wnext = W * sgn * m
        else:
            Wnext = W * (-2.0 * side * sgn * m)
        if technique != TECH_BOUNDARY:
            mw = 1.0
            if technique == TECH_COMBINED:
                rx = qx - px
                ry = qy - py
                rz = qz - pz
                r2 = rx * rx + ry * ry + rz * rz
                rdn = rx * nrm[e2, 0] + ry * nrm[e2, 1] + rz * nrm[e2, 2]
                pdf_a = abs(kern_dG_dny(dim, rdn, r2)) / m
                pdf_b = pdfb_elem[e2]
                mw = pdf_a / (pdf_a + pdf_b)
            data = raw_bc_data(bc, e2, qx, qy, qz,
                               nrm[e2, 0], nrm[e2, 1], nrm[e2, 2])
            val += Wnext * 2.0 * side * data * c_term * mw
        W = Wnext
        e_cur = e2
        px, py, pz = qx, qy, qz
    return val, rays, used, state


# ---------------------------------------------------------------------------
# Field driver
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def field_blocks(kind, geom, bc, M, hemi, want_grad, n_cand, kconst, p_k,
                 wos_eps, wos_max_steps, vol_samples,
                 pts, elems, N, block, seed,
                 out_sum, out_sumsq, out_min, out_max,
                 out_gx, out_gy, out_gz,
                 out_rays, out_used, out_flags):
    """Run N independent samples for each evaluation point, accumulating
    per-(point, block) partial sums.  Streams are keyed by (seed, point,
    sample index), so results do not depend on thread scheduling."""
    n_pts = pts.shape[0]
    n_blocks = out_sum.shape[1]
    for wi in prange(n_pts * n_blocks):
        p = wi // n_blocks
        b = wi % n_blocks
        lo = b * block
        hi = min(N, lo + block)
        if lo >= hi:
            continue
        stack = np.empty(BVH_STACK, dtype=np.int32)
        t_buf = np.empty(MAX_HITS, dtype=np.float64)
        e_buf = np.empty(MAX_HITS, dtype=np.int32)
        c_buf = np.empty(MAX_HITS, dtype=np.float64)
        ce = np.empty(RIS_MAX, dtype=np.int32)
        cp = np.empty((RIS_MAX, 3), dtype=np.float64)
        ct = np.empty(RIS_MAX, dtype=np.float64)
        zbuf = np.empty((vol_samples, 3), dtype=np.float64)
        ws = (stack, t_buf, e_buf, c_buf, ce, cp, ct, zbuf)
        x0 = pts[p, 0]
        y0 = pts[p, 1]
        z0 = pts[p, 2]
        e0 = elems[p]
        acc = 0.0
        acc2 = 0.0
        vmin = math.inf
        vmax = -math.inf
        agx = 0.0
        agy = 0.0
        agz = 0.0
        rays_t = 0
        used_t = 0
        flags_t = 0
        for s in range(lo, hi):
            state = rng_init(np.uint64(seed), np.uint64(p), np.uint64(s))
            if kind == K_DIRICHLET:
                v, gx, gy, gz, rays, used, fl, state = dirichlet_sample(
                    geom, bc, M, hemi, want_grad, x0, y0, z0, state, ws)
            elif kind == K_NEUMANN_INT:
                v, gx, gy, gz, rays, used, fl, state = neumann_sample(
                    geom, bc, M, n_cand, hemi, want_grad, 0, -1, x0, y0, z0, state, ws)
            elif kind == K_NEUMANN_BND:
                v, gx, gy, gz, rays, used, fl, state = neumann_sample(
                    geom, bc, M, n_cand, hemi, want_grad, 1, e0, x0, y0, z0, state, ws)
            elif kind == K_SINGLE_LAYER:
                v, gx, gy, gz, rays, used, fl, state = single_layer_sample(
                    geom, bc, M, kconst, p_k, n_cand, want_grad, 0, e0,
                    x0, y0, z0, state, ws)
            elif kind == K_SINGLE_LAYER_NDERIV:
                v, gx, gy, gz, rays, used, fl, state = single_layer_sample(
                    geom, bc, M, kconst, p_k, n_cand, 0, 1, e0,
                    x0, y0, z0, state, ws)
            elif kind == K_LAYER_DENSITY:
                v, rays, used, fl, state = layer_density_sample(
                    geom, bc, M, kconst, p_k, n_cand, e0, x0, y0, z0, state, ws)
                gx = gy = gz = 0.0
            else:
                v, used, fl, state = wos_sample(
                    geom, bc, wos_eps, wos_max_steps, x0, y0, z0, state, ws)
                gx = gy = gz = 0.0
                rays = 0
            acc += v
            acc2 += v * v
            if v < vmin:
                vmin = v
            if v > vmax:
                vmax = v
            agx += gx
            agy += gy
            agz += gz
            rays_t += rays
            used_t += used
            flags_t += fl
        out_sum[p, b] = acc
        out_sumsq[p, b] = acc2
        out_min[p, b] = vmin
        out_max[p, b] = vmax
        out_gx[p, b] = agx
        out_gy[p, b] = agy
        out_gz[p, b] = agz
        out_rays[p, b] = rays_t
        out_used[p, b] = used_t
        out_flags[p, b] = flags_t


@njit(cache=True, parallel=True)
def bidir_blocks(technique, geom, bc, M, wcdf, wtotal, pdfb_elem,
                 pts, N, block, seed, out_sum, out_sumsq, out_rays):
    """Driver for the bidirectional Dirichlet estimator variants."""
    n_pts = pts.shape[0]
    n_blocks = out_sum.shape[1]
    vol_samples = 1
    for wi in prange(n_pts * n_blocks):
        p = wi // n_blocks
        b = wi % n_blocks
        lo = b * block
        hi = min(N, lo + block)
        if lo >= hi:
            continue
        stack = np.empty(BVH_STACK, dtype=np.int32)
        t_buf = np.empty(MAX_HITS, dtype=np.float64)
        e_buf = np.empty(MAX_HITS, dtype=np.int32)
        c_buf = np.empty(MAX_HITS, dtype=np.float64)
        ce = np.empty(RIS_MAX, dtype=np.int32)
        cp = np.empty((RIS_MAX, 3), dtype=np.float64)
        ct = np.empty(RIS_MAX, dtype=np.float64)
        zbuf = np.empty((vol_samples, 3), dtype=np.float64)
        ws = (stack, t_buf, e_buf, c_buf, ce, cp, ct, zbuf)
        acc = 0.0
        acc2 = 0.0
        rays_t = 0
        for s in range(lo, hi):
            state = rng_init(np.uint64(seed), np.uint64(p), np.uint64(s))
            v, rays, used, state = dirichlet_bidir_sample(
                geom, bc, M, technique, wcdf, wtotal, pdfb_elem,
                pts[p, 0], pts[p, 1], pts[p, 2], state, ws)
            acc += v
            acc2 += v * v
            rays_t += rays
        out_sum[p, b] = acc
        out_sumsq[p, b] = acc2
        out_rays[p, b] = rays_t

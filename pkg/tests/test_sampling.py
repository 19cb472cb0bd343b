import math

import numpy as np
import pytest
from scipy import stats

from wobkit import geometry as geo
from wobkit.kernels import KernelKind, eval_kernel
from wobkit.sampling import (
    EscapedDomainError, mis_balance, next_point_all_hits,
    next_point_hemisphere, ris_select, sample_sphere_direction,
)


# ---------------------------------------------------------------------------
# sphere directions
# ---------------------------------------------------------------------------


def _directions(dim, n, rng):
    return np.array([sample_sphere_direction(dim, rng) for _ in range(n)])


def test_directions_unit_norm(rng):
    for dim in (2, 3):
        d = _directions(dim, 200, rng)
        assert np.all(np.abs(np.linalg.norm(d, axis=1) - 1.0) < 1e-12)
        if dim == 2:
            assert np.all(d[:, 2] == 0.0)


def test_directions_zero_mean(rng):
    n = 40_000
    d = _directions(2, n, rng)
    assert np.linalg.norm(d.mean(axis=0)) < 4.0 / math.sqrt(n)


def test_directions_3d_component_variance(rng):
    n = 60_000
    d = _directions(3, n, rng)
    v = d.var(axis=0)
    # each Cartesian component of a uniform sphere direction has variance 1/3
    assert np.all(np.abs(v - 1.0 / 3.0) < 0.012)


# ---------------------------------------------------------------------------
# all-hits next point
# ---------------------------------------------------------------------------


def test_convex_interior_single_hit(circle512, rng):
    for _ in range(50):
        np_ = next_point_all_hits(circle512, [0.2, -0.1], rng)
        assert np_.hits_count == 1
        assert abs(np_.weight) == 1.0


def test_weight_is_signed_hit_count(star512, rng):
    for _ in range(100):
        np_ = next_point_all_hits(star512, [0.0, 0.0], rng)
        assert abs(np_.weight) == np_.hits_count
        assert np_.hits_count % 2 == 1


def test_mean_hits_matches_direction_sweep(star512, rng):
    # dense deterministic direction sweep as the oracle for E[m]
    K_sweep = 20_000
    angles = (np.arange(K_sweep) + 0.5) * 2 * np.pi / K_sweep
    total = 0
    for a in angles:
        total += len(geo.all_hits(star512, [0.0, 0.0], [np.cos(a), np.sin(a)]))
    oracle = total / K_sweep
    n = 20_000
    ms = np.array([next_point_all_hits(star512, [0.0, 0.0], rng).hits_count
                   for _ in range(n)])
    assert ms.mean() == pytest.approx(oracle, rel=0.015)


def test_pick_among_hits_uniform(rng):
    # three nested loops: every ray from the center crosses exactly 3 of them
    loops = [geo.circle_boundary(64, radius=r).vertices[:, :2]
             for r in (0.4, 0.8, 1.2)]
    b = geo.boundary_from_loops([lp for lp in loops])
    counts = np.zeros(3)
    n = 6_000
    for _ in range(n):
        np_ = next_point_all_hits(b, [0.0, 0.0], rng)
        assert np_.hits_count == 3
        ring = min(2, np_.point.element_id // 64)
        counts[ring] += 1
    p = counts / n
    se = math.sqrt((1 / 3) * (2 / 3) / n)
    assert np.all(np.abs(p - 1 / 3) < 3.5 * se)


def test_escape_error_far_exterior(circle512):
    # from 1e7 away virtually no direction hits; the resample loop gives up
    rng = np.random.default_rng(0)
    with pytest.raises(EscapedDomainError):
        next_point_all_hits(circle512, [1e7, 0.0], rng)


def test_miss_returns_none_without_resampling(circle512):
    rng = np.random.default_rng(1)
    results = [next_point_all_hits(circle512, [30.0, 0.0], rng,
                                   resample_on_miss=False)
               for _ in range(60)]
    # from 30 units away most draws miss, a few connect
    assert any(r is None for r in results)
    assert all(r is None or r.hits_count >= 1 for r in results)


def test_gauss_sum_all_hits(circle512, star512, rng):
    # E[2 * weight] estimates the closed-surface sum rule (-2) from inside
    for b, origin in ((circle512, [0.05, 0.0]), (star512, [0.0, 0.8])):
        n = 30_000
        w = np.array([2.0 * next_point_all_hits(b, origin, rng).weight
                      for _ in range(n)])
        se = w.std(ddof=1) / math.sqrt(n)
        if se == 0.0:
            # from a star-shaped kernel every ray exits once: exact -2
            assert w.mean() == pytest.approx(-2.0, abs=1e-12)
        else:
            assert abs(w.mean() + 2.0) < 3 * se
    # the prong launch point must actually see multi-hit directions
    ms = [next_point_all_hits(star512, [0.0, 0.8], rng).hits_count
          for _ in range(2_000)]
    assert max(ms) >= 3


# ---------------------------------------------------------------------------
# hemisphere next point
# ---------------------------------------------------------------------------


def test_hemisphere_excludes_launch_and_weight(circle512, rng):
    start = geo.sample_boundary(circle512, rng)
    for _ in range(100):
        np_ = next_point_hemisphere(circle512, start, rng)
        assert np_.point.element_id != start.element_id
        assert np_.weight == pytest.approx(-0.5)
        assert np_.hits_count == 1


def test_hemisphere_density_on_circle(circle512, rng):
    # on a circle the chord density in arc measure is exactly uniform, which
    # equals the kernel-proportional density -dG/dn_y * 2
    start = geo.sample_boundary(circle512, rng)
    n = 30_000
    angs = np.empty(n)
    for i in range(n):
        p = next_point_hemisphere(circle512, start, rng).point.position
        angs[i] = math.atan2(p[1], p[0])
    hist, _edges = np.histogram(angs, bins=32, range=(-np.pi, np.pi))
    chi = stats.chisquare(hist)
    assert chi.pvalue > 1e-4


def test_hemisphere_requires_convex(star512, rng):
    start = geo.sample_boundary(star512, rng)
    with pytest.raises(ValueError, match="convex"):
        next_point_hemisphere(star512, start, rng)


# ---------------------------------------------------------------------------
# resampled selection
# ---------------------------------------------------------------------------


def test_ris_single_candidate_plain_is(circle512, rng):
    bp = geo.sample_boundary(circle512, rng)
    chosen, w = ris_select([(bp, 3.7)], rng)
    assert chosen is bp
    assert w == pytest.approx(1.0 / bp.pdf_area)


def test_ris_constant_target_measures_boundary(circle512, rng):
    n = 5_000
    total = 0.0
    for _ in range(n):
        cands = [(geo.sample_boundary(circle512, rng), 1.0) for _ in range(4)]
        _bp, w = ris_select(cands, rng)
        total += w
    assert total / n == pytest.approx(circle512.total_area, rel=0.01)


def test_ris_kernel_target_gauss(circle512, rng):
    # choose candidates by |kernel| and integrate 2 dG/dn_y over the boundary
    x = np.array([0.15, -0.1, 0.0])
    n = 20_000
    vals = np.empty(n)
    for i in range(n):
        cands = []
        for _ in range(16):
            bp = geo.sample_boundary(circle512, rng)
            k = eval_kernel(KernelKind.dG_dny, 2, x, bp.position, n_y=bp.normal)
            cands.append((bp, abs(k)))
        bp, w = ris_select(cands, rng)
        k = eval_kernel(KernelKind.dG_dny, 2, x, bp.position, n_y=bp.normal)
        vals[i] = 2.0 * k * w
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() + 2.0) < 3 * se


def test_ris_zero_targets_fallback(circle512, rng):
    n = 4_000
    total = 0.0
    for _ in range(n):
        cands = [(geo.sample_boundary(circle512, rng), 0.0) for _ in range(4)]
        _bp, w = ris_select(cands, rng)
        total += w
    assert total / n == pytest.approx(circle512.total_area, rel=0.05)


def test_ris_vs_uniform_indistinguishable(circle512, rng):
    # means of int G(x, .) dA by RIS and by plain uniform sampling
    x = np.array([0.3, 0.2, 0.0])
    n = 8_000
    ris_vals = np.empty(n)
    uni_vals = np.empty(n)
    for i in range(n):
        cands = []
        for _ in range(8):
            bp = geo.sample_boundary(circle512, rng)
            gk = eval_kernel(KernelKind.G, 2, x, bp.position)
            cands.append((bp, abs(gk)))
        bp, w = ris_select(cands, rng)
        ris_vals[i] = eval_kernel(KernelKind.G, 2, x, bp.position) * w
        bp2 = geo.sample_boundary(circle512, rng)
        uni_vals[i] = eval_kernel(KernelKind.G, 2, x, bp2.position) / bp2.pdf_area
    t = stats.ttest_ind(ris_vals, uni_vals, equal_var=False)
    assert t.pvalue > 0.01


def test_ris_validation(rng, circle512):
    with pytest.raises(ValueError, match="non-empty"):
        ris_select([], rng)
    bp = geo.sample_boundary(circle512, rng)
    with pytest.raises(ValueError):
        ris_select([(bp, -1.0)], rng)


# ---------------------------------------------------------------------------
# balance heuristic
# ---------------------------------------------------------------------------


def test_mis_balance_values():
    assert mis_balance(0.5, 0.5) == pytest.approx(0.5)
    assert mis_balance(1.0, 0.0) == pytest.approx(1.0)
    a, b = 0.3, 1.7
    assert mis_balance(a, b) + mis_balance(b, a) == pytest.approx(1.0)


def test_mis_balance_errors():
    with pytest.raises(ValueError, match="no technique"):
        mis_balance(0.0, 0.0)
    with pytest.raises(ValueError):
        mis_balance(-1.0, 0.5)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wobkit import geometry as geo


# ---------------------------------------------------------------------------
# independent brute-force oracles
# ---------------------------------------------------------------------------


def brute_hits_2d(boundary, o, d, exclude=-1, t_min=None):
    """All segment crossings of the half-line, straight loop over elements."""
    t_min = boundary.t_min if t_min is None else t_min
    hits = []
    for e in range(boundary.n_elements):
        if e == exclude:
            continue
        p0 = boundary.p0[e, :2]
        e1 = boundary.e1[e, :2]
        n = boundary.normals[e, :2]
        if abs(d[0] * n[0] + d[1] * n[1]) < 1e-9:
            continue
        denom = d[0] * e1[1] - d[1] * e1[0]
        if denom == 0.0:
            continue
        q = p0 - o[:2]
        t = (q[0] * e1[1] - q[1] * e1[0]) / denom
        s = (q[0] * d[1] - q[1] * d[0]) / denom
        if t > t_min and 0.0 <= s <= 1.0:
            hits.append((t, e))
    hits.sort()
    return hits


def brute_closest_2d(boundary, x):
    best = (math.inf, -1)
    for e in range(boundary.n_elements):
        p0 = boundary.p0[e, :2]
        e1 = boundary.e1[e, :2]
        u = np.clip(np.dot(x[:2] - p0, e1) / np.dot(e1, e1), 0.0, 1.0)
        d = np.linalg.norm(x[:2] - (p0 + u * e1))
        if d < best[0]:
            best = (d, e)
    return best


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def test_circle_perimeter_n4():
    b = geo.circle_boundary(4)
    assert b.total_area == pytest.approx(8.0 * math.sin(math.pi / 4), rel=1e-12)


def test_circle_perimeter_n512(circle512):
    assert circle512.total_area == pytest.approx(2 * math.pi, abs=1e-4)
    assert circle512.total_area == pytest.approx(
        2 * 512 * math.sin(math.pi / 512), rel=1e-12)


def test_normals_unit_and_outward(circle512, star512, icosphere):
    for b in (circle512, star512, icosphere):
        norms = np.linalg.norm(b.normals, axis=1)
        assert np.all(np.abs(norms - 1.0) < 1e-12)
    # circle normals point away from the center
    mids = circle512.element_midpoints()
    assert np.all(np.einsum("ij,ij->i", mids, circle512.normals) > 0)


def test_total_area_matches_sum(icosphere):
    assert icosphere.total_area == pytest.approx(icosphere.measures.sum(),
                                                 rel=1e-9)


def test_icosahedron_subdiv0():
    b = geo.icosphere_boundary(0)
    assert b.n_elements == 20
    mids = b.element_midpoints()
    assert np.all(np.einsum("ij,ij->i", mids, b.normals) > 0)


def test_box_volume_and_closure():
    b = geo.box_boundary((1.0, 1.0, 1.0))
    assert b.n_elements == 12
    assert b.enclosed_measure() == pytest.approx(8.0, rel=1e-12)


def test_open_loop_rejected():
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    elems = np.array([[0, 1], [1, 2], [2, 3]])  # missing closing segment
    with pytest.raises(geo.BoundaryError, match="non-watertight"):
        geo._finish_2d(verts, elems)


def test_inconsistent_winding_rejected():
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    elems = np.array([[0, 1], [2, 1], [2, 3], [3, 0]])  # one edge flipped
    with pytest.raises(geo.BoundaryError, match="orientation"):
        geo._finish_2d(verts, elems)


def test_degenerate_segment_rejected():
    verts = np.array([[0, 0], [1, 0], [1, 0], [0, 1]], dtype=float)
    elems = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    with pytest.raises(geo.BoundaryError, match="degenerate"):
        geo._finish_2d(verts, elems)


def test_3d_open_mesh_rejected():
    # single triangle: every edge belongs to one face only
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
    with pytest.raises(geo.BoundaryError, match="non-watertight"):
        geo._finish_3d(verts, np.array([[0, 1, 2]]))


def test_obj_roundtrip(tmp_path):
    # regular tetrahedron
    obj = tmp_path / "tet.obj"
    obj.write_text("""
v 1 1 1
v 1 -1 -1
v -1 1 -1
v -1 -1 1
f 1 3 2
f 1 2 4
f 1 4 3
f 2 3 4
""")
    b = geo.load_obj_boundary(obj)
    assert b.n_elements == 4
    assert b.enclosed_measure() > 0
    mids = b.element_midpoints()
    assert np.all(np.einsum("ij,ij->i", mids, b.normals) > 0)


def test_loops_csv(tmp_path):
    p = tmp_path / "loops.csv"
    p.write_text("0,0\n1,0\n1,1\n0,1\n")
    b = geo.load_loops_csv(p)
    assert b.n_elements == 4
    assert b.total_area == pytest.approx(4.0)


def test_build_boundary_with_tags():
    b = geo.build_boundary({"primitive": "circle", "n": 64},
                           bc_assignment=lambda mids: (mids[:, 0] > 0).astype(int))
    assert set(np.unique(b.bc_tag)) == {0, 1}


# ---------------------------------------------------------------------------
# all-hits queries
# ---------------------------------------------------------------------------


def test_center_ray_single_hit(circle512):
    hits = geo.all_hits(circle512, [0.0, 0.0], [1.0, 0.0])
    assert len(hits) == 1
    assert hits[0].t == pytest.approx(np.cos(np.pi / 512), abs=2e-3)
    assert np.allclose(hits[0].point[:2], [hits[0].t, 0.0], atol=1e-12)
    assert hits[0].front_facing == 1.0


def test_unnormalized_direction_rejected(circle512):
    with pytest.raises(ValueError, match="normalized"):
        geo.all_hits(circle512, [0, 0], [2.0, 0.0])


def test_parity_inside_outside(star512, rng):
    for _ in range(200):
        p = rng.uniform(-1.3, 1.3, 2)
        a = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(a), np.sin(a)])
        m = len(geo.all_hits(star512, p, d))
        inside = bool(star512.contains(p[None])[0])
        assert (m % 2 == 1) == inside


def test_all_hits_matches_brute_force(star512, rng):
    for _ in range(300):
        p = rng.uniform(-1.5, 1.5, 2)
        a = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(a), np.sin(a)])
        hits = geo.all_hits(star512, p, d)
        brute = brute_hits_2d(star512, p, d)
        assert len(hits) == len(brute)
        for h, (bt, be) in zip(hits, brute):
            assert h.t == pytest.approx(bt, abs=1e-9)
            assert h.element_id == be


def test_all_hits_sorted_and_excludes(star512, rng):
    for _ in range(100):
        p = rng.uniform(-0.3, 0.3, 2)
        a = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(a), np.sin(a)])
        hits = geo.all_hits(star512, p, d)
        ts = [h.t for h in hits]
        assert ts == sorted(ts)
        if hits:
            rest = geo.all_hits(star512, p, d, exclude_element=hits[0].element_id)
            assert all(h.element_id != hits[0].element_id for h in rest)


def test_star_even_crossings_from_outside(star512):
    # a ray through two prongs from outside
    hits = geo.all_hits(star512, [-2.0, 0.55], [1.0, 0.0])
    assert len(hits) % 2 == 0
    assert len(hits) >= 2


@settings(max_examples=50, deadline=None)
@given(px=st.floats(-1.4, 1.4), py=st.floats(-1.4, 1.4),
       ang=st.floats(0, 2 * math.pi))
def test_all_hits_brute_force_property(px, py, ang):
    b = _star_cached()
    p = np.array([px, py])
    d = np.array([math.cos(ang), math.sin(ang)])
    hits = geo.all_hits(b, p, d)
    brute = brute_hits_2d(b, p, d)
    assert len(hits) == len(brute)
    for h, (bt, _be) in zip(hits, brute):
        assert abs(h.t - bt) < 1e-9


_STAR_CACHE = {}


def _star_cached():
    if "star" not in _STAR_CACHE:
        _STAR_CACHE["star"] = geo.star_boundary(5, 1.0, 0.4, 128)
    return _STAR_CACHE["star"]


def test_triangle_all_hits_sphere(icosphere, rng):
    # interior origin: odd hit counts; generic center ray: exactly 1
    d = np.array([0.3, 0.2, 0.9])
    d /= np.linalg.norm(d)
    hits = geo.all_hits(icosphere, [0, 0, 0], d)
    assert len(hits) == 1
    for _ in range(50):
        p = rng.uniform(-0.4, 0.4, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        assert len(geo.all_hits(icosphere, p, d)) % 2 == 1


# ---------------------------------------------------------------------------
# closest point
# ---------------------------------------------------------------------------


def test_closest_point_apothem(circle512):
    _cp, d, _e = geo.closest_point(circle512, [0.0, 0.0])
    assert d == pytest.approx(math.cos(math.pi / 512), rel=1e-12)


def test_closest_point_vertex(circle512):
    v = circle512.vertices[10]
    _cp, d, _e = geo.closest_point(circle512, v)
    assert d == pytest.approx(0.0, abs=1e-14)


def test_closest_point_outside(circle512):
    _cp, d, _e = geo.closest_point(circle512, [2.0, 0.0])
    assert d == pytest.approx(1.0, abs=2e-5)


def test_closest_point_matches_brute(star512, rng):
    for _ in range(150):
        p = rng.uniform(-1.4, 1.4, 2)
        _cp, d, _e = geo.closest_point(star512, p)
        bd, _be = brute_closest_2d(star512, p)
        assert d == pytest.approx(bd, abs=1e-12)


def test_closest_point_triangle(icosphere, rng):
    for _ in range(40):
        p = rng.uniform(-0.8, 0.8, 3)
        _cp, d, _e = geo.closest_point(icosphere, p)
        # icosphere at subdiv 3 is within ~2e-3 of the unit sphere
        assert d == pytest.approx(abs(1.0 - np.linalg.norm(p)), abs=5e-3)


# ---------------------------------------------------------------------------
# boundary sampling
# ---------------------------------------------------------------------------


def test_sample_boundary_uniform_pdf(circle512, rng):
    for _ in range(20):
        bp = geo.sample_boundary(circle512, rng)
        assert bp.pdf_area == pytest.approx(1.0 / circle512.total_area, rel=1e-12)
        _cp, d, _e = geo.closest_point(circle512, bp.position)
        assert d < 1e-12


def test_sample_boundary_degenerate_weights(circle512, rng):
    w = np.zeros(circle512.n_elements)
    w[37] = 5.0
    for _ in range(20):
        bp = geo.sample_boundary(circle512, rng, weights=w)
        assert bp.element_id == 37
        assert bp.pdf_area == pytest.approx(1.0 / circle512.measures[37], rel=1e-12)


def test_sample_boundary_zero_weights(circle512, rng):
    with pytest.raises(ValueError, match="empty sampling support"):
        geo.sample_boundary(circle512, rng, weights=np.zeros(circle512.n_elements))


def test_sample_boundary_weighted_histogram(circle512, rng):
    from scipy import stats
    w = np.zeros(circle512.n_elements)
    spots = np.arange(0, 512, 85)         # six separated spots
    for i, s in enumerate(spots):
        w[s:s + 8] = 1.0 + 0.5 * i
    n = 20_000
    counts = np.zeros(circle512.n_elements)
    for _ in range(n):
        bp = geo.sample_boundary(circle512, rng, weights=w)
        counts[bp.element_id] += 1
    probs = w * circle512.measures
    probs /= probs.sum()
    sel = probs > 0
    chi = stats.chisquare(counts[sel], n * probs[sel] / probs[sel].sum())
    assert chi.pvalue > 1e-4


def test_weighted_sampling_integral(circle512, rng):
    # MC estimate of the boundary measure with 1/pdf weights
    w = 1.0 + np.arange(circle512.n_elements) % 7
    total = 0.0
    n = 20_000
    for _ in range(n):
        bp = geo.sample_boundary(circle512, rng, weights=w)
        total += 1.0 / bp.pdf_area
    assert total / n == pytest.approx(circle512.total_area, rel=0.02)

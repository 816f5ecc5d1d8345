from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from stressgrasp.errors import DegenerateSpan
from stressgrasp.hull6 import brute_force_facets, init_hull, min_face_distance

CROSS = np.vstack([np.eye(6), -np.eye(6)])


def facet_set(hull):
    return {tuple(np.round(d, 9)) + (round(b, 9),) for d, b in zip(hull.normals, hull.offsets)}


def scipy_facet_set(points):
    """Facet planes from Qhull, merged across its triangulated pieces."""
    eq = ConvexHull(points).equations  # rows (d, -b) with |d| = 1
    return {tuple(np.round(e[:6], 9)) + (round(-e[6], 9),) for e in eq}


def check_valid(hull, tol=1e-9):
    V = hull.vertices
    assert np.all(V @ hull.normals.T <= hull.offsets + tol)
    assert np.allclose(np.linalg.norm(hull.normals, axis=1), 1.0, atol=1e-12)
    assert np.all(hull.offsets - hull.normals @ hull.interior_point > hull.eps)
    for d, b, verts in hull.facets:
        P = hull.points[list(verts)]
        assert np.allclose(P @ d, b, atol=tol)
        assert np.linalg.matrix_rank(P[1:] - P[0], tol=1e-9) == 5


def test_cross_polytope():
    hull = init_hull(CROSS)
    assert hull.n_facets == 64
    assert np.allclose(np.abs(hull.normals), 1 / np.sqrt(6))
    assert np.allclose(hull.offsets, 1 / np.sqrt(6))
    r, d = min_face_distance(hull)
    assert r == pytest.approx(1 / np.sqrt(6))
    assert np.allclose(np.abs(d), 1 / np.sqrt(6))
    check_valid(hull)


def test_gaussian_simplex():
    P = np.random.default_rng(0).normal(size=(7, 6))
    hull = init_hull(P)
    assert hull.n_facets == 7
    check_valid(hull)


def test_degenerate_span():
    P = np.random.default_rng(1).normal(size=(12, 6))
    P[:, 5] = 0.0
    with pytest.raises(DegenerateSpan):
        init_hull(P)


def test_interior_point_is_a_no_op():
    hull = init_hull(CROSS)
    before = facet_set(hull)
    assert hull.add_point(hull.interior_point) is False
    assert facet_set(hull) == before


def test_exterior_point_matches_brute_force():
    hull = init_hull(CROSS)
    p = 2 * np.eye(6)[0]
    assert hull.add_point(p)
    pts = np.vstack([CROSS, p])
    ref = {tuple(np.round(d, 9)) + (round(b, 9),) for d, b in brute_force_facets(pts)}
    assert facet_set(hull) == ref
    # the 32 facets on the -e1 side are untouched
    untouched = [f for f in facet_set(hull) if f[0] < 0]
    assert len(untouched) == 32
    assert all(np.isclose(f[6], 1 / np.sqrt(6)) for f in untouched)
    # repeating the insertion changes nothing
    assert hull.add_point(p) is False
    assert facet_set(hull) == ref
    check_valid(hull)


@pytest.mark.parametrize("seed", range(4))
def test_random_hull_matches_qhull(seed):
    P = np.random.default_rng(seed).normal(size=(40, 6))
    hull = init_hull(P)
    check_valid(hull)
    assert facet_set(hull) == scipy_facet_set(P)


def test_scaling_and_translation_of_distance():
    P = np.random.default_rng(5).normal(size=(30, 6))
    r1, _ = min_face_distance(init_hull(P))
    r2, _ = min_face_distance(init_hull(3.0 * P))
    assert r1 > 0
    assert r2 == pytest.approx(3.0 * r1, rel=1e-12)
    r3, _ = min_face_distance(init_hull(P + 50.0))
    assert r3 == 0.0


def test_debug_dump_roundtrips():
    hull = init_hull(CROSS)
    data = json.loads(hull.to_json())
    assert len(data["facets"]) == 64
    assert len(data["points"]) == 12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_distance_is_monotone_under_insertion(seed):
    rng = np.random.default_rng(seed)
    hull = init_hull(rng.normal(size=(14, 6)) + 0.3 * CROSS[rng.integers(0, 12, 14)])
    prev = min_face_distance(hull)[0]
    for p in rng.normal(size=(25, 6)) * 1.5:
        hull.add_point(p)
        r = min_face_distance(hull)[0]
        assert r >= prev - 1e-12
        prev = r
    check_valid(hull)
    # interior convex combinations satisfy every facet strictly
    w = rng.dirichlet(np.ones(len(hull.vertices)), size=20)
    X = w @ hull.vertices
    assert np.all(X @ hull.normals.T < hull.offsets[None, :])

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stressgrasp import shapes
from stressgrasp.errors import NotWatertight, ParseError
from stressgrasp.geom import (
    SurfaceMesh,
    angle_defects,
    closest_contact,
    compute_moments,
    contacts_from_json,
    contacts_to_json,
    cross_matrix,
    load_mesh,
    poisson_disk_contacts,
    solid_angle,
    solid_angles,
    write_obj,
    write_off,
)


def octahedron(normalize=False):
    v, f = shapes.octahedron_arrays()
    return SurfaceMesh.from_arrays(v, f, normalize=normalize)


def test_octahedron_volume_before_scaling():
    assert octahedron().signed_volume == pytest.approx(4.0 / 3.0, abs=1e-12)


def test_translated_mesh_is_recentered():
    v, f = shapes.icosphere_arrays(1)
    mesh = SurfaceMesh.from_arrays(v + np.array([5.0, -3.0, 2.0]), f)
    assert np.allclose(compute_moments(mesh).centroid, 0.0, atol=1e-12)
    assert mesh.bbox_diagonal == pytest.approx(1.0)
    assert np.allclose(mesh.to_original(mesh.vertices), v + [5.0, -3.0, 2.0])


def test_inward_winding_is_repaired():
    v, f = shapes.octahedron_arrays()
    mesh = SurfaceMesh.from_arrays(v, f[:, ::-1], normalize=False)
    assert mesh.signed_volume > 0


def test_missing_triangle_reports_boundary_edges():
    v, f = shapes.icosphere_arrays(1)
    with pytest.raises(NotWatertight) as info:
        SurfaceMesh.from_arrays(v, f[1:])
    assert len(info.value.edges) == 3


def test_bad_arrays_raise_parse_error():
    with pytest.raises(ParseError):
        SurfaceMesh.from_arrays(np.zeros((4, 2)), [[0, 1, 2]])
    v, f = shapes.octahedron_arrays()
    with pytest.raises(ParseError):
        SurfaceMesh.from_arrays(v, f + 10)


def test_unit_cube_moments():
    cube = shapes.box((1, 1, 1), 1, normalize=False)
    mom = compute_moments(cube)
    assert mom.volume == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(mom.centroid, 0.0, atol=1e-14)
    assert np.allclose(mom.second_moment, np.eye(3) / 12, atol=1e-14)
    T = mom.T_mat
    for k in range(3):
        assert np.allclose(T[:, 3 * k : 3 * k + 3], cross_matrix(np.eye(3)[k]) / 12, atol=1e-14)


def test_icosphere_volume_close_to_ball():
    mesh = shapes.icosphere(3, normalize=False)
    assert abs(mesh.signed_volume - 4 * np.pi / 3) / (4 * np.pi / 3) < 0.01


def test_divergence_volume_matches_tetrahedra():
    for mesh in (shapes.icosphere(2), shapes.box((1, 0.6, 0.4), 3), shapes.asymmetric_dumbbell(3)):
        assert mesh.signed_volume == pytest.approx(mesh.tetra_volume, abs=1e-12)
        assert compute_moments(mesh).volume == pytest.approx(mesh.tetra_volume, abs=1e-12)


def test_centrally_symmetric_first_moment_vanishes():
    mom = compute_moments(shapes.box((1, 0.6, 0.4), 2, normalize=False))
    assert np.allclose(mom.first_moment, 0.0, atol=1e-14)


def test_poisson_disk_spacing_and_determinism():
    mesh = shapes.icosphere(3)
    a = poisson_disk_contacts(mesh, 100, seed=7)
    b = poisson_disk_contacts(mesh, 100, seed=7)
    P = np.array([c.position for c in a])
    assert np.array_equal(P, np.array([c.position for c in b]))
    d = np.linalg.norm(P[:, None] - P[None], axis=2) + np.eye(100) * 1e9
    assert d.min() >= 0.5 * np.sqrt(mesh.total_area / 100)
    for c in a:
        # inward normal of the host triangle
        assert np.allclose(c.normal, -mesh.normals[c.triangle])
        assert abs((c.position - mesh.centroids[c.triangle]) @ mesh.normals[c.triangle]) < 1e-12


def test_cube_corner_solid_angle():
    cube = shapes.box((1, 1, 1), 2, normalize=False)
    corner = int(np.argmax(cube.vertices @ np.ones(3)))
    assert solid_angle(cube, corner) == pytest.approx(np.pi / 2, abs=1e-12)
    center = int(np.argmin(np.linalg.norm(cube.vertices - [0.5, 0, 0], axis=1)))
    assert solid_angle(cube, center) == pytest.approx(2 * np.pi, abs=1e-12)


def test_gauss_bonnet():
    for mesh in (shapes.icosphere(2), shapes.asymmetric_dumbbell(3)):
        assert angle_defects(mesh).sum() == pytest.approx(4 * np.pi, abs=1e-9)
    # a convex solid has interior solid angles below a half space everywhere
    phi = solid_angles(shapes.icosphere(2))
    assert np.all((phi > 0) & (phi < 2 * np.pi))


def test_mesh_roundtrip_through_files(tmp_path):
    v, f = shapes.icosphere_arrays(1)
    write_obj(tmp_path / "s.obj", v, f)
    write_off(tmp_path / "s.off", v, f)
    a = load_mesh(tmp_path / "s.obj")
    b = load_mesh(tmp_path / "s.off")
    assert a.content_hash() == b.content_hash()
    assert np.allclose(a.vertices, shapes.icosphere(1).vertices)


def test_contact_json_roundtrip():
    mesh = shapes.icosphere(1)
    cs = poisson_disk_contacts(mesh, 5, seed=1)
    back = contacts_from_json(contacts_to_json(cs), mesh)
    for a, b in zip(cs, back):
        assert np.allclose(a.position, b.position) and a.triangle == b.triangle
    with pytest.raises(ParseError):
        contacts_from_json('[{"position": [0, 0], "normal": [1, 0, 0], "triangle": 0}]')


def test_closest_contact_lands_on_surface():
    mesh = shapes.icosphere(2)
    c = closest_contact(mesh, [2.0, 0.0, 0.0])
    assert c.position[0] == pytest.approx(mesh.vertices[:, 0].max(), rel=0.02)
    assert c.normal[0] < -0.9


@settings(max_examples=25, deadline=None)
@given(
    st.tuples(*[st.floats(-10, 10) for _ in range(3)]),
    st.floats(0.1, 20.0),
)
def test_normalization_invariant_to_similarity(shift, scale):
    v, f = shapes.icosphere_arrays(1)
    base = SurfaceMesh.from_arrays(v, f)
    moved = SurfaceMesh.from_arrays(scale * v + np.array(shift), f)
    assert np.allclose(base.vertices, moved.vertices, atol=1e-9)
    assert moved.scale_factor == pytest.approx(scale * base.scale_factor)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_cross_matrix_matches_cross_product(a):
    b = np.array([0.3, -1.1, 2.0])
    assert np.allclose(cross_matrix(a) @ b, np.cross(a, b))

from __future__ import annotations

import numpy as np
import pytest

from stressgrasp import shapes
from stressgrasp.geom import compute_moments


@pytest.mark.parametrize("m", [3, 4, 6])
def test_dumbbell_is_balanced_and_valid(m):
    mesh = shapes.asymmetric_dumbbell(m, normalize=False)
    mom = compute_moments(mesh)
    assert abs(mom.centroid[0]) < 1e-9
    assert mesh.signed_volume == pytest.approx(mesh.tetra_volume, rel=1e-12)
    # mirror-symmetric in y and z
    assert abs(mom.centroid[1]) < 1e-12 and abs(mom.centroid[2]) < 1e-12


def test_thin_neck_has_half_the_section_area():
    half, x_min, x_max, bounds = shapes.dumbbell_profile()
    xs = np.linspace(x_min, x_max, 2001)
    h = np.array([half(x) for x in xs])
    thick = h[xs > 0].min()
    thin = h[xs < 0].min()
    assert (thin / thick) ** 2 == pytest.approx(0.5, rel=1e-9)


def test_dumbbell_refinement_grows_triangle_count():
    counts = [shapes.asymmetric_dumbbell(m).n_triangles for m in (3, 4, 6)]
    assert counts == sorted(counts) and len(set(counts)) == 3


def test_box_and_icosphere_counts():
    assert shapes.icosphere(2).n_triangles == 320
    assert shapes.box((1, 1, 1), 3).n_triangles == 6 * 9 * 2

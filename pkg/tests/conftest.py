from __future__ import annotations

import numpy as np
import pytest

from stressgrasp import shapes
from stressgrasp.bem import MaterialParams, assemble_system, build_stress_maps
from stressgrasp.geom import compute_moments, poisson_disk_contacts
from stressgrasp.metrics import MetricProblem


@pytest.fixture(scope="session")
def material():
    return MaterialParams.from_engineering(0.33, 1.0, 1.0)


@pytest.fixture(scope="session")
def small_sphere(material):
    """Coarse icosphere (K=80) with 8 candidates, its BEM system and maps."""
    mesh = shapes.icosphere(1)
    contacts = poisson_disk_contacts(mesh, 8, seed=0)
    system = assemble_system(mesh, material, contacts, keep_matrix=True, contact_radius=0.04)
    maps = build_stress_maps(system)
    return {
        "mesh": mesh,
        "contacts": contacts,
        "system": system,
        "maps": maps,
        "moments": compute_moments(mesh),
        "material": material,
    }


@pytest.fixture(scope="session")
def sphere_system(material):
    """Level-2 icosphere system without contacts (K=320)."""
    mesh = shapes.icosphere(2)
    return assemble_system(mesh, material, (), keep_matrix=True)


@pytest.fixture
def qsm_problem(small_sphere):
    s = small_sphere
    return MetricProblem("qsm", s["contacts"], s["moments"], material=s["material"], stress_maps=s["maps"])


@pytest.fixture
def q1_problem(small_sphere):
    s = small_sphere
    return MetricProblem("q1", s["contacts"], s["moments"])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stressgrasp import shapes
from stressgrasp.acceptance import manufactured_error
from stressgrasp.bem import (
    MaterialParams,
    assemble_system,
    build_stress_maps,
    contact_patch,
    kelvin_solution,
    recover_all_stresses,
    recover_stress,
    recovery_operators,
    rigid_modes,
    solve_displacements,
    tangential_operator,
    traction_kernel,
)
from stressgrasp.errors import NonEquilibrium, ZeroRadius
from stressgrasp.wrench import WrenchToBodyForce, wrench_of_contacts

unit3 = st.lists(st.floats(-1, 1), min_size=3, max_size=3).map(np.array).filter(lambda v: np.linalg.norm(v) > 0.1)


def test_material_from_engineering():
    m = MaterialParams.from_engineering(0.33, 1.0, 2.0)
    assert m.mu == pytest.approx(1 / (2 * 1.33))
    assert m.lam == pytest.approx(0.33 / (1.33 * (1 - 0.66)))
    assert m.nu == pytest.approx(0.33)
    assert m.E == pytest.approx(1.0)
    with pytest.raises(ValueError):
        MaterialParams.from_engineering(0.5)


def test_kelvin_axis_ratio(material):
    U = kelvin_solution([0.7, 0, 0], material)
    assert np.allclose(U, np.diag(np.diag(U)))
    assert U[0, 0] / U[1, 1] == pytest.approx(2.68 / 1.68, rel=1e-12)
    assert U[1, 1] == pytest.approx(U[2, 2])


@settings(max_examples=30, deadline=None)
@given(unit3)
def test_kelvin_parity_and_homogeneity(r):
    m = MaterialParams.from_engineering()
    U = kelvin_solution(r, m)
    assert np.allclose(U, U.T)
    assert np.allclose(U, kelvin_solution(-r, m))
    assert np.allclose(kelvin_solution(2 * r, m), U / 2)


def test_kernels_reject_zero_radius(material):
    with pytest.raises(ZeroRadius):
        kelvin_solution(np.zeros(3), material)
    with pytest.raises(ZeroRadius):
        traction_kernel(np.zeros(3), [0, 0, 1.0], material)


@settings(max_examples=30, deadline=None)
@given(unit3, unit3)
def test_traction_kernel_decay_and_tangential_skew(r, n):
    m = MaterialParams.from_engineering()
    n = n / np.linalg.norm(n)
    T1 = traction_kernel(r, n, m)
    T2 = traction_kernel(2 * r, n, m)
    assert np.all(np.isfinite(T1))
    assert np.allclose(T2, T1 / 4, rtol=1e-10, atol=1e-14)
    M = tangential_operator(r, n)
    assert np.allclose(M + M.T, 0.0)


def test_flat_vertex_has_half_free_term(material):
    cube = shapes.box((1, 1, 1), 2)
    system = assemble_system(cube, material, keep_matrix=True)
    center = int(np.argmin(np.linalg.norm(cube.vertices - [cube.vertices[:, 0].max(), 0, 0], axis=1)))
    assert system.C_diag[center] == pytest.approx(0.5, abs=1e-12)
    corner = int(np.argmax(cube.vertices @ np.ones(3)))
    assert system.C_diag[corner] == pytest.approx(1 / 8, abs=1e-12)


def test_rigid_motions_annihilated(sphere_system):
    DC = sphere_system.DC
    norm = np.linalg.norm(DC, 2)
    Phi = rigid_modes(sphere_system.mesh.vertices)
    for k in range(3):
        u = Phi[:, k]
        assert np.linalg.norm(DC @ u) <= 1e-6 * norm * np.linalg.norm(u)


def test_rigid_constraints_span_rigid_modes(sphere_system):
    R = sphere_system.rigid_constraints
    Phi = rigid_modes(sphere_system.mesh.vertices)
    assert np.linalg.matrix_rank(R) == 6
    assert np.linalg.matrix_rank(np.vstack([R, Phi.T])) == 6
    assert sphere_system.rcond > 1e-12


def test_zero_loads_give_zero_displacement(small_sphere):
    u = solve_displacements(small_sphere["system"], None, None)
    assert np.allclose(u, 0.0)


def test_manufactured_solution_error():
    err, K = manufactured_error(2)
    assert K == 320
    assert err < 0.05


def random_equilibrium(s, rng):
    conv = WrenchToBodyForce(s["moments"])
    F = rng.normal(size=(len(s["contacts"]), 3))
    w = -wrench_of_contacts(F, s["contacts"])
    # body force must cancel the contact wrench: its own wrench is -(contact wrench sum)
    g = conv(-w)
    return g, F


def test_solution_is_linear_and_rigid_free(small_sphere):
    s = small_sphere
    rng = np.random.default_rng(3)
    g, F = random_equilibrium(s, rng)
    system = s["system"]
    u = solve_displacements(system, g, F, s["moments"])
    u2 = solve_displacements(system, type(g)(2.5 * g.g0, 2.5 * g.grad_g), 2.5 * F, s["moments"])
    assert np.allclose(u2, 2.5 * u, rtol=1e-12, atol=1e-14)
    assert np.allclose(system.rigid_constraints @ u, 0.0, atol=1e-10)


def test_non_equilibrium_rejected(small_sphere):
    s = small_sphere
    F = np.zeros((len(s["contacts"]), 3))
    F[0] = [1.0, 0, 0]
    with pytest.raises(NonEquilibrium):
        solve_displacements(s["system"], None, F, s["moments"])


def test_recovered_stress_of_rigid_motion_vanishes(small_sphere, material):
    mesh = small_sphere["mesh"]
    Phi = rigid_modes(mesh.vertices)
    rng = np.random.default_rng(0)
    u = Phi @ rng.normal(size=6)
    S = recover_all_stresses(mesh, u, np.zeros((0, 3)), material)
    assert np.abs(S).max() < 1e-8


def test_uniaxial_stretch_recovers_constitutive_law(material):
    mesh = shapes.icosphere(1)
    eps = 1e-3
    u = np.zeros_like(mesh.vertices)
    u[:, 0] = eps * mesh.vertices[:, 0]
    sigma = np.diag([2 * material.mu + material.lam, material.lam, material.lam]) * eps
    Nj, Mj = recovery_operators(mesh, material)
    t = mesh.normals @ sigma  # traction consistent with the uniform field
    S = np.einsum("kab,kb->ka", Nj, u[mesh.triangles].reshape(-1, 9)) + np.einsum("kab,kb->ka", Mj, t)
    assert np.allclose(S.reshape(-1, 3, 3), sigma, atol=1e-14)


def test_recover_stress_single_triangle_matches_batch(small_sphere):
    s = small_sphere
    rng = np.random.default_rng(4)
    g, F = random_equilibrium(s, rng)
    u = solve_displacements(s["system"], g, F, s["moments"])
    S = recover_all_stresses(s["mesh"], u, F, s["material"], s["contacts"], 0.04)
    host = s["contacts"][0].triangle
    for j in (0, 17, host):
        Sj = recover_stress(s["mesh"], u, F, s["material"], j, s["contacts"], 0.04)
        assert np.allclose(Sj, S[j], atol=1e-12)
        assert np.allclose(Sj, Sj.T, atol=1e-10)


def test_stress_maps_unroll_the_solve(small_sphere):
    s = small_sphere
    rng = np.random.default_rng(5)
    for _ in range(3):
        g, F = random_equilibrium(s, rng)
        u = solve_displacements(s["system"], g, F, s["moments"])
        direct = recover_all_stresses(s["mesh"], u, F, s["material"], s["contacts"], 0.04)
        mapped = s["maps"].stresses(g.params, F)
        assert np.allclose(mapped, direct, atol=1e-9 * max(1, np.abs(direct).max()))
        assert np.allclose(mapped, np.swapaxes(mapped, 1, 2), atol=1e-8 * np.abs(mapped).max())
    assert np.allclose(s["maps"].stresses(np.zeros(12), np.zeros_like(F)), 0.0)


def test_stress_maps_superpose(small_sphere):
    maps = small_sphere["maps"]
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=12), rng.normal(size=12)
    fa, fb = rng.normal(size=maps.B_cal.shape[1]), rng.normal(size=maps.B_cal.shape[1])
    lhs = maps.stresses(a + 2 * b, fa + 2 * fb)
    rhs = maps.stresses(a, fa) + 2 * maps.stresses(b, fb)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(lhs).max())


def test_stress_maps_ignore_sigma_max(small_sphere, material):
    s = small_sphere
    sys2 = assemble_system(s["mesh"], material.scaled(sigma=2.0), s["contacts"], contact_radius=0.04)
    maps2 = build_stress_maps(sys2)
    assert np.array_equal(maps2.A_cal, s["maps"].A_cal)
    assert np.array_equal(maps2.B_cal, s["maps"].B_cal)


def test_contact_patch_selection(small_sphere):
    mesh = small_sphere["mesh"]
    c = small_sphere["contacts"][0]
    single = contact_patch(mesh, c, 0.0)
    assert list(single.triangles) == [c.triangle]
    wide = contact_patch(mesh, c, 0.3)
    assert c.triangle in wide.triangles and len(wide.triangles) > 1
    assert wide.area == pytest.approx(mesh.areas[wide.triangles].sum())

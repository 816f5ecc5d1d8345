from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stressgrasp import shapes
from stressgrasp.errors import LengthMismatch, NonUnitNormal, NotSymmetric
from stressgrasp.geom import compute_moments
from stressgrasp.wrench import (
    BodyForceField,
    WrenchToBodyForce,
    body_force_from_wrench,
    body_force_wrench,
    friction_residual,
    metric_sqrt,
    tangent_basis,
    wrench_map,
    wrench_of_contacts,
)

vec3 = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array)


def test_force_at_origin():
    w = wrench_of_contacts([[0, 0, 1]], [np.zeros(3)])
    assert np.allclose(w, [0, 0, -1, 0, 0, 0])


def test_force_with_lever_arm():
    w = wrench_of_contacts([[0, 0, 1]], [np.array([1.0, 0, 0])])
    assert np.allclose(w, [0, 0, -1, 0, 1, 0])


def test_opposed_forces_cancel():
    x = np.array([0.3, 0.1, -0.2])
    f = np.array([0.5, -1.0, 2.0])
    assert np.allclose(wrench_of_contacts([f, -f], [x, x]), 0.0)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        wrench_of_contacts([[0, 0, 1]], [np.zeros(3), np.ones(3)])


def test_wrench_map_agrees_with_sum():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 3))
    F = rng.normal(size=(4, 3))
    assert np.allclose(wrench_map(X) @ F.ravel(), wrench_of_contacts(F, list(X)))


def test_friction_residual_examples():
    n = np.array([0.0, 0.0, 1.0])
    assert friction_residual(n, n, 0.5) == pytest.approx(-0.5)
    assert friction_residual([1, 0, 0], n, 0.5) == pytest.approx(1.0)
    assert friction_residual([0.5, 0, 1], n, 0.5) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(NonUnitNormal):
        friction_residual(n, 2 * n, 0.5)


@settings(max_examples=50, deadline=None)
@given(vec3, st.floats(0.01, 100.0))
def test_friction_residual_positively_homogeneous(f, a):
    n = np.array([0.6, 0.0, 0.8])
    assert friction_residual(a * f, n, 0.4) == pytest.approx(a * friction_residual(f, n, 0.4), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(vec3.filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_tangent_basis_is_orthonormal_frame(v):
    n = v / np.linalg.norm(v)
    t1, t2 = tangent_basis(n)
    F = np.array([t1, t2, n])
    assert np.allclose(F @ F.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(F) == pytest.approx(1.0)


def test_cube_pure_force_gives_uniform_field():
    cube = shapes.box((1, 1, 1), 1, normalize=False)
    g = body_force_from_wrench([2.0, 0, 0, 0, 0, 0], compute_moments(cube))
    assert np.allclose(g.g0, [2.0, 0, 0])
    assert np.allclose(g.grad_g, 0.0, atol=1e-14)


def test_cube_torque_field_is_rotational():
    cube = shapes.box((1, 1, 1), 1, normalize=False)
    tau = np.array([0.3, -0.2, 0.5])
    g = body_force_from_wrench(np.r_[np.zeros(3), tau], compute_moments(cube))
    # for the centered unit cube the minimal field is 6 [tau]x x
    assert np.allclose(g.grad_g, 6 * np.array([[0, -tau[2], tau[1]], [tau[2], 0, -tau[0]], [-tau[1], tau[0], 0]]))


@pytest.mark.parametrize("mesh", [shapes.icosphere(2), shapes.box((1, 0.6, 0.4), 3), shapes.asymmetric_dumbbell(3)])
def test_body_force_reproduces_wrench(mesh):
    mom = compute_moments(mesh)
    conv = WrenchToBodyForce(mom)
    rng = np.random.default_rng(5)
    for _ in range(10):
        w = rng.normal(size=6)
        assert np.allclose(body_force_wrench(conv(w), mesh), w, atol=1e-10 * (1 + np.abs(w).max()))


def test_body_force_is_least_squares_stationary():
    """The field is the minimum-norm one: perturbing it along a wrench-free
    direction can only increase its L2 norm."""
    mesh = shapes.asymmetric_dumbbell(3)
    mom = compute_moments(mesh)
    conv = WrenchToBodyForce(mom)
    w = np.array([0.2, -0.4, 0.1, 0.3, 0.05, -0.2])
    p = conv.G @ w
    # Gram matrix of the parameterization g = [I, x1 I, x2 I, x3 I] p
    V, c, S = mom.volume, mom.first_moment, mom.second_moment
    Gram = np.zeros((12, 12))
    Gram[:3, :3] = V * np.eye(3)
    for k in range(3):
        Gram[:3, 3 + 3 * k : 6 + 3 * k] = c[k] * np.eye(3)
        Gram[3 + 3 * k : 6 + 3 * k, :3] = c[k] * np.eye(3)
        for m in range(3):
            Gram[3 + 3 * k : 6 + 3 * k, 3 + 3 * m : 6 + 3 * m] = S[k, m] * np.eye(3)
    J = np.array([body_force_wrench(BodyForceField.from_params(e), mesh) for e in np.eye(12)]).T
    _, s, Vt = np.linalg.svd(J)
    null = Vt[6:]
    assert np.allclose(null @ Gram @ p, 0.0, atol=1e-10)


def test_body_force_params_roundtrip():
    p = np.arange(12.0)
    g = BodyForceField.from_params(p)
    assert np.allclose(g.params, p)
    x = np.array([0.1, 0.2, 0.3])
    assert np.allclose(g(x), g.g0 + g.grad_g @ x)


def test_metric_sqrt_examples():
    W = np.diag([1, 1, 1, 0.01, 0.01, 0.01])
    assert np.allclose(metric_sqrt(W).sqrtW, np.diag([1, 1, 1, 0.1, 0.1, 0.1]))
    assert np.allclose(metric_sqrt(4 * np.eye(6)).sqrtW, 2 * np.eye(6))
    bad = np.eye(6)
    bad[0, 1] = 0.5
    with pytest.raises(NotSymmetric):
        metric_sqrt(bad)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metric_sqrt_squares_back(seed):
    A = np.random.default_rng(seed).normal(size=(6, 6))
    W = A @ A.T
    R = metric_sqrt(W).sqrtW
    assert np.allclose(R, R.T)
    assert np.allclose(R @ R, W, atol=1e-9 * np.abs(W).max())

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stressgrasp.acceptance import closure_grasp
from stressgrasp.geom import ContactPoint
from stressgrasp.metrics import (
    MetricProblem,
    direction_set,
    ensure_seed_set,
    force_closure_lp,
    most_violated,
    preselect_active_set,
    progressive_support,
    project_friction_cones,
    q_lower_bound,
    q_upper_bound,
    support_point,
    worker_count,
)
from stressgrasp.wrench import friction_residual


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@pytest.fixture
def grasp(small_sphere):
    return closure_grasp(small_sphere["contacts"], 0.5)


def test_no_contacts_gives_zero(qsm_problem, q1_problem):
    for P in (qsm_problem.restrict([]), q1_problem.restrict([])):
        assert support_point(P, unit(np.ones(6))).objective == 0.0
        rep = q_lower_bound(P)
        assert rep.Q == 0.0 and rep.no_force_closure
        assert q_upper_bound(P, 12).Q == 0.0


def test_most_violated_examples():
    S = np.array([np.diag([0.5] * 3), np.diag([1.5] * 3), np.diag([1.2] * 3)])
    assert most_violated(S, ()) == (1, 1.5)
    j, v = most_violated(S, (1,))
    assert (j, v) == (2, 1.2)
    small = S * 0.5
    assert most_violated(small, ())[1] < 1.0
    T = np.zeros((12, 3, 3))
    T[4] = T[9] = -2 * np.eye(3)
    assert most_violated(T, ())[0] == 4
    assert most_violated(S, (0, 1, 2)) == (None, 0.0)


def test_support_scales_with_sigma_max(qsm_problem, grasp):
    P = qsm_problem.restrict(grasp)
    P2 = MetricProblem("qsm", P.contacts, P.moments, material=P.material.scaled(sigma=2.0), stress_maps=P.stress_maps, active=P.active)
    d = unit([1, -2, 0.5, 0.3, 0, 1])
    S = tuple(range(0, 80, 4))
    a = support_point(P, d, S).objective
    b = support_point(P2, d, S).objective
    assert b == pytest.approx(2 * a, rel=1e-7)


def test_q1_support_single_contact_by_sampling():
    n = unit([0.2, -0.5, 0.8])
    c = ContactPoint(np.zeros(3), n, 0)
    from stressgrasp import shapes
    from stressgrasp.geom import compute_moments

    P = MetricProblem("q1", [c], compute_moments(shapes.icosphere(1)))
    d = np.r_[-n, 0, 0, 0]
    assert support_point(P, d).objective == pytest.approx(1.0)
    # generic direction: brute-force over unit forces on the cone boundary and axis
    d = unit([0.3, 0.9, -0.2, 0.4, -0.1, 0.2])
    val = support_point(P, d).objective
    rng = np.random.default_rng(0)
    theta = P.friction.theta
    from stressgrasp.wrench import tangent_basis

    t1, t2 = tangent_basis(n)
    a = rng.uniform(0, 2 * np.pi, 200000)
    s = rng.uniform(0, 1, 200000) ** 0.5 * theta
    F = n + s[:, None] * (np.cos(a)[:, None] * t1 + np.sin(a)[:, None] * t2)
    F /= np.linalg.norm(F, axis=1)[:, None]
    best = max(0.0, float(np.max(F @ (P.H.T @ d))))
    assert best <= val + 1e-12
    assert val == pytest.approx(best, abs=1e-4)


def test_q1_closed_form_matches_conic_route(q1_problem):
    P = q1_problem.restrict([0, 2, 5, 7])
    rng = np.random.default_rng(2)
    for _ in range(10):
        d = unit(rng.normal(size=6))
        a = support_point(P, d, analytic=True)
        b = support_point(P, d, analytic=False)
        assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-9)
        assert np.linalg.norm(a.forces) <= 1 + 1e-12
        for f, ct in zip(a.forces, P.active_contacts):
            assert friction_residual(f, ct.normal, 0.5) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cone_projection_is_a_projection(seed):
    rng = np.random.default_rng(seed)
    n = rng.normal(size=(3, 3))
    n /= np.linalg.norm(n, axis=1)[:, None]
    c = rng.normal(size=9)
    p = project_friction_cones(c, n, 0.5)
    assert np.allclose(project_friction_cones(p, n, 0.5), p)
    for f, nn in zip(p.reshape(3, 3), n):
        assert friction_residual(f, nn, 0.5) <= 1e-12
    # projection residual is orthogonal to the projection
    assert abs((c - p.ravel()) @ p.ravel()) < 1e-10


def test_progressive_equals_full_solve(qsm_problem, grasp):
    P = qsm_problem.restrict(grasp)
    full = tuple(range(P.n_triangles))
    rng = np.random.default_rng(3)
    for _ in range(4):
        d = unit(rng.normal(size=6))
        a = progressive_support(P, d, seed_set=())
        b = support_point(P, d, full)
        assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-6 * (1 + abs(b.objective)))
        assert a.active_set_size <= P.n_triangles
    c = progressive_support(P, d, seed_set=full)
    assert c.objective == pytest.approx(b.objective, rel=1e-9)
    assert c.solves == 1


def test_preselect_is_deterministic(qsm_problem):
    a = preselect_active_set(qsm_problem, S_count=3, size=10, seed=4)
    b = preselect_active_set(qsm_problem, S_count=3, size=10, seed=4)
    assert a == b and len(a) == 10
    assert all(0 <= j < qsm_problem.n_triangles for j in a)


def test_direction_set_nested_and_unit():
    A = direction_set(64)
    B = direction_set(128)
    assert np.allclose(B[:64], A)
    assert np.allclose(np.linalg.norm(B, axis=1), 1.0)
    assert np.allclose(B[:12], np.vstack([np.eye(6), -np.eye(6)]))


def test_upper_bound_nonincreasing_in_D(q1_problem, grasp):
    P = q1_problem.restrict(grasp)
    vals = [q_upper_bound(P, D).Q for D in (12, 32, 128, 512)]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("kind", ["q1", "qsm"])
def test_lower_bound_sandwich_and_monotone(kind, qsm_problem, q1_problem, grasp):
    P = (qsm_problem if kind == "qsm" else q1_problem).restrict(grasp)
    ensure_seed_set(P, S_count=4, size=32)
    low = q_lower_bound(P)
    up = q_upper_bound(P, 256)
    assert low.Q > 0 and low.converged and not low.no_force_closure
    assert low.Q <= up.Q + 1e-8
    assert low.Q <= low.upper + 1e-12
    L = [t[1] for t in low.trace]
    assert all(b >= a - 1e-12 for a, b in zip(L, L[1:]))
    assert force_closure_lp(P.active_contacts, P.friction.theta)
    d = low.to_dict()
    assert set(d) >= {"Q", "kind", "iterations", "support_calls", "active_set_size", "converged", "wall_time"}


def test_q1_lower_bound_matches_support_minimum(q1_problem, grasp):
    """The inscribed radius is the minimum of the support function over unit
    directions; multi-start local minimization gives an independent value."""
    from scipy.optimize import minimize

    P = q1_problem.restrict(grasp)
    low = q_lower_bound(P)
    assert low.Q <= q_upper_bound(P, 2000).Q + 1e-12

    normals = np.array([c.normal for c in P.active_contacts])

    def h(x):
        c = P.H.T @ (x / np.linalg.norm(x))
        return np.linalg.norm(project_friction_cones(c, normals, 0.5))

    pool = direction_set(400)
    starts = pool[np.argsort([h(x) for x in pool])[:8]]
    best = min(minimize(h, x0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000}).fun for x0 in starts)
    assert low.Q <= best + 1e-9
    assert low.Q == pytest.approx(best, rel=2e-3)


@pytest.mark.parametrize("kind", ["q1", "qsm"])
def test_two_contacts_cannot_resist_all_wrenches(kind, small_sphere, qsm_problem, q1_problem):
    """Two point contacts leave the torque about their common axis
    unresisted, so the metric is zero even for an antipodal pair."""
    P = qsm_problem if kind == "qsm" else q1_problem
    X = np.array([c.position for c in small_sphere["contacts"]])
    i, j = np.unravel_index(np.argmax(np.linalg.norm(X[:, None] - X[None], axis=2)), (8, 8))
    rep = q_lower_bound(P.restrict([i, j]))
    assert rep.Q == 0.0 and rep.no_force_closure
    assert not force_closure_lp([P.contacts[i], P.contacts[j]], 0.5)


def test_qsm_homogeneous_in_sigma_max(qsm_problem, grasp):
    P = qsm_problem.restrict(grasp)
    ensure_seed_set(P, S_count=4, size=32)
    q = q_lower_bound(P, eps=1e-6).Q
    P2 = MetricProblem("qsm", P.contacts, P.moments, material=P.material.scaled(sigma=3.0), stress_maps=P.stress_maps, active=P.active, seed_set=P.seed_set)
    assert q_lower_bound(P2, eps=1e-6).Q == pytest.approx(3 * q, rel=1e-5)


def test_qsm_unchanged_by_joint_lame_scaling(small_sphere, grasp):
    """Stress under traction loads depends on the Lame parameters only
    through their ratio, so scaling both leaves the metric unchanged."""
    from stressgrasp.bem import precompute_maps

    s = small_sphere
    stiff = s["material"].scaled(stiffness=2.0)
    maps2 = precompute_maps(s["mesh"], stiff, s["contacts"], contact_radius=0.04)
    assert np.allclose(maps2.B_cal, s["maps"].B_cal, atol=1e-9 * np.abs(s["maps"].B_cal).max())
    assert np.allclose(maps2.A_cal, s["maps"].A_cal, atol=1e-9 * np.abs(s["maps"].A_cal).max())


def test_worker_count_reads_environment(monkeypatch):
    monkeypatch.setenv("FG_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("FG_THREADS", "bogus")
    assert worker_count() == 1
    monkeypatch.delenv("FG_THREADS")
    assert worker_count() == 1


def test_threaded_bounds_agree(q1_problem, grasp):
    P = q1_problem.restrict(grasp)
    assert q_upper_bound(P, 64, workers=3).Q == q_upper_bound(P, 64, workers=1).Q


def test_problem_validation(small_sphere):
    s = small_sphere
    with pytest.raises(ValueError):
        MetricProblem("qsm", s["contacts"], s["moments"])
    with pytest.raises(ValueError):
        MetricProblem("bogus", s["contacts"], s["moments"])
    with pytest.raises(IndexError):
        MetricProblem("q1", s["contacts"], s["moments"], active=(99,))

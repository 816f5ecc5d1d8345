from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stressgrasp import shapes
from stressgrasp.errors import TooLarge
from stressgrasp.geom import compute_moments, poisson_disk_contacts
from stressgrasp.metrics import MetricProblem
from stressgrasp.planner import (
    SubsetEvaluator,
    branch_and_bound,
    build_kdtree,
    exhaustive_plan,
    order_feasible,
    order_valid,
    relaxation_bound,
)


def q1_case(N, seed=0, level=1):
    mesh = shapes.icosphere(level)
    contacts = poisson_disk_contacts(mesh, N, seed=seed)
    return MetricProblem("q1", contacts, compute_moments(mesh))


def depth(node):
    return 0 if node.is_leaf else 1 + max(depth(node.left), depth(node.right))


def test_kdtree_single_point():
    tree = build_kdtree([[0.1, 0.2, 0.3]])
    assert tree.root.is_leaf and tree.root.size == 1
    assert list(tree.perm) == [0]


def test_kdtree_collinear_points_in_order():
    xs = np.array([5.0, 1.0, 7.0, 3.0, 0.0, 6.0, 2.0, 4.0])
    P = np.c_[xs, np.zeros(8), np.zeros(8)]
    tree = build_kdtree(P)
    assert depth(tree.root) == 3
    assert list(xs[tree.perm]) == sorted(xs)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 100), st.integers(0, 1000))
def test_kdtree_structure(N, seed):
    P = np.random.default_rng(seed).normal(size=(N, 3))
    tree = build_kdtree(P)
    nodes = tree.nodes()
    assert len(nodes) == 2 * N - 1
    assert depth(tree.root) <= int(np.ceil(np.log2(N))) + 1
    assert sorted(tree.perm) == list(range(N))
    for n in nodes:
        if n.is_leaf:
            assert n.size == 1
        else:
            assert (n.left.lo, n.left.hi, n.right.lo, n.right.hi) == (n.lo, n.left.hi, n.left.hi, n.hi)


def test_order_filters():
    assert order_valid([(0, 4), (0, 4)])
    assert not order_valid([(4, 8), (0, 4)])
    assert order_feasible([(0, 2), (1, 2)])
    assert not order_feasible([(1, 2), (1, 2)])


def test_relaxation_bound_corner_cases():
    P = q1_case(8)
    ev = SubsetEvaluator(P)
    tree = build_kdtree([c.position for c in P.contacts])
    leaf = next(n for n in tree.nodes() if n.is_leaf)
    # the same contact in every slot: one contact cannot resist all wrenches
    assert relaxation_bound(ev, tree, (leaf,) * 3) == 0.0
    assert relaxation_bound(ev, tree, (tree.root,) * 3) == pytest.approx(ev.bound(range(8)))


def test_bounds_are_monotone_and_admissible():
    P = q1_case(8, seed=1)
    ev = SubsetEvaluator(P)
    tree = build_kdtree([c.position for c in P.contacts])
    values = {s: ev.value(s).Q for s in combinations(range(8), 3)}
    for node in tree.nodes():
        if node.is_leaf:
            continue
        for other in (tree.root, node):
            b = relaxation_bound(ev, tree, (node, other))
            for child in (node.left, node.right):
                assert relaxation_bound(ev, tree, (child, other)) <= b + 1e-12
            union = set(tree.contacts_in(node)) | set(tree.contacts_in(other))
            best = max([q for s, q in values.items() if set(s) <= union], default=0.0)
            assert b >= best - 1e-12


def test_all_candidates_selected():
    P = q1_case(4)
    plan = branch_and_bound(P, 4)
    assert plan.selection == (0, 1, 2, 3) and plan.optimal


@pytest.mark.parametrize("C", [2, 3, 4])
def test_matches_exhaustive_on_eight_candidates(C):
    P = q1_case(8, seed=3)
    plan = branch_and_bound(P, C)
    ref = exhaustive_plan(P, C)
    assert plan.selection == ref.selection
    assert plan.Q == pytest.approx(ref.Q, abs=1e-6)
    assert plan.optimal
    assert len(set(plan.selection)) == C
    if C == 2:
        assert ref.Q == 0.0  # pairs never reach force closure


def test_exhaustive_counts_and_limits():
    P = q1_case(6)
    ev = SubsetEvaluator(P)
    exhaustive_plan(P, 2, evaluator=ev)
    assert ev.value_calls == 15
    assert exhaustive_plan(q1_case(3), 3).selection == (0, 1, 2)
    with pytest.raises(TooLarge):
        exhaustive_plan(q1_case(30, level=2), 5)


def test_budget_exhaustion_is_reported():
    P = q1_case(10, seed=2)
    plan = branch_and_bound(P, 3, budget=1)
    assert not plan.optimal
    assert plan.upper >= plan.Q
    assert len(set(plan.selection)) == 3


def test_plan_json_fields():
    plan = branch_and_bound(q1_case(6), 3)
    d = plan.to_dict()
    assert {"indices", "Q", "kind", "nodes_expanded", "nodes_pruned", "certified"} <= set(d)
    assert d["indices"] == sorted(d["indices"])


def test_bad_selection_size():
    with pytest.raises(ValueError):
        branch_and_bound(q1_case(4), 5)
    with pytest.raises(ValueError):
        exhaustive_plan(q1_case(4), 0)


def test_qsm_plan_matches_exhaustive(small_sphere):
    s = small_sphere
    idx = [0, 1, 2, 3, 4, 5]
    contacts = [s["contacts"][i] for i in idx]
    B = s["maps"].B_cal[:, :18]
    from stressgrasp.bem import StressMaps
    from stressgrasp.metrics import ensure_seed_set

    P = MetricProblem("qsm", contacts, s["moments"], material=s["material"], stress_maps=StressMaps(s["maps"].A_cal, B))
    ensure_seed_set(P, S_count=4, size=32)
    plan = branch_and_bound(P, 4)
    ref = exhaustive_plan(P, 4)
    assert plan.selection == ref.selection
    assert plan.Q == pytest.approx(ref.Q, abs=1e-6)

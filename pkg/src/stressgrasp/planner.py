"""Contact selection by branch-and-bound over a KD-tree of candidates.

A branch is a tuple of C tree nodes; it stands for every sorted selection
j_1 < ... < j_C of leaf positions with j_k inside node k. Since adding
contacts can only enlarge the resistible wrench set, the metric of the union
of all contacts in a branch bounds the metric of every selection in it.
"""
from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import TooLarge
from .metrics import MetricProblem, MetricReport, q_lower_bound, q_upper_bound

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# KD-tree


@dataclass
class KdNode:
    lo: int  # range [lo, hi) in the leaf permutation
    hi: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    depth: int
    left: "KdNode | None" = None
    right: "KdNode | None" = None

    @property
    def size(self) -> int:
        return self.hi - self.lo

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class KdTree:
    root: KdNode
    perm: np.ndarray  # leaf position -> contact index

    def contacts_in(self, node: KdNode) -> np.ndarray:
        return self.perm[node.lo : node.hi]

    def nodes(self) -> list[KdNode]:
        out, stack = [], [self.root]
        while stack:
            n = stack.pop()
            out.append(n)
            if not n.is_leaf:
                stack += [n.right, n.left]
        return out


def build_kdtree(points) -> KdTree:
    """Median split on the axis cycling with depth; one contact per leaf.

    Ties on the split coordinate are ordered by the following axes and then
    by contact index, so the tree is deterministic.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(P) == 0:
        raise ValueError("no candidate contacts")
    perm = np.arange(len(P))

    def build(lo: int, hi: int, depth: int) -> KdNode:
        idx = perm[lo:hi]
        node = KdNode(lo, hi, P[idx].min(axis=0), P[idx].max(axis=0), depth)
        if hi - lo > 1:
            ax = depth % 3
            keys = [(P[i, ax], P[i, (ax + 1) % 3], P[i, (ax + 2) % 3], i) for i in idx]
            perm[lo:hi] = [k[-1] for k in sorted(keys)]
            mid = lo + (hi - lo + 1) // 2
            node.left = build(lo, mid, depth + 1)
            node.right = build(mid, hi, depth + 1)
        return node

    root = build(0, len(P), 0)
    return KdTree(root, perm.copy())


# --------------------------------------------------------------------------
# evaluation with memoization


class SubsetEvaluator:
    """Memoized metric values of selections and bounds of contact unions.

    Values are q_lower_bound results. Bounds must dominate the value of every
    subset of the union: the default takes the smallest support value met
    while running the lower-bound iteration on the union (method "alg2");
    "alg1" uses the sampled-direction upper bound instead. Unions whose
    contact wrenches span fewer than six dimensions get the exact bound 0.
    """

    def __init__(
        self,
        problem: MetricProblem,
        eps: float = 1e-3,
        D_bound: int = 32,
        seed: int = 0,
        max_expansions: int = 1000,
        bound_method: str = "alg2",
    ):
        if bound_method not in ("alg1", "alg2"):
            raise ValueError(f"unknown bound method {bound_method!r}")
        self.problem = problem
        self.eps = eps
        self.D_bound = D_bound
        self.seed = seed
        self.max_expansions = max_expansions
        self.bound_method = bound_method
        self.values: dict[frozenset, MetricReport] = {}
        self.bounds: dict[frozenset, float] = {}
        self.value_calls = 0
        self.bound_calls = 0

    def value(self, indices) -> MetricReport:
        key = frozenset(int(i) for i in indices)
        if key not in self.values:
            self.value_calls += 1
            self.values[key] = q_lower_bound(self.problem.restrict(key), self.eps, max_expansions=self.max_expansions)
        return self.values[key]

    def bound(self, indices) -> float:
        key = frozenset(int(i) for i in indices)
        if key not in self.bounds:
            self.bound_calls += 1
            sub = self.problem.restrict(key)
            H = sub.H
            if np.linalg.matrix_rank(H, tol=1e-9 * max(1.0, np.abs(H).max())) < 6:
                self.bounds[key] = 0.0
            elif self.bound_method == "alg1":
                self.bounds[key] = q_upper_bound(sub, self.D_bound, self.seed).upper
            else:
                rep = q_lower_bound(sub, self.eps, max_expansions=self.max_expansions, require_gap=False)
                self.bounds[key] = rep.upper
        return self.bounds[key]


def relaxation_bound(evaluator: SubsetEvaluator, tree: "KdTree", branch) -> float:
    """Bound on every selection drawn from the branch: the metric bound of the
    union of its nodes' contacts (all other forces fixed to zero)."""
    union = np.unique(np.concatenate([tree.contacts_in(n) for n in branch]))
    return evaluator.bound(union)


# --------------------------------------------------------------------------
# search


@dataclass
class Instrumentation:
    pushed: int = 0
    popped: int = 0
    bound_prunes: list = field(default_factory=list)  # (ranges, bound, incumbent)
    order_prunes: list = field(default_factory=list)  # ranges
    leaves: int = 0

    def prunes_containing(self, positions) -> dict:
        """Pruned branches that contain the sorted leaf positions."""
        pos = sorted(positions)

        def contains(ranges):
            return all(lo <= p < hi for (lo, hi), p in zip(ranges, pos))

        return {
            "order": sum(contains(r) for r in self.order_prunes),
            "bound": sum(contains(r) for r, _, _ in self.bound_prunes),
        }


@dataclass
class Plan:
    selection: tuple[int, ...]
    Q: float
    report: MetricReport | None
    optimal: bool
    upper: float
    expansions: int
    value_calls: int
    bound_calls: int
    wall_time: float
    forces: np.ndarray | None = None
    instrumentation: Instrumentation | None = None
    kind: str = ""
    pruned: int = 0

    def to_dict(self) -> dict:
        return {
            "indices": [int(i) for i in self.selection],
            "Q": float(self.Q),
            "kind": self.kind,
            "nodes_expanded": int(self.expansions),
            "nodes_pruned": int(self.pruned),
            "certified": bool(self.optimal),
            "upper": float(self.upper),
            "value_calls": int(self.value_calls),
            "bound_calls": int(self.bound_calls),
            "wall_time": float(self.wall_time),
            "forces": None if self.forces is None else np.asarray(self.forces).tolist(),
        }


def _better(q: float, sel: tuple, best_q: float, best_sel: tuple | None) -> bool:
    """Larger metric wins; ties go to the lexicographically smaller selection."""
    if best_sel is None or q > best_q:
        return True
    return q == best_q and sel < best_sel


def order_valid(ranges) -> bool:
    """Order filter: slot j may not lie entirely after slot j+1.

    A tuple is dropped when every index of slot j exceeds every index of
    slot j+1, so each sorted selection is reachable from exactly one chain
    of tuples.
    """
    return all(lo_a <= hi_b - 1 for (lo_a, _), (_, hi_b) in zip(ranges[:-1], ranges[1:]))


def order_feasible(ranges) -> bool:
    """True if some j_1 < ... < j_C exists with j_k in [lo_k, hi_k)."""
    last = -1
    for lo, hi in ranges:
        j = max(lo, last + 1)
        if j >= hi:
            return False
        last = j
    return True


def _split_slot(branch) -> int:
    return next(i for i, n in enumerate(branch) if not n.is_leaf)


def _children(branch) -> list:
    k = _split_slot(branch)
    node = branch[k]
    return [branch[:k] + (child,) + branch[k + 1 :] for child in (node.left, node.right)]


def greedy_selection(evaluator: SubsetEvaluator, tree: KdTree, C: int) -> tuple[int, ...]:
    """Descend from (root, ..., root), always into the child with the larger
    bound among those that still admit a valid selection."""
    branch = (tree.root,) * C
    while not all(n.is_leaf for n in branch):
        kids = [b for b in _children(branch) if order_feasible(tuple((n.lo, n.hi) for n in b))]
        branch = max(kids, key=lambda b: relaxation_bound(evaluator, tree, b))
    return tuple(sorted(int(tree.perm[n.lo]) for n in branch))


def branch_and_bound(
    problem: MetricProblem,
    C: int,
    budget: int = 5000,
    evaluator: SubsetEvaluator | None = None,
    eps: float = 1e-3,
    prune_slack: float = 1e-9,
    instrument: bool = False,
) -> Plan:
    """Best-first search for the C-subset of candidates with the largest metric.

    Tuples are popped by decreasing bound and split at their first non-leaf
    slot. A tuple is pruned when its bound is below the incumbent by more
    than prune_slack (relative); equal bounds are kept so ties resolve to the
    lexicographically smallest selection. `budget` caps relaxation solves.
    """
    t0 = time.perf_counter()
    N = len(problem.contacts)
    if not 1 <= C <= N:
        raise ValueError(f"cannot select {C} of {N} contacts")
    ev = evaluator or SubsetEvaluator(problem, eps)
    calls0 = ev.bound_calls
    pts = np.array([c.position for c in problem.contacts])
    tree = build_kdtree(pts)
    perm = tree.perm
    instr = Instrumentation() if instrument else None

    best_sel = greedy_selection(ev, tree, C)
    best_rep = ev.value(best_sel)
    best_q = best_rep.Q

    def cut(u: float) -> bool:
        return u < best_q - prune_slack * abs(best_q)

    heap: list = []
    counter = 0
    pruned = 0

    def push(branch) -> None:
        nonlocal counter, best_q, best_sel, best_rep, pruned
        ranges = tuple((n.lo, n.hi) for n in branch)
        if not order_valid(ranges):
            pruned += 1
            if instr is not None:
                instr.order_prunes.append(ranges)
            return
        if all(n.is_leaf for n in branch):
            pos = [n.lo for n in branch]
            if len(set(pos)) < C:
                return  # the same contact twice is not a selection
            sel = tuple(sorted(int(perm[p]) for p in pos))
            rep = ev.value(sel)
            if instr is not None:
                instr.leaves += 1
            if _better(rep.Q, sel, best_q, best_sel):
                best_q, best_sel, best_rep = rep.Q, sel, rep
            return
        u = relaxation_bound(ev, tree, branch)
        if cut(u):
            pruned += 1
            if instr is not None:
                instr.bound_prunes.append((ranges, u, best_q))
            return
        counter += 1
        heapq.heappush(heap, (-u, counter, branch))
        if instr is not None:
            instr.pushed += 1

    push((tree.root,) * C)
    expansions = 0
    while heap and ev.bound_calls - calls0 < budget:
        neg_u, _, branch = heapq.heappop(heap)
        u = -neg_u
        if cut(u):
            # the incumbent improved after this tuple was queued
            pruned += 1
            if instr is not None:
                instr.bound_prunes.append((tuple((n.lo, n.hi) for n in branch), u, best_q))
            continue
        expansions += 1
        if instr is not None:
            instr.popped += 1
        for child in _children(branch):
            push(child)
    remaining = [-h[0] for h in heap if not cut(-h[0])]
    if remaining:
        log.warning("budget of %d relaxation solves exhausted; plan not certified", budget)
    return Plan(
        selection=best_sel,
        Q=best_q,
        report=best_rep,
        optimal=not remaining,
        upper=max([best_q] + remaining),
        expansions=expansions,
        value_calls=ev.value_calls,
        bound_calls=ev.bound_calls - calls0,
        wall_time=time.perf_counter() - t0,
        forces=best_rep.forces,
        instrumentation=instr,
        kind=problem.kind,
        pruned=pruned,
    )
def exhaustive_plan(
    problem: MetricProblem,
    C: int,
    evaluator: SubsetEvaluator | None = None,
    eps: float = 1e-3,
    max_subsets: int = 10_000,
) -> Plan:
    """Evaluate every C-subset; ties go to the lexicographically smallest."""
    t0 = time.perf_counter()
    N = len(problem.contacts)
    if not 1 <= C <= N:
        raise ValueError(f"cannot select {C} of {N} contacts")
    from math import comb

    if comb(N, C) > max_subsets:
        raise TooLarge(f"{comb(N, C)} subsets exceed the limit of {max_subsets}")
    ev = evaluator or SubsetEvaluator(problem, eps)
    best_sel, best_q, best_rep = None, -np.inf, None
    count = 0
    for sel in combinations(range(N), C):
        rep = ev.value(sel)
        count += 1
        if _better(rep.Q, sel, best_q, best_sel):
            best_sel, best_q, best_rep = sel, rep.Q, rep
    return Plan(
        selection=best_sel,
        Q=best_q,
        report=best_rep,
        optimal=True,
        upper=best_q,
        expansions=count,
        value_calls=ev.value_calls,
        bound_calls=0,
        wall_time=time.perf_counter() - t0,
        forces=best_rep.forces,
        kind=problem.kind,
    )

"""Grasp metrics: the stress-bounded metric Q_SM and the classical Q1.

Both metrics are the radius of the largest origin-centered ball inside a
convex set of resistible wrenches, measured in the sqrt(W)-transformed
wrench space. The set is accessed only through its support function,
evaluated by conic programming over the contact forces:

    maximize    d^T sqrtW w
    subject to  w = H f                                 (wrench balance)
                ||(I - n n^T) f_i|| <= theta n^T f_i    (friction)
                -sigma_max I <= sigma_j(f) <= sigma_max I, j in S   (Q_SM)
                sum ||f_i||^2 <= 1                      (Q1)

The stress sigma_j(f) = (A_cal G_w H + B_cal) f is linear in the forces,
since the body force reproducing w is a fixed linear function of w. Only
the contact forces remain as variables after this substitution.
"""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog
from scipy.stats import norm as normal_dist

from .bem import MaterialParams, StressMaps
from .cone import SVEC_EYE, ConeDims, ConicProgram, solve_conic, spectral_magnitude, stacked_to_svec_matrix
from .errors import DegenerateSpan, NoProgress, SolverFailure
from .geom import ContactPoint, GeometricMoments
from .hull6 import init_hull, min_face_distance
from .wrench import FrictionModel, WrenchMetric, WrenchToBodyForce, metric_sqrt, tangent_basis, wrench_map

log = logging.getLogger(__name__)

QSM = "qsm"
Q1 = "q1"

_T6 = stacked_to_svec_matrix()


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("FG_THREADS", "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------
# problem


@dataclass
class MetricProblem:
    kind: str
    contacts: list[ContactPoint]
    moments: GeometricMoments
    friction: FrictionModel = field(default_factory=FrictionModel)
    metric: WrenchMetric = field(default_factory=lambda: metric_sqrt(np.eye(6)))
    material: MaterialParams | None = None
    stress_maps: StressMaps | None = None
    active: tuple[int, ...] | None = None
    seed_set: tuple[int, ...] | None = None
    tol: float = 1e-8
    max_iter: int = 200
    violation_tol: float = 1e-7
    analytic_q1: bool = True
    _shared: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in (QSM, Q1):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == QSM and (self.stress_maps is None or self.material is None):
            raise ValueError("QSM problems need stress maps and material")
        if self.active is None:
            self.active = tuple(range(len(self.contacts)))
        self.active = tuple(sorted(set(int(i) for i in self.active)))
        if self.active and (self.active[0] < 0 or self.active[-1] >= len(self.contacts)):
            raise IndexError("active contact index out of range")
        if self.kind == QSM and self.stress_maps.N != len(self.contacts):
            raise ValueError("stress maps and contact list disagree")

    # derived data (shared across restrictions) -------------------------------
    @property
    def Gw(self) -> np.ndarray:
        if "Gw" not in self._shared:
            self._shared["Gw"] = WrenchToBodyForce(self.moments).G
        return self._shared["Gw"]

    @property
    def A_w(self) -> np.ndarray:
        """Stress per unit wrench, (9K, 6)."""
        if "A_w" not in self._shared:
            self._shared["A_w"] = self.stress_maps.A_cal @ self.Gw
        return self._shared["A_w"]

    @property
    def n_triangles(self) -> int:
        return self.stress_maps.K if self.stress_maps is not None else 0

    def restrict(self, indices) -> "MetricProblem":
        """Same problem with only `indices` allowed to carry force."""
        key = tuple(sorted(set(int(i) for i in indices)))
        sub = replace(self, active=key, _shared=self._shared)
        sub._local = {}
        return sub

    @property
    def local(self) -> dict:
        if not hasattr(self, "_local"):
            self._local = {}
        return self._local

    @property
    def active_contacts(self) -> list[ContactPoint]:
        return [self.contacts[i] for i in self.active]

    @property
    def H(self) -> np.ndarray:
        if "H" not in self.local:
            pos = np.array([c.position for c in self.active_contacts]).reshape(-1, 3)
            self.local["H"] = wrench_map(pos) if len(pos) else np.zeros((6, 0))
        return self.local["H"]

    @property
    def stress_map(self) -> np.ndarray:
        """(9K, 3n) map from the active contact forces to stacked stresses."""
        if "S" not in self.local:
            cols = np.concatenate([np.arange(3 * i, 3 * i + 3) for i in self.active]) if self.active else np.zeros(0, int)
            self.local["S"] = self.A_w @ self.H + self.stress_maps.B_cal[:, cols]
        return self.local["S"]

    @property
    def host_triangles(self) -> tuple[int, ...]:
        return tuple(sorted({self.contacts[i].triangle for i in self.active}))

    def all_stresses(self, forces) -> np.ndarray:
        f = np.asarray(forces, dtype=float).ravel()
        return (self.stress_map @ f).reshape(-1, 3, 3)

    def wrench(self, forces) -> np.ndarray:
        return self.H @ np.asarray(forces, dtype=float).ravel()


@dataclass
class SupportResult:
    w: np.ndarray
    forces: np.ndarray  # (n_active, 3)
    objective: float
    constraint_set: tuple[int, ...]
    stresses: np.ndarray  # (|S|, 3, 3)
    status: str = "Optimal"
    iterations: int = 0
    solves: int = 1

    @property
    def active_set_size(self) -> int:
        return len(self.constraint_set)


@dataclass
class MetricReport:
    Q: float
    kind: str
    iterations: int = 0
    support_calls: int = 0
    active_set_size: int = 0
    converged: bool = True
    wall_time: float = 0.0
    upper: float | None = None
    certified_gap: float | None = None
    no_force_closure: bool = False
    trace: list = field(default_factory=list)
    forces: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "Q": float(self.Q),
            "kind": self.kind,
            "iterations": int(self.iterations),
            "support_calls": int(self.support_calls),
            "active_set_size": int(self.active_set_size),
            "converged": bool(self.converged),
            "wall_time": float(self.wall_time),
            "upper": None if self.upper is None else float(self.upper),
            "certified_gap": None if self.certified_gap is None else float(self.certified_gap),
            "no_force_closure": bool(self.no_force_closure),
        }


# --------------------------------------------------------------------------
# support oracle


def _friction_rows(problem: MetricProblem) -> np.ndarray:
    n = len(problem.active)
    theta = problem.friction.theta
    G = np.zeros((3 * n, 3 * n))
    for k, c in enumerate(problem.active_contacts):
        t1, t2 = tangent_basis(c.normal)
        # s = (theta n^T f, t1^T f, t2^T f) = -G f
        G[3 * k : 3 * k + 3, 3 * k : 3 * k + 3] = -np.array([theta * c.normal, t1, t2])
    return G


def project_friction_cones(c, normals, theta: float) -> np.ndarray:
    """Euclidean projection of each 3-block of c onto its friction cone."""
    c = np.asarray(c, dtype=float).reshape(-1, 3)
    n = np.asarray(normals, dtype=float).reshape(-1, 3)
    a = np.einsum("ij,ij->i", c, n)
    ct = c - a[:, None] * n
    b = np.linalg.norm(ct, axis=1)
    out = np.zeros_like(c)
    inside = b <= theta * a
    out[inside] = c[inside]
    mid = ~inside & (theta * b > -a)
    if np.any(mid):
        that = ct[mid] / b[mid, None]
        u = (n[mid] + theta * that) / np.sqrt(1.0 + theta**2)
        out[mid] = np.einsum("ij,ij->i", c[mid], u)[:, None] * u
    return out


def q1_support_closed_form(problem: MetricProblem, d) -> SupportResult:
    """Q1 support value by cone projection.

    Over (product of friction cones) intersected with the unit ball, c^T f is
    maximized by the normalized projection of c onto the cones, with value
    equal to the projection norm.
    """
    n = len(problem.active)
    c = problem.H.T @ (problem.metric.sqrtW @ np.asarray(d, dtype=float))
    normals = np.array([ct.normal for ct in problem.active_contacts]).reshape(-1, 3)
    p = project_friction_cones(c, normals, problem.friction.theta).ravel()
    pn = np.linalg.norm(p)
    f = p / pn if pn > 0 else np.zeros_like(p)
    w = problem.H @ f
    return SupportResult(w, f.reshape(n, 3), float(pn), (), np.zeros((0, 3, 3)), status="Optimal", iterations=0)


def support_point(problem: MetricProblem, d, constraint_set=(), analytic: bool | None = None) -> SupportResult:
    """Maximize d^T sqrtW w over the (restricted) resistible wrench set."""
    d = np.asarray(d, dtype=float)
    if problem.kind == Q1 and len(problem.active) and (problem.analytic_q1 if analytic is None else analytic):
        return q1_support_closed_form(problem, d)
    n = len(problem.active)
    S = tuple(sorted(set(int(j) for j in constraint_set))) if problem.kind == QSM else ()
    if n == 0:
        return SupportResult(np.zeros(6), np.zeros((0, 3)), 0.0, S, np.zeros((len(S), 3, 3)))
    H = problem.H
    cvec = H.T @ (problem.metric.sqrtW @ d)
    cn = np.linalg.norm(cvec)
    if cn == 0:
        return SupportResult(np.zeros(6), np.zeros((n, 3)), 0.0, S, np.zeros((len(S), 3, 3)))
    blocks = [_friction_rows(problem)]
    h = [np.zeros(3 * n)]
    q = [3] * n
    if problem.kind == QSM:
        sigma = problem.material.sigma_max
        if S:
            rows = np.concatenate([np.arange(9 * j, 9 * j + 9) for j in S])
            Sj = problem.stress_map[rows].reshape(len(S), 9, 3 * n)
            P = np.einsum("ab,jbc->jac", _T6, Sj).reshape(6 * len(S), 3 * n)
        else:
            P = np.zeros((0, 3 * n))
        # variables are f / (kappa sigma_max), so the bounds become +-I
        kappa = 1.0 / max(np.abs(P).max() if P.size else 1.0, 1e-300)
        blocks[0] = blocks[0]
        blocks += [P * kappa, -P * kappa]
        h += [np.tile(SVEC_EYE, len(S))] * 2
        dims = ConeDims(q=q, s=2 * len(S))
        scale = kappa * sigma
    else:
        Gball = np.zeros((3 * n + 1, 3 * n))
        Gball[1:] = -np.eye(3 * n)
        hb = np.zeros(3 * n + 1)
        hb[0] = 1.0
        blocks.append(Gball)
        h.append(hb)
        dims = ConeDims(q=q + [3 * n + 1])
        scale = 1.0
    G = np.vstack(blocks)
    prog = ConicProgram(c=-cvec / cn, G=G, h=np.concatenate(h), dims=dims)
    sol = solve_conic(prog, tol=problem.tol, max_iter=problem.max_iter)
    if sol.status != "Optimal":
        if sol.status == "IterLimit" and max(sol.primal_residual, sol.dual_residual, sol.gap) < 1e-6:
            log.debug("support solve accepted at IterLimit with residual %.2e", sol.gap)
        else:
            raise SolverFailure(f"support problem ended with status {sol.status}", sol)
    f = sol.x * scale
    w = H @ f
    if problem.kind == QSM and S:
        stresses = (problem.stress_map[rows] @ f).reshape(len(S), 3, 3)
    else:
        stresses = np.zeros((len(S), 3, 3))
    return SupportResult(
        w=w,
        forces=f.reshape(n, 3),
        objective=float(d @ problem.metric.sqrtW @ w),
        constraint_set=S,
        stresses=stresses,
        status=sol.status,
        iterations=sol.iterations,
    )


def most_violated(stresses, constraint_set, sigma_max: float | None = None):
    """Index and spectral magnitude of the worst stress outside the set.

    Returns (None, 0.0) when the complement is empty.
    """
    mags = spectral_magnitude(np.asarray(stresses))
    mask = np.ones(len(mags), dtype=bool)
    mask[list(constraint_set)] = False
    if not mask.any():
        return None, 0.0
    cand = np.where(mask, mags, -np.inf)
    j = int(np.argmax(cand))  # first maximum: lowest index on ties
    return j, float(mags[j])


def progressive_support(problem: MetricProblem, d, seed_set=None) -> SupportResult:
    """Support point with stress constraints added lazily (constraint generation)."""
    if problem.kind != QSM:
        return support_point(problem, d)
    seed = (problem.seed_set or problem._shared.get("seed_set")) if seed_set is None else seed_set
    S = set(seed or ()) | set(problem.host_triangles)
    K = problem.n_triangles
    limit = problem.material.sigma_max * (1.0 + problem.violation_tol)
    solves = 0
    while True:
        res = support_point(problem, d, S)
        solves += 1
        if not len(problem.active):
            res.solves = solves
            return res
        j, viol = most_violated(problem.all_stresses(res.forces), S)
        if j is None or viol <= limit:
            res.solves = solves
            return res
        S.add(j)
        if solves > 3 * K:
            raise NoProgress("constraint generation did not terminate")


def preselect_active_set(problem: MetricProblem, S_count: int = 16, size: int = 64, seed: int = 0) -> tuple[int, ...]:
    """Seed constraint set from a few random-direction progressive solves."""
    if problem.kind != QSM:
        return ()
    K = problem.n_triangles
    size = min(size, K)
    rng = np.random.default_rng(seed)
    freq = np.zeros(K)
    peak = np.zeros(K)
    sigma = problem.material.sigma_max
    for _ in range(max(1, S_count)):
        d = rng.normal(size=6)
        d /= np.linalg.norm(d)
        res = progressive_support(problem, d, seed_set=())
        mags = spectral_magnitude(problem.all_stresses(res.forces))
        peak = np.maximum(peak, mags)
        freq[mags >= sigma * (1 - 1e-4)] += 1
    order = sorted(range(K), key=lambda j: (-freq[j], -peak[j], j))
    return tuple(sorted(order[:size]))


def ensure_seed_set(problem: MetricProblem, S_count: int = 16, size: int = 64, seed: int = 0):
    if problem.kind == QSM and problem.seed_set is None:
        problem.seed_set = preselect_active_set(problem, S_count, size, seed)
    problem._shared["seed_set"] = problem.seed_set
    return problem.seed_set


# --------------------------------------------------------------------------
# bounds


def direction_set(D: int, seed: int = 0) -> np.ndarray:
    """+-axes followed by a deterministic spread of unit directions.

    The spread maps the 6-d golden-ratio (Kronecker) sequence through the
    inverse normal CDF and normalizes; `seed` offsets the sequence. Sets are
    nested in D.
    """
    axes = np.vstack([np.eye(6), -np.eye(6)])
    if D <= 12:
        return axes[:D]
    m = D - 12
    # generalized golden ratio: the root of x^7 = x + 1
    phi = 1.0
    for _ in range(60):
        phi = (1.0 + phi) ** (1.0 / 7.0)
    alpha = phi ** -np.arange(1, 7)
    k = np.arange(1 + seed, 1 + seed + m)[:, None]
    u = (0.5 + k * alpha) % 1.0
    g = normal_dist.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1)[:, None]
    return np.vstack([axes, g])


def _map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def q_upper_bound(problem: MetricProblem, D: int = 128, seed: int = 0, workers: int | None = None) -> MetricReport:
    if D < 7:
        raise ValueError("at least 7 directions are needed")
    t0 = time.perf_counter()
    if not problem.active:
        return MetricReport(0.0, problem.kind, no_force_closure=True, upper=0.0, wall_time=time.perf_counter() - t0)
    dirs = direction_set(D, seed)
    res = _map(lambda d: progressive_support(problem, d), list(dirs), workers or worker_count())
    vals = np.array([r.objective for r in res])
    U = float(max(0.0, vals.min()))
    return MetricReport(
        Q=U,
        kind=problem.kind,
        support_calls=int(sum(r.solves for r in res)),
        active_set_size=max(r.active_set_size for r in res),
        upper=U,
        wall_time=time.perf_counter() - t0,
    )


def q_lower_bound(
    problem: MetricProblem,
    eps: float = 1e-3,
    max_expansions: int = 1000,
    D_init: int = 12,
    workers: int | None = None,
    require_gap: bool = True,
) -> MetricReport:
    """Inner-polytope lower bound: grow a hull of support points toward the
    facet nearest the origin until the bound stalls.

    Stops when the last increase of the lower bound falls below eps * U,
    with U the smallest support value seen (an upper bound on Q). With
    require_gap the gap U - lower must also fall below eps * U.
    """
    t0 = time.perf_counter()
    kind = problem.kind
    if not problem.active:
        return MetricReport(0.0, kind, no_force_closure=True, upper=0.0, certified_gap=0.0, wall_time=time.perf_counter() - t0)
    if np.linalg.matrix_rank(problem.H, tol=1e-9 * max(1.0, np.abs(problem.H).max())) < 6:
        # the contact wrenches span a proper subspace; no wrench ball fits
        return MetricReport(0.0, kind, upper=0.0, certified_gap=0.0, no_force_closure=True, wall_time=time.perf_counter() - t0,
                            forces=np.zeros((len(problem.active), 3)))
    dirs = direction_set(max(12, D_init))
    res0 = _map(lambda d: progressive_support(problem, d), list(dirs), workers or worker_count())
    calls = sum(r.solves for r in res0)
    asz = max(r.active_set_size for r in res0)
    sqW = problem.metric.sqrtW
    pts = np.array([sqW @ r.w for r in res0])
    U = float(max(0.0, min(r.objective for r in res0)))
    last = res0[int(np.argmin([r.objective for r in res0]))]
    trace = []
    try:
        hull = init_hull(pts)
    except DegenerateSpan:
        # the reachable wrenches lie in a proper subspace: certify Q = 0 by
        # probing the normal directions of that subspace
        _, _, Vt = np.linalg.svd(np.vstack([pts, -pts]))
        dn = Vt[-1]
        extra = [progressive_support(problem, s * dn) for s in (1.0, -1.0)]
        calls += 2
        U = float(max(0.0, min([U] + [r.objective for r in extra])))
        return MetricReport(
            0.0, kind, iterations=0, support_calls=calls, active_set_size=asz, converged=True,
            wall_time=time.perf_counter() - t0, upper=U, certified_gap=U, no_force_closure=True,
            trace=trace, forces=last.forces,
        )
    scale = float(np.linalg.norm(pts, axis=1).max())
    L_prev = None
    converged = False
    it = 0
    no_closure = False
    L = 0.0
    while it < max_expansions:
        r, dblk = min_face_distance(hull)
        L = r
        sres = progressive_support(problem, dblk)
        calls += sres.solves
        asz = max(asz, sres.active_set_size)
        U = min(U, max(0.0, sres.objective))
        it += 1
        trace.append((it, L, sres.objective, U))
        last = sres
        if r <= 0.0:
            # origin not (yet) strictly inside: push the violated facet outward
            b = float(hull.offsets[np.argmax(hull.normals @ dblk)])
            if sres.objective <= b + hull.eps or U <= 1e-9 * scale:
                # the facet already supports the set, or the ball radius is
                # numerically zero: the origin is not interior
                no_closure = True
                converged = True
                break
            if not hull.add_point(sqW @ sres.w):
                break
            continue
        gap_ok = (U - L) < eps * U if require_gap else True
        if L_prev is not None and (L - L_prev) < eps * U and gap_ok:
            converged = True
            break
        L_prev = L
        if not hull.add_point(sqW @ sres.w):
            # the new point is within rounding of the hull: no further progress
            converged = (U - L) < eps * U
            break
    else:
        L, _ = min_face_distance(hull)
    Q = 0.0 if no_closure else max(0.0, L)
    return MetricReport(
        Q=Q,
        kind=kind,
        iterations=it,
        support_calls=calls,
        active_set_size=asz,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        upper=U,
        certified_gap=U - Q,
        no_force_closure=no_closure or Q == 0.0,
        trace=trace,
        forces=last.forces,
    )


# --------------------------------------------------------------------------
# independent force-closure check


def primitive_wrenches(contacts, theta: float, edges: int = 32) -> np.ndarray:
    """Wrenches of the edges of polyhedral cones inscribed in the friction cones."""
    out = []
    for c in contacts:
        n = np.asarray(c.normal)
        t1, t2 = tangent_basis(n)
        for k in range(edges):
            a = 2 * np.pi * k / edges
            f = n + theta * (np.cos(a) * t1 + np.sin(a) * t2)
            out.append(np.concatenate([f, np.cross(c.position, f)]))
    return np.array(out).reshape(-1, 6)


def force_closure_lp(contacts, theta: float, edges: int = 32, tol: float = 1e-9) -> bool:
    """True when the origin is strictly inside the hull of primitive wrenches.

    Solves max t s.t. sum l_k w_k = 0, sum l_k = 1, l_k >= t.
    """
    Wp = primitive_wrenches(contacts, theta, edges)
    m = len(Wp)
    if m == 0 or np.linalg.matrix_rank(Wp, tol=1e-9 * max(1.0, np.abs(Wp).max())) < 6:
        return False
    # variables (l_1..l_m, t); minimize -t
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_eq = np.zeros((7, m + 1))
    A_eq[:6, :m] = Wp.T
    A_eq[6, :m] = 1.0
    b_eq = np.zeros(7)
    b_eq[6] = 1.0
    A_ub = np.zeros((m, m + 1))
    A_ub[:, :m] = -np.eye(m)
    A_ub[:, -1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * m + [(None, None)], method="highs")
    return bool(res.status == 0 and -res.fun > tol)

"""Acceptance suite: end-to-end numerical checks of the whole pipeline.

Each check returns a CriterionResult with the measured quantities, so the
same code backs `stressgrasp selftest` and the pytest acceptance tests.
Level "fast" runs every check at the same tolerances on fewer instances
(no finest BEM level, a smaller planner grid); "full" runs everything.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import shapes
from .bem import (
    MaterialParams,
    assemble_system,
    kelvin_solution,
    precompute_maps,
    recover_all_stresses,
    recover_stress,
    rigid_modes,
    solve_displacements,
    traction_rhs,
)
from .cone import SVEC_EYE, ConeDims, ConicProgram, smat, solve_conic, spectral_magnitude, svec
from .config import RunConfig
from .geom import closest_contact, compute_moments, cross_matrix, poisson_disk_contacts
from .metrics import (
    MetricProblem,
    ensure_seed_set,
    force_closure_lp,
    progressive_support,
    q_lower_bound,
    q_upper_bound,
    support_point,
)
from .planner import Instrumentation, SubsetEvaluator, branch_and_bound, build_kdtree, exhaustive_plan
from .wrench import FrictionModel, WrenchToBodyForce, body_force_wrench

DEFAULTS = RunConfig()


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _timed(number: int, name: str):
    def wrap(fn):
        def run(*args, **kw):
            t0 = time.perf_counter()
            passed, detail, measured = fn(*args, **kw)
            return CriterionResult(number, name, bool(passed), detail, measured, time.perf_counter() - t0)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


# --------------------------------------------------------------------------
# shared fixtures


@lru_cache(maxsize=None)
def sphere_setup(level: int = 2, N: int = 12, seed: int = 0, radius: float = DEFAULTS.contact_radius):
    """Icosphere with Poisson-disk candidates and its stress maps."""
    mesh = shapes.icosphere(level)
    contacts = poisson_disk_contacts(mesh, N, seed=seed)
    material = MaterialParams.from_engineering(DEFAULTS.nu, DEFAULTS.E, DEFAULTS.sigma_max)
    maps = precompute_maps(mesh, material, contacts, contact_radius=radius)
    return mesh, contacts, compute_moments(mesh), material, maps


def sphere_problem(kind: str = "qsm", **kw) -> MetricProblem:
    mesh, contacts, moments, material, maps = sphere_setup(**kw)
    return MetricProblem(kind, contacts, moments, material=material, stress_maps=maps)


def dumbbell_grasps(mesh_ref):
    """Two mirrored 3-point grasps (points in normalized units) on the knobs
    of the asymmetric dumbbell: one beyond the thick neck (+x), one beyond
    the thin neck (-x)."""
    V = mesh_ref.vertices
    xmax, h = V[:, 0].max(), V[:, 1].max()
    thick = np.array([[xmax, -0.1 * h, -0.3 * h], [xmax - 0.8 * h, 0.1 * h, h], [xmax - 0.8 * h, -0.1 * h, -h]])
    thin = thick * np.array([-1.0, 1.0, 1.0])
    return thick, thin


def dumbbell_metrics(m: int, points, radius: float = DEFAULTS.contact_radius):
    mesh = shapes.asymmetric_dumbbell(m)
    thick, thin = points
    contacts = [closest_contact(mesh, p, i) for i, p in enumerate(np.vstack([thick, thin]))]
    material = MaterialParams.from_engineering(DEFAULTS.nu, DEFAULTS.E, DEFAULTS.sigma_max)
    maps = precompute_maps(mesh, material, contacts, contact_radius=radius)
    moments = compute_moments(mesh)
    out = {"K": mesh.n_triangles}
    for kind in ("q1", "qsm"):
        P = MetricProblem(kind, contacts, moments, material=material, stress_maps=maps)
        ensure_seed_set(P)
        out[kind] = (q_lower_bound(P.restrict([0, 1, 2])).Q, q_lower_bound(P.restrict([3, 4, 5])).Q)
    return out


REFERENCE_M = 3


@lru_cache(maxsize=None)
def dumbbell_result(m: int):
    """Metrics of the two grasps at resolution m; the grasp points come from
    the m = REFERENCE_M mesh, so every resolution sees the same grasp."""
    return dumbbell_metrics(m, dumbbell_grasps(shapes.asymmetric_dumbbell(REFERENCE_M)))


# --------------------------------------------------------------------------
# 1. BEM manufactured solution


def kelvin_field(source, load, material: MaterialParams):
    """Displacement and traction of a point load in the infinite medium,
    from the closed-form gradient of the Kelvin solution."""
    mu, lam, nu = material.mu, material.lam, material.nu
    c = 1.0 / (16 * np.pi * mu * (1 - nu))
    p = np.asarray(load, dtype=float)

    def displacement(y):
        return np.einsum("...ij,j->...i", kelvin_solution(np.asarray(y) - source, material), p)

    def gradient(y):
        r = np.asarray(y) - source
        d = np.linalg.norm(r, axis=-1)[..., None, None]
        rp = (r @ p)[..., None, None]
        eye = np.eye(3)
        return c * (
            (3 - 4 * nu) * (-p[:, None] * r[..., None, :]) / d**3
            + (eye * rp + r[..., :, None] * p[None, :]) / d**3
            - 3 * r[..., :, None] * r[..., None, :] * rp / d**5
        )

    def traction(y, n):
        G = gradient(y)
        sig = mu * (G + np.swapaxes(G, -1, -2)) + lam * np.trace(G, axis1=-2, axis2=-1)[..., None, None] * np.eye(3)
        return np.einsum("...ij,...j->...i", sig, n)

    return displacement, gradient, traction


def manufactured_error(level: int, material: MaterialParams | None = None) -> tuple[float, int]:
    """Relative L2 vertex-displacement error (rigid part removed) on the
    unit icosphere loaded by the tractions of an exterior Kelvin source."""
    material = material or MaterialParams.from_engineering(0.33)
    mesh = shapes.icosphere(level, normalize=False)
    R = np.linalg.norm(mesh.vertices, axis=1).max()
    s = np.array([1.5, 0.2, -0.1])
    source = 1.5 * R * s / np.linalg.norm(s)
    disp, _, trac = kelvin_field(source, np.array([0.3, -0.5, 0.8]), material)
    system = assemble_system(mesh, material, keep_matrix=False)
    u = system.solve_rhs(traction_rhs(system, trac))
    exact = disp(mesh.vertices).ravel()
    Phi = rigid_modes(mesh.vertices)

    def free(x):
        return x - Phi @ np.linalg.lstsq(Phi, x, rcond=None)[0]

    return float(np.linalg.norm(free(u - exact)) / np.linalg.norm(free(exact))), mesh.n_triangles


@_timed(1, "BEM manufactured solution")
def criterion_1(levels=(2, 3, 4)):
    errs, Ks = {}, {}
    for lev in levels:
        errs[lev], Ks[lev] = manufactured_error(lev)
    vals = [errs[lev] for lev in levels]
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    ok = decreasing and max(vals) <= 0.05
    detail = ", ".join(f"K={Ks[lev]}: {100 * errs[lev]:.2f}%" for lev in levels) + (
        " (strictly decreasing)" if decreasing else " (NOT decreasing)"
    )
    return ok, detail, {"errors": errs, "K": Ks}


# --------------------------------------------------------------------------
# 2. rigid-mode nullity


@_timed(2, "rigid-mode nullity")
def criterion_2(seed: int = 0):
    mesh, contacts, moments, material, _ = sphere_setup()
    system = assemble_system(mesh, material, contacts, keep_matrix=False, contact_radius=DEFAULTS.contact_radius)
    u = solve_displacements(system, None, np.zeros((len(contacts), 3)))
    s_zero = recover_all_stresses(mesh, u, np.zeros((len(contacts), 3)), material, contacts, DEFAULTS.contact_radius)
    zero_load = float(spectral_magnitude(s_zero).max())
    rng = np.random.default_rng(seed)
    worst_rigid = 0.0
    for _ in range(5):
        a, w = rng.normal(size=3), rng.normal(size=3)
        ur = a + np.cross(w, mesh.vertices)
        for j in range(0, mesh.n_triangles, 7):
            worst_rigid = max(worst_rigid, float(np.abs(recover_stress(mesh, ur, [], material, j)).max()))
        full = recover_all_stresses(mesh, ur, [], material)
        worst_rigid = max(worst_rigid, float(np.abs(full).max()))
    ok = zero_load <= 1e-8 and worst_rigid <= 1e-10
    return ok, f"zero-load max |sigma| {zero_load:.1e}, rigid-motion max |sigma| {worst_rigid:.1e}", {
        "zero_load": zero_load,
        "rigid": worst_rigid,
    }


# --------------------------------------------------------------------------
# 3. wrench equivalence


@_timed(3, "wrench equivalence")
def criterion_3(n_wrenches: int = 100, seed: int = 0):
    meshes = {
        "icosphere": shapes.icosphere(2),
        "box": shapes.box((1.0, 0.6, 0.4), divisions=3),
        "dumbbell": shapes.asymmetric_dumbbell(3),
    }
    rng = np.random.default_rng(seed)
    worst = {}
    for name, mesh in meshes.items():
        G = WrenchToBodyForce(compute_moments(mesh))
        errs = []
        for _ in range(n_wrenches):
            w = rng.normal(size=6)
            got = body_force_wrench(G(w), mesh)
            errs.append(np.linalg.norm(got - w) / np.linalg.norm(w))
        worst[name] = float(max(errs))
    cube = shapes.box((1.0, 1.0, 1.0), divisions=1, normalize=False)
    G = WrenchToBodyForce(compute_moments(cube))
    cube_err = 0.0
    for _ in range(10):
        tau = rng.normal(size=3)
        g = G(np.concatenate([np.zeros(3), tau]))
        cube_err = max(cube_err, float(np.abs(g.grad_g - 6 * cross_matrix(tau)).max()), float(np.abs(g.g0).max()))
    ok = max(worst.values()) <= 1e-6 and cube_err <= 1e-9
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; unit-cube grad g error {cube_err:.1e}"
    return ok, detail, {"relative": worst, "cube": cube_err}


# --------------------------------------------------------------------------
# 4. progressive equivalence


def random_grasp(rng, N: int, size: int | None = None) -> list[int]:
    size = size or int(rng.integers(3, 5))
    return sorted(rng.choice(N, size=size, replace=False).tolist())


@_timed(4, "progressive constraint generation")
def criterion_4(instances: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    setups = [dict(level=2, N=12, seed=0), dict(level=1, N=10, seed=1)]
    worst, fractions = 0.0, []
    for k in range(instances):
        P = sphere_problem("qsm", **setups[k % len(setups)])
        sub = P.restrict(random_grasp(rng, len(P.contacts)))
        d = rng.normal(size=6)
        d /= np.linalg.norm(d)
        prog = progressive_support(sub, d, seed_set=())
        full = support_point(sub, d, range(sub.n_triangles))
        worst = max(worst, abs(prog.objective - full.objective) / (1 + abs(full.objective)))
        fractions.append(prog.active_set_size / sub.n_triangles)
    frac = float(np.mean(fractions))
    return worst <= 1e-6, f"max deviation {worst:.1e}; mean active-set fraction {100 * frac:.1f}% ({100 * (1 - frac):.1f}% inactive)", {
        "deviation": worst,
        "active_fraction": frac,
    }


# --------------------------------------------------------------------------
# 5. bound sandwich


@_timed(5, "bound sandwich and convergence")
def criterion_5(instances: int = 10, seed: int = 1, D_upper: int = 128):
    rng = np.random.default_rng(seed)
    P = sphere_problem("qsm")
    ensure_seed_set(P)
    rows, ok = [], True
    for _ in range(instances):
        sub = P.restrict(random_grasp(rng, len(P.contacts), 4))
        low = q_lower_bound(sub, eps=1e-3)
        up = q_upper_bound(sub, D=D_upper)
        L = np.array([t[1] for t in low.trace])
        mono = bool(np.all(np.diff(L) >= -1e-12)) if len(L) > 1 else True
        sandwich = low.Q <= up.upper + 1e-8
        ok &= mono and sandwich and low.converged
        rows.append((low.Q, up.upper, low.iterations, mono, low.converged))
    detail = f"{sum(r[3] for r in rows)}/{instances} monotone, {sum(r[4] for r in rows)}/{instances} converged, " + (
        f"max lower/upper {max(r[0] / r[1] if r[1] > 0 else 0 for r in rows):.4f}"
    )
    return ok, detail, {"rows": rows}


# --------------------------------------------------------------------------
# 6. scaling laws


def closure_grasp(contacts, theta: float, size: int = 4) -> tuple[int, ...]:
    """Lexicographically first subset that the closure LP accepts."""
    from itertools import combinations

    for sel in combinations(range(len(contacts)), size):
        if force_closure_lp([contacts[i] for i in sel], theta):
            return sel
    raise ValueError("no force-closure subset")


@_timed(6, "scaling laws")
def criterion_6(grasp=None):
    mesh, contacts, moments, material, maps = sphere_setup()
    grasp = grasp or closure_grasp(contacts, DEFAULTS.theta)

    def q(mat, smaps):
        P = MetricProblem("qsm", contacts, moments, material=mat, stress_maps=smaps).restrict(grasp)
        ensure_seed_set(P)
        return q_lower_bound(P).Q

    q0 = q(material, maps)
    q_sigma = q(material.scaled(sigma=2.0), maps)
    stiff = material.scaled(stiffness=2.0)
    q_stiff = q(stiff, precompute_maps(mesh, stiff, contacts, contact_radius=DEFAULTS.contact_radius))
    r_sigma = q_sigma / (2 * q0)
    r_stiff = q_stiff / (q0 / 2)
    ok_sigma = abs(r_sigma - 1) <= 1e-6
    ok_stiff = abs(r_stiff - 1) <= 1e-6
    detail = (
        f"Q(2 sigma_max)/(2Q) = {r_sigma:.9f} [{'ok' if ok_sigma else 'fail'}]; "
        f"Q(2mu, 2lambda)/(Q/2) = {r_stiff:.9f} [{'ok' if ok_stiff else 'fail'}]"
    )
    return ok_sigma and ok_stiff, detail, {"grasp": grasp, "Q": q0, "Q_2sigma": q_sigma, "Q_2stiff": q_stiff, "ratio_sigma": r_sigma, "ratio_stiff": r_stiff}


# --------------------------------------------------------------------------
# 7. force-closure soundness


def hemisphere_contacts(mesh, theta_deg: float = 35.0, count: int = 4):
    """Contacts spread in azimuth on the cap z > cos(theta) of a sphere mesh."""
    out = []
    R = np.linalg.norm(mesh.vertices, axis=1).max()
    for k in range(count):
        a = 2 * np.pi * k / count
        t = np.radians(theta_deg)
        p = R * np.array([np.sin(t) * np.cos(a), np.sin(t) * np.sin(a), np.cos(t)])
        out.append(closest_contact(mesh, p, k))
    return out


@_timed(7, "force-closure soundness")
def criterion_7(instances: int = 10, seed: int = 2):
    rng = np.random.default_rng(seed)
    P = sphere_problem("qsm")
    ensure_seed_set(P)
    violations, closed = 0, 0
    for _ in range(instances):
        sel = random_grasp(rng, len(P.contacts))
        Q = q_lower_bound(P.restrict(sel)).Q
        lp = force_closure_lp([P.contacts[i] for i in sel], P.friction.theta)
        closed += Q > 1e-6
        violations += Q > 1e-6 and not lp
    mesh, _, moments, material, _ = sphere_setup()
    cap = hemisphere_contacts(mesh)
    maps = precompute_maps(mesh, material, cap, contact_radius=DEFAULTS.contact_radius)
    Pc = MetricProblem("qsm", cap, moments, friction=FrictionModel(0.2), material=material, stress_maps=maps)
    ensure_seed_set(Pc)
    q_cap = q_lower_bound(Pc).Q
    lp_cap = force_closure_lp(cap, 0.2)
    ok = violations == 0 and q_cap == 0.0 and not lp_cap
    return ok, f"{closed}/{instances} grasps with Q > 1e-6, {violations} closure violations; one-sided grasp Q = {q_cap:g}", {
        "violations": violations,
        "closed": closed,
        "q_cap": q_cap,
    }


# --------------------------------------------------------------------------
# 8. planner exactness


def optimal_prunes(instr: Instrumentation, positions, selection) -> int:
    perm = build_kdtree(positions).perm
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    hits = instr.prunes_containing([int(inv[i]) for i in selection])
    return hits["order"] + hits["bound"]


def planner_case(kind: str, N: int, C: int, seed: int, level: int = 2):
    mesh = shapes.icosphere(level)
    contacts = poisson_disk_contacts(mesh, N, seed=seed)
    moments = compute_moments(mesh)
    if kind == "qsm":
        material = MaterialParams.from_engineering(DEFAULTS.nu, DEFAULTS.E, DEFAULTS.sigma_max)
        maps = precompute_maps(mesh, material, contacts, contact_radius=DEFAULTS.contact_radius)
        P = MetricProblem(kind, contacts, moments, material=material, stress_maps=maps)
        ensure_seed_set(P)
    else:
        P = MetricProblem(kind, contacts, moments)
    plan = branch_and_bound(P, C, evaluator=SubsetEvaluator(P), instrument=True)
    ref = exhaustive_plan(P, C, evaluator=SubsetEvaluator(P))
    prunes = optimal_prunes(plan.instrumentation, [c.position for c in contacts], ref.selection)
    same = tuple(plan.selection) == tuple(ref.selection) and abs(plan.Q - ref.Q) <= 1e-6
    return same, prunes, plan, ref


@_timed(8, "planner exactness")
def criterion_8(seeds=range(10), Ns=(8, 10, 12), Cs=(2, 3), qsm_cases=((8, 3, 0),)):
    mismatches, prunes, count, rows = 0, 0, 0, []
    for N in Ns:
        for C in Cs:
            for s in seeds:
                same, pr, plan, ref = planner_case("q1", N, C, s)
                mismatches += not same
                prunes += pr
                count += 1
                rows.append(("q1", N, C, s, plan.selection, ref.selection, plan.Q, ref.Q, pr))
    for N, C, s in qsm_cases:
        same, pr, plan, ref = planner_case("qsm", N, C, s, level=1)
        mismatches += not same
        prunes += pr
        count += 1
        rows.append(("qsm", N, C, s, plan.selection, ref.selection, plan.Q, ref.Q, pr))
    ok = mismatches == 0 and prunes == 0
    return ok, f"{count - mismatches}/{count} instances match exhaustive search; {prunes} prunes of optimal leaves", {"rows": rows}


# --------------------------------------------------------------------------
# 9 and 10. shape awareness and resolution robustness


@_timed(9, "shape awareness")
def criterion_9(m: int = 3):
    res = dumbbell_result(m)
    (q1_thick, q1_thin), (qs_thick, qs_thin) = res["q1"], res["qsm"]
    q1_dev = abs(q1_thin / q1_thick - 1)
    qsm_drop = (qs_thick - qs_thin) / qs_thick
    ok = q1_dev <= 0.02 and qsm_drop >= 0.10
    return ok, (
        f"K={res['K']}: Q1 thick/thin {q1_thick:.5g}/{q1_thin:.5g} (deviation {100 * q1_dev:.2f}%), "
        f"QSM thick/thin {qs_thick:.4g}/{qs_thin:.4g} (thin lower by {100 * qsm_drop:.1f}%)"
    ), {"q1": res["q1"], "qsm": res["qsm"], "K": res["K"]}


@_timed(10, "resolution robustness")
def criterion_10(ms=(3, 6)):
    lo, hi = dumbbell_result(ms[0]), dumbbell_result(ms[1])
    devs = [abs(b / a - 1) for a, b in zip(lo["qsm"], hi["qsm"])]
    ok = max(devs) <= 0.10
    return ok, (
        f"K={lo['K']} vs K={hi['K']}: thick-arm grasp {100 * devs[0]:.1f}%, thin-arm grasp {100 * devs[1]:.1f}%"
    ), {"coarse": lo, "fine": hi, "deviation": devs}


# --------------------------------------------------------------------------
# 11. cone solver certification


CONE_SHAPES = [
    ConeDims(l=3, q=[3, 3], s=1),
    ConeDims(l=0, q=[3, 3, 4], s=2),
    ConeDims(l=4, q=[5], s=0),
    ConeDims(l=2, q=[], s=2),
]


def cone_identity(dims: ConeDims) -> np.ndarray:
    parts = [np.ones(dims.l)] + [np.r_[1.0, np.zeros(q - 1)] for q in dims.q] + [np.tile(SVEC_EYE, dims.s)]
    return np.concatenate(parts)


def random_conic_program(rng, dims: ConeDims, n: int = 5, p: int = 0) -> ConicProgram:
    """Random instance with strictly feasible primal and dual, hence a finite
    optimum: h = G x0 + s0 and c = -G^T z0 - A^T y0 with s0, z0 interior."""
    m = dims.size
    G = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)
    e = cone_identity(dims)
    s0 = e * (1.0 + rng.random()) + 0.1 * rng.normal(size=m) * (e == 0)
    z0 = e * (1.0 + rng.random())
    A = rng.normal(size=(p, n))
    y0 = rng.normal(size=p)
    return ConicProgram(c=-G.T @ z0 - A.T @ y0, G=G, h=G @ x0 + s0, dims=dims, A=A if p else None, b=A @ x0 if p else None)


def project_cone(v, dims: ConeDims) -> np.ndarray:
    """Euclidean projection onto the product cone, batched over rows of v."""
    out = v.copy()
    off = dims.l
    out[:, :off] = np.maximum(v[:, :off], 0)
    for q in dims.q:
        t = v[:, off]
        x = v[:, off + 1 : off + q]
        nx = np.linalg.norm(x, axis=1)
        blk = np.zeros((len(v), q))
        inside = nx <= t
        blk[inside] = v[inside, off : off + q]
        mid = ~inside & (nx > -t)
        a = (t[mid] + nx[mid]) / 2
        blk[mid, 0] = a
        blk[mid, 1:] = a[:, None] * x[mid] / nx[mid, None]
        out[:, off : off + q] = blk
        off += q
    if dims.s:
        w, U = np.linalg.eigh(smat(v[:, off:].reshape(-1, 6)))
        P = np.einsum("kij,kj,klj->kil", U, np.maximum(w, 0), U)
        out[:, off:] = svec(P).reshape(len(v), -1)
    return out


def admm_objectives(progs, iters: int = 20000, rho: float = 1.0, alpha: float = 1.6) -> np.ndarray:
    """Long-run over-relaxed ADMM on min c^T x s.t. Gx + s = h, s in K, Ax = b,
    batched over programs of equal dimensions."""
    dims = progs[0].dims
    n, p = len(progs[0].c), progs[0].A.shape[0]
    G = np.stack([q.G for q in progs])
    h = np.stack([q.h for q in progs])
    c = np.stack([q.c for q in progs])
    A = np.stack([q.A for q in progs])
    b = np.stack([q.b for q in progs])
    KKT = np.zeros((len(progs), n + p, n + p))
    KKT[:, :n, :n] = rho * np.einsum("bmi,bmj->bij", G, G)
    KKT[:, :n, n:] = np.swapaxes(A, 1, 2)
    KKT[:, n:, :n] = A
    Kinv = np.linalg.inv(KKT)
    s = np.zeros_like(h)
    u = np.zeros_like(h)
    x = np.zeros_like(c)
    for _ in range(iters):
        rhs = np.concatenate([-c - rho * np.einsum("bmi,bm->bi", G, s - h + u), b], axis=1)
        x = np.einsum("bij,bj->bi", Kinv, rhs)[:, :n]
        Gx = np.einsum("bmi,bi->bm", G, x)
        Gxr = alpha * Gx + (1 - alpha) * (h - s)
        s = project_cone(h - Gxr - u, dims)
        u = u + Gxr + s - h
    return np.einsum("bi,bi->b", c, x)


def kkt_residuals(prog: ConicProgram, sol) -> dict:
    """Independently recomputed optimality residuals of a conic solution."""
    from .cone import _Cone

    cone = _Cone(prog.dims)
    nb = 1.0 + max(np.linalg.norm(prog.b) if len(prog.b) else 0.0, np.linalg.norm(prog.h))
    nc = 1.0 + np.linalg.norm(prog.c)
    pres = max(np.linalg.norm(prog.G @ sol.x + sol.s - prog.h), np.linalg.norm(prog.A @ sol.x - prog.b) if len(prog.b) else 0.0) / nb
    dres = np.linalg.norm(prog.c + prog.G.T @ sol.z + prog.A.T @ sol.y) / nc
    pobj = prog.c @ sol.x
    dobj = -prog.h @ sol.z - prog.b @ sol.y
    gap = abs(sol.s @ sol.z) / (1.0 + min(abs(pobj), abs(dobj)))
    cone_viol = max(0.0, -cone.min_eig(sol.s), -cone.min_eig(sol.z))
    return {"primal": pres, "dual": dres, "gap": gap, "cone": cone_viol, "duality": abs(pobj - dobj) / (1 + abs(pobj))}


@_timed(11, "cone solver certification")
def criterion_11(instances: int = 200, seed: int = 3, iters: int = 20000):
    rng = np.random.default_rng(seed)
    per = instances // len(CONE_SHAPES)
    worst_kkt, worst_obj, not_opt = 0.0, 0.0, 0
    for dims in CONE_SHAPES:
        progs = [random_conic_program(rng, dims, n=5, p=1 if dims.l else 0) for _ in range(per)]
        sols = [solve_conic(q) for q in progs]
        not_opt += sum(not s.optimal for s in sols)
        for q, s in zip(progs, sols):
            r = kkt_residuals(q, s)
            worst_kkt = max(worst_kkt, r["primal"], r["dual"], r["gap"], r["cone"])
        ref = admm_objectives(progs, iters)
        ipm = np.array([s.objective for s in sols])
        worst_obj = max(worst_obj, float(np.max(np.abs(ipm - ref) / (1 + np.abs(ref)))))
    ok = not_opt == 0 and worst_kkt <= 1e-8 and worst_obj <= 1e-4
    return ok, f"{per * len(CONE_SHAPES) - not_opt}/{per * len(CONE_SHAPES)} optimal, max KKT residual {worst_kkt:.1e}, max objective deviation from ADMM {worst_obj:.1e}", {
        "kkt": worst_kkt,
        "objective": worst_obj,
        "not_optimal": not_opt,
    }


# --------------------------------------------------------------------------
# suite


def run_suite(level: str = "fast", echo: bool = False) -> list[CriterionResult]:
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    full = level == "full"
    if full:
        plan = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
                criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]
    else:
        # same checks and tolerances on fewer instances
        plan = [
            lambda: criterion_1((2, 3)),
            criterion_2,
            criterion_3,
            lambda: criterion_4(instances=10),
            lambda: criterion_5(instances=4),
            criterion_6,
            lambda: criterion_7(instances=5),
            lambda: criterion_8(seeds=range(2), Ns=(8, 10), qsm_cases=()),
            criterion_9,
            criterion_10,
            lambda: criterion_11(instances=40),
        ]
    results = []
    for check in plan:
        r = check()
        results.append(r)
        if echo:
            print(r.line(), flush=True)
    if echo:
        print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed ({level})")
    return results

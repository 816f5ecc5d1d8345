"""Boundary-element elastostatics on closed triangle meshes.

Displacements are piecewise linear on the mesh and collocated at vertices.
For a collocation vertex x0 with interior solid angle phi the discrete
boundary equation reads

    int dG/dn (u - u(x0)) ds + int (2 mu U - G I) M[u] ds
        = int U t ds + int U g dV,

with G = 1/(4 pi r), U the Kelvin solution and M[u] = grad(u)^T n - n tr(grad u)
the tangential (Gunter) derivative, constant on each flat triangle. Every
kernel here is at most weakly singular, and the constant term collects to
(phi / 4 pi) u(x0). Point forces f_i at x_i enter as U(x_i - x0) f_i and the
linear body force is converted to a surface integral.

Pure-traction problems are solvable only up to rigid motions; the system
is bordered by six constraint rows (sum u = 0, sum x x u = 0) and six
Lagrange multipliers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import (
    DegenerateTriangle,
    NonEquilibrium,
    SingularSystem,
    SolveFailure,
    ZeroRadius,
)
from .geom import ContactPoint, SurfaceMesh, cross_matrix, solid_angles
from .quadrature import DUNAVANT7_BARY, DUNAVANT7_W, collapsed_rule, gauss25, subdivided_rule
from .wrench import BodyForceField

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic linear-elastic material (Lame parameters) and stress bound."""

    mu: float
    lam: float
    sigma_max: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("shear modulus must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio {self.nu} outside (-1, 0.5)")
        if not self.sigma_max > 0:
            raise ValueError("sigma_max must be positive")

    @classmethod
    def from_engineering(cls, nu: float = 0.33, E: float = 1.0, sigma_max: float = 1.0):
        if not -1.0 < nu < 0.5:
            raise ValueError(f"Poisson ratio {nu} outside (-1, 0.5)")
        if not E > 0:
            raise ValueError("Young's modulus must be positive")
        return cls(E / (2 * (1 + nu)), E * nu / ((1 + nu) * (1 - 2 * nu)), sigma_max)

    @property
    def nu(self) -> float:
        return self.lam / (2 * (self.lam + self.mu))

    @property
    def E(self) -> float:
        return self.mu * (3 * self.lam + 2 * self.mu) / (self.lam + self.mu)

    def scaled(self, stiffness: float = 1.0, sigma: float = 1.0) -> "MaterialParams":
        return MaterialParams(self.mu * stiffness, self.lam * stiffness, self.sigma_max * sigma)


# --------------------------------------------------------------------------
# kernels


def kelvin_solution(rvec, material: MaterialParams) -> np.ndarray:
    """Kelvin displacement kernel U(r) (3x3); accepts (..., 3) arrays."""
    r = np.asarray(rvec, dtype=float)
    d = np.linalg.norm(r, axis=-1)
    if np.any(d == 0):
        raise ZeroRadius("Kelvin solution evaluated at r = 0")
    nu = material.nu
    rh = r / d[..., None]
    c = 1.0 / (16 * np.pi * material.mu * (1 - nu) * d)
    return c[..., None, None] * ((3 - 4 * nu) * np.eye(3) + rh[..., :, None] * rh[..., None, :])


def traction_kernel(rvec, n_y, material: MaterialParams) -> np.ndarray:
    """Traction of the Kelvin solution on a surface with normal n_y at y.

    rvec = y - x. The double-layer operator is int T(y - x, n_y) u(y) ds_y,
    which equals the weakly singular regularized form used in assembly.
    """
    r = np.asarray(rvec, dtype=float)
    n = np.asarray(n_y, dtype=float)
    d = np.linalg.norm(r, axis=-1)
    if np.any(d == 0):
        raise ZeroRadius("traction kernel evaluated at r = 0")
    nu = material.nu
    rh = r / d[..., None]
    drdn = np.sum(rh * n, axis=-1)
    I = np.eye(3)
    outer = rh[..., :, None] * rh[..., None, :]
    skew = rh[..., :, None] * n[..., None, :] - n[..., :, None] * rh[..., None, :]
    c = -1.0 / (8 * np.pi * (1 - nu) * d**2)
    return c[..., None, None] * (
        drdn[..., None, None] * ((1 - 2 * nu) * I + 3 * outer) - (1 - 2 * nu) * skew
    )


def tangential_operator(grad, n) -> np.ndarray:
    """M = grad n^T - n grad^T for a gradient vector and unit normal."""
    grad = np.asarray(grad, dtype=float)
    n = np.asarray(n, dtype=float)
    return grad[..., :, None] * n[..., None, :] - n[..., :, None] * grad[..., None, :]


def shape_gradients(mesh: SurfaceMesh) -> np.ndarray:
    """Surface gradients of the three linear shape functions, (K, 3, 3)."""
    p = mesh.vertices[mesh.triangles]
    n = mesh.normals
    out = np.empty_like(p)
    for k in range(3):
        e = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        out[:, k] = np.cross(n, e) / (2 * mesh.areas[:, None])
    return out


def rigid_modes(points) -> np.ndarray:
    """3V x 6 basis of rigid displacements (translations, then rotations)."""
    x = np.asarray(points, dtype=float)
    V = len(x)
    Phi = np.zeros((3 * V, 6))
    for c in range(3):
        Phi[c::3, c] = 1.0
    for v in range(V):
        # u = omega x x  ->  -[x]x omega
        Phi[3 * v : 3 * v + 3, 3:] = -cross_matrix(x[v])
    return Phi


# --------------------------------------------------------------------------
# pair integrals


class _Kernels:
    """Per-point integrands shared by far-field and near-field quadrature."""

    def __init__(self, material: MaterialParams):
        nu = material.nu
        self.mu = material.mu
        self.c1 = 1.0 / (8 * np.pi * (1 - nu))  # 2 mu U = c1 ((3-4nu) I + rr^T) / r
        self.a_coef = self.c1 * (3 - 4 * nu) - 1.0 / FOUR_PI
        self.kelvin = 1.0 / (16 * np.pi * material.mu * (1 - nu))
        self.k = 1.0 / (2 * (1 - nu))
        self.nu = nu


def _pair_JL(K: _Kernels, x0, pts, w, nrm, bary, laplace: bool = True):
    """Integrals over a batch of (collocation point, triangle) pairs.

    x0 (P, 3); pts (P, q, 3); w (P, q); nrm (P, 3); bary (P, q, 3).
    Returns J (P, 3, 3) = int (2 mu U - G I) ds and
    L (P, 3) = int dG/dn N_k ds.
    """
    r = pts - x0[:, None, :]
    d = np.sqrt(np.einsum("pqi,pqi->pq", r, r))
    inv = 1.0 / d
    J = (K.a_coef * np.sum(w * inv, axis=1))[:, None, None] * np.eye(3)
    rr = r * np.sqrt(K.c1 * w * inv**3)[..., None]
    J = J + np.einsum("pqi,pqj->pij", rr, rr)
    if laplace:
        dn = -np.einsum("pqi,pi->pq", r, nrm) * inv**3 / FOUR_PI
        L = np.einsum("pq,pqk->pk", w * dn, bary)
    else:
        L = np.zeros((len(x0), 3))
    return J, L


def _pair_body(K: _Kernels, x0, pts, w, nrm):
    """int G(y - x0) n ds as (P, 3, 12) maps acting on [g0; grad_g columns]."""
    r = pts - x0[:, None, :]
    d = np.sqrt(np.einsum("pqi,pqi->pq", r, r))
    rh = r / d[..., None]
    rn = np.einsum("pqi,pi->pq", rh, nrm)
    I = np.eye(3)
    out = np.zeros((len(x0), 3, 12))
    s_rn = np.sum(w * rn, axis=1)
    rnT = np.einsum("pq,pqi,pj->pij", w, rh, nrm)
    out[:, :, :3] = s_rn[:, None, None] * I - K.k * rnT
    wd = np.sum(w * d, axis=1)
    for c in range(3):
        s2 = np.sum(w * rn * pts[..., c], axis=1)
        s5 = np.einsum("pq,pqi,pj->pij", w * pts[..., c], rh, nrm)
        blk = (s2 - wd * nrm[:, c])[:, None, None] * I - K.k * s5
        blk[:, :, c] += K.k * wd[:, None] * nrm
        out[:, :, 3 + 3 * c : 6 + 3 * c] = blk
    return out / (8 * np.pi * K.mu)


def _pair_kelvin_traction(K: _Kernels, x0, pts, w, tvals):
    """int U(y - x0) t(y) ds for pair batches; tvals (P, q, 3)."""
    r = pts - x0[:, None, :]
    d = np.sqrt(np.einsum("pqi,pqi->pq", r, r))
    rt = np.einsum("pqi,pqi->pq", r, tvals)
    out = (3 - 4 * K.nu) * np.einsum("pq,pqi->pi", w / d, tvals)
    out += np.einsum("pq,pqi->pi", w * rt / d**3, r)
    return K.kelvin * out


def _collapsed_at(mesh: SurfaceMesh, tris, local, n: int):
    """Collapsed-rule points for triangles with the singular vertex `local`."""
    bary0, w0 = collapsed_rule(n)
    P = len(tris)
    bary = np.empty((P, len(w0), 3))
    for k in range(3):
        sel = local == k
        perm = np.empty(3, dtype=int)
        perm[[k, (k + 1) % 3, (k + 2) % 3]] = [0, 1, 2]
        bary[sel] = bary0[:, perm]
    p = mesh.vertices[mesh.triangles[tris]]
    pts = np.einsum("pqk,pkd->pqd", bary, p)
    w = mesh.areas[tris][:, None] * w0[None, :]
    return pts, w, bary


def _rule_points(mesh: SurfaceMesh, tris, bary0, w0):
    p = mesh.vertices[mesh.triangles[tris]]
    pts = np.einsum("qk,pkd->pqd", bary0, p)
    w = mesh.areas[tris][:, None] * w0[None, :]
    bary = np.broadcast_to(bary0, (len(tris),) + bary0.shape)
    return pts, w, bary


@dataclass
class _NearField:
    rows: np.ndarray
    tris: np.ndarray
    incident: np.ndarray  # bool
    local: np.ndarray  # local index of the collocation vertex if incident
    J: np.ndarray | None = None
    L: np.ndarray | None = None
    A7: np.ndarray | None = None
    Aref: np.ndarray | None = None


def _near_pairs(mesh: SurfaceMesh, factor: float = 2.0) -> _NearField:
    tree = cKDTree(mesh.centroids)
    rad = factor * float(mesh.diameters.max())
    rows, tris = [], []
    hits = tree.query_ball_point(mesh.vertices, rad)
    for v, lst in enumerate(hits):
        if lst:
            lst = np.asarray(lst)
            d = np.linalg.norm(mesh.centroids[lst] - mesh.vertices[v], axis=1)
            keep = lst[d < factor * mesh.diameters[lst]]
            rows.append(np.full(len(keep), v))
            tris.append(keep)
    for v, ts in enumerate(mesh.vertex_triangles):  # always include incident
        rows.append(np.full(len(ts), v))
        tris.append(ts)
    rows = np.concatenate(rows)
    tris = np.concatenate(tris)
    key = np.unique(rows * mesh.n_triangles + tris)
    rows, tris = key // mesh.n_triangles, key % mesh.n_triangles
    tv = mesh.triangles[tris]
    inc = np.any(tv == rows[:, None], axis=1)
    local = np.argmax(tv == rows[:, None], axis=1)
    return _NearField(rows, tris, inc, local)


def _compute_near(mesh: SurfaceMesh, K: _Kernels, nf: _NearField, duffy_order: int = 8):
    P = len(nf.rows)
    nf.J = np.empty((P, 3, 3))
    nf.L = np.empty((P, 3))
    nf.A7 = np.empty((P, 3, 12))
    nf.Aref = np.empty((P, 3, 12))
    x0 = mesh.vertices[nf.rows]
    nrm = mesh.normals[nf.tris]
    rho = np.linalg.norm(mesh.centroids[nf.tris] - x0, axis=1) / mesh.diameters[nf.tris]
    groups = [
        (nf.incident, None),
        (~nf.incident & (rho < 1.0), subdivided_rule(2)),
        (~nf.incident & (rho >= 1.0), gauss25()),
    ]
    for sel, rule in groups:
        idx = np.flatnonzero(sel)
        for chunk in np.array_split(idx, max(1, len(idx) // 4000)):
            if len(chunk) == 0:
                continue
            t = nf.tris[chunk]
            if rule is None:
                pts, w, bary = _collapsed_at(mesh, t, nf.local[chunk], duffy_order)
                J, _ = _pair_JL(K, x0[chunk], pts, w, nrm[chunk], bary, laplace=False)
                L = np.zeros((len(chunk), 3))  # flat triangle through x0: r.n = 0
            else:
                pts, w, bary = _rule_points(mesh, t, *rule)
                J, L = _pair_JL(K, x0[chunk], pts, w, nrm[chunk], bary)
            nf.J[chunk], nf.L[chunk] = J, L
            nf.Aref[chunk] = _pair_body(K, x0[chunk], pts, w, nrm[chunk])
            p7, w7, _ = _rule_points(mesh, t, DUNAVANT7_BARY, DUNAVANT7_W)
            nf.A7[chunk] = _pair_body(K, x0[chunk], p7, w7, nrm[chunk])
    return nf


# --------------------------------------------------------------------------
# system


@dataclass
class BemSystem:
    mesh: SurfaceMesh
    material: MaterialParams
    contacts: list
    C_diag: np.ndarray  # phi / 4 pi per vertex
    A_mat: np.ndarray  # 3V x 12
    B_mat: np.ndarray  # 3V x 3N
    rigid_constraints: np.ndarray  # 6 x 3V
    lu: tuple = field(repr=False)
    rcond: float = 1.0
    DC: np.ndarray | None = field(default=None, repr=False)
    contact_radius: float = 0.0
    patches: list = field(default_factory=list, repr=False)

    @property
    def K(self) -> int:
        return self.mesh.n_triangles

    @property
    def V(self) -> int:
        return self.mesh.n_vertices

    @property
    def N(self) -> int:
        return len(self.contacts)

    @property
    def C_mat(self) -> np.ndarray:
        return np.kron(np.diag(self.C_diag), np.eye(3))

    @property
    def D_mat(self) -> np.ndarray:
        if self.DC is None:
            raise RuntimeError("system assembled with keep_matrix=False")
        return self.DC - self.C_mat

    def solve_rhs(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        one = rhs.ndim == 1
        rhs2 = rhs[:, None] if one else rhs
        ext = np.vstack([rhs2, np.zeros((6, rhs2.shape[1]))])
        sol = sla.lu_solve(self.lu, ext)
        if not np.all(np.isfinite(sol)):
            raise SolveFailure("non-finite displacement solution")
        u = sol[: 3 * self.V]
        return u[:, 0] if one else u


def _assemble_rows(mesh, K: _Kernels, nf: _NearField, chunk: int, out: np.ndarray):
    """Fill out[:3V,:3V] with D (without C) and return A_mat."""
    V, Kt = mesh.n_vertices, mesh.n_triangles
    pts, w = mesh.quadrature_points()
    q = pts.shape[1]
    grads = shape_gradients(mesh)  # (K, m, l)
    gradsT = grads.transpose(0, 2, 1)
    nrm = mesh.normals
    # scatter matrix: (triangle, local vertex) -> vertex
    S = sp.csr_matrix(
        (np.ones(3 * Kt), (np.arange(3 * Kt), mesh.triangles.ravel())), shape=(3 * Kt, V)
    )
    ST = S.T.tocsr()
    # fixed per-point arrays for the body-force sums
    P = pts.reshape(-1, 3)
    Wf = w.ravel()
    Nf = np.repeat(mesh.normals, q, axis=0)
    WN = Wf[:, None] * Nf
    WNY = np.concatenate([WN] + [WN * P[:, c : c + 1] for c in range(3)], axis=1)  # (Kq, 12)
    ones_y = np.concatenate([np.ones((len(P), 1)), P], axis=1)  # (Kq, 4)
    A = np.zeros((3 * V, 12))
    order = np.argsort(nf.rows, kind="stable")
    bounds = np.searchsorted(nf.rows[order], np.arange(V + 1))
    I3 = np.eye(3)
    for start in range(0, V, chunk):
        stop = min(V, start + chunk)
        xs = mesh.vertices[start:stop]
        c = stop - start
        r = pts[None] - xs[:, None, None, :]  # (c, K, q, 3)
        d2 = r[..., 0] ** 2 + r[..., 1] ** 2 + r[..., 2] ** 2
        inv = 1.0 / np.sqrt(d2)
        winv = w[None] * inv
        J = (K.a_coef * winv.sum(axis=2))[..., None, None] * I3
        rr = r * np.sqrt(K.c1 * winv * inv * inv)[..., None]
        J = J + np.matmul(rr.transpose(0, 1, 3, 2), rr)
        nr = nrm[None, :, None, :]
        rdotn = r[..., 0] * nr[..., 0] + r[..., 1] * nr[..., 1] + r[..., 2] * nr[..., 2]
        dn = -rdotn * winv * inv * inv / FOUR_PI
        L = dn @ DUNAVANT7_BARY  # (c, K, 3)
        # body force sums over all points for each row
        rf = r.reshape(c, -1, 3)
        invf = inv.reshape(c, -1)
        rh = rf * invf[..., None]
        rn = rh[..., 0] * Nf[:, 0] + rh[..., 1] * Nf[:, 1] + rh[..., 2] * Nf[:, 2]
        s1 = (rn * Wf) @ ones_y  # (c, 4): sum w rn, sum w rn y_c
        dist = 1.0 / invf
        s3 = (dist * Wf) @ Nf  # (c, 3): sum w r n
        s45 = np.matmul(rh.transpose(0, 2, 1), WNY)  # (c, 3, 12)
        Ablk = np.zeros((c, 3, 12))
        Ablk[:, :, :3] = s1[:, 0, None, None] * I3 - K.k * s45[:, :, :3]
        for cc in range(3):
            blk = (s1[:, 1 + cc] - s3[:, cc])[:, None, None] * I3 - K.k * s45[:, :, 3 + 3 * cc : 6 + 3 * cc]
            blk[:, :, cc] += K.k * s3
            Ablk[:, :, 3 + 3 * cc : 6 + 3 * cc] = blk
        Ablk /= 8 * np.pi * K.mu
        # near-field replacement
        for v in range(start, stop):
            sel = order[bounds[v] : bounds[v + 1]]
            if len(sel):
                t = nf.tris[sel]
                J[v - start, t] = nf.J[sel]
                L[v - start, t] = nf.L[sel]
                Ablk[v - start] += np.sum(nf.Aref[sel] - nf.A7[sel], axis=0)
        A[3 * start : 3 * stop] = Ablk.reshape(3 * c, 12)
        # J M_k = (J g_k) n^T - (J n) g_k^T
        Jg = np.matmul(J, gradsT)  # (c, K, 3 (i), 3 (m))
        Jn = np.matmul(J, nrm[:, :, None])[..., 0]  # (c, K, 3)
        blk = Jg.transpose(0, 1, 3, 2)[..., None] * nrm[None, :, None, None, :]
        blk -= Jn[:, :, None, :, None] * grads[None, :, :, None, :]
        idx = np.arange(3)
        blk[:, :, :, idx, idx] += L[..., None]
        X = blk.reshape(c, 3 * Kt, 9).transpose(1, 0, 2).reshape(3 * Kt, c * 9)
        Y = np.asarray(ST @ X)  # (V, c*9)
        Y = Y.reshape(V, c, 3, 3).transpose(1, 2, 0, 3).reshape(3 * c, 3 * V)
        out[3 * start : 3 * stop, : 3 * V] = Y
    return A


def point_force_matrix(mesh: SurfaceMesh, material: MaterialParams, contacts) -> np.ndarray:
    V = mesh.n_vertices
    N = len(contacts)
    if N == 0:
        return np.zeros((3 * V, 0))
    x = np.array([c.position for c in contacts])
    r = x[None, :, :] - mesh.vertices[:, None, :]  # (V, N, 3)
    d = np.linalg.norm(r, axis=2)
    floor = 1e-9 * mesh.bbox_diagonal
    small = d < floor
    if np.any(small):
        r[small] = np.array([floor, 0.0, 0.0])
    U = kelvin_solution(r, material)  # (V, N, 3, 3)
    return U.transpose(0, 2, 1, 3).reshape(3 * V, 3 * N)


@dataclass(frozen=True)
class ContactPatch:
    """Triangles sharing one contact force as a uniform traction f / area."""

    triangles: np.ndarray
    area: float


def contact_patch(mesh: SurfaceMesh, contact: ContactPoint, radius: float = 0.0) -> ContactPatch:
    """Host triangle plus every triangle whose centroid lies within `radius`
    of the contact and whose normal is within 60 degrees of the host normal.
    radius = 0 gives the single host triangle."""
    host = int(contact.triangle)
    if radius <= 0:
        return ContactPatch(np.array([host]), float(mesh.areas[host]))
    d = np.linalg.norm(mesh.centroids - np.asarray(contact.position), axis=1)
    keep = (d <= radius) & (mesh.normals @ mesh.normals[host] > 0.5)
    keep[host] = True
    tris = np.flatnonzero(keep)
    return ContactPatch(tris, float(mesh.areas[tris].sum()))


def contact_patches(mesh: SurfaceMesh, contacts, radius: float = 0.0) -> list[ContactPatch]:
    return [contact_patch(mesh, c, radius) for c in contacts]


def _kelvin_sum(K: _Kernels, r, w) -> np.ndarray:
    """sum_q w_q U(r_q) for r (P, q, 3), w (P, q) -> (P, 3, 3)."""
    d = np.sqrt(np.einsum("pqi,pqi->pq", r, r))
    out = np.einsum("pq,pqi,pqj->pij", w / d**3, r, r)
    idx = np.arange(3)
    out[:, idx, idx] += ((3 - 4 * K.nu) * (w / d).sum(axis=1))[:, None]
    return K.kelvin * out


def patch_force_matrix(mesh: SurfaceMesh, material: MaterialParams, patches, duffy_order: int = 8) -> np.ndarray:
    """Columns int_patch U(y - x0) dA / area for each patch and direction."""
    Kk = _Kernels(material)
    V = mesh.n_vertices
    X = mesh.vertices
    sub_b, sub_w = subdivided_rule(2)
    out = np.zeros((V, 3, 3 * len(patches)))
    for i, patch in enumerate(patches):
        acc = np.zeros((V, 3, 3))
        for j in patch.triangles:
            j = int(j)
            pts, w, _ = _rule_points(mesh, [j], DUNAVANT7_BARY, DUNAVANT7_W)
            r = pts[0][None] - X[:, None]
            ww = np.broadcast_to(w[0], r.shape[:2])
            dist = np.linalg.norm(X - mesh.centroids[j], axis=1)
            near = np.flatnonzero(dist < 2 * mesh.diameters[j])
            far = np.ones(V, dtype=bool)
            far[near] = False
            acc[far] += _kelvin_sum(Kk, r[far], ww[far])
            tv = mesh.triangles[j]
            for v in near:
                hit = np.flatnonzero(tv == v)
                if hit.size:
                    p, wq, _ = _collapsed_at(mesh, np.array([j]), hit, duffy_order)
                else:
                    p, wq, _ = _rule_points(mesh, [j], sub_b, sub_w)
                acc[v] += _kelvin_sum(Kk, p - X[v], wq)[0]
        out[:, :, 3 * i : 3 * i + 3] = acc / patch.area
    return out.reshape(3 * V, 3 * len(patches))


def assemble_system(
    mesh: SurfaceMesh,
    material: MaterialParams,
    contacts=(),
    chunk: int | None = None,
    keep_matrix: bool | None = None,
    contact_radius: float = 0.0,
) -> BemSystem:
    """Assemble and factorize the bordered collocation system.

    Contacts load the solid as point forces (contact_radius = 0) or as
    uniform tractions over small surface patches (contact_radius > 0).
    """
    V = mesh.n_vertices
    Kk = _Kernels(material)
    if chunk is None:
        chunk = max(1, min(64, int(4e6 // (mesh.n_triangles * 7 * 3))))
    if keep_matrix is None:
        keep_matrix = 3 * V <= 4000
    nf = _compute_near(mesh, Kk, _near_pairs(mesh))
    n = 3 * V + 6
    big = np.zeros((n, n), order="F")
    A = _assemble_rows(mesh, Kk, nf, chunk, big)
    phi = solid_angles(mesh)
    C = phi / FOUR_PI
    idx = np.arange(3 * V)
    big[idx, idx] += np.repeat(C, 3)
    R = rigid_modes(mesh.vertices).T
    big[3 * V :, : 3 * V] = R
    big[: 3 * V, 3 * V :] = R.T
    if not np.all(np.isfinite(big)):
        raise SingularSystem("non-finite entries in assembled system")
    DC = big[: 3 * V, : 3 * V].copy() if keep_matrix else None
    anorm = np.linalg.norm(big, 1)
    lu = sla.lu_factor(big, overwrite_a=True, check_finite=False)
    rcond, info = sla.lapack.dgecon(lu[0], anorm, norm="1")
    if info != 0 or rcond < 1e-12:
        raise SingularSystem(f"bordered system is singular (rcond={rcond:.3g})")
    patches = contact_patches(mesh, contacts, contact_radius)
    if contact_radius > 0:
        B = patch_force_matrix(mesh, material, patches)
    else:
        B = point_force_matrix(mesh, material, contacts)
    log.info("assembled BEM system V=%d K=%d rcond=%.3g", V, mesh.n_triangles, rcond)
    return BemSystem(
        mesh=mesh,
        material=material,
        contacts=list(contacts),
        C_diag=C,
        A_mat=A,
        B_mat=B,
        rigid_constraints=R,
        lu=lu,
        rcond=float(rcond),
        DC=DC,
        contact_radius=float(contact_radius),
        patches=patches,
    )


# --------------------------------------------------------------------------
# loads and solves


def traction_rhs(system: BemSystem, traction, duffy_order: int = 8) -> np.ndarray:
    """Right-hand side int U(y - x0) t(y) ds for a smooth traction field.

    `traction(points, normals)` returns tractions (..., 3). This is the
    general-traction path used for verification against analytic fields.
    """
    mesh = system.mesh
    Kk = _Kernels(system.material)
    pts, w = mesh.quadrature_points()
    q = pts.shape[1]
    P = pts.reshape(-1, 3)
    Nf = np.repeat(mesh.normals, q, axis=0)
    T = np.asarray(traction(P, Nf), dtype=float)
    Wf = w.ravel()
    V = mesh.n_vertices
    out = np.zeros((V, 3))
    for start in range(0, V, 64):
        xs = mesh.vertices[start : start + 64]
        r = P[None] - xs[:, None]
        d = np.linalg.norm(r, axis=2)
        s = Wf / d
        rt = np.einsum("cpi,pi->cp", r, T)
        s2 = Wf * rt / d**3
        out[start : start + 64] = Kk.kelvin * (
            (3 - 4 * Kk.nu) * (s @ T) + (s2 @ P) - s2.sum(axis=1)[:, None] * xs
        )
    # incident triangles: replace 7-point values by the collapsed rule
    rows = np.concatenate([np.full(len(ts), v) for v, ts in enumerate(mesh.vertex_triangles)])
    tris = np.concatenate(mesh.vertex_triangles)
    local = np.argmax(mesh.triangles[tris] == rows[:, None], axis=1)
    x0 = mesh.vertices[rows]
    p7, w7, _ = _rule_points(mesh, tris, DUNAVANT7_BARY, DUNAVANT7_W)
    t7 = np.asarray(traction(p7.reshape(-1, 3), np.repeat(mesh.normals[tris], q, axis=0))).reshape(p7.shape)
    pd, wd, _ = _collapsed_at(mesh, tris, local, duffy_order)
    nq = pd.shape[1]
    td = np.asarray(traction(pd.reshape(-1, 3), np.repeat(mesh.normals[tris], nq, axis=0))).reshape(pd.shape)
    corr = _pair_kelvin_traction(Kk, x0, pd, wd, td) - _pair_kelvin_traction(Kk, x0, p7, w7, t7)
    np.add.at(out, rows, corr)
    return out.ravel()


def equilibrium_residual(g: BodyForceField, forces, contacts, moments) -> np.ndarray:
    """Net wrench of body force plus contact forces (should vanish)."""
    w = np.zeros(6)
    w[:3] = g.g0 * moments.volume + g.grad_g @ moments.first_moment
    w[3:] = np.cross(moments.first_moment, g.g0) + moments.T_mat @ g.grad_g.T.ravel()
    for f, c in zip(forces, contacts):
        w[:3] += f
        w[3:] += np.cross(c.position, f)
    return w


def solve_displacements(
    system: BemSystem,
    g: BodyForceField | None,
    forces=None,
    moments=None,
    tol: float = 1e-8,
) -> np.ndarray:
    """Vertex displacements (3V,) for a body force plus contact forces."""
    forces = np.zeros((system.N, 3)) if forces is None else np.asarray(forces, dtype=float).reshape(-1, 3)
    if len(forces) != system.N:
        raise ValueError(f"{len(forces)} forces for {system.N} contacts")
    p = np.zeros(12) if g is None else g.params
    if moments is not None:
        gg = g if g is not None else BodyForceField(np.zeros(3), np.zeros((3, 3)))
        res = equilibrium_residual(gg, forces, system.contacts, moments)
        scale = 1.0 + np.abs(forces).sum() + np.abs(p).sum() * moments.volume
        if np.linalg.norm(res) > tol * scale:
            raise NonEquilibrium(f"load residual wrench {np.linalg.norm(res):.3g}")
    rhs = system.A_mat @ p + system.B_mat @ forces.ravel()
    return system.solve_rhs(rhs)


# --------------------------------------------------------------------------
# stress recovery


def _stress_operator(material: MaterialParams) -> np.ndarray:
    """9x9 map from row-major vec(grad u) to vec(sigma)."""
    mu, lam = material.mu, material.lam
    S = np.zeros((9, 9))
    for a in range(3):
        for b in range(3):
            S[3 * a + b, 3 * a + b] += mu
            S[3 * a + b, 3 * b + a] += mu
        for c in range(3):
            S[3 * a + a, 3 * c + c] += lam
    return S


def recovery_operators(mesh: SurfaceMesh, material: MaterialParams, tris=None):
    """Per-triangle linear maps to the 3x3 stress (stacked, 9 entries).

    Returns (Nj, Mj): Nj (k, 9, 9) acts on the triangle's vertex
    displacements [u_0; u_1; u_2], Mj (k, 9, 3) on the traction vector t_j.
    """
    tris = np.arange(mesh.n_triangles) if tris is None else np.atleast_1d(tris)
    p = mesh.vertices[mesh.triangles[tris]]
    n = mesh.normals[tris]
    mu, lam = material.mu, material.lam
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    k = len(tris)
    E = np.zeros((k, 9, 9))
    for a in range(3):
        E[:, a, 3 * a : 3 * a + 3] = e1
        E[:, 3 + a, 3 * a : 3 * a + 3] = e2
        # traction row a: mu (G n)_a + mu (G^T n)_a + lam n_a tr G
        E[:, 6 + a, 3 * a : 3 * a + 3] += mu * n
        for b in range(3):
            E[:, 6 + a, 3 * b + a] += mu * n[:, b]
            E[:, 6 + a, 3 * b + b] += lam * n[:, a]
    cond = np.linalg.cond(E)
    if np.any(cond > 1e10):
        raise DegenerateTriangle(f"triangle {int(tris[np.argmax(cond)])} recovery matrix is singular")
    Einv = np.linalg.inv(E)
    Sop = _stress_operator(material)
    Dm = np.zeros((9, 9))
    for a in range(3):
        Dm[a, 3 + a] = 1.0
        Dm[a, a] = -1.0
        Dm[3 + a, 6 + a] = 1.0
        Dm[3 + a, a] = -1.0
    SE = Sop @ Einv  # (k, 9, 9)
    Nj = SE[:, :, :6] @ Dm[:6]
    Mj = SE[:, :, 6:]
    # symmetrize the stacked output exactly
    perm = np.array([3 * (i % 3) + i // 3 for i in range(9)])
    Nj = 0.5 * (Nj + Nj[:, perm])
    Mj = 0.5 * (Mj + Mj[:, perm])
    return Nj, Mj


def contact_tractions(mesh: SurfaceMesh, contacts, forces, contact_radius: float = 0.0) -> np.ndarray:
    """Piecewise-constant traction per triangle: f_i / (patch area) on the
    triangles of contact i's patch (the host triangle alone by default)."""
    t = np.zeros((mesh.n_triangles, 3))
    for c, f in zip(contacts, np.asarray(forces, dtype=float).reshape(-1, 3)):
        patch = contact_patch(mesh, c, contact_radius)
        t[patch.triangles] += f / patch.area
    return t


def recover_stress(
    mesh: SurfaceMesh, u, forces, material: MaterialParams, j: int, contacts=(), contact_radius: float = 0.0
) -> np.ndarray:
    """Stress tensor (3x3, symmetric) on triangle j."""
    u = np.asarray(u, dtype=float).reshape(-1, 3)
    Nj, Mj = recovery_operators(mesh, material, [j])
    t = np.zeros(3)
    if len(contacts):
        t = contact_tractions(mesh, contacts, forces, contact_radius)[j]
    s = Nj[0] @ u[mesh.triangles[j]].ravel() + Mj[0] @ t
    return s.reshape(3, 3)


def recover_all_stresses(mesh, u, forces, material, contacts=(), contact_radius: float = 0.0) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1, 3)
    Nj, Mj = recovery_operators(mesh, material)
    t = contact_tractions(mesh, contacts, forces, contact_radius) if len(contacts) else np.zeros((mesh.n_triangles, 3))
    s = np.einsum("kab,kb->ka", Nj, u[mesh.triangles].reshape(-1, 9)) + np.einsum("kab,kb->ka", Mj, t)
    return s.reshape(-1, 3, 3)


@dataclass(frozen=True)
class StressMaps:
    """Linear maps from loads to stacked per-triangle stresses.

    sigma_j = A_cal[9j:9j+9] @ [g0; grad_g columns] + B_cal[9j:9j+9] @ f.
    """

    A_cal: np.ndarray  # (9K, 12)
    B_cal: np.ndarray  # (9K, 3N)

    @property
    def K(self) -> int:
        return self.A_cal.shape[0] // 9

    @property
    def N(self) -> int:
        return self.B_cal.shape[1] // 3

    def stresses(self, g_params, forces) -> np.ndarray:
        s = self.A_cal @ np.asarray(g_params) + self.B_cal @ np.asarray(forces).ravel()
        return s.reshape(-1, 3, 3)


def build_stress_maps(system: BemSystem, mesh: SurfaceMesh | None = None, material=None, contacts=None) -> StressMaps:
    mesh = mesh or system.mesh
    material = material or system.material
    contacts = system.contacts if contacts is None else contacts
    rhs = np.hstack([system.A_mat, system.B_mat])
    U = system.solve_rhs(rhs)  # (3V, 12 + 3N)
    Nj, Mj = recovery_operators(mesh, material)
    ncol = U.shape[1]
    Ut = U.reshape(mesh.n_vertices, 3, ncol)[mesh.triangles].reshape(mesh.n_triangles, 9, ncol)
    out = np.einsum("kab,kbc->kac", Nj, Ut)
    patches = system.patches if contacts is system.contacts and system.patches else contact_patches(mesh, contacts, system.contact_radius)
    for i, patch in enumerate(patches):
        for j in patch.triangles:
            out[j, :, 12 + 3 * i : 15 + 3 * i] += Mj[j] / patch.area
    out = out.reshape(9 * mesh.n_triangles, ncol)
    return StressMaps(A_cal=np.ascontiguousarray(out[:, :12]), B_cal=np.ascontiguousarray(out[:, 12:]))


def precompute_maps(mesh: SurfaceMesh, material: MaterialParams, contacts, contact_radius: float = 0.0) -> StressMaps:
    """Assemble, factorize and build the stress maps in one call."""
    system = assemble_system(mesh, material, contacts, keep_matrix=False, contact_radius=contact_radius)
    return build_stress_maps(system)

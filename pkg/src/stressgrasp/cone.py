"""Primal-dual interior-point solver for small conic programs.

Standard form::

    minimize    c^T x
    subject to  A x = b
                G x + s = h,   s in K

where K is a product of a nonnegative orthant, second-order cones and 3x3
positive semidefinite cones. PSD slacks are stored in scaled-vector form
svec(S) = (S00, r S10, r S20, S11, r S21, S22) with r = sqrt(2), so the
Euclidean inner product of svec vectors equals the trace inner product.

The method is an infeasible-start path-following scheme with
Nesterov-Todd scaling and a Mehrotra predictor-corrector step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NotSymmetric, NumericalFailure

log = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)
# svec index -> (row, col) for 3x3 lower triangle, column-wise
_SVEC_IJ = [(0, 0), (1, 0), (2, 0), (1, 1), (2, 1), (2, 2)]
_SVEC_SCALE = np.array([1.0, SQRT2, SQRT2, 1.0, SQRT2, 1.0])
SVEC_EYE = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 1.0])


_FLAT_IDX = np.array([3 * i + j for i, j in _SVEC_IJ])
# svec position of each entry of a row-major 3x3
_SMAT_IDX = np.array([0, 1, 2, 1, 3, 4, 2, 4, 5])
_SMAT_SCALE = 1.0 / _SVEC_SCALE[_SMAT_IDX]


def svec(M) -> np.ndarray:
    """(..., 3, 3) symmetric -> (..., 6)."""
    M = np.asarray(M, dtype=float)
    return M.reshape(M.shape[:-2] + (9,))[..., _FLAT_IDX] * _SVEC_SCALE


def smat(v) -> np.ndarray:
    """(..., 6) -> (..., 3, 3) symmetric."""
    v = np.asarray(v, dtype=float)
    return (v[..., _SMAT_IDX] * _SMAT_SCALE).reshape(v.shape[:-1] + (3, 3))


def stacked_to_svec_matrix() -> np.ndarray:
    """6x9 matrix mapping a stacked 3x3 (row-major) to svec of its symmetric part."""
    T = np.zeros((6, 9))
    for k, (i, j) in enumerate(_SVEC_IJ):
        T[k, 3 * i + j] += 0.5 * _SVEC_SCALE[k]
        T[k, 3 * j + i] += 0.5 * _SVEC_SCALE[k]
    return T


# --------------------------------------------------------------------------
# 3x3 symmetric eigensolver


def eig_sym3(m, tol: float = 1e-10):
    """Eigenvalues (descending) and eigenvectors (columns) of a symmetric 3x3.

    Closed-form trigonometric eigenvalues with cross-product eigenvectors;
    falls back to LAPACK when the residual check fails (clustered spectra).
    """
    m = np.asarray(m, dtype=float)
    scale = max(np.max(np.abs(m)), 1e-300)
    if np.max(np.abs(m - m.T)) > tol * scale:
        raise NotSymmetric("matrix is not symmetric")
    a = 0.5 * (m + m.T)
    p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    q = np.trace(a) / 3.0
    p2 = (a[0, 0] - q) ** 2 + (a[1, 1] - q) ** 2 + (a[2, 2] - q) ** 2 + 2 * p1
    p = np.sqrt(p2 / 6.0)
    if p <= 1e-14 * scale:
        return np.full(3, q), np.eye(3)
    B = (a - q * np.eye(3)) / p
    r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    l1 = q + 2 * p * np.cos(phi)
    l3 = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    lam = np.array([l1, 3 * q - l1 - l3, l3])
    vecs = np.empty((3, 3))
    for k, lk in enumerate(lam):
        M = a - lk * np.eye(3)
        cands = [np.cross(M[0], M[1]), np.cross(M[0], M[2]), np.cross(M[1], M[2])]
        v = max(cands, key=lambda c: c @ c)
        nv = np.linalg.norm(v)
        if nv == 0:
            break
        vecs[:, k] = v / nv
    else:
        res = np.linalg.norm(a @ vecs - vecs * lam, axis=0).max()
        ortho = np.abs(vecs.T @ vecs - np.eye(3)).max()
        if res <= tol * scale and ortho <= 1e-8:
            return lam, vecs
    w, V = np.linalg.eigh(a)
    return w[::-1], V[:, ::-1]


def spectral_magnitude(S) -> np.ndarray:
    """max |eigenvalue| of each symmetric 3x3 in a (..., 3, 3) stack."""
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    w = np.linalg.eigvalsh(S)
    return np.maximum(np.abs(w[..., 0]), np.abs(w[..., -1]))


# --------------------------------------------------------------------------
# problem and solution


@dataclass
class ConeDims:
    l: int = 0
    q: list[int] = field(default_factory=list)
    s: int = 0  # number of 3x3 PSD blocks

    @property
    def size(self) -> int:
        return self.l + sum(self.q) + 6 * self.s

    @property
    def degree(self) -> int:
        return self.l + len(self.q) + 3 * self.s


@dataclass
class ConicProgram:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    dims: ConeDims
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    offset: float = 0.0  # constant added to the reported objective

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        self.h = np.asarray(self.h, dtype=float)
        n = len(self.c)
        if self.A is None:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float)
        if self.G.shape != (self.dims.size, n) or len(self.h) != self.dims.size:
            raise ValueError("G/h do not match cone dimensions")
        if len(self.b) != self.A.shape[0]:
            raise ValueError("A/b size mismatch")


@dataclass
class Solution:
    status: str  # Optimal, Infeasible, Unbounded, IterLimit
    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    y: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status == "Optimal"


# --------------------------------------------------------------------------
# cone algebra


class _Cone:
    def __init__(self, dims: ConeDims):
        self.dims = dims
        self.l = dims.l
        off = dims.l
        self.q_slices = []
        starts: dict[int, list[int]] = {}
        for qd in dims.q:
            self.q_slices.append(slice(off, off + qd))
            starts.setdefault(qd, []).append(off)
            off += qd
        # equal-size second-order cones are processed together: (m, qd) row indices
        self.q_groups = [np.array(st)[:, None] + np.arange(qd) for qd, st in sorted(starts.items())]
        self.s_slice = slice(off, off + 6 * dims.s)
        self.ns = dims.s
        self.size = dims.size
        self.degree = dims.degree
        self.e = np.zeros(self.size)
        self.e[: self.l] = 1.0
        for sl in self.q_slices:
            self.e[sl.start] = 1.0
        if self.ns:
            self.e[self.s_slice] = np.tile(SVEC_EYE, self.ns)

    def min_eig(self, x) -> float:
        vals = [np.inf]
        if self.l:
            vals.append(x[: self.l].min())
        for idx in self.q_groups:
            v = x[idx]
            vals.append((v[:, 0] - np.linalg.norm(v[:, 1:], axis=1)).min())
        if self.ns:
            vals.append(np.linalg.eigvalsh(smat(x[self.s_slice].reshape(-1, 6))).min())
        return float(min(vals))

    def step_in_scaled(self, lam_blocks, d) -> float:
        """Largest alpha with lambda + alpha d in K (lambda interior)."""
        amax = np.inf
        if self.l:
            lam = lam_blocks["l"]
            dl = d[: self.l]
            neg = dl < 0
            if np.any(neg):
                amax = min(amax, float(np.min(-lam[neg] / dl[neg])))
        for k, idx in enumerate(self.q_groups):
            amax = min(amax, _soc_step(lam_blocks["q"][k], d[idx]))
        if self.ns:
            lam = lam_blocks["s"]  # (m, 3) eigenvalues
            D = smat(d[self.s_slice].reshape(-1, 6))
            isq = 1.0 / np.sqrt(lam)
            M = D * isq[:, :, None] * isq[:, None, :]
            w = np.linalg.eigvalsh(M)[:, 0]
            if np.any(w < 0):
                amax = min(amax, float(np.min(-1.0 / w[w < 0])))
        return amax


def _soc_step(x, d) -> float:
    """Largest alpha >= 0 with x + alpha d in every SOC block (x interior).

    x, d are (m, q). The exit point is the smallest positive root of
    (x0 + a d0)^2 - ||x1 + a d1||^2.
    """
    a = d[:, 0] ** 2 - np.einsum("ij,ij->i", d[:, 1:], d[:, 1:])
    b = 2 * (x[:, 0] * d[:, 0] - np.einsum("ij,ij->i", x[:, 1:], d[:, 1:]))
    c = x[:, 0] ** 2 - np.einsum("ij,ij->i", x[:, 1:], x[:, 1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        q = -0.5 * (b + np.copysign(sq, b))
        r1 = np.where(np.abs(a) > 1e-300, q / a, np.inf)
        r2 = np.where(q != 0, c / q, np.inf)
        lin = np.where(b < 0, -c / b, np.inf)
    r1 = np.where((disc >= 0) & (r1 > 0), r1, np.inf)
    r2 = np.where((disc >= 0) & (r2 > 0), r2, np.inf)
    root = np.where(np.abs(a) > 1e-300, np.minimum(r1, r2), lin)
    with np.errstate(divide="ignore"):
        lim = np.where(d[:, 0] < 0, -x[:, 0] / d[:, 0], np.inf)
    return float(np.minimum(root, lim).min()) if len(x) else np.inf


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-T} s = lambda."""

    def __init__(self, cone: _Cone, s, z):
        self.cone = cone
        l = cone.l
        self.lam = np.empty(cone.size)
        self.blocks: dict = {"q": []}
        if l:
            sl, zl = s[:l], z[:l]
            self.d = np.sqrt(sl / zl)
            self.lam[:l] = np.sqrt(sl * zl)
            self.blocks["l"] = self.lam[:l]
        self.soc = []
        for idx in cone.q_groups:
            sv, zv = s[idx], z[idx]
            sn = np.sqrt(np.maximum(sv[:, 0] ** 2 - np.einsum("ij,ij->i", sv[:, 1:], sv[:, 1:]), 1e-300))
            zn = np.sqrt(np.maximum(zv[:, 0] ** 2 - np.einsum("ij,ij->i", zv[:, 1:], zv[:, 1:]), 1e-300))
            sb, zb = sv / sn[:, None], zv / zn[:, None]
            gam = np.sqrt(np.maximum((1.0 + np.einsum("ij,ij->i", zb, sb)) / 2.0, 1e-300))
            Jz = zb.copy()
            Jz[:, 1:] *= -1
            wb = (sb + Jz) / (2 * gam[:, None])
            beta = np.sqrt(sn / zn)
            v = wb.copy()
            v[:, 0] += 1.0
            v /= np.sqrt(2 * (wb[:, 0] + 1.0))[:, None]
            self.soc.append((beta, v))
            lam = self._soc_W(beta, v, zv)
            self.lam[idx] = lam
            self.blocks["q"].append(lam)
        if cone.ns:
            S = smat(s[cone.s_slice].reshape(-1, 6))
            Z = smat(z[cone.s_slice].reshape(-1, 6))
            try:
                Ls = np.linalg.cholesky(S)
                Lz = np.linalg.cholesky(Z)
            except np.linalg.LinAlgError as exc:
                raise NumericalFailure("PSD iterate lost definiteness") from exc
            U, sig, Vt = np.linalg.svd(np.swapaxes(Lz, 1, 2) @ Ls)
            R = Ls @ np.swapaxes(Vt, 1, 2) / np.sqrt(sig)[:, None, :]
            self.R = R
            self.Rinv = np.linalg.inv(R)
            self.lam_s = sig
            lam_mat = np.zeros((cone.ns, 3, 3))
            idx = np.arange(3)
            lam_mat[:, idx, idx] = sig
            self.lam[cone.s_slice] = svec(lam_mat).ravel()
            self.blocks["s"] = sig
            # (lambda_i + lambda_j) / 2 in svec order for the Jordan product
            self.lam_pair = np.stack([(sig[:, i] + sig[:, j]) / 2 for i, j in _SVEC_IJ], axis=1)

    @staticmethod
    def _soc_W(beta, v, x):
        # W x = beta (2 v v^T x - J x); v (m, q), x (m, q) or (m, q, k)
        Jx = x.copy()
        Jx[:, 1:] *= -1
        if x.ndim == 2:
            return beta[:, None] * (2 * v * np.einsum("ij,ij->i", v, x)[:, None] - Jx)
        return beta[:, None, None] * (2 * v[:, :, None] * np.einsum("ij,ijk->ik", v, x)[:, None, :] - Jx)

    @staticmethod
    def _soc_Winv(beta, v, x):
        # W^{-1} x = (1/beta)(2 J v v^T J x - J x)
        Jv = v.copy()
        Jv[:, 1:] *= -1
        Jx = x.copy()
        Jx[:, 1:] *= -1
        if x.ndim == 2:
            return (2 * Jv * np.einsum("ij,ij->i", Jv, x)[:, None] - Jx) / beta[:, None]
        return (2 * Jv[:, :, None] * np.einsum("ij,ijk->ik", Jv, x)[:, None, :] - Jx) / beta[:, None, None]

    def _apply(self, x, kind: str):
        """kind in {W, Wt, Winv, Winvt}; x is (size,) or (size, k)."""
        cone = self.cone
        out = np.empty_like(x)
        l = cone.l
        if l:
            dd = self.d if x.ndim == 1 else self.d[:, None]
            out[:l] = x[:l] * dd if kind in ("W", "Wt") else x[:l] / dd
        for (beta, v), idx in zip(self.soc, cone.q_groups):
            # the SOC scaling is symmetric, so W = W^T
            if kind in ("W", "Wt"):
                out[idx] = self._soc_W(beta, v, x[idx])
            else:
                out[idx] = self._soc_Winv(beta, v, x[idx])
        if cone.ns:
            ss = cone.s_slice
            xs = x[ss]
            k = 1 if x.ndim == 1 else x.shape[1]
            M = smat(xs.reshape(cone.ns, 6, k).transpose(0, 2, 1))  # (m, k, 3, 3)
            if kind == "W":  # R^T X R
                A = np.swapaxes(self.R, 1, 2)[:, None]
                B = self.R[:, None]
            elif kind == "Wt":  # R X R^T
                A = self.R[:, None]
                B = np.swapaxes(self.R, 1, 2)[:, None]
            elif kind == "Winvt":  # R^{-1} X R^{-T}
                A = self.Rinv[:, None]
                B = np.swapaxes(self.Rinv, 1, 2)[:, None]
            else:  # Winv: R^{-T} X R^{-1}
                A = np.swapaxes(self.Rinv, 1, 2)[:, None]
                B = self.Rinv[:, None]
            Y = A @ M @ B
            Y = 0.5 * (Y + np.swapaxes(Y, -1, -2))
            ys = svec(Y).transpose(0, 2, 1).reshape(6 * cone.ns, k)
            out[ss] = ys[:, 0] if x.ndim == 1 else ys
        return out

    def W(self, x):
        return self._apply(x, "W")

    def Wt(self, x):
        return self._apply(x, "Wt")

    def Winv(self, x):
        return self._apply(x, "Winv")

    def Winvt(self, x):
        return self._apply(x, "Winvt")

    # Jordan algebra in scaled coordinates ---------------------------------
    def lam_prod(self, u):
        """lambda o u."""
        cone = self.cone
        out = np.empty_like(u)
        l = cone.l
        if l:
            out[:l] = self.lam[:l] * u[:l]
        for idx in cone.q_groups:
            out[idx] = _soc_prod(self.lam[idx], u[idx])
        if cone.ns:
            ss = cone.s_slice
            out[ss] = (u[ss].reshape(-1, 6) * self.lam_pair).ravel()
        return out

    def lam_div(self, d):
        """Solve lambda o u = d."""
        cone = self.cone
        out = np.empty_like(d)
        l = cone.l
        if l:
            out[:l] = d[:l] / self.lam[:l]
        for idx in cone.q_groups:
            lam = self.lam[idx]
            dv = d[idx]
            det = lam[:, 0] ** 2 - np.einsum("ij,ij->i", lam[:, 1:], lam[:, 1:])
            u0 = (lam[:, 0] * dv[:, 0] - np.einsum("ij,ij->i", lam[:, 1:], dv[:, 1:])) / det
            blk = np.empty_like(dv)
            blk[:, 0] = u0
            blk[:, 1:] = (dv[:, 1:] - u0[:, None] * lam[:, 1:]) / lam[:, :1]
            out[idx] = blk
        if cone.ns:
            ss = cone.s_slice
            out[ss] = (d[ss].reshape(-1, 6) / self.lam_pair).ravel()
        return out


def _soc_prod(x, y):
    """Row-wise SOC Jordan product of (m, q) arrays."""
    out = np.empty_like(x)
    out[:, 0] = np.einsum("ij,ij->i", x, y)
    out[:, 1:] = x[:, :1] * y[:, 1:] + y[:, :1] * x[:, 1:]
    return out


def _jordan(cone: _Cone, x, y):
    """x o y for arbitrary cone vectors (used for the Mehrotra correction)."""
    out = np.empty_like(x)
    l = cone.l
    if l:
        out[:l] = x[:l] * y[:l]
    for idx in cone.q_groups:
        out[idx] = _soc_prod(x[idx], y[idx])
    if cone.ns:
        ss = cone.s_slice
        X = smat(x[ss].reshape(-1, 6))
        Y = smat(y[ss].reshape(-1, 6))
        out[ss] = svec(0.5 * (X @ Y + Y @ X)).ravel()
    return out


# --------------------------------------------------------------------------
# solver


def _kkt_factor(H, A, reg):
    n = H.shape[0]
    p = A.shape[0]
    if p == 0:
        Hr = H + reg * np.eye(n)
        try:
            return ("chol", sla.cho_factor(Hr, check_finite=False))
        except np.linalg.LinAlgError:
            return ("lu", sla.lu_factor(Hr, check_finite=False))
    K = np.zeros((n + p, n + p))
    K[:n, :n] = H + reg * np.eye(n)
    K[:n, n:] = A.T
    K[n:, :n] = A
    K[n:, n:] = -reg * np.eye(p)
    return ("lu", sla.lu_factor(K, check_finite=False))


def _kkt_solve(fac, rhs):
    kind, f = fac
    if kind == "chol":
        return sla.cho_solve(f, rhs, check_finite=False)
    return sla.lu_solve(f, rhs, check_finite=False)


def solve_conic(
    prog: ConicProgram,
    tol: float = 1e-8,
    max_iter: int = 200,
    reg: float = 1e-10,
    verbose: bool = False,
) -> Solution:
    cone = _Cone(prog.dims)
    c, G, h, A, b = prog.c, prog.G, prog.h, prog.A, prog.b
    n = len(c)
    p = A.shape[0]
    hscale = max(1.0, np.max(np.abs(G)) if G.size else 1.0)
    nb = 1.0 + max(np.linalg.norm(b) if p else 0.0, np.linalg.norm(h))
    nc = 1.0 + np.linalg.norm(c)

    def solve_kkt(H, rx, ry, refine: int = 2):
        fac = _kkt_factor(H, A, reg * hscale**2)
        rhs = np.concatenate([rx, ry])

        def mult(v):
            out = np.concatenate([H @ v[:n] + A.T @ v[n:], A @ v[:n]])
            return out

        sol = _kkt_solve(fac, rhs)
        for _ in range(refine):
            sol = sol + _kkt_solve(fac, rhs - mult(sol))
        return sol[:n], sol[n:]

    # initial point
    H0 = G.T @ G
    x, y = solve_kkt(H0, G.T @ h, b)
    s = h - G @ x
    xd, yd = solve_kkt(H0, -c, np.zeros(p))
    z = G @ xd
    y = yd
    for vec in (s, z):
        a = -cone.min_eig(vec)
        if a >= -1e-8:
            vec += (1.0 + max(a, 0.0)) * cone.e

    status = "IterLimit"
    best = None
    for it in range(max_iter + 1):
        rx = A.T @ y + G.T @ z + c
        ry = A @ x - b
        rz = G @ x + s - h
        pcost = c @ x
        dcost = -(b @ y) - h @ z
        gap = float(s @ z)
        pres = max(np.linalg.norm(ry) if p else 0.0, np.linalg.norm(rz)) / nb
        dres = np.linalg.norm(rx) / nc
        relgap = gap / (1.0 + min(abs(pcost), abs(dcost)))
        if verbose:
            log.info("it %3d pcost % .8e dcost % .8e gap %.2e pres %.2e dres %.2e", it, pcost, dcost, gap, pres, dres)
        score = max(pres, dres, relgap)
        if best is None or score < best[0]:
            best = (score, x.copy(), s.copy(), z.copy(), y.copy(), pres, dres, relgap, it)
        if pres <= tol and dres <= tol and relgap <= tol:
            status = "Optimal"
            break
        # infeasibility certificates
        hz_by = h @ z + b @ y
        if hz_by < 0 and np.linalg.norm(A.T @ y + G.T @ z) / (-hz_by) <= tol:
            status = "Infeasible"
            break
        if pcost < 0:
            axn = np.linalg.norm(A @ x) if p else 0.0
            if max(axn, np.linalg.norm(G @ x + s)) / (-pcost) <= tol:
                status = "Unbounded"
                break
        if it == max_iter:
            break
        mu = gap / cone.degree
        try:
            W = _Scaling(cone, s, z)
            Gs = W.Winvt(G)
            H = Gs.T @ Gs
        except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError):
            break
        lam = W.lam

        def direction(bx, by, bz, d):
            q = W.lam_div(d)
            t = W.Winvt(bz)
            dx, dy = solve_kkt(H, bx + Gs.T @ (t - q), by)
            dzt = Gs @ dx - t + q
            dst = q - dzt
            return dx, dy, dst, dzt

        try:
            # predictor
            d_aff = -W.lam_prod(lam)
            dx, dy, dst, dzt = direction(-rx, -ry, -rz, d_aff)
            a_aff = min(1.0, cone.step_in_scaled(W.blocks, dst), cone.step_in_scaled(W.blocks, dzt))
            ds_a = W.Wt(dst)
            dz_a = W.Winv(dzt)
            rho = float((s + a_aff * ds_a) @ (z + a_aff * dz_a)) / max(gap, 1e-300)
            sigma = min(1.0, max(0.0, rho)) ** 3
            # corrector
            eta = 1.0 - sigma
            d = -W.lam_prod(lam) + sigma * mu * cone.e - _jordan(cone, dst, dzt)
            dx, dy, dst, dzt = direction(-eta * rx, -eta * ry, -eta * rz, d)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise NumericalFailure(f"KKT solve failed: {exc}") from exc
        amax = min(cone.step_in_scaled(W.blocks, dst), cone.step_in_scaled(W.blocks, dzt))
        alpha = min(1.0, 0.99 * amax)
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * W.Wt(dst)
        z = z + alpha * W.Winv(dzt)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s)) and np.all(np.isfinite(z))):
            break

    if status == "IterLimit" and best is not None:
        _, x, s, z, y, pres, dres, relgap, _ = best
    return Solution(
        status=status,
        x=x,
        s=s,
        z=z,
        y=y,
        objective=float(c @ x) + prog.offset,
        primal_residual=float(pres),
        dual_residual=float(dres),
        gap=float(relgap),
        iterations=it,
    )

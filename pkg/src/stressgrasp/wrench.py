"""Wrench-space data model.

Convention: contact normals point into the object and contact forces are
the forces applied *to* the object (compression positive). The external
wrench balanced by a set of contact forces is ``w = -sum_i (f_i; x_i x f_i)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NonUnitNormal, NotSymmetric, SingularMoments
from .geom import GeometricMoments, SurfaceMesh, cross_matrix


@dataclass(frozen=True)
class FrictionModel:
    theta: float = 0.5

    def __post_init__(self):
        if not self.theta >= 0:
            raise ValueError("friction coefficient must be >= 0")


@dataclass(frozen=True)
class WrenchMetric:
    W: np.ndarray
    sqrtW: np.ndarray


@dataclass(frozen=True)
class BodyForceField:
    g0: np.ndarray  # (3,)
    grad_g: np.ndarray  # (3, 3), g(x) = g0 + grad_g @ x

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x)
        return self.g0 + x @ self.grad_g.T

    @property
    def params(self) -> np.ndarray:
        """12-vector [g0; columns of grad_g]."""
        return np.concatenate([self.g0, self.grad_g.T.ravel()])

    @classmethod
    def from_params(cls, p) -> "BodyForceField":
        p = np.asarray(p, dtype=float)
        return cls(p[:3].copy(), p[3:].reshape(3, 3).T.copy())


def wrench_map(positions) -> np.ndarray:
    """6 x 3n matrix H with w = H @ [f_1; ...; f_n]."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    H = np.zeros((6, 3 * len(pos)))
    for i, x in enumerate(pos):
        H[:3, 3 * i : 3 * i + 3] = -np.eye(3)
        H[3:, 3 * i : 3 * i + 3] = -cross_matrix(x)
    return H


def wrench_of_contacts(forces, contacts) -> np.ndarray:
    forces = [np.asarray(f, dtype=float) for f in forces]
    if len(forces) != len(contacts):
        raise LengthMismatch(f"{len(forces)} forces for {len(contacts)} contacts")
    w = np.zeros(6)
    for f, c in zip(forces, contacts):
        x = c.position if hasattr(c, "position") else np.asarray(c, dtype=float)
        w[:3] -= f
        w[3:] -= np.cross(x, f)
    return w


def friction_residual(f, n, theta: float) -> float:
    """||(I - n n^T) f|| - theta * n^T f; <= 0 inside the friction cone."""
    f = np.asarray(f, dtype=float)
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise NonUnitNormal(f"|n| = {np.linalg.norm(n)}")
    fn = float(n @ f)
    return float(np.linalg.norm(f - fn * n) - theta * fn)


def tangent_basis(n) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing n to a right-handed orthonormal frame."""
    n = np.asarray(n, dtype=float)
    a = np.eye(3)[int(np.argmin(np.abs(n)))]
    t1 = np.cross(n, a)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


class WrenchToBodyForce:
    """Least-squares linear body force reproducing a wrench through the moments.

    The 12 x 6 matrix ``G`` maps w to the parameters [g0; vec(grad g)].
    """

    def __init__(self, moments: GeometricMoments):
        T = moments.T_mat
        M = moments.M_mat
        Minv_Tt = np.linalg.solve(M, T.T)
        S = T @ Minv_Tt
        if np.linalg.cond(S) > 1e12 or np.linalg.cond(M) > 1e12:
            raise SingularMoments("moment matrices are singular")
        self.moments = moments
        G = np.zeros((12, 6))
        G[:3, :3] = np.eye(3) / moments.volume
        G[3:, 3:] = Minv_Tt @ np.linalg.inv(S)
        self.G = G

    def __call__(self, w) -> BodyForceField:
        return BodyForceField.from_params(self.G @ np.asarray(w, dtype=float))


def body_force_from_wrench(w, moments: GeometricMoments) -> BodyForceField:
    return WrenchToBodyForce(moments)(w)


def body_force_wrench(g: BodyForceField, mesh: SurfaceMesh) -> np.ndarray:
    """(int g, int x x g) over the solid by surface quadrature.

    int g = g0 |V| + grad_g int x, and int x x g = int x x g0 + sum_c T_c col_c,
    where the volume integrals are evaluated by the divergence theorem on the
    mesh (independent of the moment matrices used to build g).
    """
    pts, w = mesh.quadrature_points()
    xn = np.einsum("jqd,jd->jq", pts, mesh.normals)
    wx = w * xn
    # int x_a dV = (1/4) surf x_a (x.n); int x_a x_b dV = (1/5) surf x_a x_b (x.n)
    vol = wx.sum() / 3.0
    first = np.einsum("jq,jqd->d", wx, pts) / 4.0
    second = np.einsum("jq,jqa,jqb->ab", wx, pts, pts) / 5.0
    force = g.g0 * vol + g.grad_g @ first
    # int x x (grad_g x) = eps_{iab} int x_a (grad_g)_{bc} x_c
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1
    torque = np.cross(first, g.g0) + np.einsum("iab,bc,ac->i", eps, g.grad_g, second)
    return np.concatenate([force, torque])


def metric_sqrt(W) -> WrenchMetric:
    W = np.asarray(W, dtype=float)
    if W.shape != (6, 6):
        raise ValueError("W must be 6x6")
    if np.max(np.abs(W - W.T)) > 1e-12 * max(1.0, np.max(np.abs(W))):
        raise NotSymmetric("wrench metric is not symmetric")
    Ws = 0.5 * (W + W.T)
    lam, V = np.linalg.eigh(Ws)
    if lam.min() < -1e-12 * max(1.0, lam.max()):
        raise ValueError("wrench metric is not positive semidefinite")
    root = (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T
    return WrenchMetric(W=Ws, sqrtW=0.5 * (root + root.T))

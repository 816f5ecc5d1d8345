"""Incremental convex hull in six dimensions (beneath-beyond).

Facets are stored as unit outward normals d and offsets b (d^T x <= b)
together with their six defining vertex indices; ridges (five-vertex
subsets) map to their two adjacent facets.
"""
from __future__ import annotations

import json
from itertools import combinations

import numpy as np

from .errors import DegenerateSpan

DIM = 6


class WrenchHull:
    """Full-dimensional convex polytope in R^6 with V- and H-representation."""

    def __init__(self, points, interior_point, eps: float):
        pts = np.asarray(points, dtype=float).reshape(-1, DIM)
        self._pts = np.zeros((max(64, 2 * len(pts)), DIM))
        self._pts[: len(pts)] = pts
        self._npts = len(pts)
        self.interior_point = np.asarray(interior_point, dtype=float)
        self.eps = float(eps)
        cap = 64
        self._normals = np.zeros((cap, DIM))
        self._offsets = np.zeros(cap)
        self._alive = np.zeros(cap, dtype=bool)
        self._verts: list[tuple[int, ...] | None] = []
        self._ridges: dict[tuple[int, ...], list[int]] = {}

    # -- storage -------------------------------------------------------------
    def _new_facets(self, vert_list: list[tuple[int, ...]]) -> None:
        if not vert_list:
            return
        P = self._pts[np.array(vert_list)]
        base = P[:, 0]
        # each normal spans the null space of its 5 edge vectors: the last
        # column of a complete QR factor of the 6x5 edge matrix
        Q, _ = np.linalg.qr(np.swapaxes(P[:, 1:] - base[:, None, :], 1, 2), mode="complete")
        d = Q[:, :, -1]
        b = np.einsum("ij,ij->i", d, base)
        flip = d @ self.interior_point > b
        d[flip] *= -1
        b[flip] *= -1
        need = len(self._verts) + len(vert_list)
        if need > len(self._alive):
            grow = max(need, 2 * len(self._alive)) - len(self._alive)
            self._normals = np.vstack([self._normals, np.zeros((grow, DIM))])
            self._offsets = np.concatenate([self._offsets, np.zeros(grow)])
            self._alive = np.concatenate([self._alive, np.zeros(grow, dtype=bool)])
        f0 = len(self._verts)
        self._normals[f0:need] = d
        self._offsets[f0:need] = b
        self._alive[f0:need] = True
        for fid, verts in enumerate(vert_list, start=f0):
            self._verts.append(verts)
            for k in range(DIM):
                self._ridges.setdefault(verts[:k] + verts[k + 1 :], []).append(fid)

    def _kill(self, fid: int) -> None:
        verts = self._verts[fid]
        self._alive[fid] = False
        for k in range(DIM):
            ridge = verts[:k] + verts[k + 1 :]
            lst = self._ridges[ridge]
            lst.remove(fid)
            if not lst:
                del self._ridges[ridge]

    # -- views ---------------------------------------------------------------
    @property
    def points(self) -> np.ndarray:
        return self._pts[: self._npts]

    @property
    def facet_ids(self) -> np.ndarray:
        return np.flatnonzero(self._alive[: len(self._verts)])

    @property
    def normals(self) -> np.ndarray:
        return self._normals[self.facet_ids]

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets[self.facet_ids]

    @property
    def facets(self) -> list[tuple[np.ndarray, float, tuple[int, ...]]]:
        return [(self._normals[f].copy(), float(self._offsets[f]), self._verts[f]) for f in self.facet_ids]

    @property
    def vertices(self) -> np.ndarray:
        used = sorted({i for f in self.facet_ids for i in self._verts[f]})
        return self._pts[used].copy()

    @property
    def n_facets(self) -> int:
        return int(self._alive[: len(self._verts)].sum())

    def contains(self, p, slack: float | None = None) -> bool:
        slack = self.eps if slack is None else slack
        return bool(np.all(self.normals @ np.asarray(p) <= self.offsets + slack))

    def to_json(self) -> str:
        return json.dumps(
            {
                "points": self.points.tolist(),
                "interior_point": self.interior_point.tolist(),
                "facets": [
                    {"normal": d.tolist(), "offset": b, "vertices": list(v)} for d, b, v in self.facets
                ],
            }
        )

    # -- operations ------------------------------------------------------------
    def add_point(self, p) -> bool:
        """Insert p. Returns False when the hull is unchanged.

        A point inside the hull (within eps) is ignored. The visible region is
        the connected set of facets seen from p around the most visible one;
        if its boundary is not a closed 4-manifold (possible for points within
        rounding of several facet planes) the point is rejected, which keeps
        the hull a valid inner polytope.
        """
        p = np.asarray(p, dtype=float)
        n_used = len(self._verts)
        dist = self._normals[:n_used] @ p - self._offsets[:n_used]
        seen = self._alive[:n_used] & (dist > self.eps)
        if not seen.any():
            return False
        start = int(np.argmax(np.where(seen, dist, -np.inf)))
        vis = {start}
        stack = [start]
        horizon = []  # (ridge, surviving neighbour)
        inner = []
        ridges = self._ridges
        while stack:
            fid = stack.pop()
            verts = self._verts[fid]
            for k in range(DIM):
                ridge = verts[:k] + verts[k + 1 :]
                a, b = ridges[ridge]
                other = b if a == fid else a
                if not seen[other]:
                    horizon.append((ridge, other))
                elif other not in vis:
                    vis.add(other)
                    stack.append(other)
                elif fid < other:
                    inner.append(ridge)
        # every 4-face of the horizon must bound exactly two horizon ridges
        count: dict[tuple[int, ...], int] = {}
        for ridge, _ in horizon:
            for k in range(DIM - 1):
                sub = ridge[:k] + ridge[k + 1 :]
                count[sub] = count.get(sub, 0) + 1
        if any(c != 2 for c in count.values()):
            return False
        if self._npts == len(self._pts):
            self._pts = np.vstack([self._pts, np.zeros_like(self._pts)])
        pid = self._npts
        self._pts[pid] = p
        self._npts += 1
        self._alive[list(vis)] = False
        for ridge in inner:
            del ridges[ridge]
        for ridge, other in horizon:
            ridges[ridge] = [other]
        self._new_facets([tuple(sorted(ridge + (pid,))) for ridge, _ in horizon])
        return True


def _select_simplex(P: np.ndarray, rank_tol: float) -> list[int]:
    """Greedily pick 7 affinely independent points (farthest from the current
    affine hull); raises DegenerateSpan if the points span fewer than 6 dims."""
    c = P.mean(axis=0)
    sv = np.linalg.svd(P - c, compute_uv=False)
    scale = max(float(np.ptp(P, axis=0).max()), 1e-300)
    if len(P) < DIM + 1 or sv[DIM - 1] <= rank_tol * max(sv[0], 1e-300):
        raise DegenerateSpan(
            f"points span {int(np.sum(sv > rank_tol * max(sv[0], 1e-300)))} dimensions"
        )
    first = int(np.argmax(np.linalg.norm(P - c, axis=1)))
    chosen = [first]
    basis = np.zeros((0, DIM))
    for _ in range(DIM):
        rel = P - P[first]
        resid = rel - (rel @ basis.T) @ basis
        dists = np.linalg.norm(resid, axis=1)
        k = int(np.argmax(dists))
        if dists[k] <= rank_tol * scale:
            raise DegenerateSpan("points are affinely dependent")
        chosen.append(k)
        basis = np.vstack([basis, resid[k] / dists[k]])
    return chosen


def init_hull(points, eps_rel: float = 1e-9, rank_tol: float = 1e-6) -> WrenchHull:
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[1] != DIM:
        raise ValueError("points must be 6-vectors")
    simplex = _select_simplex(P, rank_tol)
    diam = float(np.linalg.norm(np.ptp(P, axis=0)))
    interior = P[simplex].mean(axis=0)
    hull = WrenchHull(P[simplex], interior, eps_rel * max(diam, 1e-300))
    hull._new_facets([tuple(k for k in range(DIM + 1) if k != omit) for omit in range(DIM + 1)])
    for i in range(len(P)):
        if i not in simplex:
            hull.add_point(P[i])
    return hull


def min_face_distance(hull: WrenchHull, origin=None):
    """Distance from the origin to the nearest facet and that facet's normal.

    Returns r = 0 with the most violated facet normal when the origin is not
    strictly inside.
    """
    o = np.zeros(DIM) if origin is None else np.asarray(origin)
    ids = hull.facet_ids
    margins = hull._offsets[ids] - hull._normals[ids] @ o
    k = int(np.argmin(margins))  # argmin returns the first (lowest id) on ties
    if margins[k] <= hull.eps:
        return 0.0, hull._normals[ids[k]].copy()
    return float(margins[k]), hull._normals[ids[k]].copy()


def brute_force_facets(points, tol: float = 1e-9) -> list[tuple[np.ndarray, float]]:
    """All supporting hyperplanes through 6-point subsets (test oracle)."""
    P = np.asarray(points, dtype=float)
    out = []
    for sub in combinations(range(len(P)), DIM):
        Q = P[list(sub)]
        Dm = Q[1:] - Q[0]
        _, sv, Vt = np.linalg.svd(Dm)
        if sv[-1] < 1e-9:
            continue
        d = Vt[-1]
        b = d @ Q[0]
        vals = P @ d - b
        if np.all(vals <= tol):
            out.append((d, b))
        elif np.all(vals >= -tol):
            out.append((-d, -b))
    # dedupe
    uniq: list[tuple[np.ndarray, float]] = []
    for d, b in out:
        if not any(np.allclose(d, e) and abs(b - c) < 1e-9 for e, c in uniq):
            uniq.append((d, b))
    return uniq

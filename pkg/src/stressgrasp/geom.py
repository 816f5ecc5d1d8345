"""Triangle-mesh ingestion, validation, normalization, volume moments and
contact-candidate sampling."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateMesh,
    InvertedOrientation,
    IsolatedVertex,
    NotWatertight,
    ParseError,
    SamplingFailure,
)
from .quadrature import DUNAVANT7_BARY, DUNAVANT7_W


def cross_matrix(v) -> np.ndarray:
    """Matrix [v]x with [v]x @ u == cross(v, u)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# --------------------------------------------------------------------------
# topology helpers


def _edge_check(triangles: np.ndarray, n_vertices: int):
    """Return undirected edge keys, their use counts and per-use triangle ids."""
    tri = np.asarray(triangles)
    a = tri[:, [0, 1, 2]].ravel()
    b = tri[:, [1, 2, 0]].ravel()
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    keys = lo.astype(np.int64) * n_vertices + hi
    uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
    return a, b, keys, uniq, inv, counts


def _check_watertight(triangles: np.ndarray, n_vertices: int):
    a, b, keys, uniq, inv, counts = _edge_check(triangles, n_vertices)
    bad = np.flatnonzero(counts != 2)
    if bad.size:
        edges = [(int(k // n_vertices), int(k % n_vertices)) for k in uniq[bad]]
        n_open = int(np.sum(counts[bad] == 1))
        raise NotWatertight(
            f"mesh is not a closed 2-manifold: {len(edges)} bad edges "
            f"({n_open} boundary): {edges[:10]}",
            edges,
        )
    return a, b, inv


def orient_consistently(triangles: np.ndarray, n_vertices: int) -> np.ndarray:
    """Flip triangles so every edge is used once in each direction.

    Raises InvertedOrientation for non-orientable surfaces.
    """
    tri = np.array(triangles, dtype=np.int64, copy=True)
    K = len(tri)
    a, b, inv = _check_watertight(tri, n_vertices)
    # pair the two uses of each edge
    order = np.argsort(inv, kind="stable")
    uses = order.reshape(-1, 2)
    t0, t1 = uses[:, 0] // 3, uses[:, 1] // 3
    same_dir = a[uses[:, 0]] == a[uses[:, 1]]
    adj: list[list[tuple[int, bool]]] = [[] for _ in range(K)]
    for p, q, s in zip(t0.tolist(), t1.tolist(), same_dir.tolist()):
        adj[p].append((q, s))
        adj[q].append((p, s))
    flip = np.full(K, -1, dtype=np.int8)
    for root in range(K):
        if flip[root] >= 0:
            continue
        flip[root] = 0
        queue = deque([root])
        while queue:
            t = queue.popleft()
            for nb, s in adj[t]:
                want = flip[t] ^ int(s)
                if flip[nb] < 0:
                    flip[nb] = want
                    queue.append(nb)
                elif flip[nb] != want:
                    raise InvertedOrientation("surface is not orientable")
    f = flip.astype(bool)
    tri[f] = tri[f][:, [0, 2, 1]]
    return tri


def _signed_volume(vertices: np.ndarray, triangles: np.ndarray) -> float:
    p0, p1, p2 = (vertices[triangles[:, k]] for k in range(3))
    return float(np.einsum("ij,ij->", p0, np.cross(p1, p2)) / 6.0)


# --------------------------------------------------------------------------
# mesh type


class SurfaceMesh:
    """Watertight, outward-oriented triangle mesh in normalized units.

    Instances are read-only. Use :meth:`from_arrays` (or :func:`load_mesh`)
    to validate, orient and normalize raw data.
    """

    def __init__(
        self,
        vertices,
        triangles,
        scale_factor: float = 1.0,
        origin=(0.0, 0.0, 0.0),
    ):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.scale_factor = float(scale_factor)
        self.origin = np.asarray(origin, dtype=float)
        p0, p1, p2 = (self.vertices[self.triangles[:, k]] for k in range(3))
        cr = np.cross(p1 - p0, p2 - p0)
        dbl = np.linalg.norm(cr, axis=1)
        if np.any(dbl <= 0):
            raise DegenerateMesh("zero-area triangle")
        self.areas = 0.5 * dbl
        self.normals = cr / dbl[:, None]
        self.centroids = (p0 + p1 + p2) / 3.0
        for arr in (self.vertices, self.triangles, self.areas, self.normals, self.centroids):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, vertices, triangles, normalize: bool = True) -> "SurfaceMesh":
        v = np.asarray(vertices, dtype=float)
        t = np.asarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or t.ndim != 2 or t.shape[1] != 3:
            raise ParseError("vertices and triangles must be (n, 3) arrays")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ParseError("triangle index out of range")
        if len(t) < 4:
            raise NotWatertight("fewer than 4 triangles cannot enclose a volume")
        if not np.all(np.isfinite(v)):
            raise ParseError("non-finite vertex coordinates")
        # drop unreferenced vertices
        used = np.unique(t)
        if len(used) != len(v):
            remap = np.full(len(v), -1, dtype=np.int64)
            remap[used] = np.arange(len(used))
            v = v[used]
            t = remap[t]
        diag0 = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
        if diag0 <= 0:
            raise DegenerateMesh("all vertices coincide")
        p0, p1, p2 = (v[t[:, k]] for k in range(3))
        dbl = np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
        if np.any(dbl <= 1e-14 * diag0**2):
            raise DegenerateMesh(f"{int(np.sum(dbl <= 1e-14 * diag0**2))} degenerate triangles")
        t = orient_consistently(t, len(v))
        vol = _signed_volume(v, t)
        if vol < 0:
            t = t[:, [0, 2, 1]]
            vol = -vol
        if vol <= 1e-14 * diag0**3:
            raise InvertedOrientation("non-positive signed volume after orientation fix")
        if not normalize:
            return cls(v, t)
        raw = cls(v, t)
        c = _volume_integrals(raw)[1] / vol
        scale = diag0
        return cls((v - c) / scale, t, scale_factor=scale, origin=c)

    # derived quantities -------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    @cached_property
    def signed_volume(self) -> float:
        """Volume by the divergence theorem, (1/3) * sum a_j n_j . c_j."""
        return float(np.einsum("j,ji,ji->", self.areas, self.normals, self.centroids) / 3.0)

    @cached_property
    def tetra_volume(self) -> float:
        """Volume as a sum of signed tetrahedra to the origin."""
        return _signed_volume(self.vertices, self.triangles)

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        """Lumped area per vertex (one third of each incident triangle)."""
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.triangles.ravel(), np.repeat(self.areas / 3.0, 3))
        return out

    @cached_property
    def vertex_triangles(self) -> list[np.ndarray]:
        order = np.argsort(self.triangles.ravel(), kind="stable")
        verts = self.triangles.ravel()[order]
        splits = np.searchsorted(verts, np.arange(1, self.n_vertices))
        return [o // 3 for o in np.split(order, splits)]

    @cached_property
    def diameters(self) -> np.ndarray:
        """Longest edge length of each triangle."""
        p = self.vertices[self.triangles]
        e = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return e.max(axis=1)

    def quadrature_points(self, bary=DUNAVANT7_BARY, weights=DUNAVANT7_W):
        """Points (K, q, 3) and weights (K, q) including triangle areas."""
        p = self.vertices[self.triangles]
        pts = np.einsum("qk,jkd->jqd", bary, p)
        w = self.areas[:, None] * weights[None, :]
        return pts, w

    def to_original(self, points) -> np.ndarray:
        return np.asarray(points) * self.scale_factor + self.origin

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
        return h.hexdigest()


# --------------------------------------------------------------------------
# readers / writers


def _read_obj(text: str):
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].split()
        if not s:
            continue
        try:
            if s[0] == "v":
                verts.append([float(x) for x in s[1:4]])
                if len(s) < 4:
                    raise ValueError("vertex needs 3 coordinates")
            elif s[0] == "f":
                idx = []
                for tok in s[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ValueError("face needs at least 3 vertices")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    return verts, faces


def _read_off(text: str):
    tokens = []
    for line in text.splitlines():
        s = line.split("#", 1)[0].split()
        tokens.extend(s)
    if not tokens or not tokens[0].endswith("OFF"):
        raise ParseError("missing OFF header")
    pos = 1
    try:
        nv, nf = int(tokens[pos]), int(tokens[pos + 1])
        pos += 3
        verts = []
        for _ in range(nv):
            verts.append([float(t) for t in tokens[pos : pos + 3]])
            pos += 3
        faces = []
        for _ in range(nf):
            m = int(tokens[pos])
            idx = [int(t) for t in tokens[pos + 1 : pos + 1 + m]]
            if len(idx) != m or m < 3:
                raise ValueError("truncated face record")
            pos += 1 + m
            for k in range(1, m - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed OFF data: {exc}") from exc
    if any(len(v) != 3 for v in verts):
        raise ParseError("truncated vertex record")
    return verts, faces


def load_mesh(path, format: str | None = None, normalize: bool = True) -> SurfaceMesh:
    """Read an OBJ or OFF file and return a validated, normalized mesh."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if fmt == "OBJ":
        verts, faces = _read_obj(text)
    elif fmt == "OFF":
        verts, faces = _read_off(text)
    else:
        raise ParseError(f"unsupported mesh format {fmt!r}")
    if not verts or not faces:
        raise ParseError(f"{path}: no geometry")
    return SurfaceMesh.from_arrays(np.array(verts, dtype=float), np.array(faces), normalize=normalize)


def write_obj(path, vertices, triangles) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in np.asarray(vertices)]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(triangles)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_off(path, vertices, triangles) -> None:
    v = np.asarray(vertices)
    t = np.asarray(triangles)
    lines = ["OFF", f"{len(v)} {len(t)} 0"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in v]
    lines += [f"3 {a} {b} {c}" for a, b, c in t]
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class GeometricMoments:
    volume: float
    centroid: np.ndarray
    second_moment: np.ndarray  # integral of x x^T over the solid

    @property
    def T_mat(self) -> np.ndarray:
        """3x9 map from stacked columns of grad g to the torque of g."""
        S = self.second_moment
        return np.hstack([cross_matrix(S[:, k]) for k in range(3)])

    @property
    def M_mat(self) -> np.ndarray:
        return np.kron(self.second_moment, np.eye(3))

    @property
    def first_moment(self) -> np.ndarray:
        return self.centroid * self.volume


def _volume_integrals(mesh: SurfaceMesh):
    """Volume, first and second moments via surface integrals.

    Uses div(x) = 3, div(x x_i) = 4 x_i and div(x x_i x_j) = 5 x_i x_j.
    The surface integrands are polynomials of degree <= 3 on flat
    triangles, so the degree-5 rule is exact.
    """
    pts, w = mesh.quadrature_points()
    xn = np.einsum("jqd,jd->jq", pts, mesh.normals)
    wx = w * xn
    vol = float(wx.sum()) / 3.0
    first = np.einsum("jq,jqd->d", wx, pts) / 4.0
    second = np.einsum("jq,jqa,jqb->ab", wx, pts, pts) / 5.0
    return vol, first, 0.5 * (second + second.T)


def compute_moments(mesh: SurfaceMesh) -> GeometricMoments:
    vol, first, second = _volume_integrals(mesh)
    if vol <= 1e-14:
        raise DegenerateMesh(f"volume {vol:g} is not positive")
    return GeometricMoments(volume=vol, centroid=first / vol, second_moment=second)


# --------------------------------------------------------------------------
# contacts


@dataclass(frozen=True)
class ContactPoint:
    position: np.ndarray
    normal: np.ndarray  # unit, pointing into the object
    triangle: int
    index: int = 0

    def to_json(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "normal": [float(x) for x in self.normal],
            "triangle": int(self.triangle),
        }


def contacts_to_json(contacts) -> str:
    return json.dumps([c.to_json() for c in contacts], indent=1)


def contacts_from_json(text: str, mesh: SurfaceMesh | None = None) -> list[ContactPoint]:
    try:
        data = json.loads(text)
        out = []
        for i, rec in enumerate(data):
            x = np.array(rec["position"], dtype=float)
            n = np.array(rec["normal"], dtype=float)
            if x.shape != (3,) or n.shape != (3,):
                raise ValueError("position and normal must have 3 entries")
            n = n / np.linalg.norm(n)
            out.append(ContactPoint(x, n, int(rec["triangle"]), i))
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad contact JSON: {exc}") from exc
    if mesh is not None:
        for c in out:
            if not 0 <= c.triangle < mesh.n_triangles:
                raise ParseError(f"contact {c.index}: triangle {c.triangle} out of range")
    return out


def contact_at(mesh: SurfaceMesh, triangle: int, bary, index: int = 0) -> ContactPoint:
    """Contact at barycentric coordinates of a triangle, normal pointing inward."""
    p = mesh.vertices[mesh.triangles[triangle]]
    x = np.asarray(bary, dtype=float) @ p
    return ContactPoint(x, -mesh.normals[triangle].copy(), int(triangle), index)


def closest_points_on_triangles(mesh: SurfaceMesh, point):
    """Closest point of every triangle to `point`: (K, 3) points, (K, 3) barycentrics."""
    q = np.asarray(point, dtype=float)
    P = mesh.vertices[mesh.triangles]
    a, b, c = P[:, 0], P[:, 1], P[:, 2]
    nrm = np.cross(b - a, c - a)
    # projection onto the plane, accepted where all barycentrics are >= 0
    d = q - a
    n2 = np.einsum("ij,ij->i", nrm, nrm)
    l1 = np.einsum("ij,ij->i", np.cross(d, c - a), nrm) / n2
    l2 = np.einsum("ij,ij->i", np.cross(b - a, d), nrm) / n2
    bary = np.stack([1 - l1 - l2, l1, l2], axis=1)
    inside = np.all(bary >= 0, axis=1)
    best = np.where(inside[:, None], bary, np.nan)
    best_d = np.where(inside, np.abs(np.einsum("ij,ij->i", d, nrm)) / np.sqrt(n2), np.inf)
    # otherwise the closest point lies on an edge
    for i, j in ((0, 1), (1, 2), (2, 0)):
        e = P[:, j] - P[:, i]
        t = np.clip(np.einsum("ij,ij->i", q - P[:, i], e) / np.einsum("ij,ij->i", e, e), 0.0, 1.0)
        x = P[:, i] + t[:, None] * e
        dist = np.linalg.norm(q - x, axis=1)
        better = ~inside & (dist < best_d)
        bb = np.zeros((len(P), 3))
        bb[:, i] = 1 - t
        bb[:, j] = t
        best = np.where(better[:, None], bb, best)
        best_d = np.where(better, dist, best_d)
    return np.einsum("ki,kid->kd", best, P), best, best_d


def closest_contact(mesh: SurfaceMesh, point, index: int = 0) -> ContactPoint:
    """Contact at the surface point closest to `point` (lowest triangle index on ties)."""
    _, bary, dist = closest_points_on_triangles(mesh, point)
    j = int(np.argmin(dist))
    return contact_at(mesh, j, bary[j], index)


def poisson_disk_contacts(
    mesh: SurfaceMesh,
    N: int,
    seed: int = 0,
    max_failures: int = 200,
    anneal: float = 0.9,
    margin: float = 0.1,
) -> list[ContactPoint]:
    """Dart-throwing Poisson-disk sample of N surface points.

    The rejection radius starts at sqrt(area / N) and shrinks by `anneal`
    after `max_failures` consecutive rejected darts. Points are drawn
    area-weighted, with barycentric coordinates pulled toward the centroid
    by `margin` so that no point lands on an edge or vertex.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    prob = mesh.areas / mesh.total_area
    radius = np.sqrt(mesh.total_area / N)
    floor = 1e-4 * mesh.bbox_diagonal
    tris = mesh.vertices[mesh.triangles]
    pts = np.empty((N, 3))
    hosts, bars = [], []
    count = 0
    fails = 0
    batch = 256
    while count < N:
        js = rng.choice(mesh.n_triangles, size=batch, p=prob)
        r1 = np.sqrt(rng.random(batch))
        r2 = rng.random(batch)
        b = np.stack([1 - r1, r1 * (1 - r2), r1 * r2], axis=1)
        b = (1 - margin) * b + margin / 3.0
        cand = np.einsum("bk,bkd->bd", b, tris[js])
        for q in range(batch):
            if count and np.min(np.sum((pts[:count] - cand[q]) ** 2, axis=1)) < radius**2:
                fails += 1
                if fails >= max_failures:
                    radius *= anneal
                    fails = 0
                    if radius < floor:
                        raise SamplingFailure(
                            f"radius fell below {floor:g} with {count}/{N} points"
                        )
                continue
            pts[count] = cand[q]
            hosts.append(int(js[q]))
            bars.append(b[q])
            count += 1
            fails = 0
            if count == N:
                break
    return [
        ContactPoint(pts[i].copy(), -mesh.normals[hosts[i]].copy(), hosts[i], i)
        for i in range(N)
    ]


# --------------------------------------------------------------------------
# solid angles


def _fan_cycle(mesh: SurfaceMesh, vertex: int) -> list[int]:
    tris = mesh.vertex_triangles[vertex] if vertex < mesh.n_vertices else []
    if len(tris) < 3:
        raise IsolatedVertex(f"vertex {vertex} has {len(tris)} incident triangles")
    nxt = {}
    for t in tris:
        a, b, c = (int(x) for x in mesh.triangles[t])
        if a == vertex:
            nxt[b] = c
        elif b == vertex:
            nxt[c] = a
        else:
            nxt[a] = b
    start = next(iter(nxt))
    ring = [start]
    cur = nxt[start]
    while cur != start:
        ring.append(cur)
        cur = nxt[cur]
        if len(ring) > len(nxt):
            raise IsolatedVertex(f"vertex {vertex} has a non-manifold fan")
    if len(ring) != len(nxt):
        raise IsolatedVertex(f"vertex {vertex} has a non-manifold fan")
    return ring


def solid_angle(mesh: SurfaceMesh, vertex: int) -> float:
    """Interior solid angle at a mesh vertex.

    The neighbor directions form a spherical polygon around the vertex; its
    area is obtained from the signed turning angles (spherical Gauss-Bonnet).
    The fan winds counter-clockwise seen from outside, which places the
    solid on the right-hand side of the polygon, so the interior area is
    2*pi plus the sum of signed turning angles.
    """
    ring = _fan_cycle(mesh, vertex)
    p = mesh.vertices[ring] - mesh.vertices[vertex]
    p /= np.linalg.norm(p, axis=1)[:, None]
    prev = np.roll(p, 1, axis=0)
    nxt = np.roll(p, -1, axis=0)
    t_in = -(prev - np.sum(prev * p, axis=1)[:, None] * p)
    t_out = nxt - np.sum(nxt * p, axis=1)[:, None] * p
    turn = np.arctan2(np.sum(np.cross(t_in, t_out) * p, axis=1), np.sum(t_in * t_out, axis=1))
    return float(2 * np.pi + turn.sum())


def solid_angles(mesh: SurfaceMesh) -> np.ndarray:
    return np.array([solid_angle(mesh, v) for v in range(mesh.n_vertices)])


def angle_defects(mesh: SurfaceMesh) -> np.ndarray:
    """2*pi minus the sum of face angles at each vertex."""
    p = mesh.vertices[mesh.triangles]
    out = np.full(mesh.n_vertices, 2 * np.pi)
    for k in range(3):
        e1 = p[:, (k + 1) % 3] - p[:, k]
        e2 = p[:, (k + 2) % 3] - p[:, k]
        ang = np.arctan2(np.linalg.norm(np.cross(e1, e2), axis=1), np.sum(e1 * e2, axis=1))
        np.subtract.at(out, mesh.triangles[:, k], ang)
    return out

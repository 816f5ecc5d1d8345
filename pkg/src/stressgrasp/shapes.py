"""Procedural test solids: icosphere, boxes, octahedron and square-section
lofted tubes (used for asymmetric dumbbells)."""
from __future__ import annotations

import numpy as np

from .geom import SurfaceMesh


def icosphere_arrays(level: int, radius: float = 1.0):
    t = (1.0 + 5.0**0.5) / 2.0
    v = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    f = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return radius * np.array(verts), np.array(faces, dtype=np.int64)


def icosphere(level: int, radius: float = 1.0, normalize: bool = True) -> SurfaceMesh:
    v, f = icosphere_arrays(level, radius)
    return SurfaceMesh.from_arrays(v, f, normalize=normalize)


def octahedron_arrays():
    v = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    f = np.array(
        [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]]
    )
    return v, f


def box_arrays(size=(1.0, 1.0, 1.0), divisions: int | tuple[int, int, int] = 1):
    """Closed box surface centered at the origin, each face a regular grid."""
    sx, sy, sz = (0.5 * float(s) for s in size)
    if np.isscalar(divisions):
        divisions = (int(divisions),) * 3
    nd = [int(d) for d in divisions]
    lo = np.array([-sx, -sy, -sz])
    hi = np.array([sx, sy, sz])
    verts: dict[tuple, int] = {}
    coords: list[np.ndarray] = []
    tris: list[tuple[int, int, int]] = []

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in verts:
            verts[key] = len(coords)
            coords.append(np.array(p, dtype=float))
        return verts[key]

    for axis in range(3):
        u, w = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, 1):
            grid = {}
            for i in range(nd[u] + 1):
                for k in range(nd[w] + 1):
                    p = np.empty(3)
                    p[axis] = hi[axis] if side else lo[axis]
                    p[u] = lo[u] + (hi[u] - lo[u]) * i / nd[u]
                    p[w] = lo[w] + (hi[w] - lo[w]) * k / nd[w]
                    grid[i, k] = vid(p)
            for i in range(nd[u]):
                for k in range(nd[w]):
                    a, b = grid[i, k], grid[i + 1, k]
                    c, d = grid[i + 1, k + 1], grid[i, k + 1]
                    # (u, w, axis) is right-handed, so (a, b, c) faces +axis
                    if side:
                        tris += [(a, b, c), (a, c, d)]
                    else:
                        tris += [(a, c, b), (a, d, c)]
    return np.array(coords), np.array(tris, dtype=np.int64)


def box(size=(1.0, 1.0, 1.0), divisions=1, normalize: bool = True) -> SurfaceMesh:
    v, f = box_arrays(size, divisions)
    return SurfaceMesh.from_arrays(v, f, normalize=normalize)


def _ring(x: float, half: float, m: int) -> np.ndarray:
    """Perimeter of the square [-half, half]^2 at axial coordinate x (4m points)."""
    s = np.linspace(-half, half, m + 1)[:-1]
    y = np.concatenate([s, np.full(m, half), -s, np.full(m, -half)])
    z = np.concatenate([np.full(m, -half), s, np.full(m, half), -s])
    return np.stack([np.full(4 * m, x), y, z], axis=1)


def _cap(ring_ids: np.ndarray, x: float, half: float, m: int, coords: list, front: bool):
    """Triangulated square cap whose boundary reuses the ring vertices."""
    grid = np.empty((m + 1, m + 1), dtype=np.int64)
    for i in range(m + 1):
        for j in range(m + 1):
            if j == 0:
                p = i
            elif i == m:
                p = m + j
            elif j == m:
                p = 2 * m + (m - i)
            elif i == 0:
                p = (3 * m + (m - j)) % (4 * m)
            else:
                p = None
            if p is not None:
                grid[i, j] = ring_ids[p]
            else:
                coords.append(np.array([x, -half + 2 * half * i / m, -half + 2 * half * j / m]))
                grid[i, j] = len(coords) - 1
    tris = []
    for i in range(m):
        for j in range(m):
            a, b, c, d = grid[i, j], grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]
            tris += [(a, b, c), (a, c, d)]
    return tris


def tube_arrays(profile, m: int = 4, axial_step: float | None = None, step_rings: int = 1):
    """Square-section solid lofted along x.

    `profile` is a list of (x_start, x_end, half_width) segments, contiguous in
    x. Width changes create planar annular steps. Every ring has 4m points,
    so all pieces conform. Orientation is fixed afterwards by the mesh
    constructor.
    """
    coords: list[np.ndarray] = []
    rings: list[np.ndarray] = []

    def add_ring(x, half):
        pts = _ring(x, half, m)
        ids = np.arange(len(coords), len(coords) + len(pts))
        coords.extend(pts)
        rings.append(ids)

    for k, (x0, x1, half) in enumerate(profile):
        step = axial_step if axial_step is not None else 2 * half / m
        n = max(1, int(np.ceil((x1 - x0) / step - 1e-9)))
        xs = np.linspace(x0, x1, n + 1)
        if k > 0:
            prev_half = profile[k - 1][2]
            for s in range(1, step_rings):
                add_ring(x0, prev_half + (half - prev_half) * s / step_rings)
            add_ring(x0, half)
        else:
            add_ring(x0, half)
        for x in xs[1:]:
            add_ring(x, half)
    tris: list[tuple[int, int, int]] = []
    for r0, r1 in zip(rings[:-1], rings[1:]):
        for p in range(4 * m):
            q = (p + 1) % (4 * m)
            tris += [(r0[p], r0[q], r1[q]), (r0[p], r1[q], r1[p])]
    x_first, _, h_first = profile[0]
    _, x_last, h_last = profile[-1]
    tris += _cap(rings[0], x_first, h_first, m, coords, front=True)
    tris += _cap(rings[-1], x_last, h_last, m, coords, front=False)
    return np.array(coords), np.array(tris, dtype=np.int64)


def tube(profile, m: int = 4, axial_step=None, step_rings: int = 1, normalize: bool = True):
    v, f = tube_arrays(profile, m, axial_step, step_rings)
    return SurfaceMesh.from_arrays(v, f, normalize=normalize)


def loft_arrays(xs, halves, m: int = 4):
    """Square-section solid through rings of half-width `halves[i]` at `xs[i]`.

    Each lateral panel between consecutive rings is planar, so the enclosed
    volume is a union of square frusta.
    """
    coords: list[np.ndarray] = []
    rings = []
    for x, half in zip(xs, halves):
        pts = _ring(x, half, m)
        rings.append(np.arange(len(coords), len(coords) + len(pts)))
        coords.extend(pts)
    tris: list[tuple[int, int, int]] = []
    for r0, r1 in zip(rings[:-1], rings[1:]):
        for p in range(4 * m):
            q = (p + 1) % (4 * m)
            tris += [(r0[p], r0[q], r1[q]), (r0[p], r1[q], r1[p])]
    tris += _cap(rings[0], xs[0], halves[0], m, coords, front=True)
    tris += _cap(rings[-1], xs[-1], halves[-1], m, coords, front=False)
    return np.array(coords), np.array(tris, dtype=np.int64)


def _frusta_moments(xs, halves):
    """Volume and first x-moment of the lofted solid (Simpson is exact here)."""
    xs = np.asarray(xs)
    h = np.asarray(halves)
    xa, xb, ha, hb = xs[:-1], xs[1:], h[:-1], h[1:]
    xm, hm = (xa + xb) / 2, (ha + hb) / 2
    dx = xb - xa
    vol = dx / 6 * 4 * (ha**2 + 4 * hm**2 + hb**2)
    mom = dx / 6 * 4 * (xa * ha**2 + 4 * xm * hm**2 + xb * hb**2)
    return float(vol.sum()), float(mom.sum())


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def dumbbell_profile(
    knob_half: float = 0.2,
    neck_half: float = 0.1,
    thin_ratio: float = 0.5,
    knob_len: float = 0.4,
    neck_len: float = 0.5,
    hub_len: float = 0.4,
    blend: float = 0.15,
    balance: bool = True,
    hub_thin: float | None = None,
):
    """Knob-neck-hub-neck-knob half-width profile as a function of x.

    Returns (half_fn, x_min, x_max, boundaries). The negative-x neck has
    `thin_ratio` times the cross-section area of the positive-x neck. Width
    changes are smoothstep blends of axial length `blend`, so the surface has
    no re-entrant edges (where elastic stress would be unbounded). The
    negative-x half of the hub has half-width `hub_thin` (default knob_half);
    `balance` in `asymmetric_dumbbell` tunes it to put the centroid at x = 0.
    """
    thin_half = neck_half * np.sqrt(thin_ratio)
    hub_thin = knob_half if hub_thin is None else hub_thin
    x = -(knob_len + neck_len + hub_len / 2)
    x_min = x
    widths = [knob_half, thin_half, hub_thin, knob_half, neck_half, knob_half]
    lengths = [knob_len, neck_len, hub_len / 2, hub_len / 2, neck_len, knob_len]
    bounds = list(x + np.cumsum(lengths)[:-1])
    x_max = x + sum(lengths)

    def half_fn(xq):
        xq = np.asarray(xq, dtype=float)
        out = np.full(xq.shape, widths[0])
        for b, w0, w1 in zip(bounds, widths[:-1], widths[1:]):
            out = out + (w1 - w0) * _smoothstep((xq - b) / blend + 0.5)
        return out

    return half_fn, x_min, x_max, bounds


def _dumbbell_rings(m: int, axial_step, kw):
    """Ring positions from the unbalanced profile, so they do not depend on
    the balancing width."""
    fn, x0, x1, bounds = dumbbell_profile(**{**kw, "hub_thin": None})
    blend = kw.get("blend", 0.15)
    xs = [x0]
    while xs[-1] < x1 - 1e-12:
        x = xs[-1]
        if axial_step is not None:
            step = axial_step
        else:
            step = 2 * float(fn(x)) / m
            if any(abs(x - b) < blend for b in bounds):
                step = min(step, blend / max(m, 3))
        xs.append(min(x + step, x1))
    if x1 - xs[-2] < 0.25 * (xs[-1] - xs[-2]) and len(xs) > 2:
        del xs[-2]
    return np.array(xs)


def asymmetric_dumbbell(m: int = 4, axial_step=None, normalize: bool = True, balance: bool = True, **kw) -> SurfaceMesh:
    """Smooth square-section dumbbell with a thin negative-x neck.

    With `balance`, the negative-x half of the hub is widened until the
    volume centroid lies at x = 0, the mirror plane of the two knobs.
    """
    from scipy.optimize import brentq

    xs = _dumbbell_rings(m, axial_step, kw)
    kw = {k: v for k, v in kw.items() if k != "hub_thin"}
    knob = kw.get("knob_half", 0.2)
    hub_thin = knob
    if balance:
        def moment(ht):
            fn = dumbbell_profile(**kw, hub_thin=ht)[0]
            return _frusta_moments(xs, fn(xs))[1]

        hub_thin = brentq(moment, knob, 3 * knob, xtol=1e-14)
    fn = dumbbell_profile(**kw, hub_thin=hub_thin)[0]
    v, f = loft_arrays(xs, fn(xs), m)
    return SurfaceMesh.from_arrays(v, f, normalize=normalize)

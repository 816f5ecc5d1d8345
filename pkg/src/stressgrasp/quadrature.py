"""Quadrature rules on triangles, including vertex-singular (Duffy) rules."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def _dunavant7() -> tuple[np.ndarray, np.ndarray]:
    # degree-5 symmetric rule, weights sum to 1
    a1, b1, w1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
    a2, b2, w2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
    bary = np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [a1, b1, b1],
            [b1, a1, b1],
            [b1, b1, a1],
            [a2, b2, b2],
            [b2, a2, b2],
            [b2, b2, a2],
        ]
    )
    w = np.array([0.225, w1, w1, w1, w2, w2, w2])
    return bary, w


DUNAVANT7_BARY, DUNAVANT7_W = _dunavant7()


@lru_cache(maxsize=None)
def collapsed_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Conical-product Gauss rule of n*n points collapsed at vertex 0.

    Returns barycentric coordinates (n*n, 3) and weights summing to 1.
    The Jacobian factor vanishes linearly at vertex 0, which cancels a
    1/r singularity located there.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws = np.outer(w, w)
    # y = v0 + s*((1-t)(v1-v0) + t(v2-v0)), jacobian 2*area*s
    b1 = s * (1.0 - t)
    b2 = s * t
    b0 = 1.0 - s
    bary = np.stack([b0.ravel(), b1.ravel(), b2.ravel()], axis=1)
    weights = (2.0 * ws * s).ravel()
    return bary, weights


@lru_cache(maxsize=None)
def subdivided_rule(levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Dunavant-7 rule applied on a 4**levels uniform subdivision."""
    tris = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for t in tris:
            m01 = 0.5 * (t[0] + t[1])
            m12 = 0.5 * (t[1] + t[2])
            m20 = 0.5 * (t[2] + t[0])
            nxt += [
                np.array([t[0], m01, m20]),
                np.array([m01, t[1], m12]),
                np.array([m20, m12, t[2]]),
                np.array([m01, m12, m20]),
            ]
        tris = nxt
    bary = np.concatenate([DUNAVANT7_BARY @ t for t in tris])
    w = np.tile(DUNAVANT7_W, len(tris)) / len(tris)
    return bary, w


@lru_cache(maxsize=None)
def gauss25() -> tuple[np.ndarray, np.ndarray]:
    """25-point conical-product rule (degree 9) with no collapsed vertex bias.

    Built as the 5x5 collapsed rule, which integrates polynomials of
    degree 8 exactly on the triangle.
    """
    return collapsed_rule(5)

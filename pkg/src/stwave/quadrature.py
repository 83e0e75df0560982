"""Fixed quadrature rules on intervals and triangles."""

from __future__ import annotations

import numpy as np

_S15 = np.sqrt(15.0)


def triangle_rule(points: int = 7) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (m, 3) and weights summing to one.

    ``points=7`` is the degree-5 rule; ``points=1`` is the centroid rule.
    """
    if points == 1:
        return np.full((1, 3), 1.0 / 3.0), np.ones(1)
    if points != 7:
        raise ValueError(f"no {points}-point triangle rule available")
    a1, b1 = (6.0 - _S15) / 21.0, (9.0 + 2.0 * _S15) / 21.0
    a2, b2 = (6.0 + _S15) / 21.0, (9.0 - 2.0 * _S15) / 21.0
    w1, w2 = (155.0 - _S15) / 1200.0, (155.0 + _S15) / 1200.0
    lam = np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [a1, a1, b1],
            [a1, b1, a1],
            [b1, a1, a1],
            [a2, a2, b2],
            [a2, b2, a2],
            [b2, a2, a2],
        ]
    )
    w = np.array([9 / 40, w1, w1, w1, w2, w2, w2])
    return lam, w


def gauss_interval(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes in (0, 1) and weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_points(mesh, lam: np.ndarray) -> np.ndarray:
    """Physical points (nt, m, 2) for barycentric points ``lam`` (m, 3)."""
    p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    return np.einsum("mi,tik->tmk", lam, p)


def time_points(tmesh, order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes (N, q), weights (N, q) and local coordinate (q,) on every element."""
    s, w = gauss_interval(order)
    t = tmesh.nodes[:-1, None] + tmesh.sizes[:, None] * s[None, :]
    return t, tmesh.sizes[:, None] * w[None, :], s

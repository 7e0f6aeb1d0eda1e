"""Gauss rules on intervals and triangles."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_interval(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] with ``n`` points (exact to degree 2n-1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on a triangle.

    Args:
        degree: Polynomial degree integrated exactly.

    Returns:
        Barycentric points of shape (n, 3) and weights summing to one, so that
        ``area * weights @ f(points)`` approximates the integral of ``f``.
    """
    n = degree // 2 + 1
    s, ws = gauss_interval(n + 1)  # absorbs the (1 - s) Jacobian
    t, wt = gauss_interval(n)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws * (1.0 - s), wt)
    xi = S.ravel()
    eta = ((1.0 - S) * T).ravel()
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    w = 2.0 * W.ravel()
    return bary, w / w.sum()


def triangle_points(tri: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points and weights for a batch of physical triangles.

    Args:
        tri: Vertex coordinates, shape (m, 3, 2).
        degree: Exactness degree.

    Returns:
        Points (m, q, 2) and weights (m, q) including the triangle areas.
    """
    bary, w = triangle_rule(degree)
    pts = np.einsum("qi,mid->mqd", bary, tri)
    area = 0.5 * np.abs(
        (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1])
        - (tri[:, 2, 0] - tri[:, 0, 0]) * (tri[:, 1, 1] - tri[:, 0, 1])
    )
    return pts, area[:, None] * w[None, :]

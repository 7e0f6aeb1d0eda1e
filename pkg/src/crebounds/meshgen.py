"""Structured mesh generators for the built-in test problems."""

from typing import Callable

import numpy as np

from .mesh import TriMesh


def mesh_from_elements(
    nodes: np.ndarray,
    elements: np.ndarray,
    tagger: Callable[[np.ndarray], list],
    element_tags=None,
) -> TriMesh:
    """Build a mesh whose boundary edges are found topologically.

    Unused nodes are dropped.  ``tagger`` maps boundary edge midpoints (B, 2)
    to one tag per edge.
    """
    elements = np.asarray(elements, dtype=np.int64)
    used = np.unique(elements)
    remap = np.full(len(nodes), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes = np.asarray(nodes, dtype=float)[used]
    elements = remap[elements]
    loc = np.stack([elements, np.roll(elements, -1, axis=1)], axis=2).reshape(-1, 2)
    key = np.sort(loc, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    boundary = loc[counts[inv.reshape(-1)] == 1]
    mids = 0.5 * (nodes[boundary[:, 0]] + nodes[boundary[:, 1]])
    tags = list(tagger(mids))
    return TriMesh(nodes, elements, boundary, tags, element_tags)


def _grid(x, y):
    X, Y = np.meshgrid(x, y, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    ny = len(y)
    i, j = np.meshgrid(np.arange(len(x) - 1), np.arange(ny - 1), indexing="ij")
    a = (i * ny + j).ravel()
    b = a + ny
    c = b + 1
    d = a + 1
    # alternate the diagonal so the pattern has no preferred direction
    flip = ((i + j) % 2 == 1).ravel()
    t1 = np.where(flip[:, None], np.column_stack([a, b, d]), np.column_stack([a, b, c]))
    t2 = np.where(flip[:, None], np.column_stack([b, c, d]), np.column_stack([a, c, d]))
    return nodes, np.vstack([t1, t2])


def rectangle_mesh(x0: float, x1: float, y0: float, y1: float, nx: int, ny: int) -> TriMesh:
    """Structured rectangle with boundary tags left, right, bottom and top."""
    nodes, els = _grid(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1))
    tol = 1e-9 * max(x1 - x0, y1 - y0)

    def tagger(m):
        out = []
        for x, y in m:
            if abs(x - x0) < tol:
                out.append("left")
            elif abs(x - x1) < tol:
                out.append("right")
            elif abs(y - y0) < tol:
                out.append("bottom")
            else:
                out.append("top")
        return out

    return mesh_from_elements(nodes, els, tagger)


def annulus_mesh(r_in: float, r_out: float, n_r: int, n_theta: int) -> TriMesh:
    """Polygonal annulus with boundary tags inner and outer."""
    r = np.linspace(r_in, r_out, n_r + 1)
    t = 2 * np.pi * np.arange(n_theta) / n_theta
    R, T = np.meshgrid(r, t, indexing="ij")
    nodes = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    i, j = np.meshgrid(np.arange(n_r), np.arange(n_theta), indexing="ij")
    a = (i * n_theta + j).ravel()
    b = (i * n_theta + (j + 1) % n_theta).ravel()
    c = b + n_theta
    d = a + n_theta
    flip = ((i + j) % 2 == 1).ravel()
    t1 = np.where(flip[:, None], np.column_stack([a, b, d]), np.column_stack([a, b, c]))
    t2 = np.where(flip[:, None], np.column_stack([b, c, d]), np.column_stack([a, c, d]))
    mid = 0.5 * (r_in + r_out)
    els = np.vstack([t1, t2])[:, [0, 2, 1]]  # angular-then-radial order is clockwise
    return mesh_from_elements(
        nodes, els, lambda m: ["inner" if np.hypot(*p) < mid else "outer" for p in m]
    )


def cracked_square_mesh(n: int) -> TriMesh:
    """Square [-1, 1]^2 with a slit from (-1, 0) to the tip at the origin.

    Nodes on the slit are duplicated so the two lips are separate boundary
    edges.  Boundary tags are outer and crack.

    Args:
        n: Cells per side, must be even.
    """
    if n % 2:
        raise ValueError("n must be even")
    g = np.linspace(-1.0, 1.0, n + 1)
    nodes, els = _grid(g, g)
    lip = np.flatnonzero((np.abs(nodes[:, 1]) < 1e-12) & (nodes[:, 0] < -1e-12))
    dup = np.full(len(nodes), -1, dtype=np.int64)
    dup[lip] = len(nodes) + np.arange(len(lip))
    nodes = np.vstack([nodes, nodes[lip]])
    below = nodes[els].mean(axis=1)[:, 1] < 0
    sub = els[below]
    sub = np.where(dup[sub] >= 0, dup[sub], sub)
    els = els.copy()
    els[below] = sub
    return mesh_from_elements(
        nodes, els, lambda m: ["crack" if abs(p[1]) < 1e-12 and p[0] < 0 else "outer" for p in m]
    )


def l_shape_mesh(n: int) -> TriMesh:
    """L-shaped domain [-1, 1]^2 minus the quadrant x > 0, y < 0.

    Boundary tags: bottom (y = -1), left (x = -1), and free elsewhere.

    Args:
        n: Cells per side of the bounding square, must be even.
    """
    if n % 2:
        raise ValueError("n must be even")
    g = np.linspace(-1.0, 1.0, n + 1)
    nodes, els = _grid(g, g)
    c = nodes[els].mean(axis=1)
    keep = ~((c[:, 0] > 0) & (c[:, 1] < 0))

    def tagger(m):
        out = []
        for x, y in m:
            if abs(y + 1) < 1e-12:
                out.append("bottom")
            elif abs(x + 1) < 1e-12:
                out.append("left")
            else:
                out.append("free")
        return out

    return mesh_from_elements(nodes, els[keep], tagger)

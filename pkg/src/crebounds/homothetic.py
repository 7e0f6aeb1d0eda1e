"""Homothetic subdomains: membership and quadrature over disks, their
complements and their boundary circles.

Integration runs over *cells*: triangles on which every field involved is a
single polynomial.  For one mesh these are the centroid sub-triangles of the
elements; for two nested meshes they are the intersections of the
sub-triangles of both.  Cells inside the disk use a collapsed Gauss rule;
cells cut by the circle use a polar rule around the center, Gauss in the
radius (exact for polynomials) and Gauss in the angle on sub-intervals
delimited by the cell's vertex directions and its crossings with the circle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import QuadratureError
from .mesh import TriMesh
from .quadrature import gauss_interval, triangle_points

CIRCLE = "circle"
CRACKED_CIRCLE = "cracked_circle"
N_ARC = 8
DEGREE = 6

Integrand = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class HomotheticFamily:
    """Disks (optionally slit along a crack) scaled about a center.

    Attributes:
        center: Homothety center O.
        lambda_max: Largest radius whose subdomain lies in the mesh.
        shape: ``circle`` or ``cracked_circle``.
        crack_direction: Unit vector from O along the crack (cracked shape).
        lip_angle: Opening angle between the crack lips, radians.
    """

    center: tuple
    lambda_max: float
    shape: str = CIRCLE
    crack_direction: tuple = (-1.0, 0.0)
    lip_angle: float = 0.0

    def __post_init__(self):
        if self.shape not in (CIRCLE, CRACKED_CIRCLE):
            raise ValueError(f"unsupported shape {self.shape!r}")
        if not self.lambda_max > 0:
            raise ValueError("lambda_max must be positive")
        if not 0.0 <= self.lip_angle < 2 * np.pi:
            raise ValueError("lip angle must lie in [0, 2 pi)")

    @classmethod
    def for_mesh(
        cls, mesh: TriMesh, center, shape: str = CIRCLE, crack_direction=(-1.0, 0.0), lip_angle: float = 0.0
    ) -> HomotheticFamily:
        """Family whose ``lambda_max`` is the distance from O to the mesh boundary.

        For the cracked shape, boundary edges lying on rays from O (the crack
        lips) are ignored.
        """
        O = np.asarray(center, dtype=float)
        if mesh.locate_point(O) is None:
            raise ValueError("center lies outside the mesh")
        a = mesh.nodes[mesh.boundary[:, 0]] - O
        b = mesh.nodes[mesh.boundary[:, 1]] - O
        if shape == CRACKED_CIRCLE:
            tol = 1e-10 * mesh.diameter
            d = np.asarray(crack_direction, float)
            d = d / np.linalg.norm(d)
            L = np.linalg.norm(b - a, axis=1)
            radial = np.abs(_cross(a, b)) <= tol * L
            ang = np.arctan2(_cross(np.broadcast_to(d, a.shape), a + b), (a + b) @ d)
            lips = radial & (np.abs(ang) <= 0.5 * lip_angle + 1e-9)
            a, b = a[~lips], b[~lips]
        lam = float(_segment_distance(a, b).min())
        return cls(tuple(O.tolist()), lam, shape, tuple(np.asarray(crack_direction, float).tolist()), lip_angle)

    @property
    def dim(self) -> int:
        return 2

    def check(self, lam: float) -> None:
        if not (0 < lam <= self.lambda_max * (1 + 1e-12)):
            raise ValueError(f"lambda {lam} outside (0, {self.lambda_max}]")

    def _psi(self, pts):
        """Angle from the crack direction, in [0, 2 pi)."""
        d = np.asarray(self.crack_direction, float)
        d = d / np.linalg.norm(d)
        p = np.asarray(pts, float) - np.asarray(self.center)
        return np.arctan2(_cross(np.broadcast_to(d, p.shape), p), p @ d) % (2 * np.pi)

    def contains(self, pts, lam: float) -> np.ndarray:
        """Membership of points (N, 2) in the subdomain of radius ``lam``."""
        p = np.asarray(pts, float).reshape(-1, 2)
        inside = np.linalg.norm(p - np.asarray(self.center), axis=1) < lam
        if self.shape == CRACKED_CIRCLE and self.lip_angle > 0:
            psi = self._psi(p)
            half = 0.5 * self.lip_angle
            inside &= (psi > half) & (psi < 2 * np.pi - half)
        return inside

    def boundary_range(self) -> tuple[float, float]:
        """Angular range of the boundary arc, measured from the crack direction."""
        if self.shape == CRACKED_CIRCLE:
            return 0.5 * self.lip_angle, 2 * np.pi - 0.5 * self.lip_angle
        return 0.0, 2 * np.pi


def _segment_distance(a, b):
    """Distance from the origin to segments a-b, (N,)."""
    d = b - a
    t = np.clip(-np.einsum("nd,nd->n", a, d) / np.maximum(np.einsum("nd,nd->n", d, d), 1e-300), 0, 1)
    return np.linalg.norm(a + t[:, None] * d, axis=1)


@dataclass(eq=False)
class Cells:
    """Integration cells.

    Attributes:
        tri: Cell vertices (Nc, 3, 2), counter-clockwise.
        elem: Element of the primary mesh containing each cell.
        elem_ref: Element of the secondary mesh containing each cell.
    """

    tri: np.ndarray
    elem: np.ndarray
    elem_ref: np.ndarray


def sub_cells(mesh: TriMesh) -> Cells:
    """Centroid sub-triangles of every element."""
    v = mesh.vertices
    c = mesh.centroids
    tri = np.stack([np.stack([v[:, k], v[:, (k + 1) % 3], c], axis=1) for k in range(3)], axis=1)
    el = np.repeat(np.arange(mesh.n_elements), 3)
    return Cells(tri.reshape(-1, 3, 2), el, el.copy())


_SUB_BARY = np.array([[[1, 0, 0], [0, 1, 0], [1 / 3, 1 / 3, 1 / 3]],
                      [[0, 1, 0], [0, 0, 1], [1 / 3, 1 / 3, 1 / 3]],
                      [[0, 0, 1], [1, 0, 0], [1 / 3, 1 / 3, 1 / 3]]])


def _clip(poly, g):
    """Sutherland-Hodgman clip of a polygon (list of bary points) by g(p) >= 0."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        gp, gq = g(p), g(q)
        if gp >= 0:
            out.append(p)
        if (gp >= 0) != (gq >= 0):
            t = gp / (gp - gq)
            out.append(p + t * (q - p))
    return out


def _pattern_cells(B):
    """Intersections of fine sub-triangles with coarse sub-triangles in coarse barycentrics.

    Args:
        B: Barycentrics of the fine element's vertices in the coarse element (3, 3).

    Returns:
        List of (coarse-bary triangle (3, 3)) for every non-empty piece.
    """
    out = []
    for fk in range(3):
        poly = list(_SUB_BARY[fk] @ B)
        for j in range(3):
            m = (j + 2) % 3
            piece = _clip(poly, lambda p: p[j] - p[m])
            piece = _clip(piece, lambda p: p[(j + 1) % 3] - p[m]) if len(piece) >= 3 else []
            if len(piece) < 3:
                continue
            for i in range(1, len(piece) - 1):
                t = np.array([piece[0], piece[i], piece[i + 1]])
                area = 0.5 * abs(_cross(t[1, 1:] - t[0, 1:], t[2, 1:] - t[0, 1:]))
                if area > 1e-14:
                    out.append(t)
    return out


def cross_cells(primary: TriMesh, secondary: TriMesh) -> Cells:
    """Cells on which fields of both meshes are polynomial.

    Exact when one mesh is a uniform refinement of the other.  For unrelated
    meshes the primary sub-triangles are used and the secondary element is
    found by locating each cell centroid, which is approximate.
    """
    if primary is secondary:
        return sub_cells(primary)
    if primary.descends_from(secondary):
        fine, coarse, swap = primary, secondary, False
    elif secondary.descends_from(primary):
        fine, coarse, swap = secondary, primary, True
    else:
        c = sub_cells(primary)
        el, _ = secondary.locate_points(c.tri.mean(axis=1))
        if np.any(el < 0):
            raise QuadratureError("meshes do not cover the same domain")
        return Cells(c.tri, c.elem, el)
    anc, B = fine.lineage_to(coarse)
    cache = {}
    tris, fel, cel = [], [], []
    keys = np.round(B.reshape(len(B), 9), 12)
    for e in range(fine.n_elements):
        key = keys[e].tobytes()
        pat = cache.get(key)
        if pat is None:
            pat = np.array(_pattern_cells(B[e])).reshape(-1, 3, 3)
            cache[key] = pat
        tris.append(np.einsum("tij,jd->tid", pat, coarse.vertices[anc[e]]))
        fel.append(np.full(len(pat), e))
        cel.append(np.full(len(pat), anc[e]))
    tri = np.concatenate(tris)
    a = _cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    tri[a < 0] = tri[a < 0][:, [0, 2, 1]]
    fel, cel = np.concatenate(fel), np.concatenate(cel)
    if swap:
        return Cells(tri, cel, fel)
    return Cells(tri, fel, cel)


def _polar_rule(tri, O, r_in, r_out, n_arc, n_r):
    """Polar quadrature of the part of each triangle in the annulus r_in < r < r_out.

    ``r_in`` may be 0 and ``r_out`` infinite.  Returns points (N, 2), weights
    (N,) and the cell index of every point.
    """
    P = tri - O
    flip = _cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]) < 0
    P = P.copy()
    P[flip] = P[flip][:, [0, 2, 1]]
    n = len(P)
    E = np.roll(P, -1, axis=1) - P
    scale = np.linalg.norm(P, axis=2).max(axis=1)
    eps = 1e-12 * scale
    edge_c = _cross(E, P)  # point X inside iff cross(E_i, X - P_i) >= 0
    inside_o = np.all(-edge_c > eps[:, None] * np.linalg.norm(E, axis=2), axis=1)

    cen = P.mean(axis=1)
    ref = np.where(inside_o, 0.0, np.arctan2(cen[:, 1], cen[:, 0]))
    rad = np.linalg.norm(P, axis=2)
    va = _wrap(np.arctan2(P[..., 1], P[..., 0]) - ref[:, None])
    va = np.where(rad > eps[:, None], va, np.nan)
    lo = np.where(inside_o, -np.pi, np.nanmin(va, axis=1))
    hi = np.where(inside_o, np.pi, np.nanmax(va, axis=1))

    a = np.einsum("nid,nid->ni", E, E)
    b = 2 * np.einsum("nid,nid->ni", P, E)
    cands = [va]
    for R in (r_in, r_out):
        if not (0 < R < np.inf):
            continue
        c = np.einsum("nid,nid->ni", P, P) - R * R
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.where(disc > 0, disc, np.nan))
        for sgn in (-1.0, 1.0):
            t = (-b + sgn * sq) / (2 * a)
            t = np.where((t > 0) & (t < 1), t, np.nan)
            X = P + t[..., None] * E
            cands.append(_wrap(np.arctan2(X[..., 1], X[..., 0]) - ref[:, None]))
    br = np.concatenate(cands + [lo[:, None], hi[:, None]], axis=1)
    br = np.where((br >= lo[:, None]) & (br <= hi[:, None]), br, np.nan)
    br = np.sort(br, axis=1)
    ta, tb = br[:, :-1], br[:, 1:]
    ok = np.isfinite(ta) & np.isfinite(tb) & (tb - ta > 1e-14)
    ci, ki = np.nonzero(ok)
    ta, tb = ta[ci, ki], tb[ci, ki]
    ci, ta, tb = _grade(ci, ta, tb, ref, P, E, edge_c)

    gt, gw = gauss_interval(n_arc)
    th = ta[:, None] + (tb - ta)[:, None] * gt[None, :]
    wt = (tb - ta)[:, None] * gw[None, :]
    ang = ref[ci, None] + th
    d = np.stack([np.cos(ang), np.sin(ang)], axis=-1)  # (m, n_arc, 2)
    Ec = E[ci][:, None]  # (m, 1, 3, 2)
    av = _cross(Ec, d[:, :, None, :])  # (m, n_arc, 3)
    bv = edge_c[ci][:, None, :]
    tiny = 1e-14 * np.linalg.norm(Ec, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = bv / av
    lower = np.where(av > tiny, ratio, -np.inf).max(axis=2)
    upper = np.where(av < -tiny, ratio, np.inf).min(axis=2)
    blocked = np.any((np.abs(av) <= tiny) & (bv > 0), axis=2)
    r_lo = np.maximum(lower, 0.0)
    r_hi = np.where(blocked, -np.inf, upper)
    ra, rb = np.maximum(r_lo, r_in), np.minimum(r_hi, r_out)
    span = np.where(rb > ra, rb - ra, 0.0)
    span = np.where(np.isfinite(span), span, 0.0)

    gr, grw = gauss_interval(n_r)
    r = ra[..., None] + span[..., None] * gr
    w = wt[..., None] * span[..., None] * grw * r
    pts = O + r[..., None] * d[:, :, None, :]
    keep = w > 0
    cell = np.broadcast_to(ci[:, None, None], w.shape)
    return pts[keep], w[keep], cell[keep]


def _grade(ci, ta, tb, ref, P, E, edge_c, max_pass: int = 60):
    """Bisect angular pieces until each is no longer than its distance to a pole.

    A bounding edge at distance d from O limits the radius by d / cos(psi - psi0),
    which blows up in the edge direction.  Keeping the poles at least one
    piece length away keeps the Gauss rule converging geometrically.
    """
    ang_e = np.arctan2(E[..., 1], E[..., 0])  # (n, 3)
    for _ in range(max_pass):
        mid = 0.5 * (ta + tb)
        d = np.column_stack([np.cos(ref[ci] + mid), np.sin(ref[ci] + mid)])
        av = _cross(E[ci], d[:, None, :])
        bv = edge_c[ci]
        tiny = 1e-14 * np.linalg.norm(E[ci], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = bv / av
        lo_r = np.where(av > tiny, ratio, -np.inf)
        up_r = np.where(av < -tiny, ratio, np.inf)
        k_lo, k_up = lo_r.argmax(axis=1), up_r.argmin(axis=1)
        rows = np.arange(len(ci))
        dist = np.full(len(ci), np.inf)
        for k, active in ((k_lo, lo_r[rows, k_lo] > 0), (k_up, np.isfinite(up_r[rows, k_up]))):
            pole = _wrap(ang_e[ci, k] - ref[ci])
            for shift in (-2 * np.pi, -np.pi, 0.0, np.pi, 2 * np.pi):
                p = pole + shift
                gap = np.maximum(np.maximum(ta - p, p - tb), 0.0)
                dist = np.where(active, np.minimum(dist, gap), dist)
        split = (tb - ta) > dist
        if not split.any():
            break
        keep = ~split
        m = mid[split]
        ci = np.concatenate([ci[keep], ci[split], ci[split]])
        ta, tb = np.concatenate([ta[keep], ta[split], m]), np.concatenate([tb[keep], m, tb[split]])
    return ci, ta, tb


class SubdomainIntegrator:
    """Integrals over the disk of radius lambda, its complement and the whole mesh.

    Args:
        cells: Integration cells.
        family: Homothetic family giving the center and the admissible radii.
        degree: Polynomial degree integrated exactly on whole cells.
        n_arc: Gauss points in the angle per angular sub-interval.
    """

    def __init__(self, cells: Cells, family: HomotheticFamily, degree: int = DEGREE, n_arc: int = N_ARC):
        self.cells = cells
        self.family = family
        self.degree = degree
        self.n_arc = n_arc
        self.n_r = degree // 2 + 2
        O = np.asarray(family.center, float)
        self.O = O
        P = cells.tri - O
        self.rmax = np.linalg.norm(P, axis=2).max(axis=1)
        A, B = P, np.roll(P, -1, axis=1)
        dist = _segment_distance(A.reshape(-1, 2), B.reshape(-1, 2)).reshape(-1, 3).min(axis=1)
        E = B - A
        inside = np.all(_cross(E, -A) >= 0, axis=1) | np.all(_cross(E, -A) <= 0, axis=1)
        self.rmin = np.where(inside, 0.0, dist)
        self._pts, self._w = triangle_points(cells.tri, degree)

    def _eval(self, integrand, cell, pts):
        if len(cell) == 0:
            return np.zeros(0)
        return np.asarray(integrand(self.cells.elem[cell], self.cells.elem_ref[cell], pts), float)

    def cell_integrals(self, integrand: Integrand) -> np.ndarray:
        """Integral of ``integrand`` over every whole cell."""
        nc, nq = self._w.shape
        cell = np.repeat(np.arange(nc), nq)
        vals = self._eval(integrand, cell, self._pts.reshape(-1, 2)).reshape(nc, nq)
        return (vals * self._w).sum(axis=1)

    def total(self, integrand: Integrand) -> float:
        return float(self.cell_integrals(integrand).sum())

    def _cut(self, lam, integrand, part):
        cut = np.flatnonzero((self.rmin < lam) & (self.rmax > lam))
        if len(cut) == 0:
            return 0.0
        r_in, r_out = (0.0, lam) if part == "inside" else (lam, np.inf)
        pts, w, c = _polar_rule(self.cells.tri[cut], self.O, r_in, r_out, self.n_arc, self.n_r)
        return float(w @ self._eval(integrand, cut[c], pts))

    def inside(self, lam: float, integrand: Integrand, full: np.ndarray | None = None) -> float:
        """Integral over the disk of radius ``lam``."""
        self.family.check(lam)
        if full is None:
            mask = self.rmax <= lam
            full_sum = self._masked_total(integrand, mask)
        else:
            full_sum = float(full[self.rmax <= lam].sum())
        return full_sum + self._cut(lam, integrand, "inside")

    def outside(self, lam: float, integrand: Integrand, full: np.ndarray | None = None) -> float:
        """Integral over the mesh minus the disk of radius ``lam``."""
        self.family.check(lam)
        if full is None:
            full_sum = self._masked_total(integrand, self.rmin >= lam)
        else:
            full_sum = float(full[self.rmin >= lam].sum())
        return full_sum + self._cut(lam, integrand, "outside")

    def _masked_total(self, integrand, mask):
        idx = np.flatnonzero(mask)
        if len(idx) == 0:
            return 0.0
        nq = self._w.shape[1]
        cell = np.repeat(idx, nq)
        vals = self._eval(integrand, cell, self._pts[idx].reshape(-1, 2)).reshape(len(idx), nq)
        return float((vals * self._w[idx]).sum())

    def profile(self, lams, integrand: Integrand) -> np.ndarray:
        """Integrals over the disks of every radius in ``lams``."""
        full = self.cell_integrals(integrand)
        order = np.argsort(self.rmax, kind="stable")
        csum = np.concatenate([[0.0], np.cumsum(full[order])])
        rs = self.rmax[order]
        out = np.empty(len(lams))
        for i, lam in enumerate(lams):
            self.family.check(lam)
            out[i] = csum[np.searchsorted(rs, lam, side="right")] + self._cut(lam, integrand, "inside")
        return out


def annulus_rule(cells: Cells, center, r_in: float, r_out: float, degree: int = 7, n_arc: int = N_ARC):
    """Quadrature over the part of the cells lying in r_in < |x - center| < r_out.

    Cells entirely inside the annulus get a collapsed Gauss rule of the given
    degree, cut cells the polar rule.

    Returns:
        Points (N, 2), weights (N,) and the cell of every point.
    """
    O = np.asarray(center, float)
    P = cells.tri - O
    rmax = np.linalg.norm(P, axis=2).max(axis=1)
    A, B = P, np.roll(P, -1, axis=1)
    dist = _segment_distance(A.reshape(-1, 2), B.reshape(-1, 2)).reshape(-1, 3).min(axis=1)
    E = B - A
    inside = np.all(_cross(E, -A) >= 0, axis=1) | np.all(_cross(E, -A) <= 0, axis=1)
    rmin = np.where(inside, 0.0, dist)
    full = np.flatnonzero((rmin >= r_in) & (rmax <= r_out))
    cut = np.flatnonzero((rmax > r_in) & (rmin < r_out) & ~((rmin >= r_in) & (rmax <= r_out)))
    pts, w = triangle_points(cells.tri[full], degree)
    nq = w.shape[1] if w.ndim == 2 else 0
    p1, w1, c1 = pts.reshape(-1, 2), w.ravel(), np.repeat(full, nq)
    p2, w2, c2 = _polar_rule(cells.tri[cut], O, r_in, r_out, n_arc, degree // 2 + 2)
    return np.vstack([p1, p2]), np.concatenate([w1, w2]), np.concatenate([c1, cut[c2]])


class BoundaryIntegrator:
    """Weighted integrals over the circle of radius lambda-bar in one mesh.

    The circle is split at its crossings with element edges and with the
    internal edges of the centroid split, so every Gauss segment sees one
    polynomial piece.
    """

    def __init__(self, mesh: TriMesh, family: HomotheticFamily, n_arc: int = N_ARC):
        self.mesh = mesh
        self.family = family
        self.n_arc = n_arc
        O = np.asarray(family.center, float)
        self.O = O
        segs = [np.stack([mesh.nodes[mesh.edges[:, 0]], mesh.nodes[mesh.edges[:, 1]]], axis=1)]
        v, c = mesh.vertices, mesh.centroids
        for k in range(3):
            segs.append(np.stack([v[:, k], c], axis=1))
        self.segs = np.concatenate(segs) - O

    def segments(self, lam: float):
        """Angular sub-intervals (start, end) measured from the crack direction."""
        P, Q = self.segs[:, 0], self.segs[:, 1]
        E = Q - P
        a = np.einsum("nd,nd->n", E, E)
        b = 2 * np.einsum("nd,nd->n", P, E)
        c = np.einsum("nd,nd->n", P, P) - lam * lam
        disc = b * b - 4 * a * c
        ok = disc > 0
        sq = np.sqrt(disc[ok])
        pts = []
        for sgn in (-1.0, 1.0):
            t = (-b[ok] + sgn * sq) / (2 * a[ok])
            sel = (t > 0) & (t < 1)
            pts.append(P[ok][sel] + t[sel, None] * E[ok][sel])
        X = np.concatenate(pts) + self.O
        psi = self.family._psi(X) if len(X) else np.zeros(0)
        lo, hi = self.family.boundary_range()
        psi = psi[(psi > lo) & (psi < hi)]
        br = np.unique(np.concatenate([[lo, hi], psi]))
        a, b = br[:-1], br[1:]
        keep = b - a > 1e-13
        return a[keep], b[keep]

    def rule(self, lam: float):
        """Points, weights (ds times x.n) and elements for the circle of radius ``lam``."""
        self.family.check(lam)
        a, b = self.segments(lam)
        d = np.asarray(self.family.crack_direction, float)
        base = np.arctan2(d[1], d[0])
        mid = 0.5 * (a + b)
        mp = self.O + lam * np.column_stack([np.cos(base + mid), np.sin(base + mid)])
        el, _ = self.mesh.locate_points(mp)
        if np.any(el < 0):
            raise QuadratureError(f"boundary of the subdomain of radius {lam} leaves the mesh")
        gt, gw = gauss_interval(self.n_arc)
        psi = a[:, None] + (b - a)[:, None] * gt
        w = (b - a)[:, None] * gw * lam * lam
        pts = self.O + lam * np.stack([np.cos(base + psi), np.sin(base + psi)], axis=-1)
        elem = np.repeat(el, self.n_arc)
        return pts.reshape(-1, 2), w.ravel(), elem

    def integrate(self, lam: float, integrand: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        pts, w, elem = self.rule(lam)
        return float(w @ np.asarray(integrand(elem, pts), float))


def integrate_subdomain(
    family: HomotheticFamily, lam: float, integrand: Integrand, cells: Cells,
    part: str = "inside", degree: int = DEGREE, n_arc: int = N_ARC,
) -> float:
    """Integral over the subdomain of radius ``lam`` (or its complement)."""
    integ = SubdomainIntegrator(cells, family, degree, n_arc)
    if part == "inside":
        return integ.inside(lam, integrand)
    if part == "outside":
        return integ.outside(lam, integrand)
    raise ValueError(f"unknown part {part!r}")


def integrate_boundary_weighted(
    family: HomotheticFamily, lam: float, integrand: Callable, mesh: TriMesh, n_arc: int = N_ARC
) -> float:
    """Integral over the subdomain boundary of ``integrand`` times x.n."""
    return BoundaryIntegrator(mesh, family, n_arc).integrate(lam, integrand)


def cre_density(adm) -> Integrand:
    """Pointwise Tr[(sigma_hat - K eps(u)) K^-1 (sigma_hat - K eps(u))] of one admissible pair."""
    C = adm.model.compliance

    def f(elem, elem_ref, pts):
        d = adm.cre_field(elem, pts)
        return np.einsum("ni,ij,nj->n", d, C, d)

    return f


def cre_profile(family: HomotheticFamily, lams, adm, integrator: SubdomainIntegrator | None = None,
                n_arc: int = N_ARC) -> np.ndarray:
    """Local CRE on the subdomains of the given radii.

    Raises:
        ValueError: Radii not strictly increasing or out of range.
        QuadratureError: The profile decreases beyond quadrature tolerance.
    """
    lams = np.asarray(lams, float)
    if np.any(np.diff(lams) <= 0):
        raise ValueError("radii must be strictly increasing")
    if integrator is None:
        integrator = SubdomainIntegrator(sub_cells(adm.mesh), family, n_arc=n_arc)
    e2 = integrator.profile(lams, cre_density(adm))
    total = float(adm.element_cre2.sum())
    if np.any(np.diff(e2) < -1e-8 * max(total, 1e-300)):
        raise QuadratureError("local CRE profile is not monotone")
    return np.sqrt(np.maximum.accumulate(np.maximum(e2, 0.0)))

"""Mode-I crack-tip eigenfunction fields.

Term ``n`` of the mode-I expansion behaves like r^(n/2).  ``n = 1`` is the
classical square-root field; ``n = -1`` is its dual, used as the auxiliary
field of the reciprocity integral that extracts the stress intensity factor.
Polar angles are measured in the crack frame, with the crack faces at +-pi.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .elasticity import ElasticModel
from .quadrature import gauss_interval


def _frame(pts, tip, direction):
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    R = np.array([[d[0], -d[1]], [d[1], d[0]]])
    local = (np.asarray(pts, float) - np.asarray(tip, float)) @ R
    return local, R


def mode1_displacement(n: int, pts, model: ElasticModel, amplitude: float = 1.0, tip=(0.0, 0.0),
                       direction=(1.0, 0.0), lower=None) -> np.ndarray:
    """Displacement of the mode-I term of order ``n`` at points (N, 2).

    Args:
        lower: Optional boolean mask of points on the lower crack lip; points
            on the crack line otherwise take the upper-lip value.
    """
    local, R = _frame(pts, tip, direction)
    r = np.hypot(local[:, 0], local[:, 1])
    th = np.arctan2(local[:, 1], local[:, 0])
    if lower is not None:
        th = np.where(np.asarray(lower, bool) & (th > 0.5 * np.pi), th - 2 * np.pi, th)
    lam = 0.5 * n
    s = (-1.0) ** n
    k = model.kappa
    c = amplitude * r**lam / (2 * model.mu)
    ux = c * ((k + lam + s) * np.cos(lam * th) - lam * np.cos((lam - 2) * th))
    uy = c * ((k - lam - s) * np.sin(lam * th) + lam * np.sin((lam - 2) * th))
    return np.column_stack([ux, uy]) @ R.T


def mode1_stress(n: int, pts, amplitude: float = 1.0, tip=(0.0, 0.0), direction=(1.0, 0.0)) -> np.ndarray:
    """Voigt stress of the mode-I term of order ``n`` at points (N, 2)."""
    local, R = _frame(pts, tip, direction)
    r = np.hypot(local[:, 0], local[:, 1])
    th = np.arctan2(local[:, 1], local[:, 0])
    lam = 0.5 * n
    s = (-1.0) ** n
    c = amplitude * lam * r ** (lam - 1)
    c1, c3 = np.cos((lam - 1) * th), np.cos((lam - 3) * th)
    s1, s3 = np.sin((lam - 1) * th), np.sin((lam - 3) * th)
    sxx = c * ((2 + lam + s) * c1 - (lam - 1) * c3)
    syy = c * ((2 - lam - s) * c1 + (lam - 1) * c3)
    sxy = c * (-(lam + s) * s1 + (lam - 1) * s3)
    T = np.stack([np.stack([sxx, sxy], -1), np.stack([sxy, syy], -1)], -2)
    G = np.einsum("ab,nbc,dc->nad", R, T, R)
    return np.column_stack([G[:, 0, 0], G[:, 1, 1], G[:, 0, 1]])


def lower_lip_nodes(mesh, tip=(0.0, 0.0), direction=(1.0, 0.0)) -> np.ndarray:
    """Nodes on the crack line behind the tip whose elements all lie below it."""
    local, _ = _frame(mesh.nodes, tip, direction)
    tol = 1e-9 * mesh.diameter
    on_line = (np.abs(local[:, 1]) < tol) & (local[:, 0] < -tol)
    below, _ = _frame(mesh.centroids, tip, direction)
    below = below[:, 1] < 0
    off, flat = mesh.node_patches
    counts = np.diff(off)
    above_count = np.bincount(np.repeat(np.arange(mesh.n_nodes), counts), weights=~below[flat // 3],
                              minlength=mesh.n_nodes)
    return on_line & (counts > 0) & (above_count == 0)


def k1_amplitude(K_I: float = 1.0) -> float:
    """Amplitude of the n = 1 term for a given stress intensity factor."""
    return K_I / np.sqrt(2 * np.pi)


def _ring_interaction(model: ElasticModel, amp_u, n_u, amp_v, n_v, r_in=0.5, r_out=1.0, n=48):
    """Crown form of the reciprocity functional, integrated on an exact annulus.

    Returns int (sigma(u) grad phi).v - (sigma(v) grad phi).u with phi linear
    in r from 1 at ``r_in`` to 0 at ``r_out``.
    """
    gr, wr = gauss_interval(n)
    gt, wt = gauss_interval(2 * n)
    r = r_in + (r_out - r_in) * gr
    th = -np.pi + 2 * np.pi * gt
    Rg, Tg = np.meshgrid(r, th, indexing="ij")
    W = np.outer(wr * (r_out - r_in) * r, wt * 2 * np.pi).ravel()
    pts = np.column_stack([(Rg * np.cos(Tg)).ravel(), (Rg * np.sin(Tg)).ravel()])
    er = pts / np.linalg.norm(pts, axis=1)[:, None]
    gphi = -er / (r_out - r_in)
    su = mode1_stress(n_u, pts, amp_u)
    sv = mode1_stress(n_v, pts, amp_v)
    u = mode1_displacement(n_u, pts, model, amp_u)
    v = mode1_displacement(n_v, pts, model, amp_v)

    def apply(s, g):
        return np.column_stack([s[:, 0] * g[:, 0] + s[:, 2] * g[:, 1], s[:, 2] * g[:, 0] + s[:, 1] * g[:, 1]])

    val = np.einsum("nd,nd->n", apply(su, gphi), v) - np.einsum("nd,nd->n", apply(sv, gphi), u)
    return float(W @ val)


@lru_cache(maxsize=None)
def _dual_amplitude(E, nu, assumption):
    model = ElasticModel(E, nu, assumption)
    c = _ring_interaction(model, k1_amplitude(1.0), 1, 1.0, -1)
    return 1.0 / c


def dual_amplitude(model: ElasticModel) -> float:
    """Amplitude of the n = -1 field that makes the extraction return K_I."""
    return _dual_amplitude(model.E, model.nu, model.assumption)

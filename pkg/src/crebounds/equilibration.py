"""Statically admissible stress recovery by element equilibration.

Two stages:

1. Edge tractions.  On every vertex patch the hat-function (prolongation)
   condition is solved for the traction moments on the patch edges, taking
   the least-squares correction of the averaged finite element traction.
2. Local solves.  Each triangle is split at its centroid into three
   sub-triangles and a piecewise cubic stress is built that satisfies
   equilibrium with the body force, traction continuity across the internal
   edges and the recovered tractions on the element edges, all exactly.  The
   remaining free coefficients minimise the complementary energy.

The construction is done once on the reference triangle and mapped to each
element with the double Piola transform ``sigma = J s J^T / det J``, which
preserves equilibrium and normal tractions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .elasticity import DiscreteLoad, ElasticModel, FemSolution, LoadSet, voigt_to_tensor
from .errors import EquilibrationError, NonGalerkinError
from .mesh import TriMesh
from .quadrature import gauss_interval, triangle_rule

STRESS_DEGREE = 3
GALERKIN_TOL = 1e-9
BALANCE_TOL = 1e-10

_REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_REF_C = _REF.mean(axis=0)


def _exponents(q):
    return [(d - b, b) for d in range(q + 1) for b in range(d + 1)]


def _mono(q, xi):
    """Monomials and their first derivatives at reference points (N, 2)."""
    a, b = _exponent_arrays(q)
    n = len(xi)
    xp = np.ones((n, q + 1))
    yp = np.ones((n, q + 1))
    for i in range(1, q + 1):
        xp[:, i] = xp[:, i - 1] * xi[:, 0]
        yp[:, i] = yp[:, i - 1] * xi[:, 1]
    xa, yb = xp[:, a], yp[:, b]
    val = xa * yb
    dx = a * xp[:, np.maximum(a - 1, 0)] * yb
    dy = b * xa * yp[:, np.maximum(b - 1, 0)]
    return val, dx, dy


@lru_cache(maxsize=None)
def _exponent_arrays(q):
    ex = _exponents(q)
    return np.array([e[0] for e in ex]), np.array([e[1] for e in ex])


def sub_triangles_ref() -> np.ndarray:
    """The three centroid sub-triangles of the reference triangle, (3, 3, 2)."""
    return np.array([[_REF[k], _REF[(k + 1) % 3], _REF_C] for k in range(3)])


def sub_index(bary: np.ndarray) -> np.ndarray:
    """Sub-triangle containing each point given its barycentrics (N, 3)."""
    return (np.argmin(bary, axis=1) + 1) % 3


class _ReferenceSolver:
    """Constraint system of the split reference triangle, built once per degree."""

    def __init__(self, q: int):
        self.q = q
        M = len(_exponents(q))
        self.M = M
        n_unk = 9 * M
        subs = sub_triangles_ref()
        rows, data_f, data_t = [], [], []

        def col(k, c):
            return (3 * k + c) * M

        # equilibrium: div s + f_hat = 0 in every sub-triangle
        qb, _ = triangle_rule(4)
        for k in range(3):
            pts = qb @ subs[k]
            _, dx, dy = _mono(q, pts)
            lam = np.column_stack([1 - pts.sum(axis=1), pts])
            for comp in range(2):
                R = np.zeros((len(pts), n_unk))
                if comp == 0:  # d/dxi s_xx + d/deta s_xy
                    R[:, col(k, 0) : col(k, 0) + M] = dx
                    R[:, col(k, 2) : col(k, 2) + M] = dy
                else:
                    R[:, col(k, 2) : col(k, 2) + M] = dx
                    R[:, col(k, 1) : col(k, 1) + M] = dy
                rows.append(R)
                Df = np.zeros((len(pts), 3, 2))
                Df[:, :, comp] = -lam  # right side is -f_hat interpolated from vertices
                data_f.append(Df.reshape(len(pts), 6))
                data_t.append(np.zeros((len(pts), 12)))

        s, _ = gauss_interval(q + 2)
        # traction continuity across the internal edges v_k -> centroid
        for k in range(3):
            a, b = _REF[k], _REF_C
            pts = a + s[:, None] * (b - a)
            d = b - a
            n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
            val, _, _ = _mono(q, pts)
            km = (k - 1) % 3
            for comp in range(2):
                R = np.zeros((len(pts), n_unk))
                for kk, sign in ((k, 1.0), (km, -1.0)):
                    if comp == 0:
                        R[:, col(kk, 0) : col(kk, 0) + M] += sign * n[0] * val
                        R[:, col(kk, 2) : col(kk, 2) + M] += sign * n[1] * val
                    else:
                        R[:, col(kk, 2) : col(kk, 2) + M] += sign * n[0] * val
                        R[:, col(kk, 1) : col(kk, 1) + M] += sign * n[1] * val
                rows.append(R)
                data_f.append(np.zeros((len(pts), 6)))
                data_t.append(np.zeros((len(pts), 12)))

        # prescribed tractions on the outer edges
        for k in range(3):
            a, b = _REF[k], _REF[(k + 1) % 3]
            pts = a + s[:, None] * (b - a)
            d = b - a
            n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
            val, _, _ = _mono(q, pts)
            for comp in range(2):
                R = np.zeros((len(pts), n_unk))
                if comp == 0:
                    R[:, col(k, 0) : col(k, 0) + M] = n[0] * val
                    R[:, col(k, 2) : col(k, 2) + M] = n[1] * val
                else:
                    R[:, col(k, 2) : col(k, 2) + M] = n[0] * val
                    R[:, col(k, 1) : col(k, 1) + M] = n[1] * val
                rows.append(R)
                Dt = np.zeros((len(pts), 3, 2, 2))  # edge, end, component
                Dt[:, k, 0, comp] = 1 - s
                Dt[:, k, 1, comp] = s
                data_t.append(Dt.reshape(len(pts), 12))
                data_f.append(np.zeros((len(pts), 6)))

        C = np.vstack(rows)
        U, sv, Vt = np.linalg.svd(C)
        rank = int(np.sum(sv > 1e-10 * sv[0]))
        self.C = C
        self.Z = Vt[rank:].T
        P = Vt[:rank].T @ (U[:, :rank].T / sv[:rank, None])
        self.Pf = P @ np.vstack(data_f)
        self.Pt = P @ np.vstack(data_t)
        self.Df = np.vstack(data_f)
        self.Dt = np.vstack(data_t)

        # complementary energy pieces: Gram matrices of the monomials per sub-triangle
        qb, qw = triangle_rule(2 * q)
        nz = self.Z.shape[1]
        R = np.zeros((3, 3, nz, nz))
        Sf = np.zeros((3, 3, nz, 6))
        St = np.zeros((3, 3, nz, 12))
        for k in range(3):
            pts = qb @ subs[k]
            val, _, _ = _mono(q, pts)
            G = val.T @ (val * (qw / 6.0)[:, None])
            for c in range(3):
                Zc = self.Z[col(k, c) : col(k, c) + M]
                for cc in range(3):
                    Zcc = self.Z[col(k, cc) : col(k, cc) + M]
                    R[c, cc] += Zc.T @ G @ Zcc
                    Sf[c, cc] += Zc.T @ G @ self.Pf[col(k, cc) : col(k, cc) + M]
                    St[c, cc] += Zc.T @ G @ self.Pt[col(k, cc) : col(k, cc) + M]
        self.R, self.Sf, self.St = R, Sf, St

    def solve(self, J, f_hat, t_hat, A):
        """Coefficients for a batch of elements.

        Args:
            J: Jacobians (n, 2, 2).
            f_hat: Reference body force at the vertices (n, 3, 2).
            t_hat: Reference tractions at edge ends (n, 3, 2, 2).
            A: Energy weights (n, 3, 3) in reference Voigt components.

        Returns:
            Coefficients (n, 3 subs, 3 components, M).
        """
        n = len(J)
        fv = f_hat.reshape(n, 6)
        tv = t_hat.reshape(n, 12)
        x0 = fv @ self.Pf.T + tv @ self.Pt.T
        H = np.einsum("ecd,cdij->eij", A, self.R)
        rhs = np.einsum("ecd,cdij,ej->ei", A, self.Sf, fv) + np.einsum("ecd,cdij,ej->ei", A, self.St, tv)
        y = -np.linalg.solve(H, rhs[..., None])[..., 0]
        x = x0 + y @ self.Z.T
        return x.reshape(n, 3, 3, self.M)


@lru_cache(maxsize=None)
def reference_solver(q: int = STRESS_DEGREE) -> _ReferenceSolver:
    return _ReferenceSolver(q)


def piola_voigt(J: np.ndarray) -> np.ndarray:
    """Matrices T with sigma = T s / det J for reference Voigt stress s, (n, 3, 3)."""
    a, b, c, d = J[:, 0, 0], J[:, 0, 1], J[:, 1, 0], J[:, 1, 1]
    T = np.empty((len(J), 3, 3))
    T[:, 0] = np.column_stack([a * a, b * b, 2 * a * b])
    T[:, 1] = np.column_stack([c * c, d * d, 2 * c * d])
    T[:, 2] = np.column_stack([a * c, b * d, a * d + b * c])
    return T


class PiecewiseStress:
    """Stress that is polynomial on each centroid sub-triangle of every element.

    Coefficients live on the reference triangle; an optional constant
    per-element offset (in physical Voigt components) is added on evaluation.
    """

    def __init__(self, mesh: TriMesh, coeffs: np.ndarray, q: int, offset: np.ndarray | None = None):
        self.mesh = mesh
        self.coeffs = coeffs
        self.q = q
        self.offset = np.zeros((mesh.n_elements, 3)) if offset is None else offset
        J = mesh.jacobians
        self._det = np.linalg.det(J)
        self._T = piola_voigt(J)
        self._Jinv = np.linalg.inv(J)

    def _ref(self, elem, pts):
        xi = np.einsum("nab,nb->na", self._Jinv[elem], pts - self.mesh.vertices[elem, 0])
        bary = np.column_stack([1 - xi.sum(axis=1), xi])
        return xi, sub_index(bary)

    def evaluate(self, elem: np.ndarray, pts: np.ndarray, include_offset: bool = True) -> np.ndarray:
        """Voigt stress at physical points ``pts`` (N, 2) of elements ``elem`` (N,)."""
        elem = np.asarray(elem)
        xi, k = self._ref(elem, pts)
        val, _, _ = _mono(self.q, xi)
        s = np.einsum("ncm,nm->nc", self.coeffs[elem, k], val)
        out = np.einsum("nij,nj->ni", self._T[elem], s) / self._det[elem, None]
        if include_offset:
            out = out + self.offset[elem]
        return out

    def divergence(self, elem: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Physical divergence at the given points, (N, 2)."""
        elem = np.asarray(elem)
        xi, k = self._ref(elem, pts)
        _, dx, dy = _mono(self.q, xi)
        c = self.coeffs[elem, k]
        d_hat = np.column_stack(
            [np.einsum("nm,nm->n", c[:, 0], dx) + np.einsum("nm,nm->n", c[:, 2], dy),
             np.einsum("nm,nm->n", c[:, 2], dx) + np.einsum("nm,nm->n", c[:, 1], dy)]
        )
        J = self.mesh.jacobians[elem]
        return np.einsum("nab,nb->na", J, d_hat) / self._det[elem, None]

    def perturbed(self, elem: int, amount: float) -> PiecewiseStress:
        """Copy with every coefficient of one element scaled by (1 + amount)."""
        c = self.coeffs.copy()
        c[elem] *= 1.0 + amount
        c[elem, :, :, 0] += amount * np.abs(c).max(initial=1.0)
        return PiecewiseStress(self.mesh, c, self.q, self.offset.copy())


@dataclass(eq=False)
class EdgeTractions:
    """Linear traction per mesh edge, by its values at the two edge nodes.

    ``values[g, j]`` is the traction at node ``mesh.edges[g, j]`` acting on
    the side whose outward normal is ``mesh.edge_normals[g]``.
    """

    mesh: TriMesh
    values: np.ndarray

    def element_values(self) -> np.ndarray:
        """Outward tractions per element edge k = (v_k, v_k+1) at both ends, (Ne, 3, 2, 2)."""
        m = self.mesh
        g = m.elem_edges
        sign = m.elem_edge_sign
        start = m.elements
        first = m.edges[g, 0] == start
        v = self.values[g]  # (Ne, 3, 2, 2)
        at_start = np.where(first[..., None], v[:, :, 0], v[:, :, 1])
        at_end = np.where(first[..., None], v[:, :, 1], v[:, :, 0])
        return sign[..., None, None] * np.stack([at_start, at_end], axis=2)


def _effective_stress(fem: FemSolution, load: DiscreteLoad) -> np.ndarray:
    return fem.stress - load.prestress


def _patch_rhs(mesh: TriMesh, s: np.ndarray, body: np.ndarray) -> np.ndarray:
    """Q[e, i] = |E| s grad(phi_i) - int_E f phi_i, shape (Ne, 3, 2)."""
    S = voigt_to_tensor(s)
    g = mesh.basis_gradients
    A = mesh.areas
    Q = A[:, None, None] * np.einsum("eab,eib->eia", S, g)
    Q -= A[:, None, None] / 12.0 * (body.sum(axis=1, keepdims=True) + body)
    return Q


def equilibrate_tractions(
    mesh: TriMesh, model: ElasticModel, loads: LoadSet | DiscreteLoad, fem: FemSolution
) -> EdgeTractions:
    """Equilibrated edge tractions from a Galerkin solution.

    Raises:
        NonGalerkinError: ``fem`` does not satisfy the discrete equilibrium.
        EquilibrationError: A vertex-patch system has no solution.
    """
    load = _as_discrete(loads, mesh)
    s = _effective_stress(fem, load)
    Q = _patch_rhs(mesh, s, load.body)
    nb = len(mesh.boundary)
    edges = mesh.edges
    L = mesh.edge_lengths
    nE = len(edges)
    bidx = np.full(nE, -1, dtype=np.int64)
    bidx[mesh.boundary_edge_ids] = np.arange(nb)
    neumann = np.zeros(nE, dtype=bool)
    neumann[mesh.boundary_edge_ids[load.neumann_edges]] = True

    # moments int_G F phi_end for known Neumann tractions
    T = load.traction
    known = np.zeros((nE, 2, 2))
    for b in np.flatnonzero(load.neumann_edges):
        g = mesh.boundary_edge_ids[b]
        t0, t1 = T[b, 0], T[b, 1]
        if mesh.boundary[b, 0] != edges[g, 0]:
            t0, t1 = t1, t0
        known[g, 0] = L[g] / 6.0 * (2 * t0 + t1)
        known[g, 1] = L[g] / 6.0 * (t0 + 2 * t1)

    # Galerkin check on free nodes
    nodal = np.zeros((mesh.n_nodes, 2))
    np.add.at(nodal, mesh.elements, Q)
    bound = np.zeros((mesh.n_nodes, 2))
    np.add.at(bound, edges[:, 0], known[:, 0])
    np.add.at(bound, edges[:, 1], known[:, 1])
    absq = np.zeros(mesh.n_nodes)
    np.add.at(absq, mesh.elements, np.abs(Q).sum(axis=2))
    free = ~load.dirichlet_nodes
    res = np.abs(nodal - bound).sum(axis=1)
    scale = max(absq.max(initial=0.0), np.abs(known).max(initial=0.0), 1e-300)
    if np.any(res[free] > GALERKIN_TOL * scale):
        node = int(np.flatnonzero(free)[np.argmax(res[free])])
        raise NonGalerkinError(
            f"displacement is not the Galerkin solution (residual {res[node]:.3e} at node {node})"
        )

    # averaged finite element traction moments as the target
    S = voigt_to_tensor(s)
    ee = mesh.edge_elems
    n = mesh.edge_normals
    avg = S[ee[:, 0]].copy()
    inner = ee[:, 1] >= 0
    avg[inner] = 0.5 * (avg[inner] + S[ee[inner, 1]])
    target = 0.5 * L[:, None] * np.einsum("gab,gb->ga", avg, n)

    moments = np.zeros((nE, 2, 2))
    moments[neumann] = known[neumann]
    off, flat = mesh.node_patches
    ge = mesh.elem_edges
    sg = mesh.elem_edge_sign
    for node in range(mesh.n_nodes):
        patch = flat[off[node] : off[node + 1]]
        el, loc = patch // 3, patch % 3
        g1, g2 = ge[el, loc], ge[el, (loc + 2) % 3]
        s1, s2 = sg[el, loc], sg[el, (loc + 2) % 3]
        cols = np.unique(np.concatenate([g1, g2]))
        rhs = Q[el, loc].copy()
        unk = cols[~neumann[cols]]
        pos = {int(g): i for i, g in enumerate(unk)}
        A = np.zeros((len(el), len(unk)))
        for r in range(len(el)):
            for g, sgn in ((g1[r], s1[r]), (g2[r], s2[r])):
                j = 0 if edges[g, 0] == node else 1
                if neumann[g]:
                    rhs[r] -= sgn * known[g, j]
                else:
                    A[r, pos[int(g)]] += sgn
        if len(unk) == 0:
            continue
        bbar = target[unk]
        corr = np.linalg.lstsq(A, rhs - A @ bbar, rcond=None)[0]
        b = bbar + corr
        if np.abs(A @ b - rhs).max() > GALERKIN_TOL * max(scale, 1e-300):
            raise EquilibrationError(f"vertex-patch system at node {node} has no solution")
        j = np.where(edges[unk, 0] == node, 0, 1)
        moments[unk, j] = b

    values = np.empty_like(moments)
    Lg = L[:, None]
    values[:, 0] = 2.0 / Lg * (2 * moments[:, 0] - moments[:, 1])
    values[:, 1] = 2.0 / Lg * (2 * moments[:, 1] - moments[:, 0])
    # Neumann edges carry the prescribed data exactly
    for b in np.flatnonzero(load.neumann_edges):
        g = mesh.boundary_edge_ids[b]
        t0, t1 = T[b, 0], T[b, 1]
        if mesh.boundary[b, 0] != edges[g, 0]:
            t0, t1 = t1, t0
        values[g, 0], values[g, 1] = t0, t1
    return EdgeTractions(mesh, values)


def _as_discrete(loads, mesh) -> DiscreteLoad:
    if isinstance(loads, DiscreteLoad):
        return loads.transfer(mesh) if loads.mesh is not mesh else loads
    return loads.discretize(mesh)


def element_balance(vertices: np.ndarray, tractions: np.ndarray, body: np.ndarray) -> np.ndarray:
    """Force and moment resultants of element loads.

    Args:
        vertices: (n, 3, 2).
        tractions: Outward tractions per edge at both ends, (n, 3, 2, 2).
        body: Body force at the vertices, (n, 3, 2).

    Returns:
        (n, 3) array of (Fx, Fy, M) about the element centroid; zero for
        self-equilibrated loads.
    """
    c = vertices.mean(axis=1, keepdims=True)
    x = vertices - c
    xa, xb = x, np.roll(x, -1, axis=1)
    L = np.linalg.norm(xb - xa, axis=2)
    ta, tb = tractions[:, :, 0], tractions[:, :, 1]
    F = (0.5 * L[..., None] * (ta + tb)).sum(axis=1)

    def cross(p, t):
        return p[..., 0] * t[..., 1] - p[..., 1] * t[..., 0]

    M = (L / 6.0 * (2 * cross(xa, ta) + cross(xa, tb) + cross(xb, ta) + 2 * cross(xb, tb))).sum(axis=1)
    area = 0.5 * np.abs(cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]))
    F = F + area[:, None] / 3.0 * body.sum(axis=1)
    # int x_i f_j over a triangle for linear x and f
    W = (np.ones((3, 3)) + np.eye(3)) / 12.0
    xf = np.einsum("ij,nia,njb->nab", W, x, body) * area[:, None, None]
    M = M + xf[:, 0, 1] - xf[:, 1, 0]
    return np.column_stack([F, M])


def _balance_scale(vertices, tractions, body):
    h = np.linalg.norm(vertices - vertices.mean(axis=1, keepdims=True), axis=2).max(axis=1)
    L = np.linalg.norm(np.roll(vertices, -1, axis=1) - vertices, axis=2).sum(axis=1)
    a, b = vertices[:, 1] - vertices[:, 0], vertices[:, 2] - vertices[:, 0]
    area = 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    sc = L * np.abs(tractions).max(axis=(1, 2, 3)) + area * np.abs(body).max(axis=(1, 2))
    return np.column_stack([sc, sc, sc * h])


def _solve_batch(vertices, tractions, body, model, q, check=True):
    if check:
        bal = element_balance(vertices, tractions, body)
        sc = _balance_scale(vertices, tractions, body)
        bad = np.abs(bal) > BALANCE_TOL * np.maximum(sc, 1e-300)
        if bad.any():
            e = int(np.argmax(bad.any(axis=1)))
            raise EquilibrationError(f"element {e}: loads are not in equilibrium (resultant {bal[e]})")
    J = np.stack([vertices[:, 1] - vertices[:, 0], vertices[:, 2] - vertices[:, 0]], axis=2)
    det = np.linalg.det(J)
    if np.any(det <= 0):
        raise EquilibrationError(f"element {int(np.argmax(det <= 0))} is degenerate")
    Jinv = np.linalg.inv(J)
    f_hat = det[:, None, None] * np.einsum("nab,nib->nia", Jinv, body)
    Lp = np.linalg.norm(np.roll(vertices, -1, axis=1) - vertices, axis=2)
    Lref = np.array([1.0, np.sqrt(2.0), 1.0])
    t_hat = (Lp / Lref)[:, :, None, None] * np.einsum("nab,nkjb->nkja", Jinv, tractions)
    T = piola_voigt(J)
    A = np.einsum("nci,cd,ndj->nij", T, model.compliance, T) / det[:, None, None]
    return reference_solver(q).solve(J, f_hat, t_hat, A)


def local_neumann_solve(
    vertices: np.ndarray,
    tractions: np.ndarray,
    body: np.ndarray,
    model: ElasticModel,
    q: int = STRESS_DEGREE,
) -> np.ndarray:
    """Equilibrated stress on one element loaded by self-equilibrated data.

    Args:
        vertices: Element vertices (3, 2), counter-clockwise.
        tractions: Outward traction on edge k = (v_k, v_k+1) at its start and
            end, shape (3, 2, 2).
        body: Body force at the vertices (3, 2).
        model: Material, used for the complementary energy.
        q: Polynomial degree on each sub-triangle.

    Returns:
        Reference coefficients (3, 3, M); wrap with ``PiecewiseStress`` to
        evaluate.

    Raises:
        EquilibrationError: Loads not in equilibrium or degenerate element.
    """
    return _solve_batch(
        np.asarray(vertices, float)[None], np.asarray(tractions, float)[None],
        np.asarray(body, float)[None], model, q,
    )[0]


@dataclass(eq=False)
class AdmissibleStress:
    """Admissible pair (u_h, sigma_hat) with its recovered edge tractions."""

    fem: FemSolution
    load: DiscreteLoad
    tractions: EdgeTractions
    stress: PiecewiseStress

    @property
    def mesh(self) -> TriMesh:
        return self.fem.mesh

    @property
    def model(self) -> ElasticModel:
        return self.fem.model

    def evaluate(self, elem, pts) -> np.ndarray:
        return self.stress.evaluate(elem, pts)

    def cre_field(self, elem, pts) -> np.ndarray:
        """sigma_hat - K eps(u_h) at the given points."""
        return self.stress.evaluate(elem, pts) - self.fem.stress[elem]

    def averaged(self, elem, pts) -> np.ndarray:
        """Averaged admissible stress (sigma_hat + K eps(u_h)) / 2."""
        return 0.5 * (self.stress.evaluate(elem, pts) + self.fem.stress[elem])

    @cached_property
    def element_cre2(self) -> np.ndarray:
        """Squared CRE contribution of every element."""
        mesh = self.mesh
        qb, qw = triangle_rule(2 * self.stress.q)
        subs = sub_triangles_ref()
        out = np.zeros(mesh.n_elements)
        C = self.model.compliance
        v0 = mesh.vertices[:, 0]
        J = mesh.jacobians
        for k in range(3):
            ref = qb @ subs[k]
            pts = v0[:, None, :] + np.einsum("eab,qb->eqa", J, ref)
            el = np.repeat(np.arange(mesh.n_elements), len(ref))
            d = self.cre_field(el, pts.reshape(-1, 2)).reshape(mesh.n_elements, len(ref), 3)
            out += np.einsum("eqi,ij,eqj,q->e", d, C, d, qw) * (mesh.areas / 3.0)
        return out

    def cre(self) -> float:
        """Global constitutive relation error."""
        return float(np.sqrt(self.element_cre2.sum()))


def build_admissible(
    mesh: TriMesh, model: ElasticModel, loads: LoadSet | DiscreteLoad, fem: FemSolution,
    q: int = STRESS_DEGREE,
) -> AdmissibleStress:
    """Admissible stress field for the Galerkin solution ``fem``."""
    load = _as_discrete(loads, mesh)
    et = equilibrate_tractions(mesh, model, load, fem)
    coeffs = _solve_batch(mesh.vertices, et.element_values(), load.body, model, q)
    stress = PiecewiseStress(mesh, coeffs, q, offset=load.prestress.copy())
    return AdmissibleStress(fem, load, et, stress)


@dataclass
class AdmissibilityReport:
    """Normalised residuals of the admissibility checks."""

    interior: float
    jump: float
    neumann: float
    interior_element: int
    jump_edge: int
    neumann_edge: int
    tol: float
    element_of: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return max(self.interior, self.jump, self.neumann) < self.tol

    @property
    def worst_element(self) -> int:
        """Element most responsible for the largest residual."""
        r = {"interior": self.interior, "jump": self.jump, "neumann": self.neumann}
        kind = max(r, key=r.get)
        return self.element_of[kind]

    def __str__(self):
        state = "pass" if self.passed else "FAIL"
        return (
            f"{state}: interior {self.interior:.3e} (element {self.interior_element}), "
            f"jump {self.jump:.3e} (edge {self.jump_edge}), "
            f"neumann {self.neumann:.3e} (edge {self.neumann_edge}), tol {self.tol:.1e}"
        )


def verify_admissibility(
    adm: AdmissibleStress, loads: LoadSet | DiscreteLoad | None = None, tol: float = 1e-9
) -> AdmissibilityReport:
    """Check strong equilibrium, traction continuity and Neumann data.

    Residuals are divided by a load scale: the largest of the finite element
    stress, the prescribed tractions and prestress, and the body force times
    the element size.
    """
    mesh = adm.mesh
    load = adm.load if loads is None else _as_discrete(loads, mesh)
    st = adm.stress
    ne = mesh.n_elements
    scale = max(load.scale(), np.abs(adm.fem.stress).max(initial=0.0), 1e-300)

    # interior equilibrium at degree-6 points of every sub-triangle
    qb, _ = triangle_rule(6)
    subs = sub_triangles_ref()
    v0 = mesh.vertices[:, 0]
    J = mesh.jacobians
    h = mesh.element_size
    worst = np.zeros(ne)
    for k in range(3):
        ref = qb @ subs[k]
        lam = np.column_stack([1 - ref.sum(axis=1), ref])
        pts = (v0[:, None, :] + np.einsum("eab,qb->eqa", J, ref)).reshape(-1, 2)
        el = np.repeat(np.arange(ne), len(ref))
        div = st.divergence(el, pts).reshape(ne, len(ref), 2)
        f = np.einsum("qi,eid->eqd", lam, load.body)
        r = np.abs(div + f).max(axis=(1, 2)) * h
        worst = np.maximum(worst, r)
    interior = worst / scale

    # traction continuity and Neumann data along every edge
    s, _ = gauss_interval(5)
    edges = mesh.edges
    a, b = mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]]
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    ns = len(s)
    nrm = mesh.edge_normals
    ee = mesh.edge_elems
    el0 = np.repeat(ee[:, 0], ns)
    t0 = _traction(st, el0, pts.reshape(-1, 2), np.repeat(nrm, ns, axis=0), load)
    t0 = t0.reshape(-1, ns, 2)
    jump = np.zeros(len(edges))
    inner = np.flatnonzero(ee[:, 1] >= 0)
    if len(inner):
        el1 = np.repeat(ee[inner, 1], ns)
        t1 = _traction(st, el1, pts[inner].reshape(-1, 2), np.repeat(nrm[inner], ns, axis=0), load)
        jump[inner] = np.abs(t0[inner] - t1.reshape(-1, ns, 2)).max(axis=(1, 2)) / scale
    neu = np.zeros(len(edges))
    nb_ids = mesh.boundary_edge_ids
    for bi in np.flatnonzero(load.neumann_edges):
        g = nb_ids[bi]
        T0, T1 = load.traction[bi]
        if mesh.boundary[bi, 0] != edges[g, 0]:
            T0, T1 = T1, T0
        want = T0[None] + s[:, None] * (T1 - T0)[None]
        neu[g] = np.abs(t0[g] - want).max() / scale

    ie = int(np.argmax(interior))
    je = int(np.argmax(jump))
    nei = int(np.argmax(neu))
    rep = AdmissibilityReport(
        float(interior[ie]), float(jump[je]), float(neu[nei]), ie, je, nei, tol
    )
    # the element owning the worst jump is the one whose other edges also fail;
    # pick the neighbour shared by most failing edges
    bad = np.flatnonzero(jump > tol)
    if len(bad):
        cand = ee[bad].ravel()
        cand = cand[cand >= 0]
        jump_elem = int(np.bincount(cand).argmax())
    else:
        jump_elem = int(ee[je, 0])
    rep.element_of = {"interior": ie, "jump": jump_elem, "neumann": int(ee[nei, 0])}
    return rep


def _traction(st, elem, pts, n, load):
    """(sigma_hat - prestress) n on the side of ``elem``."""
    s = st.evaluate(elem, pts, include_offset=False)
    t = voigt_to_tensor(s)
    return np.einsum("nab,nb->na", t, n)

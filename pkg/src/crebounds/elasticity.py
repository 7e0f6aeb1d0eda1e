"""Plane linear elasticity with linear triangles.

Voigt order is (xx, yy, xy) with engineering shear strain, so the energy
density of a stress ``s`` is ``s @ compliance @ s``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, cg, spsolve
from scipy.sparse.linalg import norm as spnorm

from .errors import SingularSystemError
from .mesh import TriMesh

PLANE_STRESS = "plane_stress"
PLANE_STRAIN = "plane_strain"


@dataclass(frozen=True)
class ElasticModel:
    """Isotropic material under a plane assumption."""

    E: float
    nu: float
    assumption: str = PLANE_STRESS

    def __post_init__(self):
        if not np.isfinite(self.E) or self.E <= 0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not (-1.0 < self.nu < 0.5):
            raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {self.nu}")
        if self.assumption not in (PLANE_STRESS, PLANE_STRAIN):
            raise ValueError(f"unknown plane assumption {self.assumption!r}")

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def kappa(self) -> float:
        """Kolosov constant."""
        if self.assumption == PLANE_STRESS:
            return (3.0 - self.nu) / (1.0 + self.nu)
        return 3.0 - 4.0 * self.nu

    @property
    def hooke(self) -> np.ndarray:
        return hooke_voigt(self)[0]

    @property
    def compliance(self) -> np.ndarray:
        return hooke_voigt(self)[1]


def hooke_voigt(model: ElasticModel) -> tuple[np.ndarray, np.ndarray]:
    """Hooke matrix and its closed-form inverse in Voigt notation."""
    E, nu = model.E, model.nu
    if model.assumption == PLANE_STRESS:
        K = E / (1 - nu**2) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]])
        C = np.array([[1, -nu, 0], [-nu, 1, 0], [0, 0, 2 * (1 + nu)]]) / E
    else:
        K = E / ((1 + nu) * (1 - 2 * nu)) * np.array(
            [[1 - nu, nu, 0], [nu, 1 - nu, 0], [0, 0, (1 - 2 * nu) / 2]]
        )
        C = (1 + nu) / E * np.array([[1 - nu, -nu, 0], [-nu, 1 - nu, 0], [0, 0, 2]])
    return K, C


def voigt_to_tensor(s: np.ndarray) -> np.ndarray:
    """(..., 3) Voigt stress to (..., 2, 2) tensor."""
    s = np.asarray(s)
    return np.stack([np.stack([s[..., 0], s[..., 2]], -1), np.stack([s[..., 2], s[..., 1]], -1)], -2)


def tensor_to_voigt(t: np.ndarray) -> np.ndarray:
    return np.stack([t[..., 0, 0], t[..., 1, 1], 0.5 * (t[..., 0, 1] + t[..., 1, 0])], -1)


def pressure(p: float) -> Callable:
    """Traction callable for a normal pressure ``p`` (positive pushes inward)."""

    def traction(x, n):
        return -p * n

    return traction


VectorData = "np.ndarray | Callable"


def _vector_values(spec, pts, *extra) -> np.ndarray:
    if callable(spec):
        v = np.asarray(spec(pts, *extra), dtype=float)
        return np.broadcast_to(v, (len(pts), 2)).copy()
    v = np.asarray(spec, dtype=float).reshape(2)
    return np.broadcast_to(v, (len(pts), 2)).copy()


@dataclass
class LoadSet:
    """User-level loading description.

    Attributes:
        body_force: Region tag (or ``"*"``) to a constant vector or a callable
            ``f(x)``; callables are sampled at element centroids.
        tractions: Boundary tag to a constant vector or a callable ``F(x, n)``,
            interpolated linearly from the edge end points.
        dirichlet: Boundary tag to a prescribed displacement (vector,
            callable ``u(x)``, or an (Nn, 2) array of nodal values), imposed
            at the nodes of the tagged edges.
        prestress: Per-element Voigt prestress, shape (Ne, 3).
        element_body_force: Per-element linear body force given by its
            vertex values, shape (Ne, 3, 2).
        nodal_forces: (node, force) pairs.
        element_mesh: Mesh the per-element arrays and node indices refer to;
            defaults to the mesh being discretized.
    """

    body_force: Mapping = field(default_factory=dict)
    tractions: Mapping = field(default_factory=dict)
    dirichlet: Mapping = field(default_factory=dict)
    prestress: np.ndarray | None = None
    element_body_force: np.ndarray | None = None
    nodal_forces: list = field(default_factory=list)
    element_mesh: TriMesh | None = None

    def discretize(self, mesh: TriMesh) -> DiscreteLoad:
        """Sample the loading on ``mesh``.

        When the per-element data lives on an ancestor of ``mesh`` the load is
        discretized there and transferred exactly through the lineage.
        """
        base = self.element_mesh
        if base is not None and base is not mesh:
            return self.discretize(base).transfer(mesh)
        return _discretize(self, mesh)

    def homogeneous(self) -> LoadSet:
        """Same Dirichlet tags with zero data and no other loading."""
        return LoadSet(dirichlet={t: (0.0, 0.0) for t in self.dirichlet})


@dataclass(eq=False)
class DiscreteLoad:
    """Loading sampled on a particular mesh.

    Attributes:
        mesh: Mesh the arrays refer to.
        body: Linear body force per element by vertex values, (Ne, 3, 2).
        prestress: Constant Voigt prestress per element, (Ne, 3).
        traction: Linear traction per boundary edge by end values, (Nb, 2, 2);
            zero on Dirichlet edges.
        dirichlet_edges: Boolean mask over boundary edges.
        dirichlet_nodes: Boolean mask over nodes.
        dirichlet_values: Prescribed nodal displacement, (Nn, 2).
    """

    mesh: TriMesh
    body: np.ndarray
    prestress: np.ndarray
    traction: np.ndarray
    dirichlet_edges: np.ndarray
    dirichlet_nodes: np.ndarray
    dirichlet_values: np.ndarray

    @property
    def neumann_edges(self) -> np.ndarray:
        return ~self.dirichlet_edges

    def transfer(self, fine: TriMesh) -> DiscreteLoad:
        """Exact transfer of the piecewise-linear data to a refined mesh."""
        if fine is self.mesh:
            return self
        elem, bary = fine.lineage_to(self.mesh)
        body = np.einsum("eij,ejd->eid", bary, self.body[elem])
        edge, t = fine.boundary_lineage_to(self.mesh)
        T0, T1 = self.traction[edge, 0], self.traction[edge, 1]
        traction = np.stack([T0 + t[:, :1] * (T1 - T0), T0 + t[:, 1:] * (T1 - T0)], axis=1)
        dedges = self.dirichlet_edges[edge]
        dvals = np.zeros((fine.n_nodes, 2))
        dnodes = np.zeros(fine.n_nodes, dtype=bool)
        cb = self.mesh.boundary[edge]
        U0, U1 = self.dirichlet_values[cb[:, 0]], self.dirichlet_values[cb[:, 1]]
        for j in (1, 0):  # end 0 written last so ordering matches the coarse assignment
            nodes = fine.boundary[dedges, j]
            tt = t[dedges, j : j + 1]
            dvals[nodes] = U0[dedges] + tt * (U1[dedges] - U0[dedges])
            dnodes[nodes] = True
        return DiscreteLoad(fine, body, self.prestress[elem].copy(), traction, dedges, dnodes, dvals)

    def scaled(self, c: float) -> DiscreteLoad:
        return DiscreteLoad(
            self.mesh, c * self.body, c * self.prestress, c * self.traction,
            self.dirichlet_edges, self.dirichlet_nodes, c * self.dirichlet_values,
        )

    def homogeneous_dirichlet(self) -> DiscreteLoad:
        """Copy with the Dirichlet data set to zero."""
        return DiscreteLoad(
            self.mesh, self.body, self.prestress, self.traction,
            self.dirichlet_edges, self.dirichlet_nodes, np.zeros_like(self.dirichlet_values),
        )

    def scale(self) -> float:
        """Representative load magnitude used to normalise residuals."""
        m = self.mesh
        vals = [
            np.abs(self.prestress).max(initial=0.0),
            np.abs(self.traction).max(initial=0.0),
            np.abs(self.body).max(initial=0.0) * np.sqrt(m.areas.max()),
        ]
        return float(max(vals))


def _discretize(loads: LoadSet, mesh: TriMesh) -> DiscreteLoad:
    ne, nb, nn = mesh.n_elements, len(mesh.boundary), mesh.n_nodes
    known = set(mesh.boundary_tags.tolist())
    for tag in list(loads.tractions) + list(loads.dirichlet):
        if tag not in known:
            raise ValueError(f"boundary tag {tag!r} does not exist in the mesh")
    overlap = set(loads.tractions) & set(loads.dirichlet)
    if overlap:
        raise ValueError(f"tags {sorted(overlap)} are both Dirichlet and traction")

    body = np.zeros((ne, 3, 2))
    regions = set(mesh.element_tags.tolist())
    for tag, spec in loads.body_force.items():
        if tag == "*":
            sel = np.arange(ne)
        elif tag in regions:
            sel = np.flatnonzero(mesh.element_tags == tag)
        else:
            raise ValueError(f"region tag {tag!r} does not exist in the mesh")
        vals = _vector_values(spec, mesh.centroids[sel])
        body[sel] += vals[:, None, :]
    if loads.element_body_force is not None:
        body += np.asarray(loads.element_body_force, dtype=float).reshape(ne, 3, 2)

    for node, force in loads.nodal_forces:
        node = int(node)
        if not 0 <= node < nn:
            raise ValueError(f"nodal force on missing node {node}")
        off, flat = mesh.node_patches
        patch = flat[off[node] : off[node + 1]]
        el, loc = patch // 3, patch % 3
        a = mesh.areas[el].sum()
        F = np.asarray(force, dtype=float).reshape(2)
        # dual basis of the hat function on the patch: g.v integrates to F.v(node)
        g = np.full((len(el), 3, 2), -3.0) * F / a
        g[np.arange(len(el)), loc] = 9.0 * F / a
        body[el] += g

    prestress = np.zeros((ne, 3))
    if loads.prestress is not None:
        prestress += np.asarray(loads.prestress, dtype=float).reshape(ne, 3)

    traction = np.zeros((nb, 2, 2))
    normals = mesh.boundary_normals
    for tag, spec in loads.tractions.items():
        sel = np.flatnonzero(mesh.boundary_tags == tag)
        for j in range(2):
            traction[sel, j] = _vector_values(spec, mesh.nodes[mesh.boundary[sel, j]], normals[sel])

    dedges = np.isin(mesh.boundary_tags, list(loads.dirichlet))
    dnodes = np.zeros(nn, dtype=bool)
    dvals = np.zeros((nn, 2))
    for tag in reversed(list(loads.dirichlet)):
        nodes = mesh.nodes_with_tag(tag)
        spec = loads.dirichlet[tag]
        if not callable(spec) and np.ndim(spec) == 2:
            spec = np.asarray(spec, dtype=float)
            if spec.shape != (nn, 2):
                raise ValueError(f"nodal Dirichlet data for {tag!r} must have shape ({nn}, 2)")
            dvals[nodes] = spec[nodes]
        else:
            dvals[nodes] = _vector_values(spec, mesh.nodes[nodes])
        dnodes[nodes] = True
    return DiscreteLoad(mesh, body, prestress, traction, dedges, dnodes, dvals)


@dataclass(eq=False)
class FemSolution:
    """P1 displacement with its element-wise strain and stress."""

    mesh: TriMesh
    model: ElasticModel
    u: np.ndarray
    load: DiscreteLoad | None = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(self.mesh.n_nodes, 2)
        B = strain_operator(self.mesh)
        self.strain = np.einsum("eij,ej->ei", B, self.u[self.mesh.elements].reshape(-1, 6))
        self.stress = self.strain @ self.model.hooke.T

    def displacement_at(self, elem: np.ndarray, bary: np.ndarray) -> np.ndarray:
        return np.einsum("ni,nid->nd", bary, self.u[self.mesh.elements[elem]])

    def interpolate_to(self, fine: TriMesh) -> FemSolution:
        """Exact prolongation to a mesh refined from this one."""
        elem, bary = fine.lineage_to(self.mesh)
        u = np.zeros((fine.n_nodes, 2))
        vals = np.einsum("eij,ejd->eid", bary, self.u[self.mesh.elements[elem]])
        u[fine.elements.reshape(-1)] = vals.reshape(-1, 2)
        return FemSolution(fine, self.model, u)


def strain_operator(mesh: TriMesh) -> np.ndarray:
    """Element strain-displacement matrices, shape (Ne, 3, 6)."""
    g = mesh.basis_gradients
    B = np.zeros((mesh.n_elements, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    return B


def element_dofs(mesh: TriMesh) -> np.ndarray:
    e = mesh.elements
    return np.stack([2 * e, 2 * e + 1], axis=2).reshape(-1, 6)


def assemble_stiffness(mesh: TriMesh, model: ElasticModel) -> sp.csr_matrix:
    B = strain_operator(mesh)
    Ke = mesh.areas[:, None, None] * np.einsum("eai,ab,ebj->eij", B, model.hooke, B)
    dofs = element_dofs(mesh)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = 2 * mesh.n_nodes
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def load_vector(load: DiscreteLoad) -> np.ndarray:
    """Consistent nodal forces: body force, prestress and tractions."""
    mesh = load.mesh
    n = mesh.n_nodes
    F = np.zeros((n, 2))
    A = mesh.areas
    fb = A[:, None, None] / 12.0 * (load.body.sum(axis=1, keepdims=True) + load.body)
    np.add.at(F, mesh.elements, fb)
    B = strain_operator(mesh)
    fp = A[:, None] * np.einsum("eai,ea->ei", B, load.prestress)
    np.add.at(F, mesh.elements, fp.reshape(-1, 3, 2))
    L = mesh.boundary_lengths[:, None, None]
    T = load.traction
    ft = L / 6.0 * np.stack([2 * T[:, 0] + T[:, 1], T[:, 0] + 2 * T[:, 1]], axis=1)
    ft[load.dirichlet_edges] = 0.0
    np.add.at(F, mesh.boundary, ft)
    return F.ravel()


def solve(mesh: TriMesh, model: ElasticModel, loads: LoadSet | DiscreteLoad) -> FemSolution:
    """Galerkin P1 solution with Dirichlet data imposed by reduction.

    Raises:
        SingularSystemError: No Dirichlet boundary or solver breakdown.
    """
    load = loads if isinstance(loads, DiscreteLoad) else loads.discretize(mesh)
    if load.mesh is not mesh:
        load = load.transfer(mesh)
    if not load.dirichlet_nodes.any():
        raise SingularSystemError("no Dirichlet boundary: rigid body modes are unconstrained")
    K = assemble_stiffness(mesh, model)
    F = load_vector(load)
    fixed = np.repeat(load.dirichlet_nodes, 2)
    ud = load.dirichlet_values.ravel() * fixed
    free = np.flatnonzero(~fixed)
    Kff = K[free][:, free].tocsc()
    rhs = F[free] - K[free] @ ud
    u = ud.copy()
    if len(free):
        u[free] = _linear_solve(Kff, rhs)
    return FemSolution(mesh, model, u.reshape(-1, 2), load)


def _linear_solve(A: sp.csc_matrix, b: np.ndarray) -> np.ndarray:
    norm_a = spnorm(A, 1)

    def accepted(x):
        # normwise backward error, independent of the conditioning
        if not np.all(np.isfinite(x)):
            return False
        return np.linalg.norm(A @ x - b) <= 1e-10 * (norm_a * np.linalg.norm(x) + np.linalg.norm(b)) + 1e-300

    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x = spsolve(A, b)
        except (MatrixRankWarning, RuntimeError):
            x = np.full_like(b, np.nan)
    if accepted(x):
        return x
    x, info = cg(A, b, rtol=1e-12, atol=0.0, maxiter=20 * len(b))
    if info != 0 or not accepted(x):
        raise SingularSystemError("linear solve failed: the system is singular or ill-conditioned")
    return x


def energy_norm(sol: FemSolution, region: np.ndarray | None = None) -> float:
    """Energy norm of a P1 field, optionally restricted to an element set."""
    dens = np.einsum("ei,ij,ej->e", sol.strain, sol.model.hooke, sol.strain) * sol.mesh.areas
    if region is not None:
        region = np.asarray(region, dtype=np.int64)
        if region.size == 0:
            return 0.0
        dens = dens[region]
    return float(np.sqrt(max(dens.sum(), 0.0)))


def work(load: DiscreteLoad, sol: FemSolution) -> float:
    """Work of the (non-Dirichlet) loads of ``load`` on the displacement ``sol``."""
    if load.mesh is not sol.mesh:
        load = load.transfer(sol.mesh)
    return float(load_vector(load) @ sol.u.ravel())


def bilinear(a: FemSolution, b: FemSolution) -> float:
    """Energy inner product of two P1 fields on the same mesh."""
    return float(np.einsum("ei,ij,ej,e->", a.strain, a.model.hooke, b.strain, a.mesh.areas))

"""Quantities of interest, their extractor loads and direct evaluation.

A quantity of interest is a linear functional
``L(u) = int (prestress : eps(u) + body . u)`` whose data (the extractor) also
loads the adjoint problem.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .elasticity import (
    DiscreteLoad, ElasticModel, FemSolution, LoadSet, bilinear, load_vector, solve, work,
)
from .fracture import dual_amplitude, mode1_displacement, mode1_stress
from .homothetic import CRACKED_CIRCLE, HomotheticFamily, annulus_rule, sub_cells
from .mesh import TriMesh
from .quadrature import triangle_rule

_STRESS = {"xx": 0, "yy": 1, "xy": 2}
_DISP = {"x": 0, "y": 1}


@dataclass(frozen=True)
class MeanStress:
    """Area-weighted mean of one stress component over an element set."""

    elements: tuple
    component: str = "xx"

    def __post_init__(self):
        if len(self.elements) == 0:
            raise ValueError("mean-stress region is empty")
        if self.component not in _STRESS:
            raise ValueError(f"unknown stress component {self.component!r}")


@dataclass(frozen=True)
class PointDisplacement:
    """One displacement component at a mesh node."""

    node: int
    component: str = "x"

    def __post_init__(self):
        if self.component not in _DISP:
            raise ValueError(f"unknown displacement component {self.component!r}")


@dataclass(frozen=True)
class StressIntensityFactor:
    """Mode-I stress intensity factor from a crown integral.

    Attributes:
        tip: Crack tip.
        direction: Unit vector pointing ahead of the tip (the crack lies behind).
        r_inner: Inner crown radius.
        r_outer: Outer crown radius.
    """

    tip: tuple
    direction: tuple = (1.0, 0.0)
    r_inner: float = 0.25
    r_outer: float = 0.5

    def __post_init__(self):
        if not 0 < self.r_inner < self.r_outer:
            raise ValueError("crown radii must satisfy 0 < r_inner < r_outer")


QoiSpec = MeanStress | PointDisplacement | StressIntensityFactor

MIN_RINGS = 3


def _check_sif(q: StressIntensityFactor, mesh: TriMesh):
    tip = np.asarray(q.tip, float)
    d = np.asarray(q.direction, float)
    d = d / np.linalg.norm(d)
    tol = 1e-9 * mesh.diameter
    bn = mesh.nodes[mesh.boundary]
    at_tip = np.linalg.norm(bn - tip, axis=2) < tol
    other = np.where(at_tip[:, :1], bn[:, 1], bn[:, 0]) - tip
    along = (np.abs(other[:, 0] * d[1] - other[:, 1] * d[0]) < tol) & (other @ d < 0)
    if not np.any(at_tip.any(axis=1) & along):
        raise ValueError("crack tip is not the end of a boundary slit behind it")
    fam = HomotheticFamily.for_mesh(mesh, tip, CRACKED_CIRCLE, tuple(-d))
    if q.r_outer > fam.lambda_max * (1 + 1e-12):
        raise ValueError(f"crown radius {q.r_outer} leaves the domain (limit {fam.lambda_max:.6g})")
    r = np.linalg.norm(mesh.centroids - tip, axis=1)
    ring = (r > q.r_inner) & (r < q.r_outer)
    if not ring.any():
        raise ValueError("crown contains no element")
    h = float(np.median(np.sqrt(2 * mesh.areas[ring])))
    if (q.r_outer - q.r_inner) < (MIN_RINGS - 1e-9) * h:
        raise ValueError(f"crown is not resolved: fewer than {MIN_RINGS} element rings")


def _crown_data(q: StressIntensityFactor, mesh: TriMesh, model: ElasticModel):
    """Quadrature of the crown with the auxiliary fields at every point."""
    cells = sub_cells(mesh)
    pts, w, cell = annulus_rule(cells, q.tip, q.r_inner, q.r_outer, degree=7)
    elem = cells.elem[cell]
    a = dual_amplitude(model)
    v = mode1_displacement(-1, pts, model, a, q.tip, q.direction)
    s = mode1_stress(-1, pts, a, q.tip, q.direction)
    x = pts - np.asarray(q.tip, float)
    gphi = -x / np.linalg.norm(x, axis=1)[:, None] / (q.r_outer - q.r_inner)
    return pts, w, elem, v, s, gphi


def _apply(s, g):
    return np.column_stack([s[:, 0] * g[:, 0] + s[:, 2] * g[:, 1], s[:, 2] * g[:, 0] + s[:, 1] * g[:, 1]])


def extractor_loads(q: QoiSpec, mesh: TriMesh, model: ElasticModel) -> LoadSet:
    """Adjoint loading representing ``q`` on ``mesh``.

    Raises:
        ValueError: Invalid element set, node, or crown.
    """
    ne = mesh.n_elements
    if isinstance(q, MeanStress):
        el = np.asarray(q.elements, dtype=np.int64)
        if el.min() < 0 or el.max() >= ne or len(np.unique(el)) != len(el):
            raise ValueError("mean-stress elements are invalid")
        unit = np.zeros(3)
        unit[_STRESS[q.component]] = 1.0
        pre = np.zeros((ne, 3))
        pre[el] = model.hooke @ unit / mesh.areas[el].sum()
        return LoadSet(prestress=pre, element_mesh=mesh)
    if isinstance(q, PointDisplacement):
        if not 0 <= q.node < mesh.n_nodes:
            raise ValueError(f"node {q.node} is not a mesh node")
        f = np.zeros(2)
        f[_DISP[q.component]] = 1.0
        return LoadSet(nodal_forces=[(q.node, f)], element_mesh=mesh)
    if isinstance(q, StressIntensityFactor):
        _check_sif(q, mesh)
        pts, w, elem, v, s, gphi = _crown_data(q, mesh, model)
        # prestress: element mean of K sym(v x grad phi)
        eps = np.column_stack([v[:, 0] * gphi[:, 0], v[:, 1] * gphi[:, 1], v[:, 0] * gphi[:, 1] + v[:, 1] * gphi[:, 0]])
        pre = np.zeros((ne, 3))
        np.add.at(pre, elem, w[:, None] * (eps @ model.hooke.T))
        pre /= mesh.areas[:, None]
        # body force: element-wise linear L2 projection of -sigma grad phi
        f = -_apply(s, gphi)
        lam = mesh.barycentric(elem, pts)
        mom = np.zeros((ne, 3, 2))
        np.add.at(mom, elem, w[:, None, None] * lam[:, :, None] * f[:, None, :])
        Minv = (3.0 * 4.0) * np.linalg.inv(np.ones((3, 3)) + np.eye(3))
        body = np.einsum("ij,ejd->eid", Minv, mom) / mesh.areas[:, None, None]
        return LoadSet(prestress=pre, element_body_force=body, element_mesh=mesh)
    raise TypeError(f"unknown quantity of interest {q!r}")


def evaluate(q: QoiSpec, sol: FemSolution) -> float:
    """Value of the quantity of interest for a P1 solution on the QoI's mesh."""
    mesh = sol.mesh
    if isinstance(q, MeanStress):
        el = np.asarray(q.elements, dtype=np.int64)
        a = mesh.areas[el]
        return float(a @ sol.stress[el, _STRESS[q.component]] / a.sum())
    if isinstance(q, PointDisplacement):
        return float(sol.u[q.node, _DISP[q.component]])
    if isinstance(q, StressIntensityFactor):
        _check_sif(q, mesh)
        pts, w, elem, v, s, gphi = _crown_data(q, mesh, sol.model)
        u = sol.displacement_at(elem, mesh.barycentric(elem, pts))
        su = sol.stress[elem]
        val = np.einsum("nd,nd->n", _apply(su, gphi), v) - np.einsum("nd,nd->n", _apply(s, gphi), u)
        return float(w @ val)
    raise TypeError(f"unknown quantity of interest {q!r}")


def extraction_value(adjoint_load: DiscreteLoad, sol: FemSolution) -> float:
    """L(u) from extractor data, for a solution on the data mesh or a refinement of it."""
    return work(adjoint_load, sol)


def adjoint_equivalence_check(
    q: QoiSpec, mesh: TriMesh, model: ElasticModel, loads: LoadSet, adjoint_mesh: TriMesh | None = None
) -> float | None:
    """Relative discrete duality residual between reference and adjoint solutions.

    With the Dirichlet lift g of the reference data,
    ``L(u_h) = F(u~_h) + L(g) - a(g, u~_h)`` holds exactly on a shared mesh.
    Returns None (with a warning) when the adjoint mesh differs.
    """
    if adjoint_mesh is not None and adjoint_mesh is not mesh:
        warnings.warn("duality check skipped: reference and adjoint meshes differ", stacklevel=2)
        return None
    ref_load = loads.discretize(mesh)
    sol = solve(mesh, model, ref_load)
    adj_load = extractor_loads(q, mesh, model)
    adj_load.dirichlet = {t: (0.0, 0.0) for t in loads.dirichlet}
    adj_d = adj_load.discretize(mesh)
    adj = solve(mesh, model, adj_d)
    lhs = work(adj_d, sol)
    g = FemSolution(mesh, model, ref_load.dirichlet_values * ref_load.dirichlet_nodes[:, None])
    rhs = float(load_vector(ref_load) @ adj.u.ravel()) + work(adj_d, g) - bilinear(g, adj)
    res = abs(lhs - rhs)
    return res / abs(lhs) if lhs != 0 else res


def functional_value(load: DiscreteLoad, displacement, strain, degree: int = 8) -> float:
    """L(u) = int (prestress : eps(u) + body . u) for closed-form fields.

    Args:
        load: Extractor data on its mesh.
        displacement: Callable u(x) for points (N, 2).
        strain: Callable returning engineering Voigt strain at points (N, 2).
        degree: Triangle quadrature degree.
    """
    mesh = load.mesh
    active = np.flatnonzero(np.any(load.prestress != 0, axis=1) | np.any(load.body != 0, axis=(1, 2)))
    if len(active) == 0:
        return 0.0
    bq, wq = triangle_rule(degree)
    pts = np.einsum("qi,eid->eqd", bq, mesh.vertices[active])
    flat = pts.reshape(-1, 2)
    u = np.asarray(displacement(flat), float).reshape(len(active), len(wq), 2)
    eps = np.asarray(strain(flat), float).reshape(len(active), len(wq), 3)
    body = np.einsum("qi,eid->eqd", bq, load.body[active])
    dens = np.einsum("eqi,ei->eq", eps, load.prestress[active]) + np.einsum("eqd,eqd->eq", body, u)
    return float(np.einsum("eq,q,e->", dens, wq, mesh.areas[active]))

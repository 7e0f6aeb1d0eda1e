"""Built-in manufactured problems used by the tests, the demo and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .elasticity import PLANE_STRAIN, PLANE_STRESS, ElasticModel, LoadSet
from .fracture import k1_amplitude, lower_lip_nodes, mode1_displacement
from .homothetic import CIRCLE, CRACKED_CIRCLE
from .mesh import TriMesh
from .meshgen import annulus_mesh, cracked_square_mesh, l_shape_mesh, rectangle_mesh
from .qoi import MeanStress, PointDisplacement, QoiSpec, StressIntensityFactor


@dataclass
class Problem:
    """A reference problem with its quantity of interest and subdomain family.

    Attributes:
        name: Identifier.
        mesh: Reference mesh.
        model: Material.
        loads: Loads, or a function building them for a given mesh (needed
            when Dirichlet data are nodal arrays).
        qoi: Quantity of interest, defined on ``mesh``.
        center: Homothety center.
        shape: Family shape.
        crack_direction: Direction from the center along the crack.
        lam: Radius of the subdomain holding the extractor.
        lam_bar: Outer radius, or ``"optimize"``.
        exact_displacement: Closed-form solution of the discretized problem,
            when one exists; ``exact_strain`` must then be given too.
    """

    name: str
    mesh: TriMesh
    model: ElasticModel
    loads: LoadSet | Callable[[TriMesh], LoadSet]
    qoi: QoiSpec
    center: tuple
    lam: float
    lam_bar: float | str = "optimize"
    shape: str = CIRCLE
    crack_direction: tuple = (-1.0, 0.0)
    exact_displacement: Callable | None = None
    exact_strain: Callable | None = None
    notes: dict = field(default_factory=dict)

    def loads_for(self, mesh: TriMesh) -> LoadSet:
        return self.loads(mesh) if callable(self.loads) else self.loads


def elements_near(mesh: TriMesh, point, radius: float) -> tuple:
    """Elements whose vertices all lie within ``radius`` of ``point``."""
    d = np.linalg.norm(mesh.vertices - np.asarray(point, float), axis=2).max(axis=1)
    return tuple(int(e) for e in np.flatnonzero(d < radius))


def nearest_node(mesh: TriMesh, point) -> int:
    return int(np.argmin(np.linalg.norm(mesh.nodes - np.asarray(point, float), axis=1)))


def square_quadratic(n: int = 8, qoi: str = "point", model: ElasticModel | None = None) -> Problem:
    """Unit square with u = (x^2, x y), clamped at x = 0, tractions elsewhere.

    Body force and tractions are constant and linear, so the closed form is
    the exact solution of the discretized problem.
    """
    model = model or ElasticModel(1.0, 0.3, PLANE_STRESS)
    K = model.hooke
    mesh = rectangle_mesh(0.0, 1.0, 0.0, 1.0, n, n)

    def strain(x):
        return np.column_stack([2 * x[:, 0], x[:, 0], x[:, 1]])

    def disp(x):
        return np.column_stack([x[:, 0] ** 2, x[:, 0] * x[:, 1]])

    def traction(x, nrm):
        s = strain(x) @ K.T
        return np.column_stack([s[:, 0] * nrm[:, 0] + s[:, 2] * nrm[:, 1], s[:, 2] * nrm[:, 0] + s[:, 1] * nrm[:, 1]])

    # div sigma = (2 K00 + K01 + K22, 0)
    f = (-(2 * K[0, 0] + K[0, 1] + K[2, 2]), 0.0)
    loads = LoadSet(body_force={"*": f}, tractions={t: traction for t in ("right", "bottom", "top")},
                    dirichlet={"left": (0.0, 0.0)})
    center = (0.75, 0.5)
    if qoi == "point":
        q = PointDisplacement(nearest_node(mesh, center), "x")
    elif qoi == "mean":
        q = MeanStress(elements_near(mesh, center, 0.2), "xx")
    else:
        raise ValueError(f"unsupported quantity {qoi!r} for this problem")
    return Problem("square_quadratic", mesh, model, loads, q, center, lam=0.2, lam_bar="optimize",
                   exact_displacement=disp, exact_strain=strain)


def lame_coefficients(model: ElasticModel, r_in: float, r_out: float, p: float) -> tuple[float, float]:
    """(A, B) of u_r = A r + B / r for inner pressure ``p`` and a fixed outer rim."""
    K = model.hooke
    a11, a12 = K[0, 0] + K[0, 1], K[0, 1] - K[0, 0]
    # sigma_rr(r_in) = -p, u_r(r_out) = 0
    M = np.array([[a11, a12 / r_in**2], [r_out, 1.0 / r_out]])
    A, B = np.linalg.solve(M, [-p, 0.0])
    return float(A), float(B)


def lame_annulus(n_r: int = 6, n_theta: int = 96, qoi: str = "mean", model: ElasticModel | None = None,
                 r_in: float = 0.5, r_out: float = 1.0, p: float = 1.0) -> Problem:
    """Thick annulus under inner pressure with the outer rim fixed.

    The polygonal boundary makes the closed form only approximate, so the
    reference value comes from an overkill solution.
    """
    model = model or ElasticModel(1.0, 0.3, PLANE_STRAIN)
    mesh = annulus_mesh(r_in, r_out, n_r, n_theta)

    def radial_pressure(x, nrm):
        # p along the radius rather than the edge normal keeps the data
        # continuous at the polygon corners
        return p * x / np.linalg.norm(x, axis=1)[:, None]

    loads = LoadSet(tractions={"inner": radial_pressure}, dirichlet={"outer": (0.0, 0.0)})
    rm = 0.5 * (r_in + r_out)
    center = (rm, 0.0)
    lam = 0.15
    if qoi == "mean":
        q = MeanStress(elements_near(mesh, center, lam), "xx")
    elif qoi == "point":
        q = PointDisplacement(nearest_node(mesh, center), "x")
    else:
        raise ValueError(f"unsupported quantity {qoi!r} for this problem")
    A, B = lame_coefficients(model, r_in, r_out, p)
    return Problem("lame_annulus", mesh, model, loads, q, center, lam=lam, lam_bar="optimize",
                   notes={"lame": (A, B)})


def cracked_williams(n: int = 16, model: ElasticModel | None = None, K_I: float = 1.0,
                     r_inner: float = 0.25, r_outer: float = 0.75) -> Problem:
    """Cracked square with the mode-I field imposed on the outer boundary."""
    model = model or ElasticModel(1.0, 0.3, PLANE_STRAIN)
    mesh = cracked_square_mesh(n)

    def loads(m: TriMesh) -> LoadSet:
        u = mode1_displacement(1, m.nodes, model, k1_amplitude(K_I), lower=lower_lip_nodes(m))
        return LoadSet(dirichlet={"outer": u})

    q = StressIntensityFactor((0.0, 0.0), (1.0, 0.0), r_inner, r_outer)
    return Problem("cracked_williams", mesh, model, loads, q, (0.0, 0.0), lam=r_outer, lam_bar="optimize",
                   shape=CRACKED_CIRCLE, crack_direction=(-1.0, 0.0), notes={"K_I": K_I})


def l_shape_localized(n: int = 16, model: ElasticModel | None = None) -> Problem:
    """L-shaped panel under gravity, clamped at the bottom; quantity near the far corner.

    The reference error concentrates at the re-entrant corner, away from the
    region of interest.
    """
    model = model or ElasticModel(1.0, 0.3, PLANE_STRESS)
    mesh = l_shape_mesh(n)
    loads = LoadSet(body_force={"*": (0.0, -1.0)}, dirichlet={"bottom": (0.0, 0.0)})
    center = (-0.5, 0.5)
    lam = 0.2
    q = MeanStress(elements_near(mesh, center, lam), "yy")
    return Problem("l_shape_localized", mesh, model, loads, q, center, lam=lam, lam_bar="optimize")


BUILTINS = {
    "square_quadratic": square_quadratic,
    "lame_annulus": lame_annulus,
    "cracked_williams": cracked_williams,
    "l_shape_localized": l_shape_localized,
}

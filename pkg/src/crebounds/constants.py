"""Shape constants h (boundary-to-interior energy ratio) and k (weighted
Rayleigh quotient minimum), plus Trefftz-field checks of both.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .elasticity import PLANE_STRAIN, PLANE_STRESS, ElasticModel
from .homothetic import BoundaryIntegrator, HomotheticFamily, SubdomainIntegrator, sub_cells
from .meshgen import rectangle_mesh

SHAPES_2D = ("circle", "cracked_circle", "square")
SHAPES_3D = ("sphere", "parallelepiped")


def analytic_h(shape: str, nu: float, assumption: str = PLANE_STRESS, theta: float = 0.0) -> float:
    """Closed-form constant h.

    Args:
        shape: circle, cracked_circle, square, sphere or parallelepiped.
        nu: Poisson's ratio.
        assumption: Plane assumption for 2D shapes; ignored in 3D.
        theta: Angle between the crack lips (cracked circle only).

    Raises:
        ValueError: Unknown shape, assumption or invalid parameters.
    """
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {nu}")
    if shape in SHAPES_3D:
        if shape == "sphere":
            return (1 - nu) / (1 + nu)
        return (4 - 5 * nu) / (3 * (1 + nu))
    if assumption not in (PLANE_STRESS, PLANE_STRAIN):
        raise ValueError(f"unknown plane assumption {assumption!r}")
    ps = assumption == PLANE_STRESS
    if shape == "circle":
        return 1 / (1 + nu) if ps else 1 - nu
    if shape == "cracked_circle":
        if not 0.0 <= theta < 2 * np.pi:
            raise ValueError("lip angle must lie in [0, 2 pi)")
        w = 3 * (2 * np.pi - theta)
        if ps:
            return 1 / (1 + nu) + (1 - nu) / ((1 + nu) * w)
        return 1 - nu + (1 - 2 * nu) / w
    if shape == "square":
        return (7 - nu) / (6 * (1 + nu)) if ps else (7 - 8 * nu) / 6
    raise ValueError(f"unsupported shape {shape!r}")


def analytic_k(shape: str, dim: int | None = None) -> int:
    """Constant k: 2 for the plane shapes, 3 for the solid ones."""
    if shape in SHAPES_2D:
        k, d = 2, 2
    elif shape in SHAPES_3D:
        k, d = 3, 3
    else:
        raise ValueError(f"unsupported shape {shape!r}")
    if dim is not None and dim != d:
        raise ValueError(f"shape {shape!r} is {d}D, not {dim}D")
    return k


@dataclass(frozen=True)
class ShapeConstant:
    shape: str
    assumption: str
    theta: float
    h: float
    k: int


def constants_table(nu: float = 0.3) -> list[ShapeConstant]:
    """All tabulated rows at Poisson's ratio ``nu``."""
    rows = []
    for a in (PLANE_STRESS, PLANE_STRAIN):
        rows.append(ShapeConstant("circle", a, 0.0, analytic_h("circle", nu, a), 2))
    for theta in (0.0, np.pi / 6, np.pi / 3, np.pi / 2):
        for a in (PLANE_STRESS, PLANE_STRAIN):
            rows.append(ShapeConstant("cracked_circle", a, theta, analytic_h("cracked_circle", nu, a, theta), 2))
    for a in (PLANE_STRESS, PLANE_STRAIN):
        rows.append(ShapeConstant("square", a, 0.0, analytic_h("square", nu, a), 2))
    for s in SHAPES_3D:
        rows.append(ShapeConstant(s, "3d", 0.0, analytic_h(s, nu), 3))
    return rows


def constants_csv(nu: float = 0.3) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["shape", "assumption", "theta", "h", "k"])
    for r in constants_table(nu):
        w.writerow([r.shape, r.assumption, f"{r.theta:.6f}", f"{r.h:.5f}", r.k])
    return buf.getvalue()


def trefftz_stress(m: int, pts: np.ndarray, mu_part: bool = False) -> np.ndarray:
    """Voigt stress of a degree-m homogeneous Navier solution at points (N, 2).

    Built from complex potentials phi(z) = z^m (or psi(z) = z^m when
    ``mu_part``), which solve the plane equations for any material.
    """
    if m < 1:
        raise ValueError("degree must be at least 1")
    z = pts[:, 0] + 1j * pts[:, 1]
    if mu_part:
        d1 = np.zeros_like(z)
        d2 = np.zeros_like(z)
        dpsi = m * z ** (m - 1)
    else:
        d1 = m * z ** (m - 1)
        d2 = m * (m - 1) * z ** (m - 2) if m >= 2 else np.zeros_like(z)
        dpsi = np.zeros_like(z)
    trace = 4 * d1.real
    dev = 2 * (np.conj(z) * d2 + dpsi)
    sxx = 0.5 * (trace - dev.real)
    syy = 0.5 * (trace + dev.real)
    sxy = 0.5 * dev.imag
    return np.column_stack([sxx, syy, sxy])


def trefftz_displacement(m: int, pts: np.ndarray, model: ElasticModel, mu_part: bool = False) -> np.ndarray:
    """Displacement matching ``trefftz_stress``."""
    z = pts[:, 0] + 1j * pts[:, 1]
    if mu_part:
        phi, dphi, psi = np.zeros_like(z), np.zeros_like(z), z**m
    else:
        phi, dphi, psi = z**m, m * z ** (m - 1), np.zeros_like(z)
    w = (model.kappa * phi - z * np.conj(dphi) - np.conj(psi)) / (2 * model.mu)
    return np.column_stack([w.real, w.imag])


def _disk_integrators(radius, n_arc):
    mesh = rectangle_mesh(-2 * radius, 2 * radius, -2 * radius, 2 * radius, 8, 8)
    fam = HomotheticFamily((0.0, 0.0), 2 * radius)
    return SubdomainIntegrator(sub_cells(mesh), fam, degree=8, n_arc=n_arc), BoundaryIntegrator(mesh, fam, n_arc)


def trefftz_rayleigh(m: int, lam_bar: float, model: ElasticModel, n_arc: int = 16, mu_part: bool = False) -> float:
    """Weighted boundary energy over interior energy of a degree-m Trefftz field on a disk."""
    if m not in (1, 2, 3):
        raise ValueError("Trefftz fields are provided for degrees 1 to 3")
    C = model.compliance

    def dens(pts):
        s = trefftz_stress(m, pts, mu_part)
        return np.einsum("ni,ij,nj->n", s, C, s)

    area, bnd = _disk_integrators(lam_bar, n_arc)
    interior = area.inside(lam_bar, lambda e, er, p: dens(p))
    boundary = bnd.integrate(lam_bar, lambda e, p: dens(p))
    return boundary / interior


def steklov_quotient_dilation(model: ElasticModel, radius: float = 1.0, n_arc: int = 16) -> float:
    """Boundary-stress energy of K (u x n)_sym over interior energy for u = x on a disk.

    The boundary norm carries the weight x.n, which equals the radius on the
    circle; dividing by it gives the plain boundary norm.  The trace of u = x
    grows with the radius, so the quotient is proportional to ``radius``.
    """
    K, C = model.hooke, model.compliance

    def bdens(pts):
        n = pts / np.linalg.norm(pts, axis=1)[:, None]
        eps = np.column_stack([pts[:, 0] * n[:, 0], pts[:, 1] * n[:, 1], pts[:, 0] * n[:, 1] + pts[:, 1] * n[:, 0]])
        s = eps @ K.T
        return np.einsum("ni,ij,nj->n", s, C, s)

    eps_in = np.array([1.0, 1.0, 0.0])
    e_in = eps_in @ K @ eps_in
    area, bnd = _disk_integrators(radius, n_arc)
    interior = area.inside(radius, lambda e, er, p: np.full(len(p), e_in))
    boundary = bnd.integrate(radius, lambda e, p: bdens(p)) / radius
    return boundary / interior

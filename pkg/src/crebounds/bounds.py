"""Guaranteed bounds of a linear quantity of interest from two admissible pairs.

Three techniques share the center ``I_h + I_hh``:

* classical: half-width ``e * e~ / 2``;
* first improved: adds the subdomain correction ``I_hhh`` and uses the
  Steklov constant ``h`` to localize the reference error;
* second improved: uses the weighted boundary norm of the adjoint error and
  the constant ``k``.

``e`` denotes the reference CRE, ``e~`` the adjoint CRE, a subscript ``lam``
restriction to the subdomain of radius lambda and ``out`` its complement.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .constants import analytic_h, analytic_k
from .equilibration import AdmissibleStress
from .errors import NumericalError
from .homothetic import (
    DEGREE, N_ARC, BoundaryIntegrator, HomotheticFamily, SubdomainIntegrator, cre_density, cross_cells,
    sub_cells,
)
from .quadrature import triangle_points

N_INT = 200
N_GRID = 16
SLACK = 1e-8


@dataclass(frozen=True)
class BoundIngredients:
    """Scalar inputs of the three bound formulas.

    Squared CRE restrictions are stored so complements can be formed by
    subtraction without losing the sign information needed for checks.
    """

    I_h: float
    I_hh: float
    e: float
    e_adj: float
    I_hhh: float = 0.0
    lam: float = 0.0
    lam_bar: float = 0.0
    h: float = 1.0
    k: float = 2.0
    n: int = 1
    e_lam_bar: float = 0.0
    e_adj_lam: float = 0.0
    e_adj_lam_bar: float = 0.0
    e_adj_out_lam2: float = 0.0
    e_adj_out_lam_bar2: float = 0.0
    boundary_norm: float = 0.0
    gamma: float = 0.0

    @property
    def e_adj_out_lam(self) -> float:
        return float(np.sqrt(max(self.e_adj_out_lam2, 0.0)))

    @property
    def e_adj_out_lam_bar(self) -> float:
        return float(np.sqrt(max(self.e_adj_out_lam_bar2, 0.0)))


def classical_bounds(ing: BoundIngredients) -> tuple[float, float]:
    c = ing.I_h + ing.I_hh
    hw = 0.5 * ing.e * ing.e_adj
    return c - hw, c + hw


def gamma(lam: float, lam_bar: float, h: float, profile, n_int: int = N_INT) -> float:
    """Trapezoidal value of int_lam^lam_bar (l/lam)^(-1/h) e2(l) / (h l) dl.

    Args:
        profile: Squared local reference CRE, either a vectorized callable of
            the radius or a pair (radii, values) interpolated linearly.
        n_int: Number of uniform trapezoid nodes.

    Raises:
        ValueError: ``lam > lam_bar``, non-positive radii, or a sampled
            profile that does not cover the interval.
    """
    if lam <= 0 or h <= 0:
        raise ValueError("lambda and h must be positive")
    if lam > lam_bar:
        raise ValueError(f"lambda {lam} exceeds lambda-bar {lam_bar}")
    if lam == lam_bar:
        return 0.0
    if n_int < 2:
        raise ValueError("at least two integration nodes are needed")
    x = np.linspace(lam, lam_bar, n_int)
    if callable(profile):
        e2 = np.asarray(profile(x), float)
    else:
        r, v = (np.asarray(a, float) for a in profile)
        if len(r) < 2 or r[0] > lam * (1 + 1e-12) or r[-1] < lam_bar * (1 - 1e-12):
            raise ValueError("profile samples do not span [lambda, lambda-bar]")
        e2 = np.interp(x, r, v)
    f = (x / lam) ** (-1.0 / h) * e2 / (h * x)
    return float(max(np.trapezoid(f, x), 0.0))


def delta(ing: BoundIngredients) -> float:
    ratio = (ing.lam / ing.lam_bar) ** (1.0 / ing.h)
    return float(np.sqrt(ratio * 0.25 * (ing.e + ing.e_lam_bar) ** 2 + ing.gamma))


def improved1_bounds(ing: BoundIngredients) -> tuple[float, float]:
    c = ing.I_h + ing.I_hh + ing.I_hhh
    hw = abs(ing.e_adj_lam * delta(ing) + 0.5 * ing.e * ing.e_adj_out_lam)
    return c - hw, c + hw


def theta_tilde(boundary_norm: float, k: float, n: int = 1) -> float:
    """Weighted boundary norm of the adjoint error times 2 sqrt(k) / (k + n + 1).

    Raises:
        ValueError: ``k < n + 1``.
    """
    if k < n + 1:
        raise ValueError(f"k = {k} is below n + 1 = {n + 1}")
    return float(boundary_norm * 2 * np.sqrt(k) / (k + n + 1))


def improved2_half_width(ing: BoundIngredients, tol: float = SLACK) -> float:
    """Half-width of the second improved bounds.

    Raises:
        NumericalError: The adjoint CRE outside the subdomain is negative
            beyond ``tol`` relative, which signals inconsistent bookkeeping.
    """
    if ing.e_adj_out_lam_bar2 < -tol * max(ing.e_adj**2, 1e-300):
        raise NumericalError("negative squared adjoint CRE outside the subdomain")
    th = theta_tilde(ing.boundary_norm, ing.k, ing.n)
    rad = th * th + max(ing.e_adj_out_lam_bar2, 0.0)
    return 0.5 * abs(ing.e * np.sqrt(rad) + ing.e_lam_bar * (th + ing.e_adj_lam_bar))


def improved2_bounds(ing: BoundIngredients) -> tuple[float, float]:
    c = ing.I_h + ing.I_hh
    hw = improved2_half_width(ing)
    return c - hw, c + hw


def optimize_lambda_bar(builder: Callable[[float], BoundIngredients], grid) -> tuple[float, BoundIngredients]:
    """Grid point minimizing the second-technique half-width; ties go to the smallest radius.

    Args:
        builder: Maps a radius to the ingredients evaluated there.
        grid: Candidate radii.

    Raises:
        ValueError: Empty grid.
    """
    grid = np.sort(np.asarray(grid, float))
    if grid.size == 0:
        raise ValueError("empty lambda-bar grid")
    best = None
    for lb in grid:
        ing = builder(float(lb))
        hw = improved2_half_width(ing)
        if best is None or hw < best[0]:
            best = (hw, float(lb), ing)
    return best[1], best[2]


def default_grid(lam: float, lam_max: float, n: int = N_GRID) -> np.ndarray:
    return np.geomspace(lam, lam_max, n)


@dataclass(frozen=True)
class BoundRow:
    technique: str
    lam: float
    lam_bar: float
    I_h: float
    I_hh: float
    I_hhh: float
    lower: float
    upper: float
    I_ref: float | None = None

    @property
    def center(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)

    def normalized(self) -> tuple[float, float]:
        if self.I_ref is None or self.I_ref == 0:
            return float("nan"), float("nan")
        lo, hi = self.lower / self.I_ref, self.upper / self.I_ref
        return (lo, hi) if self.I_ref > 0 else (hi, lo)

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


CSV_COLUMNS = [
    "technique", "lambda", "lambda_bar", "I_h", "I_hh", "I_hhh", "lower", "upper", "half_width",
    "normalized_lower", "normalized_upper",
]


def _fmt(x) -> str:
    return repr(float(x))


@dataclass
class BoundsReport:
    """Rows for the three techniques plus the ingredients that produced them."""

    rows: list[BoundRow]
    ingredients: BoundIngredients
    lambda_bar_opt: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def row(self, technique: str) -> BoundRow:
        for r in self.rows:
            if r.technique == technique:
                return r
        raise KeyError(technique)

    def columns(self) -> list[str]:
        return CSV_COLUMNS + (["lambda_bar_opt"] if self.lambda_bar_opt is not None else [])

    def csv_rows(self) -> list[list[str]]:
        out = []
        for r in self.rows:
            nl, nu = r.normalized()
            line = [r.technique, _fmt(r.lam), _fmt(r.lam_bar), _fmt(r.I_h), _fmt(r.I_hh), _fmt(r.I_hhh),
                    _fmt(r.lower), _fmt(r.upper), _fmt(r.half_width), _fmt(nl), _fmt(nu)]
            if self.lambda_bar_opt is not None:
                line.append(_fmt(self.lambda_bar_opt))
            out.append(line)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        w.writerows(self.csv_rows())
        return buf.getvalue()


def report_from(ing: BoundIngredients, I_ref: float | None = None, lambda_bar_opt: float | None = None,
                diagnostics: dict | None = None) -> BoundsReport:
    rows = []
    for name, fn, hhh in (("classical", classical_bounds, 0.0), ("improved1", improved1_bounds, ing.I_hhh),
                          ("improved2", improved2_bounds, 0.0)):
        lo, hi = fn(ing)
        rows.append(BoundRow(name, ing.lam, ing.lam_bar, ing.I_h, ing.I_hh, hhh, lo, hi, I_ref))
    return BoundsReport(rows, ing, lambda_bar_opt, diagnostics or {})


def _cell_total(cells, integrand, degree=DEGREE) -> float:
    pts, w = triangle_points(cells.tri, degree)
    nq = w.shape[1]
    el = np.repeat(cells.elem, nq)
    er = np.repeat(cells.elem_ref, nq)
    return float(w.ravel() @ np.asarray(integrand(el, er, pts.reshape(-1, 2)), float))


class BoundsCalculator:
    """Evaluates bound ingredients for a reference and an adjoint admissible pair.

    Args:
        ref: Admissible pair of the reference problem.
        adj: Admissible pair of the adjoint problem (same or refined mesh).
        I_h: Quantity of interest of the reference FE solution.
        family: Homothetic family of subdomains.
        h: Steklov constant of the family's shape.
        k: Rayleigh constant of the family's shape.
        n_int: Trapezoid nodes for the correction integral.
        n_arc: Angular Gauss points per sub-interval.
    """

    def __init__(self, ref: AdmissibleStress, adj: AdmissibleStress, I_h: float, family: HomotheticFamily,
                 h: float, k: float, n_int: int = N_INT, n_arc: int = N_ARC):
        self.ref, self.adj, self.I_h, self.family = ref, adj, float(I_h), family
        self.h, self.k, self.n_int = h, k, n_int
        self.cross = cross_cells(adj.mesh, ref.mesh)
        self.ref_int = SubdomainIntegrator(sub_cells(ref.mesh), family, n_arc=n_arc)
        self.adj_int = SubdomainIntegrator(sub_cells(adj.mesh), family, n_arc=n_arc)
        self.cross_int = SubdomainIntegrator(self.cross, family, n_arc=n_arc)
        self.adj_bnd = BoundaryIntegrator(adj.mesh, family, n_arc)
        self.ref_dens = cre_density(ref)
        self.adj_dens = cre_density(adj)
        self.e2 = float(ref.element_cre2.sum())
        self.e_adj2 = float(adj.element_cre2.sum())
        self._ref_full = self.ref_int.cell_integrals(self.ref_dens)
        self._adj_full = self.adj_int.cell_integrals(self.adj_dens)
        self.I_hh = self._correction()
        self._cache: dict = {}

    @classmethod
    def for_shape(cls, ref, adj, I_h, family, n_int=N_INT, n_arc=N_ARC) -> BoundsCalculator:
        m = ref.model
        h = analytic_h(family.shape, m.nu, m.assumption, family.lip_angle)
        return cls(ref, adj, I_h, family, h, analytic_k(family.shape, 2), n_int, n_arc)

    def _correction(self) -> float:
        C = self.ref.model.compliance
        ref, adj = self.ref, self.adj

        def f(el, er, pts):
            return np.einsum("ni,ij,nj->n", adj.averaged(el, pts), C, ref.cre_field(er, pts))

        return _cell_total(self.cross, f)

    def _mixed(self, el, er, pts):
        C = self.ref.model.compliance
        return np.einsum("ni,ij,nj->n", self.ref.cre_field(er, pts), C, self.adj.cre_field(el, pts))

    def ref_local2(self, lam: float) -> float:
        return self.ref_int.inside(lam, self.ref_dens, self._ref_full)

    def adj_local2(self, lam: float) -> float:
        return self.adj_int.inside(lam, self.adj_dens, self._adj_full)

    def adj_outside2(self, lam: float) -> float:
        return self.adj_int.outside(lam, self.adj_dens, self._adj_full)

    def I_hhh(self, lam: float) -> float:
        return 0.5 * self.cross_int.inside(lam, self._mixed)

    def ref_profile2(self, lams) -> np.ndarray:
        lams = np.asarray(lams, float)
        return self.ref_int.profile(lams, self.ref_dens)

    def boundary_norm(self, lam_bar: float) -> float:
        return float(np.sqrt(max(self.adj_bnd.integrate(lam_bar, lambda e, p: self.adj_dens(e, e, p)), 0.0)))

    def gamma(self, lam: float, lam_bar: float) -> float:
        return gamma(lam, lam_bar, self.h, self.ref_profile2, self.n_int)

    def ingredients(self, lam: float, lam_bar: float, with_gamma: bool = True) -> BoundIngredients:
        """All ingredients for the radii ``lam <= lam_bar``.

        Raises:
            ValueError: Radii out of order or beyond the family's range.
        """
        if not 0 < lam <= lam_bar:
            raise ValueError(f"need 0 < lambda <= lambda-bar, got {lam}, {lam_bar}")
        self.family.check(lam_bar)
        key = (lam, lam_bar, with_gamma)
        if key in self._cache:
            return self._cache[key]
        e_adj_lb2 = self.adj_local2(lam_bar)
        ing = BoundIngredients(
            I_h=self.I_h, I_hh=self.I_hh, e=np.sqrt(self.e2), e_adj=np.sqrt(self.e_adj2),
            I_hhh=self.I_hhh(lam), lam=lam, lam_bar=lam_bar, h=self.h, k=self.k,
            e_lam_bar=float(np.sqrt(max(self.ref_local2(lam_bar), 0.0))),
            e_adj_lam=float(np.sqrt(max(self.adj_local2(lam), 0.0))),
            e_adj_lam_bar=float(np.sqrt(max(e_adj_lb2, 0.0))),
            e_adj_out_lam2=self.adj_outside2(lam),
            e_adj_out_lam_bar2=self.e_adj2 - e_adj_lb2,
            boundary_norm=self.boundary_norm(lam_bar),
            gamma=self.gamma(lam, lam_bar) if with_gamma else 0.0,
        )
        self._cache[key] = ing
        return ing

    def report(self, lam: float, lam_bar: float | str, I_ref: float | None = None,
               grid=None) -> BoundsReport:
        """Bounds at a fixed lambda-bar, or at the optimum when ``lam_bar == "optimize"``."""
        opt = None
        if lam_bar == "optimize":
            g = default_grid(lam, self.family.lambda_max) if grid is None else grid
            opt, _ = optimize_lambda_bar(lambda lb: self.ingredients(lam, lb, with_gamma=False), g)
            lam_bar = opt
        ing = self.ingredients(lam, float(lam_bar))
        diag = {"e_cre": ing.e, "e_cre_adjoint": ing.e_adj}
        return report_from(ing, I_ref, opt, diag)


def scaled_ingredients(ing: BoundIngredients, c: float) -> BoundIngredients:
    """Ingredients of the adjoint problem scaled by ``c > 0`` (I_h, I_hh, I_hhh and adjoint terms)."""
    return replace(
        ing, I_h=c * ing.I_h, I_hh=c * ing.I_hh, I_hhh=c * ing.I_hhh, e_adj=c * ing.e_adj,
        e_adj_lam=c * ing.e_adj_lam, e_adj_lam_bar=c * ing.e_adj_lam_bar,
        e_adj_out_lam2=c * c * ing.e_adj_out_lam2, e_adj_out_lam_bar2=c * c * ing.e_adj_out_lam_bar2,
        boundary_norm=c * ing.boundary_norm,
    )

"""End-to-end bounding runs: solve, equilibrate, integrate and bound."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .bounds import N_INT, BoundsCalculator, BoundsReport
from .elasticity import DiscreteLoad, FemSolution, energy_norm, solve, work
from .equilibration import AdmissibleStress, build_admissible
from .errors import NumericalError
from .homothetic import N_ARC, HomotheticFamily
from .mesh import TriMesh, refine_uniform
from .problems import Problem
from .qoi import adjoint_equivalence_check, evaluate, extractor_loads, functional_value


class StageError(Exception):
    """Failure of one pipeline stage, carrying the stage name and its cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunResult:
    report: BoundsReport
    reference: AdmissibleStress
    adjoint: AdmissibleStress
    I_h: float
    I_ref: float | None
    diagnostics: dict = field(default_factory=dict)


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, tp, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, (NumericalError, ValueError,
                                                                                   ArithmeticError)):
            raise StageError(self.name, exc) from exc
        return False


def adjoint_mesh_for(mesh: TriMesh, policy) -> TriMesh:
    """Adjoint mesh from a policy: ``"same"``, an int number of refinements, or a mesh."""
    if isinstance(policy, TriMesh):
        return policy
    if policy in (None, "same", 0):
        return mesh
    if isinstance(policy, (int, np.integer)) and policy > 0:
        return refine_uniform(mesh, int(policy))
    raise ValueError(f"invalid adjoint mesh policy {policy!r}")


def reference_value(problem: Problem, ref_load: DiscreteLoad, extractor: DiscreteLoad,
                    overkill_levels: int | None) -> float | None:
    """Exact value when a closed form exists, else an overkill value, else None."""
    if problem.exact_displacement is not None:
        return functional_value(extractor, problem.exact_displacement, problem.exact_strain)
    if overkill_levels:
        fine = refine_uniform(problem.mesh, overkill_levels)
        ovk = solve(fine, problem.model, ref_load.transfer(fine))
        return work(extractor, ovk)
    return None


def overkill_solution(problem: Problem, ref_load: DiscreteLoad, levels: int) -> FemSolution:
    fine = refine_uniform(problem.mesh, levels)
    return solve(fine, problem.model, ref_load.transfer(fine))


def energy_distance(coarse: FemSolution, fine: FemSolution) -> float:
    """Energy norm of fine - coarse with coarse prolonged to the fine mesh."""
    c = coarse.interpolate_to(fine.mesh)
    return energy_norm(FemSolution(fine.mesh, fine.model, fine.u - c.u))


def run(problem: Problem, adjoint: object = "same", overkill_levels: int | None = None, lam_bar=None,
        n_int: int = N_INT, n_arc: int = N_ARC, check_duality: bool = True) -> RunResult:
    """Reference and adjoint solves, equilibration and the three bound families.

    Args:
        problem: Problem definition.
        adjoint: Adjoint mesh policy, see ``adjoint_mesh_for``.
        overkill_levels: Refinements of the reference mesh for the reference
            value when no closed form is available.
        lam_bar: Overrides ``problem.lam_bar``.

    Raises:
        StageError: A stage failed; the message names it.
    """
    mesh, model = problem.mesh, problem.model
    with _Stage("reference solve"):
        ref_loads = problem.loads_for(mesh)
        ref_load = ref_loads.discretize(mesh)
        fem = solve(mesh, model, ref_load)
    with _Stage("adjoint solve"):
        adj_mesh = adjoint_mesh_for(mesh, adjoint)
        ext = extractor_loads(problem.qoi, mesh, model)
        ext.dirichlet = {t: (0.0, 0.0) for t in ref_loads.dirichlet}
        ext_load = ext.discretize(mesh)
        adj_load = ext_load.transfer(adj_mesh)
        adj_fem = solve(adj_mesh, model, adj_load)
    with _Stage("quantity of interest"):
        I_h = work(ext_load, fem)
        I_direct = evaluate(problem.qoi, fem)
        duality = adjoint_equivalence_check(problem.qoi, mesh, model, ref_loads) if (
            check_duality and adj_mesh is mesh) else None
    with _Stage("reference equilibration"):
        ref = build_admissible(mesh, model, ref_load, fem)
    with _Stage("adjoint equilibration"):
        adj = build_admissible(adj_mesh, model, adj_load, adj_fem)
    with _Stage("reference value"):
        I_ref = reference_value(problem, ref_load, ext_load, overkill_levels)
    with _Stage("bounds"):
        fam = HomotheticFamily.for_mesh(mesh, problem.center, problem.shape, problem.crack_direction)
        calc = BoundsCalculator.for_shape(ref, adj, I_h, fam, n_int=n_int, n_arc=n_arc)
        lb = problem.lam_bar if lam_bar is None else lam_bar
        report = calc.report(problem.lam, lb, I_ref)
    report.diagnostics.update({
        "Ne": mesh.n_elements, "Ne_adjoint": adj_mesh.n_elements, "I_direct": I_direct,
        "duality_residual": duality, "lambda_max": fam.lambda_max,
    })
    return RunResult(report, ref, adj, I_h, I_ref, report.diagnostics)


STUDY_COLUMNS = [
    "Ne_adjoint", "e_cre_adjoint", "I_h", "I_hh", "I_hhh",
    "classical_lower", "classical_upper", "classical_half_width",
    "improved1_lower", "improved1_upper", "improved1_half_width",
    "improved2_lower", "improved2_upper", "improved2_half_width", "lambda_bar",
]


def convergence_study(problem: Problem, levels, **kwargs) -> list[dict]:
    """One run per adjoint refinement level.

    Raises:
        ValueError: Empty level list.
    """
    levels = list(levels)
    if not levels:
        raise ValueError("no refinement levels given")
    rows = []
    for lv in levels:
        res = run(problem, adjoint=int(lv), **kwargs)
        rep = res.report
        row = {"Ne_adjoint": res.diagnostics["Ne_adjoint"], "e_cre_adjoint": rep.ingredients.e_adj,
               "I_h": res.I_h, "I_hh": rep.ingredients.I_hh, "I_hhh": rep.ingredients.I_hhh,
               "lambda_bar": rep.ingredients.lam_bar}
        for r in rep.rows:
            row[f"{r.technique}_lower"] = r.lower
            row[f"{r.technique}_upper"] = r.upper
            row[f"{r.technique}_half_width"] = r.half_width
        rows.append(row)
    return rows


def study_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STUDY_COLUMNS)
    for r in rows:
        w.writerow([str(int(r[c])) if c == "Ne_adjoint" else repr(float(r[c])) for c in STUDY_COLUMNS])
    return buf.getvalue()

import csv
import io

import pytest

from crebounds import problems as P
from crebounds.elasticity import solve
from crebounds.mesh import refine_uniform
from crebounds.pipeline import (
    STUDY_COLUMNS, StageError, adjoint_mesh_for, convergence_study, energy_distance, reference_value, run, study_csv,
)
from crebounds.qoi import extractor_loads


@pytest.fixture(scope="module")
def square_run():
    return run(P.square_quadratic(6, "point"), adjoint=1)


def test_run_brackets_exact_value(square_run):
    assert square_run.I_ref is not None
    for row in square_run.report.rows:
        assert row.lower <= square_run.I_ref <= row.upper
        assert row.lower <= row.upper


def test_run_diagnostics(square_run):
    d = square_run.diagnostics
    assert d["Ne_adjoint"] == 4 * d["Ne"]
    # the duality check only runs when both problems share a mesh
    assert d["duality_residual"] is None
    assert d["I_direct"] == pytest.approx(square_run.I_h, rel=1e-12)
    assert d["lambda_max"] > 0


def test_run_on_shared_mesh_checks_duality():
    res = run(P.square_quadratic(6, "mean"))
    assert res.diagnostics["duality_residual"] < 1e-10


def test_adjoint_mesh_policies(unit_square):
    assert adjoint_mesh_for(unit_square, "same") is unit_square
    assert adjoint_mesh_for(unit_square, 0) is unit_square
    assert adjoint_mesh_for(unit_square, 2).n_elements == 16 * unit_square.n_elements
    fine = refine_uniform(unit_square)
    assert adjoint_mesh_for(unit_square, fine) is fine


@pytest.mark.parametrize("policy", [-1, "coarsen", 1.5])
def test_invalid_adjoint_policy(unit_square, policy):
    with pytest.raises(ValueError):
        adjoint_mesh_for(unit_square, policy)


def test_stage_error_names_the_stage():
    # the crown is not resolved by the coarse mesh, so the extractor cannot be built
    prob = P.cracked_williams(8, r_inner=0.25, r_outer=0.5)
    with pytest.raises(StageError) as info:
        run(prob)
    assert info.value.stage == "adjoint solve"
    assert "adjoint solve" in str(info.value)
    assert isinstance(info.value.cause, ValueError)


def test_lambda_bar_below_lambda_is_a_bounds_stage_error():
    prob = P.square_quadratic(6)
    with pytest.raises(StageError, match="bounds"):
        run(prob, lam_bar=0.5 * prob.lam)


def test_reference_value_without_closed_form_or_overkill():
    prob = P.lame_annulus(2, 24, qoi="point")
    prob.exact_displacement = None
    load = prob.loads_for(prob.mesh).discretize(prob.mesh)
    ext = extractor_loads(prob.qoi, prob.mesh, prob.model).discretize(prob.mesh)
    assert reference_value(prob, load, ext, None) is None
    assert reference_value(prob, load, ext, 1) is not None


def test_energy_distance_of_identical_solutions():
    prob = P.square_quadratic(4)
    sol = solve(prob.mesh, prob.model, prob.loads)
    assert energy_distance(sol, sol) == pytest.approx(0.0, abs=1e-14)
    fine = solve(refine_uniform(prob.mesh), prob.model, prob.loads)
    assert energy_distance(sol, fine) > 0


@pytest.fixture(scope="module")
def study_rows():
    return convergence_study(P.square_quadratic(6, "point"), [0, 1])


def test_study_rows(study_rows):
    assert [r["Ne_adjoint"] for r in study_rows] == [72, 288]
    # the adjoint CRE shrinks with refinement
    assert study_rows[1]["e_cre_adjoint"] < study_rows[0]["e_cre_adjoint"]


def test_single_level_study_equals_run(study_rows):
    res = run(P.square_quadratic(6, "point"))
    row = study_rows[0]
    for r in res.report.rows:
        assert row[f"{r.technique}_lower"] == r.lower
        assert row[f"{r.technique}_upper"] == r.upper


def test_study_csv_round_trip(study_rows):
    parsed = list(csv.DictReader(io.StringIO(study_csv(study_rows))))
    assert list(parsed[0]) == STUDY_COLUMNS
    for p, r in zip(parsed, study_rows):
        assert int(p["Ne_adjoint"]) == r["Ne_adjoint"]
        for c in STUDY_COLUMNS[1:]:
            assert float(p[c]) == r[c]


def test_empty_study_rejected():
    with pytest.raises(ValueError):
        convergence_study(P.square_quadratic(4), [])

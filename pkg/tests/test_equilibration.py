import dataclasses

import numpy as np
import pytest

from crebounds import problems as P
from crebounds.elasticity import FemSolution, LoadSet, energy_norm, solve
from crebounds.equilibration import (
    build_admissible, element_balance, equilibrate_tractions, verify_admissibility,
)
from crebounds.errors import NonGalerkinError
from crebounds.mesh import refine_uniform
from crebounds.meshgen import rectangle_mesh
from crebounds.pipeline import energy_distance, overkill_solution
from crebounds.qoi import extractor_loads


def _admissible(prob):
    load = prob.loads_for(prob.mesh).discretize(prob.mesh)
    fem = solve(prob.mesh, prob.model, load)
    return load, fem, build_admissible(prob.mesh, prob.model, load, fem)


PROBLEMS = {
    "square": lambda: P.square_quadratic(6),
    "annulus": lambda: P.lame_annulus(2, 24, qoi="point"),
    "cracked": lambda: P.cracked_williams(16),
    "lshape": lambda: P.l_shape_localized(16),
}


@pytest.mark.parametrize("name", PROBLEMS)
def test_reference_field_is_admissible(name):
    _, _, adm = _admissible(PROBLEMS[name]())
    rep = verify_admissibility(adm, tol=1e-9)
    assert rep.passed, str(rep)


@pytest.mark.parametrize("qoi", ["point", "mean"])
def test_adjoint_field_is_admissible(qoi):
    prob = P.square_quadratic(6, qoi)
    ext = extractor_loads(prob.qoi, prob.mesh, prob.model)
    ext.dirichlet = {"left": (0.0, 0.0)}
    load = ext.discretize(prob.mesh)
    fem = solve(prob.mesh, prob.model, load)
    rep = verify_admissibility(build_admissible(prob.mesh, prob.model, load, fem), tol=1e-9)
    assert rep.passed, str(rep)


def test_sif_adjoint_field_is_admissible():
    prob = P.cracked_williams(16)
    ext = extractor_loads(prob.qoi, prob.mesh, prob.model)
    ext.dirichlet = {"outer": (0.0, 0.0)}
    load = ext.discretize(prob.mesh)
    fem = solve(prob.mesh, prob.model, load)
    rep = verify_admissibility(build_admissible(prob.mesh, prob.model, load, fem), tol=1e-9)
    assert rep.passed, str(rep)


@pytest.mark.parametrize("elem", [0, 17, 40])
def test_fault_injection_is_localized(elem):
    _, _, adm = _admissible(P.square_quadratic(6, "mean"))
    broken = dataclasses.replace(adm, stress=adm.stress.perturbed(elem, 1e-4))
    rep = verify_admissibility(broken, tol=1e-9)
    assert not rep.passed
    assert rep.worst_element == elem
    assert "FAIL" in str(rep)


def test_wrong_loads_fail_verification():
    prob = P.square_quadratic(6)
    _, _, adm = _admissible(prob)
    other = LoadSet(body_force={"*": (0.0, 1.0)}, dirichlet={"left": (0.0, 0.0)})
    assert not verify_admissibility(adm, other, tol=1e-9).passed


@pytest.mark.parametrize("name", ["square", "annulus", "lshape"])
def test_cre_bounds_true_error(name):
    prob = PROBLEMS[name]()
    load, fem, adm = _admissible(prob)
    d = energy_distance(fem, overkill_solution(prob, load, 2))
    assert d <= adm.cre()


def test_cre_vanishes_for_exact_affine_solution(plane_stress):
    mesh = rectangle_mesh(0, 1, 0, 1, 3, 3)
    G = np.array([[0.2, 0.1], [-0.3, 0.4]])
    loads = LoadSet(dirichlet={t: (lambda x: x @ G.T) for t in ("left", "right", "top", "bottom")})
    load = loads.discretize(mesh)
    fem = solve(mesh, plane_stress, load)
    adm = build_admissible(mesh, plane_stress, load, fem)
    assert adm.cre() < 1e-12 * energy_norm(fem)


def test_element_cre_sums_to_global():
    _, _, adm = _admissible(P.square_quadratic(4))
    assert np.all(adm.element_cre2 >= 0)
    assert adm.cre() ** 2 == pytest.approx(adm.element_cre2.sum(), rel=1e-14)


def test_recovered_tractions_balance_every_element():
    prob = P.l_shape_localized(16)
    load, fem, adm = _admissible(prob)
    bal = element_balance(prob.mesh.vertices, adm.tractions.element_values(), load.body)
    scale = np.abs(fem.stress).max() * prob.mesh.element_size.max()
    assert np.abs(bal).max() < 1e-10 * scale


def test_non_galerkin_input_rejected(rng):
    prob = P.square_quadratic(4)
    load = prob.loads.discretize(prob.mesh)
    fem = solve(prob.mesh, prob.model, load)
    noisy = FemSolution(prob.mesh, prob.model, fem.u + 1e-2 * rng.standard_normal(fem.u.shape))
    with pytest.raises(NonGalerkinError):
        equilibrate_tractions(prob.mesh, prob.model, load, noisy)


def test_cre_decreases_under_refinement():
    prob = P.square_quadratic(4)
    errs = []
    for lv in range(3):
        mesh = refine_uniform(prob.mesh, lv)
        load = prob.loads.discretize(prob.mesh).transfer(mesh)
        fem = solve(mesh, prob.model, load)
        errs.append(build_admissible(mesh, prob.model, load, fem).cre())
    assert errs[0] > errs[1] > errs[2]

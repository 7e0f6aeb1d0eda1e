import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crebounds.elasticity import (
    PLANE_STRAIN, PLANE_STRESS, ElasticModel, FemSolution, LoadSet, assemble_stiffness, bilinear, energy_norm,
    load_vector, pressure, solve, work,
)
from crebounds.errors import SingularSystemError
from crebounds.mesh import refine_uniform
from crebounds.meshgen import annulus_mesh, rectangle_mesh
from crebounds.problems import square_quadratic


@pytest.mark.parametrize("assumption", [PLANE_STRESS, PLANE_STRAIN])
def test_compliance_inverts_hooke(assumption):
    m = ElasticModel(210.0, 0.27, assumption)
    np.testing.assert_allclose(m.hooke @ m.compliance, np.eye(3), atol=1e-14)


def test_plane_stress_uniaxial():
    # sigma_xx = E eps_xx, eps_yy = -nu eps_xx
    m = ElasticModel(2.0, 0.25, PLANE_STRESS)
    s = m.hooke @ np.array([1.0, -0.25, 0.0])
    np.testing.assert_allclose(s, [2.0, 0.0, 0.0], atol=1e-14)


@pytest.mark.parametrize("E, nu, assumption", [(0.0, 0.3, PLANE_STRESS), (1.0, 0.5, PLANE_STRESS),
                                               (1.0, 0.3, "axisymmetric")])
def test_invalid_material_rejected(E, nu, assumption):
    with pytest.raises(ValueError):
        ElasticModel(E, nu, assumption)


def test_stiffness_has_three_rigid_modes(unit_square, plane_stress):
    K = assemble_stiffness(unit_square, plane_stress).toarray()
    x, y = unit_square.nodes.T
    for mode in (np.column_stack([np.ones_like(x), 0 * x]), np.column_stack([0 * x, np.ones_like(x)]),
                 np.column_stack([-y, x])):
        assert np.abs(K @ mode.ravel()).max() < 1e-12
    assert np.allclose(K, K.T)


@pytest.mark.parametrize("grad", [[[1e-3, 2e-3], [0.0, -1e-3]], [[0.5, -0.2], [0.3, 0.1]]])
def test_linear_patch_test(grad, plane_stress):
    # affine displacement under matching tractions is reproduced exactly
    mesh = rectangle_mesh(0, 1, 0, 1, 3, 3)
    G = np.array(grad)
    eps = np.array([G[0, 0], G[1, 1], G[0, 1] + G[1, 0]])
    s = plane_stress.hooke @ eps
    S = np.array([[s[0], s[2]], [s[2], s[1]]])

    def traction(x, n):
        return n @ S.T

    loads = LoadSet(tractions={t: traction for t in ("right", "top", "bottom")},
                    dirichlet={"left": lambda x: x @ G.T})
    sol = solve(mesh, plane_stress, loads)
    np.testing.assert_allclose(sol.u, mesh.nodes @ G.T, atol=1e-12)
    np.testing.assert_allclose(sol.stress, np.tile(s, (mesh.n_elements, 1)), atol=1e-12)


def test_missing_dirichlet_is_singular(unit_square, plane_stress):
    with pytest.raises(SingularSystemError):
        solve(unit_square, plane_stress, LoadSet(body_force={"*": (0.0, 1.0)}))


def test_unknown_region_rejected(unit_square, plane_stress):
    with pytest.raises(ValueError, match="region"):
        LoadSet(body_force={"nowhere": (0.0, 1.0)}, dirichlet={"left": (0, 0)}).discretize(unit_square)


def test_consistent_load_totals(plane_stress):
    mesh = rectangle_mesh(0, 2, 0, 1, 4, 2)
    F = load_vector(LoadSet(body_force={"*": (0.0, -3.0)}, tractions={"right": (5.0, 0.0)}).discretize(mesh))
    F = F.reshape(-1, 2)
    # resultants: body force times area, traction times edge length
    np.testing.assert_allclose(F.sum(axis=0), [5.0 * 1.0, -3.0 * 2.0], atol=1e-13)


def test_pressure_on_closed_ring_has_no_resultant():
    mesh = annulus_mesh(0.5, 1.0, 1, 16)
    F = load_vector(LoadSet(tractions={"inner": pressure(2.0)}).discretize(mesh)).reshape(-1, 2)
    np.testing.assert_allclose(F.sum(axis=0), 0.0, atol=1e-13)


def test_nodal_force_regularization_reproduces_point_value(unit_square, plane_stress, rng):
    node = 7
    load = LoadSet(nodal_forces=[(node, (0.3, -1.2))]).discretize(unit_square)
    u = rng.standard_normal((unit_square.n_nodes, 2))
    sol = FemSolution(unit_square, plane_stress, u)
    assert work(load, sol) == pytest.approx(0.3 * u[node, 0] - 1.2 * u[node, 1], rel=1e-12)


def test_energy_error_converges_linearly():
    prob = square_quadratic(4)
    errs = []
    for lv in range(3):
        mesh = refine_uniform(prob.mesh, lv)
        sol = solve(mesh, prob.model, prob.loads)
        fine = refine_uniform(mesh, 2)
        exact = FemSolution(fine, prob.model, prob.exact_displacement(fine.nodes))
        errs.append(energy_norm(FemSolution(fine, prob.model, exact.u - sol.interpolate_to(fine).u)))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 0.9)


def test_galerkin_orthogonality_under_refinement():
    prob = square_quadratic(4)
    coarse = solve(prob.mesh, prob.model, prob.loads)
    fine_mesh = refine_uniform(prob.mesh)
    fine = solve(fine_mesh, prob.model, prob.loads)
    c = coarse.interpolate_to(fine_mesh)
    # homogeneous on the clamped edge, so it is a valid test function
    assert abs(bilinear(FemSolution(fine_mesh, prob.model, fine.u - c.u), c)) < 1e-12 * energy_norm(c) ** 2


def test_solution_transfer_is_exact():
    mesh = rectangle_mesh(0, 1, 0, 1, 2, 2)
    sol = FemSolution(mesh, ElasticModel(1.0, 0.3), mesh.nodes * [1.0, 2.0])
    fine = sol.interpolate_to(refine_uniform(mesh, 2))
    np.testing.assert_allclose(fine.u, fine.mesh.nodes * [1.0, 2.0], atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(E=st.floats(0.1, 1e3), nu=st.floats(-0.9, 0.49), scale=st.floats(0.1, 10.0))
def test_work_equals_energy_at_equilibrium(E, nu, scale):
    mesh = rectangle_mesh(0, 1, 0, 1, 3, 3)
    model = ElasticModel(E, nu, PLANE_STRAIN)
    load = LoadSet(body_force={"*": (scale, -1.0)}, dirichlet={"left": (0.0, 0.0)}).discretize(mesh)
    sol = solve(mesh, model, load)
    assert work(load, sol) == pytest.approx(energy_norm(sol) ** 2, rel=1e-9)


@pytest.mark.parametrize("nu, want", [
    (0.0, [[1, 0, 0], [0, 1, 0], [0, 0, 0.5]]),
    (0.3, [[1.098901, 0.329670, 0], [0.329670, 1.098901, 0], [0, 0, 0.384615]]),
])
def test_plane_stress_hooke_matrix(nu, want):
    np.testing.assert_allclose(ElasticModel(1.0, nu, PLANE_STRESS).hooke, want, atol=5e-7)


def test_zero_loads_give_zero_solution(unit_square, plane_stress):
    sol = solve(unit_square, plane_stress, LoadSet(dirichlet={"left": (0.0, 0.0)}))
    assert np.all(sol.u == 0)
    assert energy_norm(sol) == 0


def test_energy_norm_of_unit_stretch(unit_square):
    model = ElasticModel(1.0, 0.0, PLANE_STRESS)
    u = np.column_stack([unit_square.nodes[:, 0], np.zeros(unit_square.n_nodes)])
    assert energy_norm(FemSolution(unit_square, model, u)) == pytest.approx(1.0, rel=1e-14)

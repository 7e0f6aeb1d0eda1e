import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crebounds import problems as P
from crebounds.elasticity import solve
from crebounds.equilibration import build_admissible
from crebounds.homothetic import (
    CIRCLE, CRACKED_CIRCLE, BoundaryIntegrator, HomotheticFamily, SubdomainIntegrator, annulus_rule, cre_profile,
    cross_cells, integrate_boundary_weighted, integrate_subdomain, sub_cells,
)
from crebounds.mesh import refine_uniform
from crebounds.meshgen import cracked_square_mesh, rectangle_mesh


def one(e, er, p):
    return np.ones(len(p))


def r2(center):
    return lambda e, er, p: ((p - center) ** 2).sum(axis=1)


@pytest.fixture(scope="module")
def square():
    return rectangle_mesh(0, 1, 0, 1, 7, 7)


def test_lambda_max_is_distance_to_boundary(square):
    fam = HomotheticFamily.for_mesh(square, (0.3, 0.6))
    assert fam.lambda_max == pytest.approx(0.3)


def test_center_outside_rejected(square):
    with pytest.raises(ValueError, match="outside"):
        HomotheticFamily.for_mesh(square, (1.5, 0.5))


def test_radius_beyond_lambda_max_rejected(square):
    fam = HomotheticFamily.for_mesh(square, (0.5, 0.5))
    with pytest.raises(ValueError):
        integrate_subdomain(fam, 0.6, one, sub_cells(square))


@settings(max_examples=30, deadline=None)
@given(cx=st.floats(0.3, 0.7), cy=st.floats(0.3, 0.7), frac=st.floats(0.05, 1.0))
def test_disk_area_and_second_moment(cx, cy, frac):
    mesh = rectangle_mesh(0, 1, 0, 1, 5, 5)
    c = np.array([cx, cy])
    fam = HomotheticFamily.for_mesh(mesh, c)
    lam = frac * fam.lambda_max
    integ = SubdomainIntegrator(sub_cells(mesh), fam)
    # cut cells have curved radial limits, so the polar rule is accurate, not exact
    assert integ.inside(lam, one) == pytest.approx(np.pi * lam**2, rel=1e-10)
    assert integ.inside(lam, r2(c)) == pytest.approx(0.5 * np.pi * lam**4, rel=1e-10)
    assert integ.inside(lam, one) + integ.outside(lam, one) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("n_arc", [4, 8, 16])
def test_weighted_boundary_integral_of_constant(square, n_arc):
    # x.n equals the radius on the circle
    fam = HomotheticFamily.for_mesh(square, (0.5, 0.5))
    lam = 0.37
    val = integrate_boundary_weighted(fam, lam, lambda e, p: np.ones(len(p)), square, n_arc)
    assert val == pytest.approx(2 * np.pi * lam**2, rel=1e-13)


def test_boundary_rule_follows_polynomial_pieces(square):
    fam = HomotheticFamily.for_mesh(square, (0.5, 0.5))
    pts, w, elem = BoundaryIntegrator(square, fam).rule(0.3)
    # cos^2 of the angle integrates to pi lam^2 with the radius weight
    ang = np.arctan2(pts[:, 1] - 0.5, pts[:, 0] - 0.5)
    assert w @ np.cos(ang) ** 2 == pytest.approx(np.pi * 0.3**2, rel=1e-13)
    assert np.all(square.barycentric(elem, pts) >= -1e-12)


def test_cracked_disk_area():
    mesh = cracked_square_mesh(8)
    fam = HomotheticFamily.for_mesh(mesh, (0.0, 0.0), CRACKED_CIRCLE, (-1.0, 0.0))
    assert fam.lambda_max == pytest.approx(1.0)
    assert integrate_subdomain(fam, 0.6, one, sub_cells(mesh)) == pytest.approx(np.pi * 0.36, rel=1e-10)


@pytest.mark.parametrize("lip", [np.pi / 6, np.pi / 2])
def test_open_lips_exclude_a_wedge(lip):
    fam = HomotheticFamily((0.0, 0.0), 1.0, CRACKED_CIRCLE, (-1.0, 0.0), lip)
    ang = 0.5 * lip * np.array([0.5, 1.5])
    pts = 0.5 * np.column_stack([-np.cos(ang), np.sin(ang)])
    np.testing.assert_array_equal(fam.contains(pts, 1.0), [False, True])
    lo, hi = fam.boundary_range()
    assert hi - lo == pytest.approx(2 * np.pi - lip)


def test_cracked_family_ignores_lips_only():
    mesh = cracked_square_mesh(8)
    cracked = HomotheticFamily.for_mesh(mesh, (0.0, 0.0), CRACKED_CIRCLE, (-1.0, 0.0))
    assert cracked.lambda_max == pytest.approx(1.0)
    # a plain disk centered on the tip touches the slit immediately
    with pytest.raises(ValueError, match="positive"):
        HomotheticFamily.for_mesh(mesh, (0.0, 0.0), CIRCLE)


def test_annulus_rule_area(square):
    pts, w, cell = annulus_rule(sub_cells(square), (0.5, 0.5), 0.1, 0.45)
    assert w.sum() == pytest.approx(np.pi * (0.45**2 - 0.1**2), rel=1e-10)


def test_cross_cells_tile_the_domain(square):
    fine = rectangle_mesh(0, 1, 0, 1, 5, 9)
    cells = cross_cells(fine, square)
    a, b = cells.tri[:, 1] - cells.tri[:, 0], cells.tri[:, 2] - cells.tri[:, 0]
    area = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    assert np.all(area > 0)
    assert area.sum() == pytest.approx(1.0, rel=1e-12)
    # every cell lies in the elements it claims on both meshes
    c = cells.tri.mean(axis=1)
    assert np.all(fine.barycentric(cells.elem, c) > -1e-12)
    assert np.all(square.barycentric(cells.elem_ref, c) > -1e-12)


def test_profile_matches_pointwise_integrals(square):
    fam = HomotheticFamily.for_mesh(square, (0.5, 0.5))
    integ = SubdomainIntegrator(sub_cells(square), fam)
    lams = np.linspace(0.05, 0.5, 7)
    f = r2(np.array([0.2, 0.9]))
    np.testing.assert_allclose(integ.profile(lams, f), [integ.inside(l, f) for l in lams], rtol=1e-13)


def test_cre_profile_monotone_and_bounded():
    prob = P.square_quadratic(6)
    load = prob.loads.discretize(prob.mesh)
    fem = solve(prob.mesh, prob.model, load)
    adm = build_admissible(prob.mesh, prob.model, load, fem)
    fam = HomotheticFamily.for_mesh(prob.mesh, prob.center)
    prof = cre_profile(fam, np.linspace(0.02, fam.lambda_max, 20), adm)
    assert np.all(np.diff(prof) >= 0)
    assert prof[-1] <= adm.cre()


def test_cre_profile_requires_increasing_radii():
    prob = P.square_quadratic(4)
    load = prob.loads.discretize(prob.mesh)
    adm = build_admissible(prob.mesh, prob.model, load, solve(prob.mesh, prob.model, load))
    fam = HomotheticFamily.for_mesh(prob.mesh, prob.center)
    with pytest.raises(ValueError):
        cre_profile(fam, [0.2, 0.1], adm)


def test_refined_and_coarse_integrals_agree(square):
    fam = HomotheticFamily.for_mesh(square, (0.4, 0.55))
    f = r2(np.array([0.0, 0.0]))
    a = integrate_subdomain(fam, 0.3, f, sub_cells(square))
    b = integrate_subdomain(fam, 0.3, f, sub_cells(refine_uniform(square)))
    assert a == pytest.approx(b, rel=1e-10)

import numpy as np
import pytest

from crebounds.elasticity import PLANE_STRAIN, PLANE_STRESS, ElasticModel
from crebounds.fracture import (
    _ring_interaction, dual_amplitude, k1_amplitude, lower_lip_nodes, mode1_displacement, mode1_stress,
)
from crebounds.meshgen import cracked_square_mesh


@pytest.mark.parametrize("r", [0.01, 0.3, 2.0])
def test_opening_stress_ahead_of_tip(r):
    K = 1.7
    s = mode1_stress(1, np.array([[r, 0.0]]), k1_amplitude(K))
    assert s[0, 1] == pytest.approx(K / np.sqrt(2 * np.pi * r), rel=1e-13)
    assert s[0, 2] == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("n", [1, 3, -1])
def test_lips_are_traction_free(n):
    ang = np.array([np.pi - 1e-12, -np.pi + 1e-12])
    s = mode1_stress(n, 0.4 * np.column_stack([np.cos(ang), np.sin(ang)]))
    np.testing.assert_allclose(s[:, 1:], 0.0, atol=1e-9)


@pytest.mark.parametrize("assumption", [PLANE_STRESS, PLANE_STRAIN])
def test_crack_opening_displacement(assumption):
    model = ElasticModel(2.0, 0.3, assumption)
    K, r = 1.3, 0.25
    pts = np.array([[-r, 0.0], [-r, 0.0]])
    u = mode1_displacement(1, pts, model, k1_amplitude(K), lower=np.array([False, True]))
    jump = u[0, 1] - u[1, 1]
    assert jump == pytest.approx(K * (model.kappa + 1) / model.mu * np.sqrt(r / (2 * np.pi)), rel=1e-13)
    assert u[0, 0] == pytest.approx(u[1, 0], rel=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3, -1])
def test_stress_matches_displacement(n, plane_strain, rng):
    ang = rng.uniform(-3.0, 3.0, 6)
    rad = rng.uniform(0.2, 1.0, 6)
    pts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    h = 1e-6
    du = [(mode1_displacement(n, pts + h * e, plane_strain) - mode1_displacement(n, pts - h * e, plane_strain))
          / (2 * h) for e in np.eye(2)]
    eps = np.column_stack([du[0][:, 0], du[1][:, 1], du[1][:, 0] + du[0][:, 1]])
    np.testing.assert_allclose(eps @ plane_strain.hooke.T, mode1_stress(n, pts), rtol=1e-6, atol=1e-6)


def test_rotated_frame_is_consistent(plane_stress):
    pts = np.array([[0.3, 0.2], [-0.1, 0.5]])
    c, s = np.cos(0.7), np.sin(0.7)
    R = np.array([[c, -s], [s, c]])
    u0 = mode1_displacement(1, pts, plane_stress)
    u1 = mode1_displacement(1, pts @ R.T + [1.0, 2.0], plane_stress, tip=(1.0, 2.0), direction=R[:, 0])
    np.testing.assert_allclose(u1, u0 @ R.T, atol=1e-14)


@pytest.mark.parametrize("assumption", [PLANE_STRESS, PLANE_STRAIN])
@pytest.mark.parametrize("radii", [(0.5, 1.0), (0.1, 0.3), (1.0, 4.0)])
def test_interaction_extracts_the_intensity(assumption, radii):
    model = ElasticModel(5.0, 0.22, assumption)
    K = 2.5
    val = _ring_interaction(model, k1_amplitude(K), 1, dual_amplitude(model), -1, *radii)
    assert val == pytest.approx(K, rel=1e-10)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_interaction_ignores_other_terms(n, plane_stress):
    val = _ring_interaction(plane_stress, 1.0, n, dual_amplitude(plane_stress), -1)
    assert abs(val) < 1e-10


def test_lower_lip_nodes():
    mesh = cracked_square_mesh(8)
    low = lower_lip_nodes(mesh)
    assert low.sum() == 4
    x, y = mesh.nodes[low].T
    np.testing.assert_allclose(y, 0.0)
    assert np.all(x < 0)
    # every flagged node has only elements below the crack line
    upper = np.flatnonzero((np.abs(mesh.nodes[:, 1]) < 1e-12) & (mesh.nodes[:, 0] < 0) & ~low)
    assert len(upper) == 4

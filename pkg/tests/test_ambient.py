import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from legflow.ambient import (ambient_identity_residuals, eta_einstein_constant, fit_eta_einstein, frame_curvature_norms,
                             get_model, pulled_back_tensors, sample_points, sampled_curvature_norms)
from legflow.errors import PointOutsideChart

MODELS = ["heisenberg3", "heisenberg5", "sphere3", "sphere5", "hypcyl3"]


@pytest.mark.parametrize("model_id", MODELS)
def test_structure_identities_closed_form(model_id):
    model = get_model(model_id)
    res = ambient_identity_residuals(model, sample_points(model, 50, seed=7), seed=7)
    assert set(res) >= {"nabla_lambda", "killing", "nabla_phi", "reeb_curvature", "curvature_omega",
                        "legendrian_trace", "eta_einstein"}
    assert max(res.values()) < 1e-10


@pytest.mark.parametrize("model_id", ["heisenberg3", "hypcyl3"])
def test_finite_difference_curvature_agrees_with_closed_form(model_id):
    pts = sample_points(get_model(model_id), 20, seed=2)
    a = pulled_back_tensors(get_model(model_id), pts)
    b = pulled_back_tensors(get_model(model_id, "finite_difference"), pts)
    assert np.max(np.abs(a.riemann - b.riemann)) < 1e-5
    assert np.max(np.abs(a.ricci - b.ricci)) < 1e-5


def test_sphere_models_reject_finite_difference_curvature():
    with pytest.raises(ValueError):
        get_model("sphere3", "finite_difference")


@pytest.mark.parametrize("model_id,expected", [("sphere3", 4.0), ("sphere5", 6.0), ("heisenberg3", 0.0),
                                               ("heisenberg5", 0.0), ("hypcyl3", -1.0)])
def test_eta_einstein_fit_matches_table(model_id, expected):
    model = get_model(model_id)
    fit = fit_eta_einstein(model, pulled_back_tensors(model, sample_points(model, 30, seed=4)))
    assert fit["K_plus_2"] == pytest.approx(expected, abs=1e-9)
    assert fit["std"] < 1e-9
    assert eta_einstein_constant(model) == expected


def test_unknown_model_is_rejected():
    with pytest.raises(ValueError):
        get_model("sphere7")


def test_sphere_point_off_the_sphere_is_rejected():
    model = get_model("sphere3")
    with pytest.raises(PointOutsideChart):
        model.geometry.validate(np.array([[2.0, 0.0, 0.0, 0.0]]))


@given(c=st.floats(-3, 3, allow_nan=False), seed=st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_reeb_flow_preserves_the_contact_form(c, seed):
    model = get_model("heisenberg3")
    x = sample_points(model, 5, seed=seed)
    y = model.reeb_flow(x, np.full(len(x), c))
    a, b = pulled_back_tensors(model, x), pulled_back_tensors(model, y)
    assert np.allclose(a.lam, b.lam, atol=1e-12)
    assert np.allclose(a.g, b.g, atol=1e-12)


def test_sphere_reeb_orbits_close():
    model = get_model("sphere5")
    x = sample_points(model, 8, seed=0)
    y = model.reeb_flow(x, np.full(len(x), 2 * np.pi))
    assert np.allclose(x, y, atol=1e-12)


def test_frame_curvature_norms_of_the_round_three_sphere():
    # SU(2) with [e_i, e_j] = 2 eps_ijk e_k is the unit round sphere
    c = np.zeros((3, 3, 3))
    for i, j, k in itertools.permutations(range(3)):
        c[k, i, j] = 2.0 * np.linalg.det(np.eye(3)[[i, j, k]])
    norms = frame_curvature_norms(c, 2)
    assert norms[0] == pytest.approx(math.sqrt(12.0), rel=1e-12)
    assert norms[1] < 1e-12 and norms[2] < 1e-12


@pytest.mark.parametrize("model_id,m", [("sphere3", 3), ("sphere5", 5)])
def test_unit_sphere_curvature_norm(model_id, m):
    # constant curvature 1: |Rm|^2 = 2m(m-1), and the curvature is parallel
    rm, drm = sampled_curvature_norms(get_model(model_id), 256, seed=1)
    assert rm == pytest.approx(math.sqrt(2 * m * (m - 1)), rel=1e-12)
    assert drm == 0.0


def test_sampled_curvature_norms_are_deterministic():
    model = get_model("hypcyl3")
    assert sampled_curvature_norms(model, 256, seed=1) == sampled_curvature_norms(model, 256, seed=1)

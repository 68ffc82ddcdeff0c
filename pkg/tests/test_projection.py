import numpy as np
import pytest

from legflow.ambient import get_model
from legflow.errors import HolonomyObstruction, ProjectionFailed
from legflow.immersion import DiscreteLegendrian, build_immersion
from legflow.projection import coexact_part, holonomy, project_legendrian
from legflow import fourier


@pytest.fixture(scope="module")
def bumpy():
    return build_immersion(get_model("hypcyl3"), "geodesic_lift", 64, perturb={"f": "cos_phi", "s": 0.05})


def test_legendrian_input_is_left_alone(bumpy):
    out, rep = project_legendrian(bumpy)
    assert rep.correction < 1e-12
    assert np.max(np.abs(out.positions - bumpy.positions)) < 1e-12


@pytest.mark.parametrize("model_id,family", [("hypcyl3", "geodesic_lift"), ("heisenberg3", "lemniscate"),
                                             ("sphere3", "great_circle")])
def test_reeb_noise_is_removed(model_id, family):
    model = get_model(model_id)
    L = build_immersion(model, family, 64)
    (u,) = L.grid
    noise = 1e-4 * (np.cos(3 * u) + 0.5 * np.sin(5 * u))
    noisy = L.with_positions(model.reeb_flow(L.positions, noise))
    assert noisy.legendrian_residual > 1e-5
    out, rep = project_legendrian(noisy)
    assert out.legendrian_residual < 1e-8
    # the mean-zero Reeb correction undoes the injected noise
    assert np.max(np.abs(out.positions - L.positions)) < 1e-9
    assert rep.correction == pytest.approx(np.max(np.abs(noise)), rel=0.05)


def test_injected_holonomy_is_an_obstruction(bumpy):
    (u,) = bumpy.grid
    drift = np.zeros(3)
    drift[2] = 1e-3
    pos = np.array(bumpy.positions)
    pos[:, 2] += 1e-3 * u / (2 * np.pi)
    shifted = DiscreteLegendrian(bumpy.model, pos, bumpy.winding + drift[None, :], bumpy.family)
    assert abs(holonomy(shifted)[0]) == pytest.approx(1e-3, rel=1e-9)
    with pytest.raises(HolonomyObstruction):
        project_legendrian(shifted)


def test_unrecoverable_residual_fails(bumpy):
    (u,) = bumpy.grid
    far = bumpy.with_positions(bumpy.model.reeb_flow(bumpy.positions, 0.1 * np.cos(u)))
    with pytest.raises(ProjectionFailed):
        project_legendrian(far)


def test_coexact_part_separates_gradients_from_curls():
    u1, u2 = fourier.grid_coords((32, 32))
    grad = fourier.gradient(np.sin(u1) * np.cos(2 * u2), 2)
    psi = np.cos(u1 + u2) + 0.3 * np.sin(3 * u2)
    d = fourier.gradient(psi, 2)
    curl = np.stack([d[..., 1], -d[..., 0]], axis=-1)
    assert np.max(np.abs(coexact_part(grad, 2))) < 1e-12
    assert np.max(np.abs(coexact_part(curl, 2) - curl)) < 1e-12
    assert np.max(np.abs(coexact_part(grad + curl, 2) - curl)) < 1e-12


def test_torus_isotropy_defect_is_projected_out():
    model = get_model("sphere5")
    L = build_immersion(model, "clifford_torus", 24)
    u1, u2 = L.grid
    noise = 1e-4 * np.cos(u1 - 2 * u2)
    noisy = L.with_positions(model.reeb_flow(L.positions, noise))
    out, _ = project_legendrian(noisy)
    assert out.legendrian_residual < L.legendrian_tol
    assert np.max(np.abs(out.positions - L.positions)) < 1e-8

import json
import math

import numpy as np
import pytest

from legflow.ambient import get_model
from legflow.errors import NotClosable, ResolutionTooLow
from legflow.immersion import (DiscreteLegendrian, build_immersion, deformation_field, legendrian_deform,
                               potential)

MINIMAL = [("sphere3", "great_circle", 64), ("hypcyl3", "geodesic_lift", 64), ("sphere5", "clifford_torus", 24)]


@pytest.mark.parametrize("model_id,family,N", MINIMAL)
def test_built_minimal_legendrians(model_id, family, N):
    L = build_immersion(get_model(model_id), family, N)
    assert L.legendrian_residual < 1e-12
    assert L.second.max_H < 1e-10
    assert L.second.symmetry_defect < 1e-12


def test_great_circle_and_geodesic_lift_have_length_two_pi():
    assert build_immersion(get_model("sphere3"), "great_circle", 64).volume == pytest.approx(2 * math.pi, abs=1e-12)
    assert build_immersion(get_model("hypcyl3"), "geodesic_lift", 64).volume == pytest.approx(2 * math.pi,
                                                                                               abs=1e-12)


def test_clifford_torus_volume_and_second_fundamental_form():
    L = build_immersion(get_model("sphere5"), "clifford_torus", 24)
    # flat metric with det g = 1/3 on the (2 pi)^2 label torus
    assert L.volume == pytest.approx(4 * math.pi ** 2 / math.sqrt(3), rel=1e-12)
    # Gauss for a flat minimal surface in the unit sphere: |A|^2 = n(n-1) = 2
    assert np.allclose(L.second.A_sq, 2.0, atol=1e-10)


def test_rotation_index_shows_in_the_cycle_integral_of_H():
    circle = build_immersion(get_model("heisenberg3", z_period=math.pi), "round_circle", 64)
    assert abs(circle.cycle_integrals(circle.second.H)[0]) == pytest.approx(2 * math.pi, rel=1e-10)
    eight = build_immersion(get_model("heisenberg3"), "lemniscate", 64)
    assert abs(eight.cycle_integrals(eight.second.H)[0]) < 1e-10


def test_round_circle_needs_a_matching_z_period():
    with pytest.raises(NotClosable):
        build_immersion(get_model("heisenberg3"), "round_circle", 64)


def test_json_round_trip(tmp_path):
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 32, perturb={"f": "cos_phi", "s": 0.02})
    path = tmp_path / "L.json"
    L.dump(path)
    M = DiscreteLegendrian.from_json(json.loads(path.read_text()))
    assert np.array_equal(M.positions, L.positions)
    assert np.array_equal(M.winding, L.winding)
    assert M.model.id == "hypcyl3" and M.family == L.family
    assert M.params["perturb"] == {"f": "cos_phi", "s": 0.02}


def test_deformation_field_is_contact_for_the_potential():
    L = build_immersion(get_model("sphere3"), "great_circle", 64)
    X = deformation_field(L, potential("cos_u", L))
    assert X.contact_defect(L) < 1e-12


def test_deformation_is_reversible():
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 64)
    f = potential("cos_phi", L)
    back = legendrian_deform(legendrian_deform(L, f, 0.05), f, -0.05)
    assert np.max(np.abs(back.positions - L.positions)) < 1e-8


def test_perturbed_great_circle_is_shorter():
    # the great circle is Legendrian-unstable, so the second variation along cos u is negative
    L = build_immersion(get_model("sphere3"), "great_circle", 64, perturb={"f": "cos_u", "s": 0.05})
    assert L.volume < 2 * math.pi
    assert L.legendrian_residual < 1e-9


def test_low_resolution_is_rejected():
    with pytest.raises(ResolutionTooLow):
        build_immersion(get_model("sphere3"), "great_circle", 8)


def test_unresolved_potential_is_rejected():
    L = build_immersion(get_model("sphere3"), "great_circle", 16)
    (u,) = L.grid
    with pytest.raises(ResolutionTooLow):
        legendrian_deform(L, np.cos(7 * u), 0.01)


def test_large_perturbation_does_not_close():
    with pytest.raises(NotClosable):
        build_immersion(get_model("heisenberg3"), "lemniscate", 32, perturb={"f": "cos_u", "s": 3.0})


@pytest.mark.parametrize("family,model_id", [("clifford_torus", "sphere3"), ("no_such_family", "sphere3")])
def test_family_model_mismatch(family, model_id):
    with pytest.raises(ValueError):
        build_immersion(get_model(model_id), family, 32)


def test_planar_lift_of_a_figure_eight():
    params = {"x": [[1, 0.0, 1.0]], "y": [[2, 0.0, 0.5]]}
    L = build_immersion(get_model("heisenberg3"), "planar_lift", 64, params)
    ref = build_immersion(get_model("heisenberg3"), "lemniscate", 64)
    assert L.legendrian_residual < 1e-12
    assert L.volume == pytest.approx(ref.volume, rel=1e-10)

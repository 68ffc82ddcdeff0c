import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from legflow.ambient import get_model
from legflow.errors import NonExactMeanCurvature
from legflow.immersion import build_immersion
from legflow.spectral import (LaplaceOperator, angle_residual, flat_torus_spectrum, mean_value, solve_angle,
                              spectrum)


def test_unit_circle_spectrum():
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 64)
    lam = spectrum(L, 6).eigenvalues
    assert np.allclose(lam, [1, 1, 4, 4, 9, 9], atol=1e-10)


@given(s=st.floats(0.005, 0.08))
@settings(max_examples=6, deadline=None)
def test_curve_spectrum_depends_only_on_length(s):
    # a closed curve of length l has eigenvalues (2 pi k / l)^2 whatever its shape
    L = build_immersion(get_model("sphere3"), "great_circle", 64, perturb={"f": "cos_u", "s": s})
    lam = spectrum(L, 4).eigenvalues
    k = np.array([1, 1, 2, 2])
    assert np.allclose(lam, (2 * math.pi * k / L.volume) ** 2, rtol=1e-8)


def test_clifford_torus_matches_flat_torus_oracle():
    L = build_immersion(get_model("sphere5"), "clifford_torus", 24)
    g = L.metric[0, 0]
    assert np.allclose(L.metric, g, atol=1e-12)
    rep = spectrum(L, 6)
    assert np.allclose(rep.eigenvalues, flat_torus_spectrum(g, 6), atol=1e-9)
    assert rep.lambda1 == pytest.approx(2.0, abs=1e-9)


def test_eigenfunctions_are_mass_orthonormal():
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 48, perturb={"f": "cos_phi", "s": 0.05})
    rep = spectrum(L, 5)
    assert rep.orthonormality_defect < 1e-10
    assert abs(rep.zero_mode) < 1e-10
    assert np.max(rep.residuals) < 1e-10


def test_constants_are_in_the_kernel():
    L = build_immersion(get_model("sphere5"), "clifford_torus", 16, perturb={"f": "cos_u1", "s": 0.02})
    assert LaplaceOperator(L).kernel_residual() < 1e-12


def test_first_eigenvalue_is_cauchy_under_refinement():
    lam = [spectrum(build_immersion(get_model("heisenberg3"), "lemniscate", N), 1).lambda1 for N in (64, 128)]
    assert abs(lam[0] - lam[1]) < 1e-6


def test_angle_integrates_the_mean_curvature_form():
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 64, perturb={"f": "cos_phi", "s": 0.05})
    a = solve_angle(L)
    assert a.accepted
    assert a.residual < 1e-9 * max(1.0, a.H_norm)
    assert abs(mean_value(L, a.alpha)) < 1e-12
    assert angle_residual(L, a.alpha) == pytest.approx(a.residual)


def test_carried_gauge_keeps_the_requested_mean():
    L = build_immersion(get_model("sphere3"), "great_circle", 64, perturb={"f": "cos_u", "s": 0.05})
    a0 = solve_angle(L)
    a1 = solve_angle(L, gauge="carry_constant", constant=0.7)
    assert a1.mean == pytest.approx(0.7, abs=1e-12)
    assert np.allclose(a1.alpha - a0.alpha, 0.7, atol=1e-10)


def test_minimal_legendrian_has_zero_angle():
    L = build_immersion(get_model("sphere3"), "great_circle", 64)
    assert np.max(np.abs(solve_angle(L).alpha)) < 1e-12


def test_non_exact_mean_curvature_is_rejected():
    L = build_immersion(get_model("heisenberg3", z_period=math.pi), "round_circle", 64)
    with pytest.raises(NonExactMeanCurvature) as info:
        solve_angle(L)
    assert abs(info.value.cycle_integrals[0]) == pytest.approx(2 * math.pi, rel=1e-9)


def test_unknown_gauge():
    L = build_immersion(get_model("sphere3"), "great_circle", 32)
    with pytest.raises(ValueError):
        solve_angle(L, gauge="harmonic")

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from legflow.ambient import get_model
from legflow.analysis import (ThresholdSet, bound_audit, decay_fit, distance_to_reference, doubling_time,
                              in_class_A, in_class_B, noncollapsing, rescaled_oscillation, stability_report,
                              stability_verdict, structural_invariants)
from legflow.errors import InsufficientData, NonPositiveSeries, NotMinimal
from legflow.immersion import build_immersion, potential


@given(rate=st.floats(-8, 8), c=st.floats(0.1, 10))
@settings(max_examples=30, deadline=None)
def test_decay_fit_recovers_exact_exponentials(rate, c):
    t = np.linspace(0, 3, 40)
    fit = decay_fit(t, c * np.exp(rate * t), window=(1, 3))
    assert fit.rate == pytest.approx(rate, abs=1e-9)
    if abs(rate) > 0.1:
        assert fit.r2 == pytest.approx(1.0, abs=1e-9)


def test_decay_fit_errors():
    t = np.linspace(0, 1, 10)
    with pytest.raises(NonPositiveSeries):
        decay_fit(t, np.cos(5 * t))
    with pytest.raises(InsufficientData):
        decay_fit(t, np.exp(-t), window=(5, 6))


def test_circle_noncollapsing_constant():
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 128)
    assert noncollapsing(L, 1.0) == pytest.approx(2.0, rel=1e-6)


def test_flat_torus_noncollapsing_constant():
    L = build_immersion(get_model("sphere5"), "clifford_torus", 32)
    assert noncollapsing(L, 0.8) == pytest.approx(math.pi, rel=0.1)


def test_noncollapsing_needs_positive_radius():
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 32)
    with pytest.raises(ValueError):
        noncollapsing(L, 0.0)


@pytest.mark.parametrize("lam,kp2,verdict", [(1.0, 4.0, "unstable"), (1.0, -1.0, "strictly_stable"),
                                             (2.0, 2.0, "borderline"), (6.0, 6.0, "borderline")])
def test_stability_verdicts(lam, kp2, verdict):
    assert stability_verdict(lam, kp2) == verdict


def test_clifford_torus_is_legendrian_unstable_in_the_five_sphere():
    rep = stability_report(build_immersion(get_model("sphere5"), "clifford_torus", 16))
    assert rep.lambda1 == pytest.approx(2.0, abs=1e-9)
    assert rep.verdict == "unstable"
    # the first eigenvalue of the flat hexagonal torus has multiplicity 6
    assert rep.multiplicity == 6


def test_second_variation_matches_the_mode_expansion():
    # f = cos u is a first eigenfunction: Q(f) = lambda1 (lambda1 - (K+2)) int f^2 = 1 * 2 * pi
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 128)
    rep = stability_report(L, potential("cos_phi", L))
    assert rep.second_variation_formula == pytest.approx(2 * math.pi, rel=1e-9)
    assert rep.relative_gap < 1e-3
    assert not rep.essential


def test_second_variation_needs_a_minimal_legendrian():
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 64, perturb={"f": "cos_phi", "s": 0.05})
    with pytest.raises(NotMinimal):
        stability_report(L, potential("cos_phi", L))


def test_threshold_set_validation():
    assert ThresholdSet.from_mapping({"kappa0": 2, "T0": 6, "eps0": 0.1}).kappa0 == 2.0
    with pytest.raises(ValueError):
        ThresholdSet(delta0=0.0)


def test_threshold_classes_on_the_minimal_hyperbolic_circle():
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 64)
    assert in_class_A(L, kappa=1.0, r=1.0, Lambda=0.1, eps=1e-6)
    assert in_class_B(L, kappa=1.0, r=1.0, delta=0.5, Lambda=0.1, eps=1e-6)
    # gap lambda1 - (K+2) = 2, so delta = 3 is out of reach
    assert not in_class_B(L, kappa=1.0, r=1.0, delta=3.0, Lambda=0.1, eps=1e-6)
    assert not in_class_A(L, kappa=3.0, r=1.0, Lambda=0.1, eps=1e-6)


def test_doubling_time_constant():
    assert doubling_time(0.0) == pytest.approx(math.log(2) / 2)
    assert doubling_time(1.0, k_plus_2=-1.0) == pytest.approx(math.log(2) / 6)
    assert doubling_time(1.0, k_plus_2=6.0) == pytest.approx(math.log(2) / 10)


def test_distance_to_reference_only_for_the_hyperbolic_family():
    assert math.isnan(distance_to_reference(build_immersion(get_model("sphere3"), "great_circle", 32)))
    assert distance_to_reference(build_immersion(get_model("hypcyl3"), "geodesic_lift", 32)) < 1e-15


def test_audits_need_enough_samples(golden):
    result, _ = golden
    with pytest.raises(InsufficientData):
        bound_audit(result.diagnostics[:5], 1, -1.0, result.dt)


def test_invariants_flag_a_volume_increase(golden):
    result, _ = golden
    diags = list(result.diagnostics)
    diags[10] = replace(diags[10], vol=diags[9].vol + 1e-6)
    inv = structural_invariants(diags, result.dt)
    assert not inv.volume_monotone and not inv.passed


def test_invariants_flag_a_cycle_jump(golden):
    result, _ = golden
    diags = [replace(d, cycle_H=(0.5,)) if d.t > 1 else d for d in result.diagnostics]
    assert not structural_invariants(diags, result.dt).cycles_ok


def test_rescaled_oscillation_decays_on_the_golden_run(golden):
    # alpha ~ e^{-2t} (gap 2), so beta = e^{t} alpha ~ e^{-t}
    result, _ = golden
    osc = rescaled_oscillation(result.diagnostics, -1.0)
    t_final = result.diagnostics[-1].t
    assert osc[-1] / osc[0] == pytest.approx(math.exp(-t_final), rel=0.05)

import csv
import io
from dataclasses import replace

import numpy as np
import pytest

from legflow.ambient import get_model
from legflow.errors import CFLViolation, InitialDataNotExact, StaleAngle
from legflow.flow import (TRAJECTORY_COLUMNS, ExperimentConfig, FlowState, initial_state, run, stable_dt, step,
                          velocity)
from legflow.immersion import build_immersion


@pytest.fixture(scope="module")
def bumpy():
    return build_immersion(get_model("hypcyl3"), "geodesic_lift", 64, perturb={"f": "cos_phi", "s": 0.05})


def test_minimal_state_is_a_fixed_point():
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 64)
    s = initial_state(L)
    s2 = step(s, stable_dt(L, 0.2))
    assert np.max(np.abs(s2.L.positions - L.positions)) < 1e-14
    assert np.max(np.abs(s2.alpha)) < 1e-14


def test_constant_angle_is_a_reeb_translation():
    model = get_model("sphere3")
    L = build_immersion(model, "great_circle", 64)
    c = 0.3
    state = FlowState(0.0, L, np.full(L.shape, c))
    assert np.allclose(velocity(L, state.alpha), -2 * c * L.amb.T, atol=1e-14)
    dt = stable_dt(L, 0.2)
    for _ in range(20):
        state = step(state, dt)
    assert state.L.second.max_H < 1e-8
    # the angle grows like e^{(K+2)t} and the curve rides the Reeb orbits by -2 int alpha
    shift = -2 * c * (np.exp(4.0 * state.t) - 1) / 4.0
    assert np.max(np.abs(state.L.positions - model.reeb_flow(L.positions, shift))) < 1e-8


def test_velocity_pairs_with_the_contact_form(bumpy):
    s = initial_state(bumpy)
    V = velocity(bumpy, s.alpha)
    lam_V = np.einsum("...a,...a->...", bumpy.amb.lam, V)
    assert np.max(np.abs(lam_V + 2 * s.alpha)) < 1e-10


def test_stale_angle_is_refused(bumpy):
    with pytest.raises(StaleAngle):
        velocity(bumpy, np.zeros(bumpy.shape))


def test_one_step_volume_change_matches_minus_int_H_squared(bumpy):
    s = initial_state(bumpy)
    dt = stable_dt(bumpy, 0.2)
    s2 = step(s, dt)
    assert s2.L.volume <= bumpy.volume + 1e-12
    rate = -float(np.sum(bumpy.second.H_sq * bumpy.dmu))
    assert (s2.L.volume - bumpy.volume) / dt == pytest.approx(rate, rel=20 * dt + 1e-6)


def test_rk4_order():
    # a faster mode on a coarse grid lifts the truncation error above round-off
    L = build_immersion(get_model("hypcyl3"), "geodesic_lift", 32, perturb={"f": "cos_3u", "s": 0.02})
    dt0 = stable_dt(L, 0.22)
    T = 16 * dt0

    def advance(dt):
        s = initial_state(L)
        for _ in range(int(round(T / dt))):
            s = step(s, dt)
        return s.L.positions

    ref = advance(dt0 / 8)
    e1 = np.max(np.abs(advance(dt0) - ref))
    e2 = np.max(np.abs(advance(dt0 / 2) - ref))
    assert 12.0 < e1 / e2 < 24.0


def test_cfl_violation(bumpy):
    with pytest.raises(CFLViolation):
        step(initial_state(bumpy), 2 * stable_dt(bumpy, 0.25))


def test_explicit_dt_beyond_the_limit_fails_in_run(bumpy):
    cfg = ExperimentConfig(dt=10 * stable_dt(bumpy, 0.25), t_max=0.1)
    with pytest.raises(CFLViolation):
        run(cfg, L0=bumpy)


def test_reeb_term_keeps_the_flow_legendrian(bumpy):
    dt = stable_dt(bumpy, 0.2)

    def residual(reeb_term):
        s = initial_state(bumpy)
        for _ in range(20):
            s = step(s, dt, reeb_term=reeb_term, project=False)
        return s.L.legendrian_residual

    with_reeb, without = residual(True), residual(False)
    assert with_reeb < 1e-9
    assert without > 1e3 * with_reeb


def test_minimal_initial_data_converges_at_time_zero():
    res = run(ExperimentConfig(model="sphere3", family="great_circle", resolution=32))
    assert res.verdict == "converged"
    assert res.final.steps == 0
    assert len(res.diagnostics) == 1


def test_non_exact_initial_data():
    cfg = ExperimentConfig(model="heisenberg3", family="round_circle", resolution=32, z_period=np.pi)
    with pytest.raises(InitialDataNotExact):
        run(cfg)


@pytest.mark.parametrize("bad", [{"t_max": 0.0}, {"dt_cfl": -1.0}, {"thresholds": {"V0": -1}}])
def test_invalid_config_values(bad):
    with pytest.raises(ValueError):
        ExperimentConfig(**bad)


def test_short_run_outputs(bumpy, tmp_path):
    cfg = ExperimentConfig(resolution=64, perturb={"f": "cos_phi", "s": 0.05}, t_max=0.05)
    res = run(cfg)
    assert res.verdict == "timeout"
    assert res.diagnostics[-1].t == pytest.approx(0.05, abs=res.dt)
    paths = res.write(tmp_path)
    header = next(csv.reader(io.StringIO(open(paths["trajectory"]).read())))
    assert tuple(header) == TRAJECTORY_COLUMNS
    vol = res.column("vol")
    assert np.all(np.diff(vol) <= 1e-10)
    assert res.snapshots[0].t == 0.0 and len(res.snapshots) >= 2


def test_golden_run_keeps_its_step(golden):
    result, _ = golden
    assert result.dt_reductions == 0
    assert result.summary()["dt"] == result.dt
    assert replace(result.config).t_max == 6.0

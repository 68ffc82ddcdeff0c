"""Legendrian mean curvature flow ``dF/dt = -∇^kα v_k - 2αT`` with a coupled angle.

The state is the pair ``(F, α)``.  ``α`` is advanced by its own heat-type
equation ``∂α/∂t = Δα + (K+2)α`` instead of being re-solved from ``dα = H`` at
every step, so the additive constant carries its true dynamics.  After each
RK4 step the immersion is pushed back onto the Legendrian constraint by a
Reeb-directional projection, and ``α`` is re-anchored to ``H`` only when the
two have drifted apart.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fourier
from .ambient import get_model
from .errors import (CFLViolation, CohomologyDrift, InitialDataNotExact, NonExactMeanCurvature, NonFiniteState,
                     StaleAngle)
from .immersion import DiscreteLegendrian, build_immersion
from .projection import project_legendrian
from .spectral import AngleField, angle_residual, l2_form_norm, solve_angle

log = logging.getLogger(__name__)

#: RK4 on a second-order operator is stable up to roughly 2.78/π² ≈ 0.28 in ``dt/h²``.
CFL_LIMIT = 0.25
STALE_REL_TOL = 1e-3

TRAJECTORY_COLUMNS = ("t", "vol", "max_H", "l2_H_sq", "max_A_sq", "lambda1", "osc_alpha",
                      "mean_alpha", "E_t", "kappa", "leg_residual")


@dataclass
class ExperimentConfig:
    model: str = "hypcyl3"
    family: str = "geodesic_lift"
    family_params: dict = field(default_factory=dict)
    perturb: dict | None = None
    resolution: int | list = 128
    z_period: float | None = None
    curvature_mode: str = "closed_form"
    dt_cfl: float = 0.2
    dt: float | None = None
    t_max: float = 6.0
    convergence_threshold: float = 1e-4
    blowup_factor: float = 1e4
    stop_on_convergence: bool = True
    spectral_every: int = 10
    kappa_every: int = 10
    kappa_radius: float = 1.0
    snapshot_every: int | None = None
    snapshot_spacing: float = 0.05
    drift_rel_tol: float = 1e-8
    reeb_term: bool = True
    project: bool = True
    seed: int = 0
    thresholds: dict = field(default_factory=lambda: {
        "V0": 10.0, "Lambda0": 10.0, "eps0": 1.0, "delta0": 0.5, "T0": 6.0, "kappa0": 1.0, "r0": 1.0})

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        for name in ("dt_cfl", "convergence_threshold", "blowup_factor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if any(v <= 0 for v in self.thresholds.values()):
            raise ValueError("thresholds must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def build_model(self):
        return get_model(self.model, self.curvature_mode, self.z_period)

    def build_initial(self) -> DiscreteLegendrian:
        return build_immersion(self.build_model(), self.family, self.resolution, self.family_params, self.perturb)


@dataclass(frozen=True)
class StepReport:
    dt: float
    max_velocity: float
    leg_residual: float
    projection_correction: float
    angle_drift: float
    reanchored: bool
    converged: bool = False
    blowup: bool = False


@dataclass(frozen=True)
class FlowState:
    t: float
    L: DiscreteLegendrian
    alpha: np.ndarray
    steps: int = 0
    report: StepReport | None = None

    @property
    def angle(self) -> AngleField:
        L = self.L
        H = L.second.H
        return AngleField(alpha=self.alpha, gauge="carried", mean=float(np.sum(self.alpha * L.dmu) / L.volume),
                          cycle_integrals=L.cycle_integrals(H), residual=angle_residual(L, self.alpha, H),
                          H_norm=l2_form_norm(L, H))


def initial_state(L: DiscreteLegendrian) -> FlowState:
    """Flow start: angle solved with the mean-zero gauge."""
    try:
        a = solve_angle(L, gauge="mean_zero")
    except NonExactMeanCurvature as exc:
        raise InitialDataNotExact(str(exc)) from exc
    return FlowState(t=0.0, L=L, alpha=a.alpha)


def min_spacing(L: DiscreteLegendrian) -> float:
    """Smallest grid spacing measured in the induced metric."""
    g = L.metric
    return float(min(np.sqrt(np.min(g[..., i, i])) * fourier.TWO_PI / N for i, N in enumerate(L.shape)))


def stable_dt(L: DiscreteLegendrian, cfl: float) -> float:
    return cfl * min_spacing(L) ** 2


def velocity(L: DiscreteLegendrian, alpha: np.ndarray, reeb_term: bool = True,
             check: bool = True) -> np.ndarray:
    """Ambient velocity ``-∇^kα v_k - 2αT`` at every node."""
    alpha = np.asarray(alpha, dtype=float)
    if check:
        H = L.second.H
        drift = angle_residual(L, alpha, H)
        bound = STALE_REL_TOL * l2_form_norm(L, H) + 1e-6
        if drift > bound:
            raise StaleAngle(f"angle drift {drift:.3e} exceeds {bound:.3e}")
    grad = L.covariant_gradient(alpha)
    V = -np.einsum("...k,...ka->...a", grad, L.normals)
    if reeb_term:
        V = V - 2.0 * alpha[..., None] * L.amb.T
    return V


def _rhs(L: DiscreteLegendrian, alpha: np.ndarray, reeb_term: bool):
    V = velocity(L, alpha, reeb_term, check=False)
    da = L.laplacian(alpha) + L.model.eta_einstein_constant * alpha
    return V, da


def step(state: FlowState, dt: float, cfl: float = CFL_LIMIT, reeb_term: bool = True,
         project: bool = True, drift_rel_tol: float = 1e-8, spectral_filter: bool | None = None) -> FlowState:
    """One RK4 step of the coupled ``(F, α)`` system, then projection and drift control.

    ``spectral_filter`` (default: on for tori) damps the top third of the
    position spectrum, where aliasing feeds a grid-scale isotropy instability.
    """
    if spectral_filter is None:
        spectral_filter = state.L.n > 1
    L0 = state.L
    limit = cfl * min_spacing(L0) ** 2
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(f"dt {dt:.3e} exceeds cfl limit {limit:.3e}")
    F0, a0 = L0.positions, state.alpha
    V1, b1 = _rhs(L0, a0, reeb_term)
    L2 = L0.with_positions(F0 + 0.5 * dt * V1)
    V2, b2 = _rhs(L2, a0 + 0.5 * dt * b1, reeb_term)
    L3 = L0.with_positions(F0 + 0.5 * dt * V2)
    V3, b3 = _rhs(L3, a0 + 0.5 * dt * b2, reeb_term)
    L4 = L0.with_positions(F0 + dt * V3)
    V4, b4 = _rhs(L4, a0 + dt * b3, reeb_term)
    F = F0 + dt / 6.0 * (V1 + 2 * V2 + 2 * V3 + V4)
    alpha = a0 + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(alpha))):
        raise NonFiniteState(f"non-finite state at t={state.t + dt:.6g}")
    if spectral_filter:
        lin = L0.linear_part()
        F = lin + fourier.exp_filter(F - lin, L0.n)
    L = L0.with_positions(F)
    correction = 0.0
    if project:
        L, rep = project_legendrian(L)
        correction = rep.correction
    H = L.second.H
    drift = angle_residual(L, alpha, H)
    reanchored = False
    if drift > drift_rel_tol * l2_form_norm(L, H) + 1e-10:
        mean = float(np.sum(alpha * L.dmu) / L.volume)
        try:
            alpha = solve_angle(L, H, gauge="carry_constant", constant=mean).alpha
        except NonExactMeanCurvature as exc:
            raise CohomologyDrift(f"at t={state.t + dt:.6g}: {exc}; the grid no longer resolves the "
                                  f"immersion (max|A|^2 = {L.second.max_A_sq:.3e})") from exc
        reanchored = True
    report = StepReport(dt=dt, max_velocity=float(np.max(np.linalg.norm(V1, axis=-1))),
                        leg_residual=L.legendrian_residual, projection_correction=correction,
                        angle_drift=drift, reanchored=reanchored)
    return FlowState(t=state.t + dt, L=L, alpha=alpha, steps=state.steps + 1, report=report)


@dataclass
class Snapshot:
    t: float
    positions: np.ndarray
    alpha: np.ndarray


@dataclass
class RunResult:
    config: ExperimentConfig
    diagnostics: list
    final: FlowState
    verdict: str
    dt: float
    snapshots: list[Snapshot]
    initial: DiscreteLegendrian
    reanchor_count: int = 0
    dt_reductions: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.diagnostics], dtype=float)

    def snapshot_immersions(self) -> list[tuple[float, DiscreteLegendrian, np.ndarray]]:
        return [(s.t, self.initial.with_positions(s.positions), s.alpha) for s in self.snapshots]

    # -- output ---------------------------------------------------------------
    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_COLUMNS)
            for d in self.diagnostics:
                w.writerow(["%.17g" % getattr(d, c) for c in TRAJECTORY_COLUMNS])

    def summary(self) -> dict:
        last = self.diagnostics[-1]
        return {"verdict": self.verdict, "t_final": last.t, "steps": self.final.steps, "dt": self.dt,
                "final_max_H": last.max_H, "final_vol": last.vol, "final_lambda1": last.lambda1,
                "final_dist_ref": last.dist_ref, "reanchor_count": self.reanchor_count,
                "dt_reductions": self.dt_reductions}

    def write(self, outdir, plots: bool = False) -> dict:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"trajectory": out / "trajectory.csv", "final_state": out / "final_state.json",
                 "summary": out / "summary.json"}
        self.write_csv(paths["trajectory"])
        self.final.L.dump(paths["final_state"])
        with open(paths["summary"], "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
        if plots:
            from .plots import trajectory_plots
            paths.update(trajectory_plots(self, out))
        return {k: str(v) for k, v in paths.items()}


def run(config: ExperimentConfig, L0: DiscreteLegendrian | None = None) -> RunResult:
    """Integrate until convergence, blowup, or ``t_max``."""
    from .analysis import DiagnosticsTracker

    L0 = L0 if L0 is not None else config.build_initial()
    state = initial_state(L0)
    dt = config.dt if config.dt is not None else stable_dt(L0, config.dt_cfl)
    every = config.snapshot_every or max(1, int(round(config.snapshot_spacing / dt)))
    tracker = DiagnosticsTracker(config)
    diag = tracker.record(state, dt)
    blowup_level = config.blowup_factor * max(diag.max_A_sq, 1e-12)
    snapshots = [Snapshot(0.0, np.array(state.L.positions), np.array(state.alpha))]
    verdict = "timeout"
    reanchors = 0
    n_steps = int(np.ceil(config.t_max / dt - 1e-9))
    if diag.max_H < config.convergence_threshold and config.stop_on_convergence:
        verdict = "converged"
        n_steps = 0
    step_dt = dt
    dt_reductions = 0
    k = 0
    while k < n_steps:
        # dt follows the cfl policy when the mesh tightens; an explicit dt is left to fail loudly
        if config.dt is None and step_dt > CFL_LIMIT * min_spacing(state.L) ** 2:
            step_dt = stable_dt(state.L, config.dt_cfl)
            n_steps = k + int(np.ceil((config.t_max - state.t) / step_dt - 1e-9))
            dt_reductions += 1
            log.info("dt reduced to %.4e at t=%.4f", step_dt, state.t)
        k += 1
        state = step(state, step_dt, cfl=CFL_LIMIT, reeb_term=config.reeb_term, project=config.project,
                     drift_rel_tol=config.drift_rel_tol)
        reanchors += state.report.reanchored
        diag = tracker.record(state, dt)
        if state.steps % every == 0:
            snapshots.append(Snapshot(state.t, np.array(state.L.positions), np.array(state.alpha)))
        if diag.max_A_sq > blowup_level:
            verdict = "blowup"
            state = replace(state, report=replace(state.report, blowup=True))
            break
        if diag.max_H < config.convergence_threshold:
            if config.stop_on_convergence:
                verdict = "converged"
                state = replace(state, report=replace(state.report, converged=True))
                break
    else:
        if n_steps and tracker.history[-1].max_H < config.convergence_threshold:
            verdict = "converged"
    log.info("run finished: %s at t=%.4f after %d steps", verdict, state.t, state.steps)
    return RunResult(config=config, diagnostics=tracker.history, final=state, verdict=verdict, dt=dt,
                     snapshots=snapshots, initial=L0, reanchor_count=reanchors, dt_reductions=dt_reductions)

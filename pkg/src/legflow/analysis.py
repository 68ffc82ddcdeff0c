"""Diagnostics, stability reports, noncollapsing, decay fits and inequality audits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from . import fourier
from .errors import InsufficientData, NonPositiveSeries, NotMinimal
from .immersion import DiscreteLegendrian, legendrian_deform
from .spectral import LaplaceOperator, spectrum

STABILITY_BAND = 1e-6
ESSENTIAL_TOL = 1e-6
MINIMAL_TOL = 1e-5
AUDIT_SLACK = 0.05
AUDIT_DT_FACTOR = 10.0


# ---------------------------------------------------------------------------
# per-step diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostics:
    t: float
    vol: float
    max_H: float
    l2_H_sq: float
    max_A_sq: float
    lambda1: float
    osc_alpha: float
    mean_alpha: float
    E_t: float
    kappa: float
    leg_residual: float
    max_grad_H: float = 0.0
    cycle_H: tuple = ()
    dist_ref: float = float("nan")

    @property
    def max_A(self) -> float:
        return math.sqrt(self.max_A_sq)

    def as_dict(self) -> dict:
        return asdict(self)


def covariant_derivative_form(L: DiscreteLegendrian, form: np.ndarray) -> np.ndarray:
    """``∇_i H_j = ∂_i H_j - Γ^k_ij H_k``, shape ``(*grid, i, j)``."""
    d = fourier.gradient(form, L.n)  # d[..., i, j] = ∂_i H_j
    return d - np.einsum("...kij,...k->...ij", L.induced_christoffel, form)


def max_grad_norm(L: DiscreteLegendrian, form: np.ndarray) -> float:
    nab = covariant_derivative_form(L, form)
    gi = L.metric_inv
    sq = np.einsum("...ij,...ik,...jl,...kl->...", nab, gi, gi, nab)
    return float(np.sqrt(np.max(sq)))


def distance_to_reference(L: DiscreteLegendrian) -> float:
    """Sup-distance to the nearest minimal circle of the hyperbolic-cylinder family.

    The minimal circles are the horizontal lifts ``{ρ = 0, z = c}``; the nearest
    one is taken at the mean height.  Other models return ``nan``.
    """
    if L.model.id != "hypcyl3":
        return float("nan")
    rho = L.positions[..., 0]
    z = L.positions[..., 2]
    zc = float(np.sum(z * L.dmu) / L.volume)
    return float(np.max(np.sqrt(rho ** 2 + (z - zc) ** 2)))


def diagnostics(state, lambda1: float | None = None, kappa: float | None = None,
                E_t: float = 0.0, kappa_radius: float = 1.0) -> Diagnostics:
    """Diagnostics of a flow state; ``λ₁`` and ``κ`` are recomputed unless supplied."""
    L = state.L
    sec = L.second
    alpha = state.alpha
    if lambda1 is None:
        lambda1 = spectrum(L, 1).lambda1
    if kappa is None:
        kappa = noncollapsing(L, kappa_radius)
    return Diagnostics(
        t=float(state.t), vol=L.volume, max_H=sec.max_H, l2_H_sq=float(np.sum(sec.H_sq * L.dmu)),
        max_A_sq=sec.max_A_sq, lambda1=float(lambda1), osc_alpha=float(np.max(alpha) - np.min(alpha)),
        mean_alpha=float(np.sum(alpha * L.dmu) / L.volume), E_t=float(E_t), kappa=float(kappa),
        leg_residual=L.legendrian_residual, max_grad_H=max_grad_norm(L, sec.H),
        cycle_H=tuple(float(c) for c in L.cycle_integrals(sec.H)), dist_ref=distance_to_reference(L))


def _energy_rate(L: DiscreteLegendrian) -> float:
    """``max(|A||H| + |H|²)`` over the nodes."""
    sec = L.second
    return float(np.max(np.sqrt(sec.A_sq * sec.H_sq) + sec.H_sq))


class DiagnosticsTracker:
    """Accumulates :class:`Diagnostics` along a run, holding ``λ₁`` and ``κ`` between refreshes."""

    def __init__(self, config):
        self.config = config
        self.history: list[Diagnostics] = []
        self._lambda1 = None
        self._kappa = None
        self._E = 0.0
        self._rate = None

    def record(self, state, dt: float) -> Diagnostics:
        cfg = self.config
        L = state.L
        rate = _energy_rate(L)
        if self._rate is not None:
            self._E += 0.5 * dt * (self._rate + rate)
        self._rate = rate
        k = state.steps
        if self._lambda1 is None or k % cfg.spectral_every == 0:
            self._lambda1 = spectrum(L, 1).lambda1
        if self._kappa is None or k % cfg.kappa_every == 0:
            self._kappa = noncollapsing(L, cfg.kappa_radius)
        d = diagnostics(state, self._lambda1, self._kappa, self._E, cfg.kappa_radius)
        self.history.append(d)
        return d


# ---------------------------------------------------------------------------
# noncollapsing
# ---------------------------------------------------------------------------

def _stencil(n: int) -> list[tuple[int, ...]]:
    if n == 1:
        return [(1,)]
    return [(1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1)]


def distance_graph(L: DiscreteLegendrian) -> scipy.sparse.csr_matrix:
    """Grid graph (2 neighbours per node for curves, 16 for tori) weighted by induced length."""
    shape = L.shape
    n = L.n
    size = int(np.prod(shape))
    idx = np.arange(size).reshape(shape)
    h = np.array([fourier.TWO_PI / N for N in shape])
    g = L.metric
    rows, cols, vals = [], [], []
    for off in _stencil(n):
        d = np.array(off, dtype=float) * h
        nb = np.roll(idx, shift=tuple(-o for o in off), axis=tuple(range(n)))
        g_nb = np.roll(g, shift=tuple(-o for o in off), axis=tuple(range(n)))
        gm = 0.5 * (g + g_nb)
        length = np.sqrt(np.einsum("i,...ij,j->...", d, gm, d))
        rows.append(idx.reshape(-1))
        cols.append(nb.reshape(-1))
        vals.append(length.reshape(-1))
    A = scipy.sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(size, size)).tocsr()
    return A.maximum(A.T)


def _centers(L: DiscreteLegendrian, max_per_axis: int = 4) -> np.ndarray:
    if L.n == 1:
        return np.arange(L.shape[0])
    sub = [np.arange(0, N, max(1, N // max_per_axis)) for N in L.shape]
    grid = np.meshgrid(*sub, indexing="ij")
    return np.ravel_multi_index(tuple(g.reshape(-1) for g in grid), L.shape)


def ball_radii(L: DiscreteLegendrian, r: float) -> np.ndarray:
    """Radii at which balls are measured: multiples of a resolution-limited base step, capped by ``r``."""
    cell = L.dmu if L.n == 1 else np.sqrt(L.dmu)
    base = 3.0 * float(np.max(cell))
    k = int(np.floor(r / base + 1e-12))
    if k < 1:
        return np.array([r])
    return base * np.arange(1, k + 1)


def noncollapsing(L: DiscreteLegendrian, r: float, centers=None) -> float:
    """``κ = min Vol(B(q,s))/sⁿ`` over sampled centers and radii ``s ≤ r``.

    Distances are shortest paths on the stencil graph; nodes near the ball
    boundary contribute the fraction of their cell lying inside.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    G = distance_graph(L)
    centers = _centers(L) if centers is None else np.asarray(centers)
    dist = scipy.sparse.csgraph.dijkstra(G, directed=False, indices=centers)
    dmu = L.dmu.reshape(-1)
    width = dmu if L.n == 1 else np.sqrt(dmu)
    kappa = np.inf
    for s in ball_radii(L, r):
        frac = np.clip((s - dist) / width + 0.5, 0.0, 1.0)
        vols = frac @ dmu
        kappa = min(kappa, float(np.min(vols)) / s ** L.n)
    return kappa


# ---------------------------------------------------------------------------
# decay fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r2: float
    samples: int


def decay_fit(t, values, window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares slope of ``log(value)`` against ``t`` within ``window``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
        t, v = t[sel], v[sel]
    if t.size < 2:
        raise InsufficientData("fewer than two samples in the fit window")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise NonPositiveSeries("series must be positive in the fit window")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(rate=float(slope), intercept=float(intercept), r2=r2, samples=int(t.size))


def rescaled_oscillation(diags: list[Diagnostics], k_plus_2: float) -> np.ndarray:
    """``osc β`` with ``β = e^{-(K+2)t} α``."""
    t = np.array([d.t for d in diags])
    return np.exp(-k_plus_2 * t) * np.array([d.osc_alpha for d in diags])


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    lambda1: float
    k_plus_2: float
    verdict: str
    second_variation_formula: float | None = None
    second_variation_direct: float | None = None
    relative_gap: float | None = None
    essential: bool | None = None
    first_eigenspace_fraction: float | None = None
    multiplicity: int = 1

    def as_dict(self) -> dict:
        return asdict(self)


def stability_verdict(lambda1: float, k_plus_2: float, band: float = STABILITY_BAND) -> str:
    gap = lambda1 - k_plus_2
    if gap > band:
        return "strictly_stable"
    if gap < -band:
        return "unstable"
    return "borderline"


def stability_report(L: DiscreteLegendrian, f: np.ndarray | None = None, s: float = 1e-3,
                     k: int = 6) -> StabilityReport:
    """Legendrian stability of ``L`` and, for minimal ``L``, the second variation along ``f``."""
    kp2 = L.model.eta_einstein_constant
    op = LaplaceOperator(L)
    rep = spectrum(L, k, op)
    lam = rep.eigenvalues
    lam1 = float(lam[0])
    verdict = stability_verdict(lam1, kp2)
    mult = int(np.sum(np.abs(lam - lam1) < 1e-6 * max(1.0, abs(lam1))))
    if f is None:
        return StabilityReport(lam1, kp2, verdict, multiplicity=mult)
    if L.second.max_H > MINIMAL_TOL:
        raise NotMinimal(f"second variation needs a minimal Legendrian (max|H| = {L.second.max_H:.2e})")
    f = np.asarray(f, dtype=float)
    # full generalized eigenbasis for the expansion f = Σ a_i φ_i
    import scipy.linalg
    w, V = scipy.linalg.eigh(op.stiffness, op.mass)
    fv = f.reshape(-1)
    a = V.T @ (op.mass @ fv)
    formula = float(np.sum(a ** 2 * w * (w - kp2)))
    norm2 = float(fv @ op.mass @ fv)
    first = np.abs(w - lam1) < 1e-6 * max(1.0, abs(lam1))
    frac = float(np.sum(a[first] ** 2) / norm2) if norm2 > 0 else 0.0
    essential = (1.0 - frac) > ESSENTIAL_TOL
    vol_p = legendrian_deform(L, f, s).volume
    vol_m = legendrian_deform(L, f, -s).volume
    direct = (vol_p - 2.0 * L.volume + vol_m) / s ** 2
    gap = abs(direct - formula) / max(abs(formula), 1e-6)
    return StabilityReport(lam1, kp2, verdict, formula, float(direct), float(gap), bool(essential), frac, mult)


# ---------------------------------------------------------------------------
# threshold classes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdSet:
    kappa0: float = 1.0
    r0: float = 1.0
    Lambda0: float = 10.0
    eps0: float = 1.0
    delta0: float = 0.5
    V0: float = 10.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"threshold {k} must be positive")

    @classmethod
    def from_mapping(cls, m: dict) -> "ThresholdSet":
        keys = {"kappa0", "r0", "Lambda0", "eps0", "delta0", "V0"}
        return cls(**{k: float(v) for k, v in m.items() if k in keys})


def in_class_A(L: DiscreteLegendrian, kappa: float, r: float, Lambda: float, eps: float) -> bool:
    """Membership in 𝒜(κ, r, Λ, ε): κ-noncollapsed on scale r, |A| ≤ Λ, |H| ≤ ε."""
    sec = L.second
    return (math.sqrt(sec.max_A_sq) <= Lambda and sec.max_H <= eps
            and noncollapsing(L, r) >= kappa)


def in_class_B(L: DiscreteLegendrian, kappa: float, r: float, delta: float, Lambda: float, eps: float) -> bool:
    """Membership in ℬ(κ, r, δ, Λ, ε): class 𝒜 plus λ₁ ≥ K+2+δ."""
    if not in_class_A(L, kappa, r, Lambda, eps):
        return False
    return spectrum(L, 1).lambda1 >= L.model.eta_einstein_constant + delta


# ---------------------------------------------------------------------------
# inequality audits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditVerdict:
    name: str
    passed: bool
    worst_margin: float
    checked: int
    note: str = ""


def _slack(dt: float) -> float:
    return AUDIT_SLACK + AUDIT_DT_FACTOR * dt


def _upper_audit(name, lhs, rhs, dt, note="") -> AuditVerdict:
    """``lhs ≤ rhs`` with relative slack on ``|rhs|``; margin normalized by ``max(|rhs|, tiny)``."""
    lhs, rhs = np.asarray(lhs, float), np.asarray(rhs, float)
    allow = rhs + _slack(dt) * np.abs(rhs) + 1e-14
    scale = np.maximum(np.abs(rhs), 1e-14)
    margin = (allow - lhs) / scale
    if margin.size == 0:
        return AuditVerdict(name, True, float("inf"), 0, note or "no applicable samples")
    return AuditVerdict(name, bool(np.all(margin >= 0)), float(np.min(margin)), int(margin.size), note)


def _lower_audit(name, lhs, rhs, dt, note="") -> AuditVerdict:
    """``lhs ≥ rhs`` with slack: ``lhs · (1 + slack) ≥ rhs``."""
    lhs, rhs = np.asarray(lhs, float), np.asarray(rhs, float)
    scale = np.maximum(np.abs(rhs), 1e-14)
    margin = (lhs * (1.0 + _slack(dt)) + 1e-14 - rhs) / scale
    if margin.size == 0:
        return AuditVerdict(name, True, float("inf"), 0, note or "no applicable samples")
    return AuditVerdict(name, bool(np.all(margin >= 0)), float(np.min(margin)), int(margin.size), note)


def _series(diags, name):
    return np.array([getattr(d, name) for d in diags], dtype=float)


def audit_l2_growth(diags, k_plus_2, dt) -> AuditVerdict:
    """d/dt∫|H|² ≤ 2(K+2+Λε)∫|H|² with running maxima Λ = max|A|, ε = max|H|."""
    t = _series(diags, "t")
    q = _series(diags, "l2_H_sq")
    dq = np.gradient(q, t, edge_order=2)
    Lam = np.maximum.accumulate(np.sqrt(_series(diags, "max_A_sq")))
    eps = np.maximum.accumulate(_series(diags, "max_H"))
    return _upper_audit("l2_growth", dq, 2.0 * (k_plus_2 + Lam * eps) * q, dt)


def audit_l2_spectral_decay(diags, k_plus_2, dt) -> AuditVerdict:
    """d/dt∫|H|² ≤ -2(λ₁ - (K+2) - Λε)∫|H|²."""
    t = _series(diags, "t")
    q = _series(diags, "l2_H_sq")
    dq = np.gradient(q, t, edge_order=2)
    Lam = np.maximum.accumulate(np.sqrt(_series(diags, "max_A_sq")))
    eps = np.maximum.accumulate(_series(diags, "max_H"))
    lam = _series(diags, "lambda1")
    return _upper_audit("l2_spectral_decay", dq, -2.0 * (lam - k_plus_2 - Lam * eps) * q, dt)


def audit_eigenvalue_drift(diags, dt) -> AuditVerdict:
    """√λ₁(t) ≥ e^{-(2Λε+ε²)/(2γ)}√λ₁(0) - Λε/γ under |H|+|∇H| ≤ εe^{-γt}.

    γ is the fitted decay rate of ``max|H| + max|∇H|`` and ε the smallest
    constant making the hypothesis hold on the recorded series.
    """
    t = _series(diags, "t")
    s = _series(diags, "max_H") + _series(diags, "max_grad_H")
    if np.all(s == 0):
        return AuditVerdict("eigenvalue_drift", True, float("inf"), 0, "stationary: |H| ≡ 0")
    try:
        fit = decay_fit(t, s)
    except NonPositiveSeries:
        return AuditVerdict("eigenvalue_drift", True, float("inf"), 0, "hypothesis not applicable")
    gamma = -fit.rate
    if gamma <= 0:
        return AuditVerdict("eigenvalue_drift", True, float("inf"), 0, "no exponential decay; hypothesis fails")
    eps = float(np.max(s * np.exp(gamma * t)))
    Lam = float(np.max(np.sqrt(_series(diags, "max_A_sq"))))
    lam = _series(diags, "lambda1")
    rhs = math.exp(-(2 * Lam * eps + eps ** 2) / (2 * gamma)) * math.sqrt(lam[0]) - Lam * eps / gamma
    return _lower_audit("eigenvalue_drift", np.sqrt(lam), np.full_like(lam, rhs), dt,
                        f"gamma={gamma:.4g}, eps={eps:.4g}, Lambda={Lam:.4g}")


def audit_volume_noncollapsing(diags, n, dt) -> AuditVerdict:
    """κ(t) ≥ κ₀ e^{-(n+1)E(t)} with κ₀ = κ(0)."""
    kap = _series(diags, "kappa")
    E = _series(diags, "E_t")
    return _lower_audit("ball_volume", kap, kap[0] * np.exp(-(n + 1) * E), dt)


def audit_sup_estimate(diags, n, dt, r: float) -> AuditVerdict:
    """max|H| ≤ (1/√κ + Λ∇)(∫|H|²)^{1/(n+2)} whenever ∫|H|² ≤ r^{n+2}; Λ∇ = measured max|∇H|."""
    q = _series(diags, "l2_H_sq")
    sel = q <= r ** (n + 2)
    kap = _series(diags, "kappa")[sel]
    bound = (1.0 / np.sqrt(kap) + _series(diags, "max_grad_H")[sel]) * q[sel] ** (1.0 / (n + 2))
    return _upper_audit("sup_estimate", _series(diags, "max_H")[sel], bound, dt,
                        "Lambda taken as the measured max|grad H|")


def doubling_time(Lambda: float, k_plus_2: float | None = None) -> float:
    """``log 2 / (4Λ² + c)`` with ``c = max(2, K+2)``.

    The zeroth-order growth of ``|H|`` picks up ``(K+2)|H|`` from the angle
    equation, so the constant 2 only covers ``K+2 ≤ 2``.
    """
    c = 2.0 if k_plus_2 is None else max(2.0, float(k_plus_2))
    return math.log(2.0) / (4.0 * Lambda ** 2 + c)


def audit_doubling(diags, dt, k_plus_2: float | None = None) -> AuditVerdict:
    """|A| ≤ 2Λ and |H| ≤ 2ε on [0, T₁] with T₁ = log 2/(4Λ²+max(2, K+2))."""
    t = _series(diags, "t")
    A = np.sqrt(_series(diags, "max_A_sq"))
    H = _series(diags, "max_H")
    T1 = doubling_time(A[0], k_plus_2)
    sel = t <= T1 + 1e-15
    v1 = _upper_audit("doubling", A[sel], np.full(sel.sum(), 2 * A[0]), dt)
    v2 = _upper_audit("doubling", H[sel], np.full(sel.sum(), 2 * H[0]), dt)
    return AuditVerdict("doubling", v1.passed and v2.passed, min(v1.worst_margin, v2.worst_margin),
                        v1.checked + v2.checked, f"T1={T1:.4g}")


AUDIT_NAMES = ("l2_growth", "l2_spectral_decay", "eigenvalue_drift", "ball_volume", "sup_estimate", "doubling")


def bound_audit(diags: list[Diagnostics], n: int, k_plus_2: float, dt: float,
                r: float = 1.0) -> list[AuditVerdict]:
    if len(diags) < 10:
        raise InsufficientData(f"bound audit needs at least 10 samples, got {len(diags)}")
    return [
        audit_l2_growth(diags, k_plus_2, dt),
        audit_l2_spectral_decay(diags, k_plus_2, dt),
        audit_eigenvalue_drift(diags, dt),
        audit_volume_noncollapsing(diags, n, dt),
        audit_sup_estimate(diags, n, dt, r),
        audit_doubling(diags, dt, k_plus_2),
    ]


# ---------------------------------------------------------------------------
# structural invariants of a trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InvariantReport:
    volume_monotone: bool
    max_volume_increase: float
    legendrian_ok: bool
    max_leg_residual: float
    cycles_ok: bool
    max_cycle_drift_rate: float

    @property
    def passed(self) -> bool:
        return self.volume_monotone and self.legendrian_ok and self.cycles_ok


def structural_invariants(diags: list[Diagnostics], dt: float, leg_tol: float = 1e-7,
                          vol_slack: float = 1e-10) -> InvariantReport:
    vol = _series(diags, "vol")
    inc = float(np.max(np.diff(vol))) if vol.size > 1 else 0.0
    leg = float(np.max(_series(diags, "leg_residual")))
    cyc = np.array([d.cycle_H for d in diags])
    t = _series(diags, "t")
    if cyc.size and t[-1] > t[0]:
        drift = float(np.max(np.abs(cyc - cyc[0]))) / (t[-1] - t[0])
    else:
        drift = 0.0
    return InvariantReport(volume_monotone=inc <= vol_slack, max_volume_increase=inc,
                           legendrian_ok=leg < leg_tol, max_leg_residual=leg,
                           cycles_ok=drift <= 10 * dt, max_cycle_drift_rate=drift)

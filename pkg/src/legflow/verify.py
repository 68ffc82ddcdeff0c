"""Residual harness for submanifold identities and flow evolution equations.

Every identity is evaluated with two independent code paths.  Intrinsic
curvature, for instance, is built only from spectral derivatives of ``g_ij``,
never from the ambient pullback it is compared against.

Residual reports carry an absolute ``max_residual`` and the ``scale`` of the
compared sides.  An identity passes when
``max_residual < threshold * max(1, scale)``.

Identities marked *informational* evaluate a textbook form that is known not to
hold in general; they are reported but never gate a pass.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np

from . import fourier
from .ambient import SasakianModel, ambient_identity_residuals, sample_points
from .errors import InsufficientData
from .immersion import DiscreteLegendrian

# per-identity thresholds (relative to max(1, scale))
IDENTITY_THRESHOLDS = {
    "gauss": 1e-5,
    "codazzi": 1e-6,
    "traced_gauss": 1e-5,
    "simons": 1e-4,
    "simons_curve": 1e-4,
    "h_symmetry": 1e-6,
    "reeb_orthogonality": 1e-6,
    "mean_curvature_trace": 1e-12,
    "traced_gauss_ambient_ricci": 1e-5,
    "simons_term_grouping": 1e-4,
}
INFORMATIONAL = {"traced_gauss_ambient_ricci", "simons_term_grouping"}

EVOLUTION_IDS = ("volume", "angle", "metric", "metric_by_H", "mean_curvature_form", "mean_curvature_norm",
                 "mean_curvature_heat", "second_fundamental", "second_fundamental_norm")
EVOLUTION_INFORMATIONAL = {"second_fundamental", "second_fundamental_norm"}
STATIONARY_FLOOR = 1e-12
ORDER_BAND = (3.5, 4.5)


@dataclass(frozen=True)
class ResidualReport:
    identity: str
    max_residual: float
    mean_residual: float
    scale: float
    resolution: tuple
    expected_order: float | None
    passed: bool
    threshold: float
    informational: bool = False
    order: float | None = None
    note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _report(identity, diff, scale, resolution, threshold, expected_order=None, informational=False,
            order=None, note="") -> ResidualReport:
    diff = np.abs(np.asarray(diff, dtype=float))
    mx = float(np.max(diff)) if diff.size else 0.0
    mean = float(np.mean(diff)) if diff.size else 0.0
    passed = bool(mx < threshold * max(1.0, scale))
    return ResidualReport(identity, mx, mean, float(scale), tuple(resolution), expected_order, passed,
                          threshold, informational, order, note)


def _scale(*arrs) -> float:
    return float(max(np.max(np.abs(a)) if np.size(a) else 0.0 for a in arrs))


# ---------------------------------------------------------------------------
# tensor calculus on the grid
# ---------------------------------------------------------------------------

_IDX = "pqrstuvwxy"


def covariant_derivative(L: DiscreteLegendrian, T: np.ndarray, rank: int) -> np.ndarray:
    """``∇_m T_{a1..ar}`` for a covariant tensor field; the new index comes first."""
    n = L.n
    out = fourier.gradient(T, n)
    G = L.induced_christoffel  # [..., p, m, a]
    letters = _IDX[:rank]
    for q in range(rank):
        src = letters[:q] + "z" + letters[q + 1:]
        out = out - np.einsum(f"...zm{letters[q]},...{src}->...m{letters}", G, T)
    return out


def raise_index(L: DiscreteLegendrian, T: np.ndarray, axis: int) -> np.ndarray:
    """Raise the tensor index at position ``axis`` (counted after the grid axes)."""
    n = L.n
    k = T.ndim - n
    letters = _IDX[:k]
    src = letters[:axis] + "z" + letters[axis + 1:]
    return np.einsum(f"...{letters[axis]}z,...{src}->...{letters}", L.metric_inv, T)


def rough_laplacian(L: DiscreteLegendrian, T: np.ndarray, rank: int) -> np.ndarray:
    d2 = covariant_derivative(L, covariant_derivative(L, T, rank), rank + 1)
    idx = _IDX[:rank]
    return np.einsum(f"...ml,...ml{idx}->...{idx}", L.metric_inv, d2)


class SubmanifoldGeometry:
    """Cached pullbacks and intrinsic quantities for the identity checks."""

    def __init__(self, L: DiscreteLegendrian):
        self.L = L
        self.n = L.n
        self.F = L.tangents
        self.v = L.normals
        self.gi = L.metric_inv
        self.h = L.second.h
        self.H = L.second.H

    # -- ambient pullbacks ----------------------------------------------------
    @cached_property
    def R(self):
        return self.L.amb.riemann

    def pull(self, *vecs):
        """``R(X, Y, Z, W)`` for node-wise families of ambient vectors ``[..., k, a]``."""
        return np.einsum("...abcd,...ia,...jb,...kc,...ld->...ijkl", self.R, *vecs, optimize=True)

    @cached_property
    def R_FFFF(self):
        return self.pull(self.F, self.F, self.F, self.F)

    @cached_property
    def ricci_amb(self):
        return self.L.amb.ricci

    # -- h with raised indices ---------------------------------------------------
    @cached_property
    def h_up1(self):
        """``h_ij^m`` stored as ``[..., i, j, m]``."""
        return raise_index(self.L, self.h, 2)

    @cached_property
    def h_up2(self):
        """``h_i^{jk}`` stored as ``[..., i, j, k]``."""
        return raise_index(self.L, raise_index(self.L, self.h, 1), 2)

    @cached_property
    def H_up(self):
        return np.einsum("...ij,...j->...i", self.gi, self.H)

    # -- intrinsic curvature (from g_ij only) -------------------------------------
    @cached_property
    def intrinsic_riemann(self):
        """``R_dcab`` of the induced metric, same convention as the ambient module."""
        L = self.L
        G = L.induced_christoffel  # [e, b, c]
        dG = fourier.gradient(G, self.n)  # [a, e, b, c]
        Rup = (np.einsum("...aebc->...ecab", dG) - np.einsum("...beac->...ecab", dG)
               + np.einsum("...eas,...sbc->...ecab", G, G) - np.einsum("...ebs,...sac->...ecab", G, G))
        return np.einsum("...de,...ecab->...dcab", L.metric, Rup)

    @cached_property
    def intrinsic_ricci(self):
        return np.einsum("...da,...dcab->...cb", self.gi, self.intrinsic_riemann)

    # -- Gauss-equation curvature (ambient path) ----------------------------------
    @cached_property
    def gauss_riemann(self):
        h, hu = self.h, self.h_up1
        return (self.R_FFFF + np.einsum("...ikm,...mjl->...ijkl", hu, h)
                - np.einsum("...ilm,...mjk->...ijkl", hu, h))

    @cached_property
    def P(self):
        """``P_jl = g^{ik} R(F_i, F_j, F_k, F_l)``."""
        return np.einsum("...ik,...ijkl->...jl", self.gi, self.R_FFFF)

    @cached_property
    def gauss_ricci(self):
        return (self.P + np.einsum("...m,...ikm->...ik", self.H, self.h_up1)
                - np.einsum("...ilm,...kml->...ik", self.h_up1, self.h_up1))

    # -- Codazzi ------------------------------------------------------------------
    @cached_property
    def nabla_h(self):
        return covariant_derivative(self.L, self.h, 3)  # [l, i, j, k]

    @cached_property
    def codazzi_term(self):
        """``C_ijkl = -R(v_i, F_k, F_l, F_j)``."""
        return -np.einsum("...iklj->...ijkl", self.pull(self.v, self.F, self.F, self.F))

    @cached_property
    def nabla_R(self):
        """Ambient ``∇R`` at the nodes, or ``None`` on the round sphere where it vanishes."""
        return None if self.L.model.embedded else self.L.amb.nabla_riemann

    # -- derivative of the Codazzi term, expanded through ∇R ------------------------
    @cached_property
    def nabla_codazzi(self):
        """``∇_m C_abcd`` expanded with the ambient ``∇R`` and the structure equations."""
        L = self.L
        F, v = self.F, self.v
        A = -np.einsum("...ijs,...sa->...ija", self.h_up1, v)  # A_ij = -h_ij^s v_s
        T = L.amb.T
        g = L.metric
        nv = (-np.einsum("...ma,...x->...max", g, T)
              + np.einsum("...mas,...sx->...max", self.h_up1, F))  # ∇_m v_a
        nR = self.nabla_R
        R = self.R
        # term order: C_abcd = -R(v_a, F_c, F_d, F_b); result index [m, a, b, c, d]
        t1 = 0.0 if nR is None else np.einsum("...sxyzw,...ms,...ax,...cy,...dz,...bw->...mabcd",
                                               nR, F, v, F, F, F, optimize=True)
        t2 = np.einsum("...xyzw,...max,...cy,...dz,...bw->...mabcd", R, nv, F, F, F, optimize=True)
        t3 = np.einsum("...xyzw,...ax,...mcy,...dz,...bw->...mabcd", R, v, A, F, F, optimize=True)
        t4 = np.einsum("...xyzw,...ax,...cy,...mdz,...bw->...mabcd", R, v, F, A, F, optimize=True)
        t5 = np.einsum("...xyzw,...ax,...cy,...dz,...mbw->...mabcd", R, v, F, F, A, optimize=True)
        return -(t1 + t2 + t3 + t4 + t5)


# ---------------------------------------------------------------------------
# submanifold identities
# ---------------------------------------------------------------------------

def gauss_residual(S: SubmanifoldGeometry):
    lhs = S.intrinsic_riemann
    rhs = S.gauss_riemann
    return lhs - rhs, _scale(lhs, rhs)


def codazzi_residual(S: SubmanifoldGeometry):
    Nh = S.nabla_h  # [l, i, j, k]
    lhs = np.einsum("...lijk->...ijkl", Nh) - np.einsum("...jilk->...ijkl", Nh)
    rhs = S.codazzi_term
    return lhs - rhs, _scale(lhs, rhs)


def traced_gauss_residual(S: SubmanifoldGeometry):
    lhs = S.intrinsic_ricci
    rhs = S.gauss_ricci
    return lhs - rhs, _scale(lhs, rhs)


def traced_gauss_ambient_ricci_residual(S: SubmanifoldGeometry):
    """Variant with the ambient ``Ric(F_i, F_k)`` in place of ``P_ik`` (informational)."""
    ric = np.einsum("...ab,...ia,...kb->...ik", S.ricci_amb, S.F, S.F)
    rhs = (ric + np.einsum("...m,...ikm->...ik", S.H, S.h_up1)
           - np.einsum("...ilm,...kml->...ik", S.h_up1, S.h_up1))
    lhs = S.intrinsic_ricci
    return lhs - rhs, _scale(lhs, rhs)


def simons_lhs(S: SubmanifoldGeometry):
    L = S.L
    return covariant_derivative(L, covariant_derivative(L, S.H, 1), 2)  # [i, j, k]


def simons_rhs(S: SubmanifoldGeometry):
    """``Δh_ijk`` plus curvature and ∇R terms from commuting derivatives and Codazzi."""
    L = S.L
    gi = S.gi
    lap_h = rough_laplacian(L, S.h, 3)
    RG = S.gauss_riemann
    Rup = raise_index(L, RG, 0)  # R^p_{jim} stored [p, j, i, m]
    ric = S.gauss_ricci
    ric_up = np.einsum("...ip,...pq->...iq", ric, gi)  # Ric_i^q
    dC = S.nabla_codazzi  # [m, a, b, c, d]
    out = lap_h
    out = out - np.einsum("...ml,...mjikl->...ijk", gi, dC)
    out = out - np.einsum("...ml,...pjim,...pkl->...ijk", gi, Rup, S.h)
    out = out - np.einsum("...ml,...pkim,...jpl->...ijk", gi, Rup, S.h)
    out = out - np.einsum("...ip,...jkp->...ijk", ric_up, S.h)
    out = out + np.einsum("...ml,...ikmlj->...ijk", gi, dC)
    return out


def simons_residual(S: SubmanifoldGeometry):
    lhs = simons_lhs(S)
    rhs = simons_rhs(S)
    return lhs - rhs, _scale(lhs, rhs)


def simons_curve_residual(S: SubmanifoldGeometry):
    """Curves: every curvature term drops and the identity reduces to ``∇∇H = Δh``."""
    lhs = simons_lhs(S)
    rhs = rough_laplacian(S.L, S.h, 3)
    return lhs - rhs, _scale(lhs, rhs)


def simons_term_grouping_rhs(S: SubmanifoldGeometry):
    """The Simons identity with the classical term grouping (informational)."""
    L = S.L
    F, v = S.F, S.v
    h, h1, h2 = S.h, S.h_up1, S.h_up2  # h_ij^m, h_i^{jk}
    Hup = S.H_up
    ric = S.ricci_amb
    nR = S.nabla_R
    ginv_amb = np.linalg.inv(L.amb.g)
    J = L.amb.J
    e = lambda spec, *ops: np.einsum(spec, *ops, optimize=True)  # noqa: E731
    out = rough_laplacian(L, h, 3)
    # cubic h terms; h_mk^s stored as h1[m,k,s]
    out = out + e("...mks,...isl,...jlm->...ijk", h1, h1, h1) - e("...mis,...ksl,...jlm->...ijk", h1, h1, h1)
    out = out + e("...mjs,...isl,...klm->...ijk", h1, h1, h1) - e("...mis,...jsl,...klm->...ijk", h1, h1, h1)
    out = out + e("...ism,...mls,...jkl->...ijk", h1, h1, h1) - e("...m,...ilm,...jkl->...ijk", S.H, h1, h1)
    # ambient Ricci
    RicFF = e("...ab,...ia,...lb->...il", ric, F, F)
    Ricvv = e("...ab,...sa,...jb->...sj", ric, v, v)
    out = out - e("...il,...jkl->...ijk", RicFF, h1)
    out = out + 0.5 * (e("...ks,...ijs->...ijk", RicFF, h1) - e("...sj,...iks->...ijk", Ricvv, h1))
    # full curvature, first bracket
    RF = S.R_FFFF  # R(F_a, F_b, F_c, F_d)
    out = out - e("...lkim,...jml->...ijk", RF, h2) - e("...ljim,...kml->...ijk", RF, h2)
    Rvv = S.pull(v, F, F, v)  # R(v_l, F_k, F_j, v_s) stored [l, k, j, s]
    out = out - (e("...skjl,...isl->...ijk", RF, h2) - e("...lkjs,...isl->...ijk", Rvv, h2))
    # second bracket
    out = out - e("...skil,...jsl->...ijk", RF, h2)
    Rvvff = S.pull(v, v, F, F)  # R(v_j, v_s, F_i, F_l) stored [j, s, i, l]
    out = out + e("...jsil,...ksl->...ijk", Rvvff, h2)
    Rvfvf = S.pull(v, F, v, F)  # R(v_j, F_k, v_s, F_l) stored [j, k, s, l]
    out = out + e("...jksl,...isl->...ijk", Rvfvf, h2)
    Rvffv = S.pull(v, F, F, v)  # R(v_j, F_k, F_i, v_s) stored [j, k, i, s]
    out = out + e("...jkis,...s->...ijk", Rvffv, Hup)
    if nR is None:
        return out
    # covariant derivative of curvature
    nR_up = e("...ed,...sdcab->...secab", ginv_amb, nR)  # ∇_σ R^ε_{δγβ}
    t1 = e("...be,...sedcb,...is,...jd,...kc->...ijk", J, nR_up, F, F, F)
    nR_div = e("...es,...sedbc->...dbc", ginv_amb, nR)  # ∇^ε R_{εδβγ}
    t2 = e("...dbc,...id,...jb,...kc->...ijk", nR_div, F, v, F)
    return out - 0.5 * t1 + 0.5 * t2


def simons_term_grouping_residual(S: SubmanifoldGeometry):
    lhs = simons_lhs(S)
    rhs = simons_term_grouping_rhs(S)
    return lhs - rhs, _scale(lhs, rhs)


def h_symmetry_residual(S: SubmanifoldGeometry):
    return np.array([S.L.second.symmetry_defect]), _scale(S.h)


def reeb_orthogonality_residual(S: SubmanifoldGeometry):
    return S.L.second.reeb_component, _scale(S.L.second.A)


def trace_residual(S: SubmanifoldGeometry):
    H = np.einsum("...ik,...ijk->...j", S.gi, S.h)
    return H - S.H, _scale(S.H)


SUBMANIFOLD_CHECKS = {
    "gauss": gauss_residual,
    "codazzi": codazzi_residual,
    "traced_gauss": traced_gauss_residual,
    "simons": simons_residual,
    "h_symmetry": h_symmetry_residual,
    "reeb_orthogonality": reeb_orthogonality_residual,
    "mean_curvature_trace": trace_residual,
    "traced_gauss_ambient_ricci": traced_gauss_ambient_ricci_residual,
    "simons_term_grouping": simons_term_grouping_residual,
}


def submanifold_identity_residuals(L: DiscreteLegendrian, which=None,
                                   thresholds: dict | None = None) -> list[ResidualReport]:
    th = dict(IDENTITY_THRESHOLDS)
    th.update(thresholds or {})
    S = SubmanifoldGeometry(L)
    names = list(which) if which is not None else list(SUBMANIFOLD_CHECKS)
    if L.n == 1 and which is None:
        names.insert(names.index("simons") + 1, "simons_curve")
    out = []
    for name in names:
        fn = simons_curve_residual if name == "simons_curve" else SUBMANIFOLD_CHECKS[name]
        diff, scale = fn(S)
        out.append(_report(name, diff, scale, L.shape, th[name], informational=name in INFORMATIONAL))
    return out


def ambient_reports(model: SasakianModel, count: int = 100, seed: int = 0) -> list[ResidualReport]:
    """The ambient identity suite as residual reports."""
    pts = sample_points(model, count, seed)
    res = ambient_identity_residuals(model, pts, seed)
    tol = 1e-8 if model.curvature_mode == "closed_form" else 1e-4
    out = []
    for k, v in res.items():
        if k == "eta_einstein_constant":
            continue
        out.append(ResidualReport(k, float(v), float(v), 1.0, (count,), None, bool(v < tol), tol))
    return out


def all_passed(reports: list[ResidualReport]) -> bool:
    return all(r.passed for r in reports if not r.informational)


def refinement_ratio(coarse: list[ResidualReport], fine: list[ResidualReport], floor: float = 1e-10) -> dict:
    """Per-identity residual reduction under refinement (``inf`` once both sit at the floor)."""
    out = {}
    f = {r.identity: r for r in fine}
    for r in coarse:
        if r.identity not in f:
            continue
        a = r.max_residual / max(1.0, r.scale)
        b = f[r.identity].max_residual / max(1.0, f[r.identity].scale)
        out[r.identity] = math.inf if a <= floor and b <= floor else (a / b if b > 0 else math.inf)
    return out


# ---------------------------------------------------------------------------
# evolution equations
# ---------------------------------------------------------------------------

def evolution_fields(L: DiscreteLegendrian, alpha: np.ndarray, which=EVOLUTION_IDS) -> dict:
    """Left-hand quantities and right-hand sides of the flow evolution equations.

    Returns ``{id: (lhs_field, rhs_field)}``; the residual is ``∂_t lhs - rhs``.
    """
    S = SubmanifoldGeometry(L)
    kp2 = L.model.eta_einstein_constant
    gi, h, H, Hup, h1 = S.gi, S.h, S.H, S.H_up, S.h_up1
    sec = L.second
    out = {}
    angle_rhs = L.laplacian(alpha) + kp2 * alpha
    if "volume" in which:
        out["volume"] = (L.sqrt_det, -sec.H_sq * L.sqrt_det)
    if "angle" in which:
        out["angle"] = (alpha, angle_rhs)
    if "metric" in which:
        grad = L.covariant_gradient(alpha)
        out["metric"] = (L.metric, -2.0 * np.einsum("...k,...kij->...ij", grad, h))
    if "metric_by_H" in which:
        out["metric_by_H"] = (L.metric, -2.0 * np.einsum("...k,...kij->...ij", Hup, h))
    if "mean_curvature_form" in which:
        out["mean_curvature_form"] = (H, fourier.gradient(angle_rhs, L.n))
    nH = None
    if {"mean_curvature_norm", "mean_curvature_heat"} & set(which):
        nH = covariant_derivative(L, H, 1)  # [i, j]
    if "mean_curvature_norm" in which:
        gradH_sq = np.einsum("...ij,...ik,...jl,...kl->...", nH, gi, gi, nH)
        quartic = np.einsum("...j,...l,...jkm,...lmk->...", Hup, Hup, h1, h1)
        PHH = np.einsum("...j,...jl,...l->...", Hup, S.P, Hup)
        rhs = (L.laplacian(sec.H_sq) - 2 * gradH_sq + 2 * kp2 * sec.H_sq - 2 * PHH + 2 * quartic)
        out["mean_curvature_norm"] = (sec.H_sq, rhs)
    if "mean_curvature_heat" in which:
        lapH = rough_laplacian(L, H, 1)
        ric_like = np.einsum("...m,...jlm->...jl", H, h1) - np.einsum("...jkm,...lmk->...jl", h1, h1)
        rhs = lapH + kp2 * H - np.einsum("...jl,...l->...j", S.P + ric_like, Hup)
        out["mean_curvature_heat"] = (H, rhs)
    if "second_fundamental" in which or "second_fundamental_norm" in which:
        third = _printed_h_rhs(S, alpha)
        if "second_fundamental" in which:
            out["second_fundamental"] = (h, third)
        if "second_fundamental_norm" in which:
            out["second_fundamental_norm"] = (sec.A_sq, _printed_A_sq_rhs(S))
    return out


def _printed_h_rhs(S: SubmanifoldGeometry, alpha: np.ndarray) -> np.ndarray:
    """Evolution of ``h_ijk`` for velocity ``∇^kf v_k + 2fT`` with ``f = -α`` (term-by-term as classically stated)."""
    L = S.L
    f = -alpha
    d1 = fourier.gradient(f, L.n)
    d2 = covariant_derivative(L, d1, 1)       # ∇_a∇_b f  [a, b]
    d3 = covariant_derivative(L, d2, 2)       # ∇_c∇_a∇_b f  [c, a, b]
    grad_up = np.einsum("...ij,...j->...i", S.gi, d1)
    h, h1 = S.h, S.h_up1
    g = L.metric
    out = -np.einsum("...jki->...ijk", d3)
    out = out + np.einsum("...l,...lim,...jkm->...ijk", grad_up, h, h1)
    out = out + np.einsum("...l,...lkm,...ijm->...ijk", grad_up, h, h1)
    out = out - 2 * np.einsum("...ik,...j->...ijk", g, d1) - np.einsum("...ij,...k->...ijk", g, d1)
    Rv = S.pull(S.v, S.F, S.v, S.F)  # R(v_i, F_k, v_l, F_j) stored [i, k, l, j]
    out = out - np.einsum("...l,...iklj->...ijk", grad_up, Rv)
    return out


def _printed_A_sq_rhs(S: SubmanifoldGeometry) -> np.ndarray:
    """Right side of the classical ``|A|²`` evolution as stated (informational)."""
    L = S.L
    kp2 = L.model.eta_einstein_constant
    h1, h2 = S.h_up1, S.h_up2
    gi = S.gi
    h_up3 = raise_index(L, h2, 0)  # h^{ijk}
    sec = L.second
    nh = S.nabla_h
    grad_sq = np.einsum("...lijk,...lm,...ia,...jb,...kc,...mabc->...", nh, gi, gi, gi, gi, nh, optimize=True)
    quartic = np.einsum("...ism,...mls,...jkl,...ijk->...", h1, h1, h1, h_up3, optimize=True)
    RF = S.R_FFFF
    Rvv = S.pull(S.v, S.v, S.F, S.F)
    curv = np.einsum("...mjkl,...iml,...ijk->...", 4 * RF + Rvv, h2, h_up3, optimize=True)
    base = (L.laplacian(sec.A_sq) - 2 * grad_sq - 2 * kp2 * sec.A_sq + 2 * quartic + 6 * sec.H_sq - 2 * curv)
    nR = S.nabla_R
    if nR is None:
        return base
    ginv_amb = np.linalg.inv(L.amb.g)
    nR_div = np.einsum("...es,...sedbc->...dbc", ginv_amb, nR)
    nR_up = np.einsum("...ed,...sdcab->...secab", ginv_amb, nR)
    F, v, J = S.F, S.v, L.amb.J
    t1 = np.einsum("...dbc,...id,...jb,...kc,...ijk->...", nR_div, F, v, F, h_up3, optimize=True)
    t2 = np.einsum("...be,...sedcb,...is,...jd,...kc,...ijk->...", J, nR_up, F, F, F, h_up3, optimize=True)
    return base + t1 - t2


def _fd4(series: np.ndarray, spacing: float) -> np.ndarray:
    """4th-order central first derivative along axis 0 (interior points only)."""
    return (-series[4:] + 8 * series[3:-1] - 8 * series[1:-3] + series[:-4]) / (12.0 * spacing)


def evolution_series(snapshots, which=EVOLUTION_IDS) -> tuple[np.ndarray, dict]:
    """Per-interior-time max residual for each equation.

    ``snapshots`` is a list of ``(t, L, alpha)`` with uniform spacing.
    Returns ``(times, {id: (residual_series, scale)})``.
    """
    if len(snapshots) < 5:
        raise InsufficientData("evolution residuals need at least 5 equally spaced snapshots")
    ts = np.array([s[0] for s in snapshots])
    gaps = np.diff(ts)
    if np.max(np.abs(gaps - gaps.mean())) > 1e-9 * max(1.0, gaps.mean()):
        raise InsufficientData("snapshots are not equally spaced")
    spacing = float(gaps.mean())
    fields = [evolution_fields(L, a, which) for _, L, a in snapshots]
    out = {}
    for key in fields[0]:
        lhs = np.stack([f[key][0] for f in fields])
        rhs = np.stack([f[key][1] for f in fields])
        dt_lhs = _fd4(lhs, spacing)
        res = np.abs(dt_lhs - rhs[2:-2]).reshape(dt_lhs.shape[0], -1).max(axis=1)
        out[key] = (res, _scale(dt_lhs, rhs[2:-2]))
    return ts[2:-2], out


def evolution_residuals(snapshots, which=None, refined_snapshots=None, resolution=None,
                        window: tuple[float, float] | None = None) -> list[ResidualReport]:
    """Compare ``∂_t`` of recorded fields with the evolution equations.

    With ``refined_snapshots`` (a rerun at half the step with the same snapshot
    cadence in steps, so half the snapshot spacing) the dt-order is measured on
    the common times; the equation passes when the order falls in [3.5, 4.5] or
    both residuals sit below the stationary floor.
    """
    which = tuple(which) if which is not None else EVOLUTION_IDS
    t, series = evolution_series(snapshots, which)
    resolution = resolution or snapshots[0][1].shape
    if refined_snapshots is not None:
        t2, series2 = evolution_series(refined_snapshots, which)
    reports = []
    for key in which:
        res, scale = series[key]
        sel = np.ones_like(t, dtype=bool)
        if window is not None:
            sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
        order = None
        note = ""
        if refined_snapshots is not None:
            res2, _ = series2[key]
            idx = [int(np.argmin(np.abs(t2 - tc))) for tc in t[sel]]
            ok = [abs(t2[i] - tc) < 1e-9 for i, tc in zip(idx, t[sel])]
            if not all(ok):
                raise InsufficientData("refined run does not share snapshot times")
            r1 = float(np.max(res[sel]))
            r2 = float(np.max(res2[idx]))
            if r1 < STATIONARY_FLOOR and r2 < STATIONARY_FLOOR:
                order, note = None, "stationary floor"
                passed = True
            else:
                order = math.log2(r1 / r2) if r2 > 0 else math.inf
                passed = ORDER_BAND[0] <= order <= ORDER_BAND[1]
        else:
            passed = float(np.max(res[sel])) < STATIONARY_FLOOR
        rep = ResidualReport(key, float(np.max(res[sel])), float(np.mean(res[sel])), scale, tuple(resolution),
                             4.0, bool(passed), STATIONARY_FLOOR, key in EVOLUTION_INFORMATIONAL, order, note)
        reports.append(rep)
    return reports


def residual_table_markdown(reports: list[ResidualReport]) -> str:
    rows = ["| identity | max residual | scale | order | pass |", "|---|---|---|---|---|"]
    for r in reports:
        order = "" if r.order is None else f"{r.order:.2f}"
        flag = "info" if r.informational else ("pass" if r.passed else "FAIL")
        rows.append(f"| {r.identity} | {r.max_residual:.3e} | {r.scale:.3e} | {order} | {flag} |")
    return "\n".join(rows) + "\n"


def write_residual_csv(reports: list[ResidualReport], path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["identity", "max_residual", "mean_residual", "scale", "order", "passed", "informational"])
        for r in reports:
            w.writerow([r.identity, "%.17g" % r.max_residual, "%.17g" % r.mean_residual, "%.17g" % r.scale,
                        "" if r.order is None else "%.6g" % r.order, int(r.passed), int(r.informational)])

"""Laplace–Beltrami spectrum and the Legendrian-angle solve.

The operator is assembled by spectral Galerkin on the nodal trigonometric
basis: basis functions and their derivatives are evaluated on a twice-finer
grid through :func:`legflow.fourier.fine_matrices`, and the weak forms

    stiffness  S_ab = ∫ g^{ij} ∂_i φ_a ∂_j φ_b dμ
    mass       M_ab = ∫ φ_a φ_b dμ

are integrated with the fine-grid trapezoid rule.  Both curves and tori use the
same tensor-product assembly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import fourier
from .errors import EigSolveFailure, NonExactMeanCurvature
from .immersion import DiscreteLegendrian

ANGLE_TOL = 1e-8
EXACTNESS_REL_TOL = 1e-6


def _kron_all(mats: list[np.ndarray]) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


class LaplaceOperator:
    """Weak Laplace–Beltrami operator of the induced metric of ``L``."""

    def __init__(self, L: DiscreteLegendrian, oversample: int = 2):
        self.L = L
        n = L.n
        self.fine_shape = tuple(oversample * N for N in L.shape)
        mats = [fourier.fine_matrices(N, M) for N, M in zip(L.shape, self.fine_shape)]
        Is = [m[0] for m in mats]
        Bs = [m[1] for m in mats]
        self.interp = _kron_all(Is)
        self.derivs = [_kron_all([Bs[a] if a == i else Is[a] for a in range(n)]) for i in range(n)]
        g = fourier.to_fine(L.metric, n, self.fine_shape)
        det = np.linalg.det(g)
        self.fine_sqrt_det = np.sqrt(np.maximum(det, 0.0)).reshape(-1)
        self.fine_metric_inv = np.linalg.inv(g).reshape(-1, n, n)
        self.weight = self.fine_sqrt_det * float(np.prod([fourier.TWO_PI / M for M in self.fine_shape]))

    @cached_property
    def mass(self) -> np.ndarray:
        I = self.interp
        M = I.T @ (self.weight[:, None] * I)
        return 0.5 * (M + M.T)

    @cached_property
    def stiffness(self) -> np.ndarray:
        n = self.L.n
        S = np.zeros((self.interp.shape[1],) * 2)
        for i in range(n):
            for j in range(n):
                c = self.weight * self.fine_metric_inv[:, i, j]
                S += self.derivs[i].T @ (c[:, None] * self.derivs[j])
        return 0.5 * (S + S.T)

    @cached_property
    def mass_row(self) -> np.ndarray:
        """``∫ φ_a dμ`` for each basis function."""
        return self.interp.T @ self.weight

    @property
    def volume(self) -> float:
        return float(np.sum(self.weight))

    def kernel_residual(self) -> float:
        ones = np.ones(self.stiffness.shape[0])
        return float(np.max(np.abs(self.stiffness @ ones)) / max(1.0, np.max(np.abs(self.stiffness))))

    def form_load(self, H: np.ndarray) -> np.ndarray:
        """``b_a = ∫ g^{ij} ∂_iφ_a H_j dμ`` for a nodal 1-form ``H``."""
        n = self.L.n
        Hf = fourier.to_fine(H, n, self.fine_shape).reshape(-1, n)
        flux = self.weight[:, None] * np.einsum("pij,pj->pi", self.fine_metric_inv, Hf)
        return sum(self.derivs[i].T @ flux[:, i] for i in range(n))


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray      # λ_1 ≤ ... ≤ λ_k (constant mode removed)
    eigenfunctions: np.ndarray   # columns, mass-orthonormal, nodal values
    residuals: np.ndarray        # relative ‖Sφ − λMφ‖
    zero_mode: float             # computed λ_0 (should vanish)
    orthonormality_defect: float

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    def csv_rows(self) -> list[tuple[int, float, float]]:
        return [(i + 1, float(l), float(r)) for i, (l, r) in enumerate(zip(self.eigenvalues, self.residuals))]


def spectrum(L: DiscreteLegendrian, k: int = 4, op: LaplaceOperator | None = None) -> SpectralReport:
    """First ``k`` nonzero eigenpairs of ``S φ = λ M φ`` (geometer's sign, λ ≥ 0)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    op = op or LaplaceOperator(L)
    S, M = op.stiffness, op.mass
    size = S.shape[0]
    k = min(k, size - 1)
    try:
        w, V = scipy.linalg.eigh(S, M, subset_by_index=[0, k])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise EigSolveFailure("non-finite eigenvalues")
    scale = max(1.0, float(np.max(np.abs(S))))
    res = np.linalg.norm(S @ V - (M @ V) * w, axis=0) / (scale * np.linalg.norm(V, axis=0))
    gram = V.T @ M @ V
    return SpectralReport(eigenvalues=w[1:], eigenfunctions=V[:, 1:], residuals=res[1:],
                          zero_mode=float(w[0]), orthonormality_defect=float(np.max(np.abs(gram - np.eye(k + 1)))))


@dataclass(frozen=True)
class AngleField:
    alpha: np.ndarray
    gauge: str
    mean: float                   # ∫α dμ / Vol
    cycle_integrals: np.ndarray   # ∮ H over the fundamental cycles
    residual: float               # ‖dα − H‖_{L²}
    H_norm: float                 # ‖H‖_{L²}

    @property
    def accepted(self) -> bool:
        return self.residual < ANGLE_TOL * self.H_norm + 1e-10


def l2_form_norm(L: DiscreteLegendrian, form: np.ndarray) -> float:
    q = np.einsum("...i,...ij,...j->...", form, L.metric_inv, form)
    return float(np.sqrt(np.sum(q * L.dmu)))


def angle_residual(L: DiscreteLegendrian, alpha: np.ndarray, H: np.ndarray | None = None) -> float:
    H = L.second.H if H is None else H
    return l2_form_norm(L, fourier.gradient(alpha, L.n) - H)


def exactness_tol(L: DiscreteLegendrian, H: np.ndarray) -> float:
    l1 = float(np.sum(np.sqrt(np.einsum("...i,...ij,...j->...", H, L.metric_inv, H)) * L.dmu))
    return EXACTNESS_REL_TOL * max(1.0, l1)


def check_exact(L: DiscreteLegendrian, H: np.ndarray | None = None) -> np.ndarray:
    H = L.second.H if H is None else H
    cyc = L.cycle_integrals(H)
    tol = exactness_tol(L, H)
    if np.max(np.abs(cyc)) > tol:
        raise NonExactMeanCurvature(
            f"mean curvature form is not exact: cycle integrals {np.array2string(cyc, precision=6)} "
            f"exceed {tol:.2e}", cycle_integrals=cyc)
    return cyc


def solve_angle(L: DiscreteLegendrian, H: np.ndarray | None = None, gauge: str = "mean_zero",
                constant: float = 0.0, op: LaplaceOperator | None = None) -> AngleField:
    """Least-squares solution of ``dα = H``.

    ``gauge='mean_zero'`` fixes ``∫α dμ = 0``; ``gauge='carry_constant'`` fixes
    ``∫α dμ = constant · Vol``.
    """
    H = L.second.H if H is None else np.asarray(H, dtype=float)
    if gauge not in ("mean_zero", "carry_constant"):
        raise ValueError(f"unknown gauge {gauge!r}")
    cyc = check_exact(L, H)
    op = op or LaplaceOperator(L)
    target = 0.0 if gauge == "mean_zero" else constant
    m = op.mass_row
    size = m.size
    K = np.zeros((size + 1, size + 1))
    K[:size, :size] = op.stiffness
    K[:size, size] = m
    K[size, :size] = m
    rhs = np.zeros(size + 1)
    rhs[:size] = op.form_load(H)
    rhs[size] = target * op.volume
    sol = scipy.linalg.solve(K, rhs, assume_a="sym")
    alpha = sol[:size].reshape(L.shape)
    return AngleField(alpha=alpha, gauge=gauge, mean=float(m @ sol[:size]) / op.volume,
                      cycle_integrals=cyc, residual=angle_residual(L, alpha, H), H_norm=l2_form_norm(L, H))


def mean_value(L: DiscreteLegendrian, f: np.ndarray) -> float:
    return float(np.sum(f * L.dmu) / L.volume)


def flat_torus_spectrum(metric: np.ndarray, count: int = 6, kmax: int = 6) -> np.ndarray:
    """Nonzero eigenvalues of a flat torus ``ℝ²/2πℤ²`` with constant metric ``g_ij``.

    Eigenfunctions are ``e^{i m·u}`` with eigenvalue ``g^{ij} m_i m_j``.
    """
    gi = np.linalg.inv(np.asarray(metric, dtype=float))
    ms = np.array([(a, b) for a in range(-kmax, kmax + 1) for b in range(-kmax, kmax + 1) if (a, b) != (0, 0)])
    vals = np.einsum("pi,ij,pj->p", ms, gi, ms)
    return np.sort(vals)[:count]

"""Restoring the Legendrian condition by Reeb-directional corrections.

Flowing each node for Reeb time ``c(u)`` preserves ``λ`` (the Reeb flow is a
strict contactomorphism), so after the move ``λ(F_i)`` becomes
``λ(F_i) + ∂_i c``.  The correction is therefore the least-squares solution
of ``dc = -β`` with ``β_i = λ(F_i)``, a flat Poisson problem in the grid
labels, solved by FFT with a mean-zero gauge.

On tori ``β`` also has a co-exact part, the isotropy defect ``dλ|_L ≠ 0``,
which no Reeb move can touch and which the flow amplifies at the grid scale.
It is removed by a normal displacement ``W = w^k v_k``: since ``λ(v_k) = 0`` and
``dλ = 2ω``, the move shifts ``β_i`` by ``2 w^k ω(v_k, F_i)`` to first order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HolonomyObstruction, ProjectionFailed
from .immersion import RECOVERABLE_RESIDUAL, DiscreteLegendrian

MAX_SWEEPS = 5
CLOSURE_REL_TOL = 1e-9
DEALIAS_BAND = 2.0 / 3.0


@dataclass(frozen=True)
class ProjectionReport:
    residual_before: float
    residual_after: float
    correction: float
    sweeps: int
    holonomy: tuple[float, ...]


def _potential(beta: np.ndarray, n: int) -> np.ndarray:
    """Mean-zero ``c`` minimizing ``‖dc + β‖²`` on the label torus."""
    shape = beta.shape[:n]
    axes = tuple(range(n))
    ks = _wavenumbers(shape)
    div = sum(1j * ks[a] * np.fft.fftn(beta[..., a], axes=axes) for a in range(n))
    k2 = sum(k ** 2 for k in ks)
    k2 = np.broadcast_to(k2, shape)
    ch = np.zeros(shape, dtype=complex)
    nz = k2 > 0
    ch[nz] = div[nz] / k2[nz]
    return np.fft.ifftn(ch, axes=axes).real


def _wavenumbers(shape):
    n = len(shape)
    ks = []
    for a, N in enumerate(shape):
        k = np.fft.fftfreq(N, d=1.0 / N)
        if N % 2 == 0:
            k[N // 2] = 0.0
        sl = [None] * n
        sl[a] = slice(None)
        ks.append(k[tuple(sl)])
    return ks


def coexact_part(beta: np.ndarray, n: int, band: float | None = None) -> np.ndarray:
    """Component of ``β`` orthogonal to exact and constant forms on the label torus.

    ``band`` keeps only wavenumbers with ``|k_a| ≤ band · N_a / 2`` in every direction.
    """
    shape = beta.shape[:n]
    axes = tuple(range(n))
    ks = _wavenumbers(shape)
    bh = [np.fft.fftn(beta[..., a], axes=axes) for a in range(n)]
    if band is not None:
        keep = np.ones(shape, dtype=bool)
        for a, N in enumerate(shape):
            sl = [None] * n
            sl[a] = slice(None)
            keep = keep & (np.abs(np.fft.fftfreq(N, d=1.0 / N)) <= band * N / 2)[tuple(sl)]
        bh = [b * keep for b in bh]
    k2 = np.broadcast_to(sum(k ** 2 for k in ks), shape)
    div = sum(ks[a] * bh[a] for a in range(n))
    safe = np.where(k2 > 0, k2, 1.0)
    out = np.empty(beta.shape)
    for a in range(n):
        ca = bh[a] - np.where(k2 > 0, ks[a] * div / safe, 0.0)
        ca = np.where(k2 > 0, ca, 0.0)
        out[..., a] = np.fft.ifftn(ca, axes=axes).real
    return out


def _isotropy_correction(L: DiscreteLegendrian) -> np.ndarray:
    """Normal displacement cancelling the co-exact part of ``λ|_L`` to first order."""
    co = coexact_part(L.contact_residual, L.n, band=DEALIAS_BAND)
    v = L.normals
    M = 2.0 * np.einsum("...ab,...ka,...ib->...ik", L.amb.omega, v, L.tangents)  # 2ω(v_k, F_i)
    w = np.linalg.solve(np.swapaxes(M, -1, -2), -co[..., None])[..., 0]
    return np.einsum("...k,...ka->...a", w, v)


def holonomy(L: DiscreteLegendrian) -> np.ndarray:
    """Integrals of ``λ`` over the fundamental cycles (averaged over parallel copies)."""
    return L.cycle_integrals(L.contact_residual)


def project_legendrian(L: DiscreteLegendrian, tol: float | None = None,
                       recoverable: float = RECOVERABLE_RESIDUAL) -> tuple[DiscreteLegendrian, ProjectionReport]:
    tol = L.legendrian_tol if tol is None else tol
    before = L.legendrian_residual
    if not np.isfinite(before) or before > recoverable:
        raise ProjectionFailed(f"Legendrian residual {before:.3e} beyond recoverable bound {recoverable:.1e}")
    closure_tol = CLOSURE_REL_TOL * L.volume
    hol = holonomy(L)
    if np.max(np.abs(hol)) > closure_tol:
        raise HolonomyObstruction(
            f"contact holonomy {np.max(np.abs(hol)):.3e} exceeds closure tolerance {closure_tol:.3e}")
    model = L.model
    total = np.zeros(L.shape)
    cur = L
    sweeps = 0
    # a sweep is exact up to round-off and aliasing; a second one mops up the rest
    while sweeps < MAX_SWEEPS:
        if L.n > 1:
            cur = cur.with_positions(cur.positions + _isotropy_correction(cur))
        x = cur.positions
        if model.embedded:
            x = x / np.linalg.norm(x, axis=-1, keepdims=True)
            cur = cur.with_positions(x)
        if cur.legendrian_residual < 0.1 * tol and sweeps > 0:
            break
        c = _potential(cur.contact_residual, L.n)
        if sweeps > 0 and np.max(np.abs(c)) < 1e-15:
            break
        total += c
        cur = cur.with_positions(model.reeb_flow(cur.positions, c))
        sweeps += 1
    after = cur.legendrian_residual
    if after > tol:
        raise ProjectionFailed(f"Legendrian residual {after:.3e} above tolerance {tol:.1e} "
                               f"after {sweeps} sweeps")
    report = ProjectionReport(before, after, float(np.max(np.abs(total))), sweeps, tuple(float(v) for v in hol))
    return cur, report

"""Periodic Fourier tools on uniform grids over [0, 2*pi)^n.

Grid axes always come first in array shapes; trailing axes carry tensor
components.  Derivatives are taken in the grid label ``u``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


def grid_coords(shape: tuple[int, ...]) -> tuple[np.ndarray, ...]:
    """Label coordinates ``u_i`` broadcast over the full grid (``indexing='ij'``)."""
    axes = [TWO_PI * np.arange(N) / N for N in shape]
    return tuple(np.meshgrid(*axes, indexing="ij"))


@lru_cache(maxsize=None)
def _ik(N: int) -> np.ndarray:
    k = np.fft.rfftfreq(N, d=1.0 / N)
    ik = 1j * k
    if N % 2 == 0:
        ik[-1] = 0.0  # odd derivatives kill the Nyquist mode
    return ik


def diff(f: np.ndarray, axis: int) -> np.ndarray:
    """First spectral derivative of a periodic array along a grid axis."""
    f = np.asarray(f, dtype=float)
    N = f.shape[axis]
    fh = np.fft.rfft(f, axis=axis)
    shape = [1] * f.ndim
    shape[axis] = fh.shape[axis]
    fh *= _ik(N).reshape(shape)
    return np.fft.irfft(fh, n=N, axis=axis)


def gradient(f: np.ndarray, ndim: int) -> np.ndarray:
    """Stack of first derivatives over the first ``ndim`` axes, placed at axis ``ndim``."""
    return np.stack([diff(f, a) for a in range(ndim)], axis=ndim)


def high_mode_energy_fraction(f: np.ndarray, ndim: int) -> float:
    """Fraction of Fourier energy carried by the top third of wavenumbers."""
    fh = np.fft.fftn(np.asarray(f, dtype=float), axes=tuple(range(ndim)))
    total = float(np.sum(np.abs(fh) ** 2))
    if total == 0.0:
        return 0.0
    mask = np.zeros(fh.shape[:ndim], dtype=bool)
    for a in range(ndim):
        N = fh.shape[a]
        k = np.abs(np.fft.fftfreq(N, d=1.0 / N))
        sl = [None] * ndim
        sl[a] = slice(None)
        mask = mask | (k[tuple(sl)] > N / 3.0)
    high = np.abs(fh[mask]) ** 2
    return float(np.sum(high)) / total


@lru_cache(maxsize=None)
def diff_matrix(N: int) -> np.ndarray:
    """Dense N x N matrix of :func:`diff` on one periodic axis."""
    D = diff(np.eye(N), axis=0)
    D.flags.writeable = False
    return D


@lru_cache(maxsize=None)
def fine_matrices(N: int, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Interpolation and derivative of the trigonometric interpolant at M fine nodes.

    The Nyquist mode (even ``N``) is interpreted as ``cos(N u / 2)``, so that the
    derivative of the interpolant vanishes only for constants.
    Returns ``(I, B)``, both ``M x N``: ``I @ f`` and ``B @ f`` are the interpolant and
    its derivative sampled at ``2*pi*m/M``.
    """
    x = TWO_PI * np.arange(N) / N
    um = TWO_PI * np.arange(M) / M
    kmax = (N - 1) // 2
    ks = np.arange(-kmax, kmax + 1)
    # coefficient map: c_k = (1/N) sum_j f_j e^{-i k x_j}
    C = np.exp(-1j * np.outer(ks, x)) / N
    E = np.exp(1j * np.outer(um, ks))
    I = (E @ C).real
    B = ((E * (1j * ks)) @ C).real
    if N % 2 == 0:
        c_nyq = np.cos(N / 2 * x) / N
        I += np.outer(np.cos(N / 2 * um), c_nyq)
        B += np.outer(-(N / 2) * np.sin(N / 2 * um), c_nyq)
    I.flags.writeable = False
    B.flags.writeable = False
    return I, B


def apply_along(mat: np.ndarray, f: np.ndarray, axis: int) -> np.ndarray:
    """Apply a matrix along one axis of ``f`` (axis position preserved)."""
    out = np.tensordot(mat, f, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def to_fine(f: np.ndarray, ndim: int, M: tuple[int, ...]) -> np.ndarray:
    """Spectrally interpolate a nodal field to the fine grid of shape ``M``."""
    out = np.asarray(f, dtype=float)
    for a in range(ndim):
        I, _ = fine_matrices(out.shape[a], M[a])
        out = apply_along(I, out, a)
    return out


def resample(f: np.ndarray, ndim: int, shape: tuple[int, ...]) -> np.ndarray:
    """Fourier resampling of a periodic field to a different grid resolution."""
    out = np.asarray(f, dtype=float)
    for a in range(ndim):
        N, M = out.shape[a], shape[a]
        if N == M:
            continue
        if M > N:
            I, _ = fine_matrices(N, M)
            out = apply_along(I, out, a)
        else:
            fh = np.fft.rfft(out, axis=a)
            keep = M // 2 + 1
            sl = [slice(None)] * out.ndim
            sl[a] = slice(0, keep)
            fh = fh[tuple(sl)] * (M / N)
            if M % 2 == 0:
                sl[a] = keep - 1
                fh[tuple(sl)] = 2.0 * fh[tuple(sl)].real
            out = np.fft.irfft(fh, n=M, axis=a)
    return out



def exp_filter(f: np.ndarray, ndim: int, order: int = 36, strength: float = 36.0) -> np.ndarray:
    """Exponential low-pass ``exp(-strength (|k|/k_max)^order)`` on the leading ``ndim`` axes.

    Modes below two thirds of ``k_max`` are damped by less than ``1e-5``; the
    Nyquist mode is removed to round-off.
    """
    f = np.asarray(f, dtype=float)
    axes = tuple(range(ndim))
    out = np.fft.fftn(f, axes=axes)
    for a in axes:
        N = f.shape[a]
        k = np.abs(np.fft.fftfreq(N, d=1.0 / N)) / (N // 2)
        shape = [1] * f.ndim
        shape[a] = N
        out = out * np.exp(-strength * k ** order).reshape(shape)
    return np.fft.ifftn(out, axes=axes).real

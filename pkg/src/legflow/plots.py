"""Optional SVG figures for a flow run (decorative; the CSV is the contract)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed hash salt keeps SVG output reproducible
plt.rcParams["svg.hashsalt"] = "legflow"


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def trajectory_plots(result, outdir) -> dict:
    out = Path(outdir)
    t = result.column("t")
    paths = {}

    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    ax[0].semilogy(t, np.maximum(result.column("l2_H_sq"), 1e-300), label=r"$\int|H|^2$")
    ax[0].semilogy(t, np.maximum(result.column("max_H"), 1e-300), label=r"$\max|H|$")
    ax[0].set_xlabel("t")
    ax[0].legend()
    ax[1].plot(t, result.column("vol"))
    ax[1].set_xlabel("t")
    ax[1].set_ylabel("volume")
    paths["plot_decay"] = _save(fig, out / "decay.svg")

    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(t, result.column("lambda1"), label=r"$\lambda_1$")
    ax.axhline(result.initial.model.eta_einstein_constant, color="k", lw=0.8, ls="--", label="K+2")
    ax.set_xlabel("t")
    ax.legend()
    paths["plot_spectrum"] = _save(fig, out / "lambda1.svg")

    L = result.final.L
    if L.n == 1:
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for label, imm in (("initial", result.initial), ("final", L)):
            P = imm.positions
            ax.plot(np.append(P[:, 0], P[0, 0]), np.append(P[:, -1], P[0, -1]), label=label)
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend()
        paths["plot_curve"] = _save(fig, out / "curve.svg")
    return paths

#!/usr/bin/env python3
"""
Amplitude and resolution sweep
==============================

Flow the perturbed hyperbolic circle over a grid of amplitudes and resolutions
and tabulate the fitted decay rate of ∫|H|².  In the linear regime the rate is
independent of both and equals -2(λ₁ - (K+2)) = -4.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from legflow.analysis import decay_fit
from legflow.flow import ExperimentConfig, run

from _common import dump, parse_into


@dataclass
class AmplitudeSweepConfig:
    s_values: list = field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1])
    N_values: list = field(default_factory=lambda: [64, 128])
    t_max: float = 3.0
    fit_start: float = 1.0
    fit_end: float = 3.0
    workers: int = 2
    out: str = "runs/amplitude_sweep"


def _cell(args):
    s, N, cfg = args
    res = run(ExperimentConfig(perturb={"f": "cos_phi", "s": s}, resolution=N, t_max=cfg.t_max,
                               stop_on_convergence=False))
    fit = decay_fit(res.column("t"), res.column("l2_H_sq"), (cfg.fit_start, cfg.fit_end))
    return {"s": s, "N": N, "rate": fit.rate, "final_max_H": res.diagnostics[-1].max_H}


def main(cfg: AmplitudeSweepConfig):
    jobs = [(s, N, cfg) for N in cfg.N_values for s in cfg.s_values]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        rows = list(pool.map(_cell, jobs))
    print(f"{'N':>5s} {'s':>6s} {'rate':>10s} {'max|H|':>10s}")
    for r in rows:
        print(f"{r['N']:5d} {r['s']:6.3f} {r['rate']:10.5f} {r['final_max_H']:10.3e}")
    dump(cfg, {"rows": rows}, cfg.out, "amplitude_sweep.json")
    return rows


if __name__ == "__main__":
    main(parse_into(AmplitudeSweepConfig, __doc__))

#!/usr/bin/env python3
"""
Evolution-equation orders
=========================

Run the perturbed hyperbolic circle twice, at dt and dt/2 with the same
snapshot cadence in steps, and measure the time-order of every evolution
equation residual.  Equations that hold should show order ≈ 4 (RK4); the
informational rows record forms that do not hold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from legflow.flow import ExperimentConfig, run
from legflow.verify import evolution_residuals, residual_table_markdown

from _common import dump, parse_into


@dataclass
class OrdersConfig:
    s: float = 0.05
    N: int = 128
    t_max: float = 0.6
    spacing: float = 0.05
    window_start: float = 0.1
    window_end: float = 0.45
    out: str = "runs/orders"


def main(cfg: OrdersConfig):
    base = ExperimentConfig(perturb={"f": "cos_phi", "s": cfg.s}, resolution=cfg.N, t_max=cfg.t_max,
                            stop_on_convergence=False)
    coarse = run(base)
    every = max(1, int(round(cfg.spacing / coarse.dt)))
    coarse = run(replace(base, dt=coarse.dt, snapshot_every=every))
    fine = run(replace(base, dt=coarse.dt / 2, snapshot_every=every))
    reports = evolution_residuals(coarse.snapshot_immersions(), refined_snapshots=fine.snapshot_immersions(),
                                  window=(cfg.window_start, cfg.window_end))
    print(residual_table_markdown(reports))
    dump(cfg, {"dt": coarse.dt, "reports": [r.__dict__ for r in reports]}, cfg.out, "orders.json")
    return reports


if __name__ == "__main__":
    main(parse_into(OrdersConfig, __doc__))

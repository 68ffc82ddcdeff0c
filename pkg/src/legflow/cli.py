"""Command-line entry point.

Verbs::

    legflow verify    [--config FILE] [--model M ...]           identity suites
    legflow flow      --config FILE [--plots]                    one trajectory
    legflow stability [--config FILE | --model M --family F]     stability report
    legflow sweep     --config FILE                              grid over (s, N)

Common flags: ``--set key=value`` (repeatable, dotted keys allowed) and
``--out DIR``.  Exit codes: 0 success, 1 configuration error, 2 numerical
failure, 3 invalid initial data, 4 failed pass criterion or audit.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import bound_audit, decay_fit, stability_report, structural_invariants
from .ambient import eta_einstein_constant, fit_eta_einstein, get_model, pulled_back_tensors, sample_points
from .config import (DEFAULT_CASES, SCHEMA_VERSION, FlowRunConfig, StabilityConfig, SweepConfig,
                     VerifyConfig, parse_dict, read_config, resolved)
from .errors import AuditFailure, LegflowError
from .flow import run
from .immersion import build_immersion, potential
from .verify import all_passed, ambient_reports, refinement_ratio, submanifold_identity_residuals

log = logging.getLogger("legflow")

EXIT_CODES = {0: "success", 1: "configuration error", 2: "numerical failure", 3: "invalid initial data",
              4: "pass criterion or audit failed"}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_manifest(out: Path, verb: str, config: dict, extra: dict | None = None) -> Path:
    manifest = {"verb": verb, "version": __version__, "schema_version": SCHEMA_VERSION, "config": config,
                "numpy": np.__version__}
    manifest.update(extra or {})
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def run_verify(cfg: VerifyConfig, out: Path) -> int:
    ok = True
    summary = {"ambient": {}, "eta_einstein": {}, "submanifold": []}
    rows = []
    for m in cfg.models:
        model = get_model(m, cfg.curvature_mode)
        reps = ambient_reports(model, cfg.points, cfg.seed)
        amb_ok = all_passed(reps)
        ok &= amb_ok
        pts = sample_points(model, cfg.points, cfg.seed)
        fit = fit_eta_einstein(model, pulled_back_tensors(model, pts))
        tol = 1e-6 if cfg.curvature_mode == "closed_form" else 1e-3
        eta_ok = abs(fit["K_plus_2"] - eta_einstein_constant(model)) < tol
        ok &= eta_ok
        summary["ambient"][m] = {"passed": amb_ok, "max_residual": max(r.max_residual for r in reps)}
        summary["eta_einstein"][m] = {"fitted": fit["K_plus_2"], "expected": eta_einstein_constant(model),
                                      "passed": eta_ok}
        rows += [("ambient", m, r) for r in reps]
    for c in cfg.cases():
        coarse = submanifold_identity_residuals(c.build())
        entry = {"model": c.model, "family": c.family, "N": c.N}
        final = coarse
        if cfg.refine:
            fine = submanifold_identity_residuals(c.build(2 * c.N))
            ratios = refinement_ratio(coarse, fine)
            gated = {k: v for k, v in ratios.items() if k in {r.identity for r in fine if not r.informational}}
            red_ok = all(v >= cfg.min_reduction for v in gated.values())
            entry["reduction"] = ratios
            entry["reduction_ok"] = red_ok
            ok &= red_ok
            final = fine
            rows += [(f"{c.family}@{c.N} (coarse)", c.model, r) for r in coarse]
        sub_ok = all_passed(final)
        ok &= sub_ok
        entry["passed"] = sub_ok
        summary["submanifold"].append(entry)
        rows += [(f"{c.family}@{final[0].resolution[0]}", c.model, r) for r in final]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "residuals.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["suite", "model", "identity", "max_residual", "scale", "passed", "informational"])
        for suite, m, r in rows:
            w.writerow([suite, m, r.identity, "%.6e" % r.max_residual, "%.6e" % r.scale, int(r.passed),
                        int(r.informational)])
    lines = []
    for suite, m, r in rows:
        status = "info" if r.informational else ("pass" if r.passed else "FAIL")
        if suite.endswith("(coarse)") and not r.informational:
            status = "ref"
        lines.append(f"{suite:28s} {m:12s} {r.identity:28s} {r.max_residual:.3e} {status}")
    (out / "residuals.txt").write_text("\n".join(lines) + "\n")
    summary["passed"] = ok
    write_json(out / "verify_summary.json", summary)
    print("\n".join(lines))
    print(f"verify: {'all pass' if ok else 'FAILURES'}")
    if not ok:
        raise AuditFailure("identity suite has failing entries")
    return 0


def run_flow(cfg: FlowRunConfig, out: Path, plots: bool = False) -> int:
    exp = cfg.experiment
    result = run(exp)
    paths = result.write(out, plots=plots)
    model = result.initial.model
    summary = result.summary()
    failures = []
    if cfg.audit and len(result.diagnostics) >= 10:
        inv = structural_invariants(result.diagnostics, result.dt, leg_tol=1e-7)
        audits = bound_audit(result.diagnostics, model.n, model.eta_einstein_constant, result.dt,
                             r=exp.thresholds.get("r0", 1.0))
        summary["invariants"] = inv.__dict__ | {"passed": inv.passed}
        summary["audits"] = [a.__dict__ for a in audits]
        if not inv.passed:
            failures.append("structural invariants")
        failures += [a.name for a in audits if not a.passed]
    t = result.column("t")
    lo, hi = cfg.fit_window
    if t[-1] >= hi:
        try:
            fit = decay_fit(t, result.column("l2_H_sq"), (lo, hi))
            summary["decay_rate"] = fit.rate
        except LegflowError as exc:
            summary["decay_rate"] = None
            summary["decay_note"] = str(exc)
    write_json(out / "summary.json", summary)
    write_manifest(out, "flow", cfg.to_dict(), {"artifacts": paths})
    print(f"flow: verdict {result.verdict} at t={summary['t_final']:.4f} "
          f"(max|H| {summary['final_max_H']:.3e}, {summary['steps']} steps)")
    if failures:
        raise AuditFailure("failed: " + ", ".join(failures))
    return 0


def run_stability(cfg: StabilityConfig, out: Path) -> int:
    model = get_model(cfg.model, "closed_form", cfg.z_period)
    L = build_immersion(model, cfg.family, cfg.N, cfg.family_params)
    f = potential(cfg.potential, L) if cfg.potential else None
    rep = stability_report(L, f, cfg.s, cfg.k)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "stability.json", rep.as_dict())
    write_manifest(out, "stability", resolved(cfg))
    print(f"stability: lambda1 {rep.lambda1:.6f}  K+2 {rep.k_plus_2:g}  verdict {rep.verdict}")
    if rep.second_variation_formula is not None:
        print(f"  second variation: formula {rep.second_variation_formula:.6f} "
              f"direct {rep.second_variation_direct:.6f} gap {rep.relative_gap:.2e}")
    return 0


def _sweep_cell(args):
    exp, window = args
    row = {"N": exp.resolution, "s": exp.perturb["s"], "verdict": "", "rate": "", "final_max_H": "",
           "t_final": "", "error": ""}
    try:
        res = run(exp)
        row.update(verdict=res.verdict, final_max_H=res.diagnostics[-1].max_H, t_final=res.diagnostics[-1].t)
        t = res.column("t")
        if t[-1] >= window[1]:
            row["rate"] = decay_fit(t, res.column("l2_H_sq"), window).rate
    except LegflowError as exc:
        row.update(verdict="error", error=f"{type(exc).__name__}: {exc}")
    return row


def run_sweep(cfg: SweepConfig, out: Path) -> int:
    cells = [(c, cfg.fit_window) for c in cfg.cells()]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    out.mkdir(parents=True, exist_ok=True)
    cols = ("N", "s", "verdict", "rate", "final_max_H", "t_final", "error")
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    write_manifest(out, "sweep", resolved(cfg))
    for r in rows:
        print(f"N={r['N']!s:>5} s={r['s']:<8g} {r['verdict']:10s} rate={r['rate']}")
    if any(r["verdict"] == "error" for r in rows):
        raise AuditFailure("some sweep cells failed")
    return 0


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="legflow", description="Legendrian mean curvature flow experiments.",
                                epilog="exit codes: " + ", ".join(f"{k} {v}" for k, v in EXIT_CODES.items()))
    p.add_argument("--version", action="version", version=f"legflow {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, need_config=False):
        sp.add_argument("--config", required=need_config, help="JSON configuration file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (repeatable; dotted keys allowed)")
        sp.add_argument("--out", default=None, help="output directory (default: runs/<verb>)")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("verify", help="ambient and submanifold identity suites")
    common(sp)
    sp.add_argument("--model", action="append", choices=sorted(DEFAULT_CASES), help="restrict to model(s)")
    sp = sub.add_parser("flow", help="run one flow trajectory")
    common(sp, need_config=True)
    sp.add_argument("--plots", action="store_true", help="also write SVG figures")
    sp = sub.add_parser("stability", help="Legendrian stability report")
    common(sp)
    sp.add_argument("--model")
    sp.add_argument("--family")
    sp = sub.add_parser("sweep", help="grid of flows over amplitude and resolution")
    common(sp, need_config=True)
    return p


def _load(args):
    raw = read_config(args.config) if args.config else {}
    if args.verb == "verify" and args.model:
        raw["models"] = args.model
    if args.verb == "stability":
        for key in ("model", "family"):
            if getattr(args, key):
                raw[key] = getattr(args, key)
    return parse_dict(raw, args.verb, args.overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out or f"runs/{args.verb}")
    try:
        cfg = _load(args)
        if args.verb == "verify":
            code = run_verify(cfg, out)
            write_manifest(out, "verify", resolved(cfg))
        elif args.verb == "flow":
            code = run_flow(cfg, out, args.plots)
        elif args.verb == "stability":
            code = run_stability(cfg, out)
        else:
            code = run_sweep(cfg, out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LegflowError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

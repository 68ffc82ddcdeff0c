"""Small helpers shared by the experiment scripts."""

from __future__ import annotations

import argparse
import json
from dataclasses import MISSING, asdict, fields
from pathlib import Path


def parse_into(cls, description: str):
    """Build ``cls`` from command-line flags named after its fields."""
    p = argparse.ArgumentParser(description=description)
    for f in fields(cls):
        default = f.default_factory() if f.default is MISSING else f.default
        kind = type(default)
        if isinstance(default, bool):
            p.add_argument(f"--{f.name}", type=lambda s: s.lower() in ("1", "true", "yes"), default=default)
        elif isinstance(default, (list, tuple)):
            item = type(default[0]) if default else float
            p.add_argument(f"--{f.name}", type=item, nargs="+", default=list(default))
        else:
            p.add_argument(f"--{f.name}", type=kind, default=default)
    return cls(**vars(p.parse_args()))


def dump(cfg, payload: dict, outdir: str | Path, name: str) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(json.dumps({"config": asdict(cfg), **payload}, indent=2, sort_keys=True, default=float))
    return path

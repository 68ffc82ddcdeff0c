"""Experiment configuration: JSON files validated against a versioned schema.

Every verb has its own section of ``config_schema.json``.  Parsing fills
defaults, applies ``key=value`` overrides (dotted keys reach nested mappings),
rejects unknown keys and reports failures as :class:`SchemaError` carrying the
offending key path.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import SchemaError
from .flow import ExperimentConfig
from .ambient import get_model
from .immersion import FAMILIES, build_immersion

VERBS = ("verify", "flow", "stability", "sweep")
POTENTIALS = ("cos_u", "cos_phi", "cos_theta", "sin_u", "cos_2u", "sin_2u", "cos_3u", "cos_u1", "cos_u2",
              "cos_u1_plus_u2", "sin_u1_minus_u2", "cos_2u1")


def load_schema() -> dict:
    with resources.files("legflow").joinpath("config_schema.json").open() as fh:
        return json.load(fh)


SCHEMA_VERSION = load_schema()["schema_version"]


# ---------------------------------------------------------------------------
# per-verb configs
# ---------------------------------------------------------------------------

@dataclass
class FamilyCase:
    model: str
    family: str
    N: int
    family_params: dict = field(default_factory=dict)
    perturb: dict | None = None
    z_period: float | None = None

    def build(self, N: int | None = None):
        model = get_model(self.model, "closed_form", self.z_period)
        return build_immersion(model, self.family, N or self.N, self.family_params, self.perturb)


# identity-suite cases per model: (family, coarse N, perturbation)
DEFAULT_CASES = {
    "sphere3": FamilyCase("sphere3", "great_circle", 64, perturb={"f": "cos_u", "s": 0.05}),
    "sphere5": FamilyCase("sphere5", "clifford_torus", 16, perturb={"f": "cos_u1", "s": 0.05}),
    "hypcyl3": FamilyCase("hypcyl3", "geodesic_lift", 64, perturb={"f": "cos_phi", "s": 0.05}),
    "heisenberg3": FamilyCase("heisenberg3", "lemniscate", 64),
    "heisenberg5": FamilyCase("heisenberg5", "lemniscate_torus", 48),
}


@dataclass
class VerifyConfig:
    models: list = field(default_factory=lambda: list(DEFAULT_CASES))
    points: int = 100
    seed: int = 0
    curvature_mode: str = "closed_form"
    families: list | None = None
    refine: bool = True
    min_reduction: float = 10.0

    def cases(self) -> list[FamilyCase]:
        if self.families is not None:
            return [FamilyCase(**c) for c in self.families]
        return [DEFAULT_CASES[m] for m in self.models]


@dataclass
class StabilityConfig:
    model: str
    family: str
    family_params: dict = field(default_factory=dict)
    N: int | list = 128
    z_period: float | None = None
    potential: str | None = None
    s: float = 1e-3
    k: int = 6


@dataclass
class FlowRunConfig:
    """Flow settings plus run-level switches that are not part of the integrator."""

    experiment: ExperimentConfig
    audit: bool = True
    fit_window: tuple = (1.0, 3.0)

    def to_dict(self) -> dict:
        d = self.experiment.to_dict()
        d["audit"] = self.audit
        d["fit_window"] = list(self.fit_window)
        return d


@dataclass
class SweepConfig:
    base: dict
    s_values: list
    N_values: list
    workers: int = 1
    fit_window: tuple = (1.0, 3.0)

    def cells(self) -> list[ExperimentConfig]:
        out = []
        for N in self.N_values:
            for s in self.s_values:
                d = copy.deepcopy(self.base)
                d["resolution"] = N
                pert = dict(d.get("perturb") or {"f": "cos_u"})
                pert["s"] = s
                d["perturb"] = pert
                out.append(ExperimentConfig(**d))
        return out


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str] | None) -> dict:
    out = copy.deepcopy(raw)
    for item in overrides or []:
        if "=" not in item:
            raise SchemaError(f"override {item!r} is not of the form key=value", item)
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise SchemaError("cannot set a sub-key of a non-mapping value", key)
            node = nxt
        node[parts[-1]] = _coerce(value)
    return out


def _key_path(err: jsonschema.ValidationError) -> str:
    path = list(err.absolute_path)
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        if extra:
            path.append(extra[0])
    return ".".join(str(p) for p in path) or "<root>"


def validate(raw: dict, verb: str) -> None:
    if verb not in VERBS:
        raise SchemaError(f"unknown verb {verb!r}", "verb")
    schema = load_schema()
    section = {"$ref": f"#/$defs/{verb}", "$defs": schema["$defs"]}
    validator = jsonschema.Draft202012Validator(section)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(list(e.absolute_path)), str(e.message)))
    if errors:
        err = errors[0]
        if err.validator == "additionalProperties":
            raise SchemaError("unknown key", _key_path(err))
        raise SchemaError(err.message, _key_path(err))


def _check_family(d: dict, prefix: str = "") -> None:
    fam = d.get("family")
    if fam not in FAMILIES:
        raise SchemaError(f"unknown family {fam!r}; expected one of {sorted(FAMILIES)}", prefix + "family")
    if d["model"] not in FAMILIES[fam][0]:
        raise SchemaError(f"family {fam!r} lives in {FAMILIES[fam][0]}", prefix + "family")
    pert = d.get("perturb")
    if pert and pert["f"] not in POTENTIALS:
        raise SchemaError(f"unknown potential {pert['f']!r}", prefix + "perturb.f")


def _flow_from(d: dict, prefix: str = "") -> tuple[ExperimentConfig, dict]:
    d = dict(d)
    if "N" in d:
        if "resolution" in d:
            raise SchemaError("give either N or resolution, not both", prefix + "N")
        d["resolution"] = d.pop("N")
    _check_family(d, prefix)
    extras = {k: d.pop(k) for k in ("audit", "fit_window") if k in d}
    defaults = ExperimentConfig(model=d["model"], family=d["family"]).thresholds
    if "thresholds" in d:
        merged = dict(defaults)
        merged.update(d["thresholds"])
        d["thresholds"] = merged
    try:
        return ExperimentConfig(**d), extras
    except ValueError as exc:
        raise SchemaError(str(exc), prefix.rstrip(".") or "<root>") from exc


def parse_dict(raw: dict, verb: str, overrides: list[str] | None = None):
    """Validate and default a configuration mapping for ``verb``."""
    raw = apply_overrides(raw or {}, overrides)
    validate(raw, verb)
    if verb == "flow":
        exp, extras = _flow_from(raw)
        return FlowRunConfig(exp, audit=extras.get("audit", True),
                             fit_window=tuple(extras.get("fit_window", (1.0, 3.0))))
    if verb == "verify":
        cfg = VerifyConfig(**raw)
        for i, c in enumerate(cfg.families or []):
            _check_family(c, f"families.{i}.")
        return cfg
    if verb == "stability":
        _check_family(raw)
        if raw.get("potential") is not None and raw["potential"] not in POTENTIALS:
            raise SchemaError(f"unknown potential {raw['potential']!r}", "potential")
        return StabilityConfig(**raw)
    # sweep
    base, _ = _flow_from(raw["base"], "base.")
    d = dict(raw)
    d["base"] = {f.name: getattr(base, f.name) for f in fields(ExperimentConfig)}
    if "fit_window" in d:
        d["fit_window"] = tuple(d["fit_window"])
    return SweepConfig(**d)


def read_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file {p} not found")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(raw, dict):
        raise SchemaError("top level must be an object")
    return raw


def parse_config(path, overrides: list[str] | None = None, verb: str = "flow"):
    """Read a JSON config file and return the defaulted config for ``verb``."""
    return parse_dict(read_config(path), verb, overrides)


def resolved(cfg) -> dict:
    """JSON-ready view of a parsed config."""
    if hasattr(cfg, "to_dict"):
        return cfg.to_dict()
    return asdict(cfg)

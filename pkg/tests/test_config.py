import json

import pytest

from legflow.config import (SCHEMA_VERSION, apply_overrides, load_schema, parse_config, parse_dict, read_config,
                            resolved)
from legflow.errors import SchemaError

MINIMAL = {"model": "hypcyl3", "family": "geodesic_lift", "perturb": {"f": "cos_phi", "s": 0.05}, "N": 128,
           "t_max": 6}


def test_minimal_flow_config_is_defaulted():
    cfg = parse_dict(MINIMAL, "flow")
    exp = cfg.experiment
    assert exp.resolution == 128 and exp.dt_cfl == 0.2 and exp.convergence_threshold == 1e-4
    assert exp.thresholds == {"V0": 10.0, "Lambda0": 10.0, "eps0": 1.0, "delta0": 0.5, "T0": 6.0, "kappa0": 1.0,
                              "r0": 1.0}
    assert cfg.audit and cfg.fit_window == (1.0, 3.0)


def test_override_reaches_the_config():
    assert parse_dict(MINIMAL, "flow", ["dt_cfl=0.1"]).experiment.dt_cfl == 0.1
    cfg = parse_dict(MINIMAL, "flow", ["perturb.s=0.02", "thresholds.kappa0=2"])
    assert cfg.experiment.perturb == {"f": "cos_phi", "s": 0.02}
    assert cfg.experiment.thresholds["kappa0"] == 2 and cfg.experiment.thresholds["V0"] == 10.0


def test_apply_overrides_keeps_strings_and_builds_nested_keys():
    out = apply_overrides({}, ["a.b.c=hello", "x=[1, 2]"])
    assert out == {"a": {"b": {"c": "hello"}}, "x": [1, 2]}
    with pytest.raises(SchemaError):
        apply_overrides({}, ["novalue"])


@pytest.mark.parametrize("raw,key_path", [
    ({**MINIMAL, "bogus": 1}, "bogus"),
    ({**MINIMAL, "perturb": {"f": "cos_phi", "s": "big"}}, "perturb.s"),
    ({**MINIMAL, "thresholds": {"kappa0": -1}}, "thresholds.kappa0"),
    ({**MINIMAL, "dt_cfl": 0.5}, "dt_cfl"),
    ({**MINIMAL, "family": "spiral"}, "family"),
    ({**MINIMAL, "perturb": {"f": "tan_u"}}, "perturb.f"),
    ({**MINIMAL, "resolution": 64}, "N"),
    ({"family": "geodesic_lift"}, "<root>"),
])
def test_invalid_configs_report_the_key_path(raw, key_path):
    with pytest.raises(SchemaError) as info:
        parse_dict(raw, "flow")
    assert info.value.key_path == key_path
    assert info.value.exit_code == 1


def test_family_must_live_in_the_model():
    with pytest.raises(SchemaError) as info:
        parse_dict({"model": "sphere3", "family": "geodesic_lift"}, "flow")
    assert info.value.key_path == "family"


def test_verify_config_cases():
    cfg = parse_dict({"models": ["sphere3"]}, "verify")
    assert [c.family for c in cfg.cases()] == ["great_circle"]
    custom = parse_dict({"families": [{"model": "sphere3", "family": "great_circle", "N": 32}]}, "verify")
    assert custom.cases()[0].N == 32
    with pytest.raises(SchemaError) as info:
        parse_dict({"families": [{"model": "sphere3", "family": "lemniscate", "N": 32}]}, "verify")
    assert info.value.key_path == "families.0.family"


def test_sweep_cells():
    cfg = parse_dict({"base": {"model": "hypcyl3", "family": "geodesic_lift", "perturb": {"f": "cos_phi"}},
                      "s_values": [0.01, 0.02], "N_values": [32, 64]}, "sweep")
    cells = cfg.cells()
    assert [(c.resolution, c.perturb["s"]) for c in cells] == [(32, 0.01), (32, 0.02), (64, 0.01), (64, 0.02)]


def test_stability_config():
    cfg = parse_dict({"model": "hypcyl3", "family": "geodesic_lift", "potential": "cos_phi"}, "stability")
    assert cfg.N == 128 and cfg.s == 1e-3
    with pytest.raises(SchemaError):
        parse_dict({"model": "hypcyl3", "family": "geodesic_lift", "potential": "nope"}, "stability")


def test_unknown_verb():
    with pytest.raises(SchemaError):
        parse_dict({}, "plot")


def test_files(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(MINIMAL))
    assert parse_config(good).experiment.model == "hypcyl3"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError):
        read_config(bad)
    with pytest.raises(FileNotFoundError):
        read_config(tmp_path / "missing.json")
    listy = tmp_path / "list.json"
    listy.write_text("[]")
    with pytest.raises(SchemaError):
        read_config(listy)


def test_schema_is_versioned_and_resolved_configs_round_trip():
    assert load_schema()["schema_version"] == SCHEMA_VERSION == 1
    d = resolved(parse_dict(MINIMAL, "flow"))
    assert json.loads(json.dumps(d))["resolution"] == 128

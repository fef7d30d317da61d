import json

import pytest

from contingency.config import ExperimentConfig, load_config, parse_config
from contingency.errors import ConfigError

MINIMAL_URN = {"mode": "urn", "master_seed": 42, "n_runs": 1,
               "urn": {"initial": [1, 1], "gamma": 1, "steps": 1000}}


def errors_of(doc):
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(doc) if not isinstance(doc, str) else doc)
    return info.value.errors


def test_minimal_urn_config():
    cfg = parse_config(json.dumps(MINIMAL_URN))
    assert cfg.mode == "urn" and cfg.urn.steps == 1000 and cfg.master_seed == 42
    assert cfg.urn.rule.gamma == 1.0 and cfg.urn.state.counts == (1, 1)


def test_negative_gamma_names_field():
    errs = errors_of({"mode": "urn", "urn": {"gamma": -0.5}})
    assert len(errs) == 1 and "gamma" in errs[0] and "-0.5" in errs[0]


def test_all_errors_reported():
    errs = errors_of({"mode": "urn", "urn": {"gamma": -0.5, "steps": 0}, "n_runs": 0,
                      "colour": "red"})
    joined = "\n".join(errs)
    assert len(errs) == 4
    for key in ("urn.gamma", "urn.steps", "n_runs", "colour: unknown key"):
        assert key in joined


def test_single_world_with_unpredictability():
    errs = errors_of({"mode": "market", "market": {"n_worlds": 1}})
    assert any("n_worlds" in e for e in errs)
    ok = parse_config(json.dumps({"mode": "market",
                                  "market": {"n_worlds": 1, "unpredictability": False}}))
    assert ok.market.n_worlds == 1


def test_syntax_error_position():
    errs = errors_of('{"mode":\n  "urn",,}')
    assert errs[0].startswith("syntax error at line 2 column")


@pytest.mark.parametrize("doc, needle", [
    ({"mode": "flood"}, "mode"),
    ({"mode": "urn", "master_seed": 2**64}, "master_seed"),
    ({"mode": "urn", "urn": {"initial": [1, 0]}}, "initial"),
    ({"mode": "market", "market": {"conditions": ["loud"]}}, "conditions"),
    ({"mode": "market", "market": {"appeal_low": 0.9, "appeal_high": 0.1}}, "appeal_low"),
    ({"mode": "sweep"}, "sweep"),
    ({"mode": "sweep", "sweep": {"parameter": "beta", "values": [-1]}}, "beta"),
    ({"mode": "sweep", "sweep": {"parameter": "n_items", "values": [2.5]}}, "n_items"),
    ({"mode": "inject", "n_runs": 10}, "puppets"),
    ({"mode": "inject", "n_runs": 10, "market": {"n_agents": 10},
      "puppets": {"k": 11}}, "beyond horizon"),
    ({"mode": "inject", "n_runs": 10, "puppets": {"k": 2, "steps": [3, 1]}}, "increasing"),
    ({"mode": "inject", "n_runs": 1, "puppets": {}}, "n_runs"),
    ({"mode": "urn", "urn": {"steps": 10, "extra": 1}}, "urn.extra"),
])
def test_domain_violations(doc, needle):
    assert any(needle in e for e in errors_of(doc))


def test_not_an_object():
    assert errors_of("[1, 2]") == ["config must be a JSON object"]


@pytest.mark.parametrize("doc", [
    MINIMAL_URN,
    {"mode": "market", "market": {"conditions": ["strong"], "n_worlds": 3}},
    {"mode": "sweep", "sweep": {"parameter": "beta", "values": [0, 0.5]}},
    {"mode": "inject", "n_runs": 4, "puppets": {"target": 3, "k": 2, "steps": [4, 9]}},
])
def test_effective_config_round_trips(doc):
    cfg = parse_config(json.dumps(doc))
    again = parse_config(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_bytes(b"\xff\xfe")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_frozen():
    cfg = ExperimentConfig(mode="urn")
    with pytest.raises(Exception):
        cfg.master_seed = 3

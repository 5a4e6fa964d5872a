import json

import pytest

from smoothadv.config import ConfigError, load_config, parse_config

BASE = {"data": {"synthetic": {"n_per_class": 10, "dim": 3, "separation": 0.4, "n_test": 4}}}


def _with(**kw):
    d = json.loads(json.dumps(BASE))
    d.update(kw)
    return d


def test_minimal_config_defaults():
    cfg = parse_config(BASE)
    assert cfg.seed == 0 and cfg.curriculum.metric == "none" and cfg.eval_attack is None
    train_set, test_set = cfg.load_data()
    assert (len(train_set), len(test_set)) == (16, 4)
    spec = cfg.network_spec(train_set.dim, train_set.n_classes)
    assert spec.layer_sizes == (3, 2)
    assert cfg.train_config(spec).epochs == 10


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"attack": {"eps": 0.1}},
    {"train": {"epochs": 2, "optimizer": "adam"}},
    {"curriculum": {"metric": "prob_gap", "schedule": {"kind": "linear", "slope": 1}}},
    {"curriculum": {"probe": {"iters": 3}}},
    {"network": {"hidden": [4], "layer_sizes": [3, 4, 2]}},
    {"data": {}},
    {"data": {"synthetic": {"dim": 3}}},
    {"seed": -1},
    {"attack": {"epsilon": -0.5}},
    {"diagnostics": {"plots": True}},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        parse_config(_with(**bad))


def test_layer_sizes_must_match_data():
    cfg = parse_config(_with(network={"layer_sizes": [5, 2]}))
    with pytest.raises(ConfigError):
        cfg.network_spec(3, 2)


def test_to_dict_round_trip():
    cfg = parse_config(_with(
        seed=5, network={"hidden": [4]}, eval_attack={"steps": 3},
        curriculum={"metric": "prob_gap", "schedule": {"kind": "linear", "start_epoch": 1,
                                                       "start_value": 0.0, "end_epoch": 3}},
        train={"epochs": 5, "lr_decay": [[2, 0.5]]}, output="out"))
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    assert again.train_config(again.network_spec(3, 2)).lr_decay == ((2, 0.5),)


def test_load_config_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.json"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)

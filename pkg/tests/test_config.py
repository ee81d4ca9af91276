from __future__ import annotations

import pytest

from guardfed.config import ConfigError, ExperimentConfig, dump_config, load_config, validate_config


def test_parses_types_and_comments():
    cfg = validate_config("aggregator = guardfed  # trust-gated\ntau = 0.5\nrounds = 7\n"
                          "client_reweighting = false\nname = 'x y'\n")
    assert cfg.aggregator == "guardfed" and cfg.tau == 0.5 and cfg.rounds == 7
    assert cfg.client_reweighting is False and cfg.name == "x y"


def test_errors_are_line_anchored():
    with pytest.raises(ConfigError, match=r"c.conf:3: unknown key 'taux'"):
        validate_config("rounds = 5\n\ntaux = 1\n", source="c.conf")
    with pytest.raises(ConfigError, match=r":2: tau must be >= 0"):
        validate_config("rounds = 5\ntau = -1\n")
    with pytest.raises(ConfigError, match=r":1: .*clients_per_round"):
        validate_config("clients_per_round = 101\nn_clients = 100\n")
    with pytest.raises(ConfigError, match=r":2: duplicate key"):
        validate_config("tau = 1\ntau = 2\n")
    with pytest.raises(ConfigError, match=r":1: rounds: expected an integer"):
        validate_config("rounds = 2.5\n")
    with pytest.raises(ConfigError, match=r":1: expected 'key = value'"):
        validate_config("just words\n")


def test_high_attacker_fraction_warns():
    with pytest.warns(UserWarning, match="exceeds 0.5"):
        cfg = validate_config("attacker_fraction = 0.6\n")
    assert cfg.attacker_fraction == 0.6


@pytest.mark.parametrize("text", ["rounds = 0", "alpha = 0", "attack = wat", "aggregator = mean",
                                  "root_fraction = 1", "synth_fraction = -0.1", "hidden = a,b",
                                  "lr = 0", "attacker_fraction = 1", "perf_mode = lie"])
def test_range_violations(text):
    with pytest.raises(ConfigError):
        validate_config(text)


def test_relative_dataset_resolves_against_config_dir(tmp_path):
    (tmp_path / "sub").mkdir()
    p = tmp_path / "sub" / "a.conf"
    p.write_text("dataset = ../data/x.manifest\n")
    assert load_config(p).dataset == str((tmp_path / "data" / "x.manifest").resolve())


def test_dump_round_trips():
    cfg = ExperimentConfig(dataset="/d.manifest", tau=3.5, client_reweighting=False, hidden="8,4")
    assert validate_config(dump_config(cfg)) == cfg


def test_replace_and_server_fraction():
    cfg = ExperimentConfig()
    assert cfg.replace(tau="50").tau == 50.0
    assert cfg.replace(server_fraction=0.1).synth_fraction == pytest.approx(0.09)
    with pytest.raises(ConfigError):
        cfg.replace(bogus=1)
    with pytest.raises(ConfigError):
        cfg.replace(tau=-2)
    with pytest.raises(ConfigError):
        cfg.replace(server_fraction=0.005)
    assert cfg.hidden_dims == [64] and ExperimentConfig(hidden="none").hidden_dims == []


def test_shipped_configs_validate():
    from pathlib import Path
    for p in sorted((Path(__file__).parents[1] / "configs").glob("*.conf")):
        cfg = load_config(p)
        assert cfg.dataset.endswith(".manifest")

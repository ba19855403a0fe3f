import pytest
import yaml

from mackrl.utils.config_loader import (
    RunConfig,
    load_run_config,
    load_settings,
    save_run_config,
    worker_cap,
)
from mackrl.errors import ConfigError


def test_save_and_load(tmp_path):
    config = RunConfig(run_id="rt", env="gridworld", env_config={"n_agents": 3}, seeds=[1, 2])
    path = tmp_path / "runs" / "rt.yaml"
    assert save_run_config(config, path)
    assert load_run_config(path) == config


def test_json_is_accepted(tmp_path):
    path = tmp_path / "run.json"
    path.write_text('{"run_id": "json", "algorithm": "iac", "seeds": [3]}')
    config = load_run_config(path)
    assert config.algorithm == "iac"
    assert config.seeds == [3]


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(ConfigError, match="nowhere.yaml"):
        load_run_config(tmp_path / "nowhere.yaml")


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="learning_rate"):
        RunConfig.from_dict({"learning_rate": 0.1})


@pytest.mark.parametrize("override", [
    {"algorithm": "qmix"},
    {"gamma": 1.5},
    {"seeds": []},
    {"batch_size": 0},
    {"lr_actor": 0.0},
    {"correlated_sampler": "magic"},
])
def test_invalid_values(override):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(override)


def test_with_value():
    config = RunConfig(env_config={"ck_fraction": 0.5})
    assert config.with_value("lr_actor", 0.01).lr_actor == 0.01
    changed = config.with_value("env_config.ck_fraction", 1.0)
    assert changed.env_config == {"ck_fraction": 1.0}
    assert config.env_config == {"ck_fraction": 0.5}
    with pytest.raises(ConfigError):
        config.with_value("momentum", 0.9)


def test_tree_settings_for_independent_algorithms():
    assert RunConfig(algorithm="iac").tree_settings()["independent"]
    assert not RunConfig(algorithm="mackrl").tree_settings()["independent"]
    assert RunConfig(partition_subsample=0).tree_settings()["partition_subsample"] is None


def test_settings_fall_back_to_defaults(tmp_path):
    path = tmp_path / "settings.yaml"
    path.write_text(yaml.safe_dump({"log_level": "DEBUG"}))
    settings = load_settings(path)
    assert settings["log_level"] == "DEBUG"
    assert settings["output_dir"] == "output"
    assert load_settings(tmp_path / "missing.yaml")["log_level"] == "INFO"


def test_worker_cap(monkeypatch):
    monkeypatch.delenv("CK_MACKRL_THREADS", raising=False)
    assert worker_cap() is None
    assert worker_cap({"max_workers": 3}) == 3
    monkeypatch.setenv("CK_MACKRL_THREADS", "2")
    assert worker_cap({"max_workers": 3}) == 2
    monkeypatch.setenv("CK_MACKRL_THREADS", "many")
    with pytest.raises(ConfigError):
        worker_cap()

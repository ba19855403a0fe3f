import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from mackrl.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS = {
    "log_level": "INFO",
    "output_dir": "output",
    "max_workers": None,
    "runs_dir": "config/runs",
}

ALGORITHMS = ("mackrl", "central-v", "iac", "jal", "ck-jal")
ENVS = ("matrix", "gridworld")
SAMPLERS = ("heuristic", "holenstein")
ARCHITECTURES = ("linear", "mlp", "gru")


def load_settings(settings_path="config/settings.yaml"):
    """Load global settings from YAML, falling back to defaults"""
    settings = dict(DEFAULT_SETTINGS)
    try:
        with open(settings_path, 'r') as f:
            loaded = yaml.safe_load(f) or {}
        settings.update(loaded)
    except Exception as e:
        logger.error(f"Error loading settings: {str(e)}")
    return settings


@dataclass
class RunConfig:
    """Every knob of one training run; nothing is taken from hidden defaults"""

    run_id: str = "run"
    env: str = "matrix"
    env_config: dict = field(default_factory=dict)
    algorithm: str = "mackrl"
    seeds: list = field(default_factory=lambda: [0])
    total_env_steps: int = 20000
    eval_interval: int = 2000
    eval_episodes: int = 64
    n_envs: int = 8
    batch_size: int = 64
    lr_actor: float = 0.0005
    lr_critic: float = 0.0005
    gamma: float = 0.99
    td_lambda: float = 0.8
    epsilon_start: float = 0.5
    epsilon_end: float = 0.01
    epsilon_anneal_steps: int = 50000
    target_update_interval: int = 200
    architecture: str = "linear"
    hidden_size: int = 16
    critic_hidden_size: int = 16
    init_scale: float = 1.0
    partition_subsample: int = 0
    partition_seed: int = 0
    correlated_sampler: str = "heuristic"
    holenstein_gamma: float = 1 / 1024
    checkpoint: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Raise ConfigError for values outside their ranges"""
        if self.env not in ENVS:
            raise ConfigError(f"Unknown env '{self.env}', expected one of {ENVS}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"Unknown algorithm '{self.algorithm}', expected one of {ALGORITHMS}")
        if self.correlated_sampler not in SAMPLERS:
            raise ConfigError(f"Unknown correlated sampler '{self.correlated_sampler}'")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"Unknown architecture '{self.architecture}'")
        if not isinstance(self.env_config, dict):
            raise ConfigError("env_config must be a mapping")
        if not isinstance(self.seeds, list) or not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        for name in ("total_env_steps", "eval_interval", "n_envs", "batch_size",
                     "epsilon_anneal_steps", "target_update_interval", "hidden_size", "critic_hidden_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if int(self.eval_episodes) < 0 or int(self.partition_subsample) < 0:
            raise ConfigError("eval_episodes and partition_subsample must be >= 0")
        for name in ("gamma", "td_lambda", "epsilon_start", "epsilon_end"):
            value = getattr(self, name)
            if not 0.0 <= float(value) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        for name in ("lr_actor", "lr_critic", "holenstein_gamma", "init_scale"):
            if float(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        return self

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("A run config must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {unknown}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid run config: {e}") from e

    def to_dict(self):
        return asdict(self)

    def tree_settings(self):
        """Keys understood by build_policy_tree"""
        return {
            "independent": self.algorithm in ("central-v", "iac"),
            "partition_subsample": self.partition_subsample or None,
            "partition_seed": self.partition_seed,
            "correlated_sampler": self.correlated_sampler,
            "holenstein_gamma": self.holenstein_gamma,
            "architecture": self.architecture,
            "hidden_size": self.hidden_size,
            "init_scale": self.init_scale,
        }

    def with_value(self, name, value):
        """Copy with one key replaced; ``env_config.<key>`` reaches into the env block"""
        data = self.to_dict()
        if name.startswith("env_config."):
            data["env_config"] = dict(data["env_config"])
            data["env_config"][name.split(".", 1)[1]] = value
        elif name in data:
            data[name] = value
        else:
            raise ConfigError(f"Config has no parameter '{name}'")
        return RunConfig.from_dict(data)


def load_run_config(config_path):
    """Load a run config (YAML, or JSON which YAML reads unchanged)"""
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"Run configuration not found: {config_path}")
    try:
        with open(config_path, 'r') as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"Error loading run configuration {config_path}: {e}") from e
    return RunConfig.from_dict(data or {})


def save_run_config(config, config_path):
    """Save a run config to YAML"""
    config_path = Path(config_path)
    try:
        os.makedirs(config_path.parent, exist_ok=True)
        with open(config_path, 'w') as f:
            yaml.safe_dump(config.to_dict(), f, default_flow_style=False, sort_keys=True)
        logger.info(f"Run configuration saved: {config_path}")
        return True
    except Exception as e:
        logger.error(f"Error saving run configuration: {str(e)}")
        return False


def worker_cap(settings=None):
    """CK_MACKRL_THREADS, else settings['max_workers'], else None"""
    env_value = os.environ.get("CK_MACKRL_THREADS")
    if env_value:
        try:
            value = int(env_value)
        except ValueError as e:
            raise ConfigError(f"CK_MACKRL_THREADS must be an integer, got '{env_value}'") from e
        if value < 1:
            raise ConfigError(f"CK_MACKRL_THREADS must be >= 1, got {value}")
        return value
    if settings and settings.get("max_workers"):
        return int(settings["max_workers"])
    return None

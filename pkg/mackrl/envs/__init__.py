"""Environments: the common-knowledge matrix game and the field-of-view gridworld."""

import logging

from mackrl.errors import ConfigError

logger = logging.getLogger(__name__)

ENV_NAMES = ("matrix", "gridworld")


def make_env(name, settings=None):
    """Build an environment from its name and a flat settings dict"""
    from mackrl.envs.gridworld import GridWorldConfig, GridWorldEnv
    from mackrl.envs.matrix_game import MatrixGameConfig, MatrixGameEnv

    settings = dict(settings or {})
    if name == "matrix":
        if "ck_fraction" in settings:
            config = MatrixGameConfig.from_ck_fraction(settings["ck_fraction"], settings.get("flip_p", 0.0))
        else:
            config = MatrixGameConfig(p_ck=settings.get("p_ck", 0.5), flip_p=settings.get("flip_p", 0.0))
        return MatrixGameEnv(config)
    elif name == "gridworld":
        try:
            config = GridWorldConfig(**settings)
        except TypeError as e:
            raise ConfigError(f"Invalid gridworld settings: {e}") from e
        return GridWorldEnv(config)
    raise ConfigError(f"Unknown environment '{name}', expected one of {ENV_NAMES}")

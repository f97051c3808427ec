"""Python access to the lanefusion simulator, rule advisor and harness."""

import json

from ._lanefusion import (
    OBSERVATION_DIM,
    ConfigError,
    Env as _Env,
    action_names,
    canonical_feedback_line,
    git_blob_sha1,
    idm_acceleration,
)
from . import _lanefusion as _ext

__all__ = [
    "OBSERVATION_DIM",
    "ConfigError",
    "Env",
    "action_names",
    "canonical_feedback_line",
    "default_config",
    "git_blob_sha1",
    "idm_acceleration",
    "normalize_config",
    "rule_recommendation",
    "train_run",
]


def default_config():
    return json.loads(_ext.default_config_json())


def normalize_config(config):
    """Validate a (possibly partial) config dict and fill in defaults."""
    return json.loads(_ext.normalize_config_json(json.dumps(config)))


def rule_recommendation(obs, sim=None):
    return _ext.rule_recommendation(list(obs), json.dumps(sim or {}))


def train_run(config, scheme, seed):
    return _ext.train_run(json.dumps(config), scheme, seed)


class Env(_Env):
    def __init__(self, sim=None, seed=0):
        super().__init__(json.dumps(sim or {}), seed)

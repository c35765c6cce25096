"""Orchestration behind the command line: configs and runs."""

from .config import Config, ConfigError, load_config, parse_config
from .runs import *  # noqa: F401,F403
from .runs import __all__ as _runs_all

__all__ = ["Config", "ConfigError", "load_config", "parse_config", *_runs_all]

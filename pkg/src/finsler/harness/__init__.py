"""Configuration parsing, commands and the command-line interface."""
from .commands import VerificationReport, cmd_classify, cmd_eval, cmd_profile, cmd_verify
from .config import DEFAULT_TOLERANCES, RunConfig, parse_config

__all__ = [
    "DEFAULT_TOLERANCES", "RunConfig", "VerificationReport", "parse_config",
    "cmd_classify", "cmd_eval", "cmd_profile", "cmd_verify",
]

"""Shipped default configuration.

The packaged `defaults/usage.json` carries the per-interaction PPE usage
counts, the staff-baseline daily rates (two surgical masks per work-day,
one face shield per week), and the daily staffing list for a mid-size
general internal medicine service.  Sites override any of it by passing
their own usage config file to the CLI or service.
"""

from __future__ import annotations

import json
from importlib import resources

from .model import PpeUsageConfig

_DEFAULTS_RESOURCE = "usage.json"


def default_usage_json() -> dict:
    """Raw JSON dict of the shipped usage configuration."""
    ref = resources.files("ppecast").joinpath("defaults", _DEFAULTS_RESOURCE)
    with ref.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def default_usage_config() -> PpeUsageConfig:
    """The shipped usage configuration as a typed object."""
    return PpeUsageConfig.from_json(default_usage_json())

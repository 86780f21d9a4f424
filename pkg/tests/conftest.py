import json
from pathlib import Path

import pytest

from ppecast.config import default_usage_config
from ppecast.model import PatientClassProfile, Scenario

REPO_ROOT = Path(__file__).resolve().parent.parent
EXAMPLE_PROFILES = REPO_ROOT / "docs" / "example_profiles.json"


def load_example_profiles():
    with open(EXAMPLE_PROFILES, "r", encoding="utf-8") as fh:
        return tuple(PatientClassProfile.from_json(obj) for obj in json.load(fh))


@pytest.fixture(scope="session")
def example_profiles():
    return load_example_profiles()


@pytest.fixture(scope="session")
def default_usage():
    return default_usage_config()


@pytest.fixture()
def example_scenario(example_profiles, default_usage):
    return Scenario(
        classes=example_profiles,
        usage=default_usage,
        horizon_days=365.0,
        quantile_selection="median",
    )


def scenario_from_rates(
    class_specs, usage, horizon, quantile_selection, arrival_scale=1.0
):
    """Build a scenario whose discharge counts match the given rate curves.

    `class_specs` holds (class_id, los_quantiles, daily_rates, PiecewiseRate)
    tuples; annual discharges are derived from the rate so the closed form
    and a simulation driven by the same rate target the same quantity.
    Returns (scenario, {class_id: rate}).
    """
    from ppecast.forecast import annual_discharges_from_rate

    classes, rates = [], {}
    for cid, quantiles, daily_rates, rate in class_specs:
        sigma = quantiles[quantile_selection]
        classes.append(
            PatientClassProfile(
                class_id=cid,
                los_quantiles=quantiles,
                daily_rates=daily_rates,
                annual_discharges=annual_discharges_from_rate(rate, horizon, sigma),
            )
        )
        rates[cid] = rate
    scenario = Scenario(
        classes=tuple(classes),
        usage=usage,
        horizon_days=horizon,
        quantile_selection=quantile_selection,
        arrival_scale=arrival_scale,
    )
    return scenario, rates

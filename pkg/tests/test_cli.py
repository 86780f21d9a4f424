import json

import pytest
from click.testing import CliRunner

from ppecast.cli import main
from ppecast.model import Scenario, canonical_json
from ppecast.nhpp import PiecewiseRate
from ppecast.sim import ClassSpec, GeneratorSpec, LosDistribution, lognormal_from_quartiles


@pytest.fixture()
def runner():
    return CliRunner()


def _small_spec(window_days=90.0, rate=4.0):
    rates = [0.0] * 15
    rates[0] = 3.0  # vital signs
    rates[1] = 1.5  # medication administration
    return GeneratorSpec(
        classes=(
            ClassSpec(
                name="general",
                arrival=PiecewiseRate.constant(rate, 0.0, window_days),
                los=lognormal_from_quartiles(2.58, 4.83, 9.54),
                daily_rates=tuple(rates),
                duplicate_rate=0.3,
            ),
        ),
        window_days=window_days,
    )


def _write_spec(tmp_path, spec):
    path = tmp_path / "spec.json"
    path.write_text(canonical_json(spec.to_json()), encoding="utf-8")
    return path


def test_generate_ingest_cluster_forecast_pipeline(runner, tmp_path):
    spec_path = _write_spec(tmp_path, _small_spec())
    data_dir = tmp_path / "data"

    result = runner.invoke(
        main, ["generate", "--spec", str(spec_path), "--seed", "3", "--out-dir", str(data_dir)]
    )
    assert result.exit_code == 0, result.output

    records = tmp_path / "records.jsonl"
    result = runner.invoke(
        main,
        [
            "ingest",
            "--admissions", str(data_dir / "admissions.csv"),
            "--interactions", str(data_dir / "interactions.csv"),
            "--icu", str(data_dir / "icu_stays.csv"),
            "--out", str(records),
        ],
    )
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output)
    assert summary["rejects"] == 0
    assert summary["records"] > 100

    profiles = tmp_path / "profiles.json"
    assignments = tmp_path / "assignments.csv"
    result = runner.invoke(
        main,
        [
            "cluster",
            "--records", str(records),
            "--k-range", "1..6",
            "--k", "2",
            "--seed", "11",
            "--n-starts", "8",
            "--profiles-out", str(profiles),
            "--assignments-out", str(assignments),
        ],
    )
    assert result.exit_code == 0, result.output
    cluster_summary = json.loads(result.output)
    assert cluster_summary["k"] == 2
    assert sum(cluster_summary["cluster_sizes"]) == summary["records"]
    assert assignments.read_text().splitlines()[0] == "admission_id,class_id"

    csv_out = tmp_path / "forecast.csv"
    json_out = tmp_path / "forecast.json"
    result = runner.invoke(
        main,
        [
            "forecast",
            "--profiles", str(profiles),
            "--horizon", "365",
            "--quantiles", "q1,median,q3",
            "--csv-out", str(csv_out),
            "--json-out", str(json_out),
        ],
    )
    assert result.exit_code == 0, result.stderr
    lines = csv_out.read_text().strip().splitlines()
    assert lines[0].split(",")[:2] == ["clusters", "quantile"]
    assert len(lines[0].split(",")) == 9  # clusters, quantile, 7 PPE columns
    assert len(lines) == 4  # header + q1/median/q3
    payload = json.loads(json_out.read_text())
    assert payload["quantiles"] == ["q1", "median", "q3"]


def test_forecast_rejects_sigma_at_or_above_horizon(runner, tmp_path):
    profiles = tmp_path / "profiles.json"
    profiles.write_text(
        json.dumps(
            [
                {
                    "class_id": 1,
                    "los_quantiles": {"q1": 100.0, "median": 400.0, "q3": 500.0},
                    "daily_rates": {"vital_signs": 2.0},
                    "annual_discharges": 100.0,
                    "member_count": 50,
                }
            ]
        ),
        encoding="utf-8",
    )
    result = runner.invoke(
        main,
        ["forecast", "--profiles", str(profiles), "--horizon", "365",
         "--quantiles", "median"],
    )
    assert result.exit_code == 4
    error = json.loads(result.stderr)
    assert error["error"] == "scenario_invalid"
    codes = [v["code"] for v in error["violations"]]
    assert "T_not_greater_than_sigma" in codes
    # the message states the precondition: horizon must exceed the quantile
    message = next(
        v["message"] for v in error["violations"] if v["code"] == "T_not_greater_than_sigma"
    )
    assert "must exceed" in message


def test_nhpp_test_on_stationary_data(runner, tmp_path):
    spec_path = _write_spec(tmp_path, _small_spec(window_days=200.0, rate=30.0))
    data_dir = tmp_path / "data"
    runner.invoke(main, ["generate", "--spec", str(spec_path), "--seed", "5",
                         "--out-dir", str(data_dir)])
    records = tmp_path / "records.jsonl"
    runner.invoke(
        main,
        ["ingest", "--admissions", str(data_dir / "admissions.csv"),
         "--interactions", str(data_dir / "interactions.csv"),
         "--icu", str(data_dir / "icu_stays.csv"), "--out", str(records)],
    )
    out = tmp_path / "sweep.csv"
    diag = tmp_path / "sweep.json"
    result = runner.invoke(
        main,
        ["nhpp-test", "--records", str(records), "--intervals", "4,8,40",
         "--out", str(out), "--diagnostics", str(diag)],
    )
    assert result.exit_code == 0, result.stderr
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "intervals,length_days,pct_not_rejected"
    assert len(lines) == 4
    # stationary data passes at every scale
    final_pct = float(lines[-1].rsplit(",", 1)[1])
    assert final_pct >= 90.0
    sweep = json.loads(diag.read_text())
    assert sweep["stationary_length_days"] is not None


def test_simulate_command_reports_z_scores(runner, tmp_path, default_usage):
    profile = {
        "class_id": 1,
        "los_quantiles": {"q1": 2.0, "median": 4.0, "q3": 8.0},
        "daily_rates": {"vital_signs": 2.0},
        "annual_discharges": 200.0,
        "member_count": 100,
    }
    scenario = Scenario.from_json(
        {
            "horizon_days": 120.0,
            "quantile_selection": "median",
            "classes": [profile],
            "usage": default_usage.to_json(),
        }
    )
    scenario_path = tmp_path / "scenario.json"
    scenario_path.write_text(canonical_json(scenario.to_json()), encoding="utf-8")
    result = runner.invoke(
        main,
        ["simulate", "--scenario", str(scenario_path), "--reps", "200", "--seed", "4"],
    )
    assert result.exit_code == 0, result.stderr
    payload = json.loads(result.output)
    assert payload["replications"] == 200
    assert abs(payload["ppe"]["gloves"]["z"]) <= 3.0
    assert payload["ppe"]["face_shields"]["z"] == 0.0  # staff-only, zero variance


def test_simulate_accepts_explicit_rate_curves(runner, tmp_path, default_usage):
    scenario = {
        "horizon_days": 120.0,
        "quantile_selection": "median",
        "classes": [
            {
                "class_id": 1,
                "los_quantiles": {"q1": 2.0, "median": 4.0, "q3": 8.0},
                "daily_rates": {"vital_signs": 2.0},
                # matches the two-piece rate below: 0.5*60 + 2.0*56
                "annual_discharges": 142.0,
                "member_count": 50,
            }
        ],
        "usage": default_usage.to_json(),
    }
    scenario_path = tmp_path / "scenario.json"
    scenario_path.write_text(json.dumps(scenario), encoding="utf-8")
    rates_path = tmp_path / "rates.json"
    rates_path.write_text(
        json.dumps({"1": {"breakpoints": [0.0, 60.0, 120.0], "rates": [0.5, 2.0]}}),
        encoding="utf-8",
    )
    result = runner.invoke(
        main,
        ["simulate", "--scenario", str(scenario_path), "--rates", str(rates_path),
         "--reps", "300", "--seed", "8"],
    )
    assert result.exit_code == 0, result.stderr
    payload = json.loads(result.output)
    assert abs(payload["ppe"]["gloves"]["z"]) <= 3.0


def test_simulate_rejects_invalid_scenario(runner, tmp_path, default_usage):
    scenario = {
        "horizon_days": 365.0,
        "quantile_selection": "median",
        "classes": [
            {
                "class_id": 1,
                "los_quantiles": {"median": 400.0},
                "daily_rates": {},
                "annual_discharges": 10.0,
            }
        ],
        "usage": default_usage.to_json(),
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario), encoding="utf-8")
    result = runner.invoke(main, ["simulate", "--scenario", str(path)])
    assert result.exit_code == 4
    assert "T_not_greater_than_sigma" in result.stderr


def test_ingest_parse_error_exit_code(runner, tmp_path):
    (tmp_path / "admissions.csv").write_text(
        "admission_id,patient_id,admit_ts,discharge_ts\nadm1,pat1,bogus,2020-01-02T00:00Z\n"
    )
    (tmp_path / "interactions.csv").write_text("admission_id,interaction_type,ts\n")
    (tmp_path / "icu_stays.csv").write_text("admission_id,start_ts,end_ts\n")
    result = runner.invoke(
        main,
        ["ingest", "--admissions", str(tmp_path / "admissions.csv"),
         "--interactions", str(tmp_path / "interactions.csv"),
         "--icu", str(tmp_path / "icu_stays.csv"),
         "--out", str(tmp_path / "records.jsonl")],
    )
    assert result.exit_code == 3
    error = json.loads(result.stderr)
    assert error["error"] == "dataset_parse_error"
    assert "admissions.csv:2" in error["message"]


def test_show_defaults_round_trips(runner):
    result = runner.invoke(main, ["show-defaults"])
    assert result.exit_code == 0
    payload = json.loads(result.output)
    assert payload["staff_daily_use"]["surgical_masks"] == 2
    assert len(payload["staffing"]) == 9

"""Command-line interface for the full pipeline.

    ppecast generate  --spec spec.json --seed 7 --out-dir data/
    ppecast ingest    --admissions a.csv --interactions i.csv --icu c.csv --out records.jsonl
    ppecast nhpp-test --records records.jsonl --intervals 10,20,40,80,800
    ppecast cluster   --records records.jsonl --k-range 1..10 --seed 7 --profiles-out profiles.json
    ppecast forecast  --profiles profiles.json --horizon 365 --quantiles q1,median,q3
    ppecast simulate  --scenario scenario.json --reps 1000 --seed 7
    ppecast serve     --port 8000 --data data/

Exit codes: 0 success, 2 usage error, 3 input/parse error, 4 scenario
validation failure, 1 unexpected error.  Failures print a machine-readable
JSON object on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import cluster as cluster_mod
from . import forecast as forecast_mod
from . import ingest as ingest_mod
from . import nhpp as nhpp_mod
from . import sim as sim_mod
from .config import default_usage_json
from .model import (
    PpeUsageConfig,
    Scenario,
    ScenarioValidationError,
    canonical_json,
)

EXIT_INPUT_ERROR = 3
EXIT_VALIDATION_ERROR = 4

_ONE_MINUTE_DAYS = 1.0 / 1440.0


def _fail(code: str, message: str, exit_code: int, violations=None) -> None:
    payload = {"error": code, "message": message}
    if violations is not None:
        payload["violations"] = [v.to_json() for v in violations]
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    sys.exit(exit_code)


def _emit(payload, out_path=None) -> None:
    text = canonical_json(payload)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _write_text(text: str, out_path=None) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_json(path, what: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        _fail("file_not_found", f"{what} file {path} does not exist", EXIT_INPUT_ERROR)
    except json.JSONDecodeError as exc:
        _fail("invalid_json", f"{what} file {path}: {exc}", EXIT_INPUT_ERROR)


def _load_usage(path) -> PpeUsageConfig:
    if path is None:
        return PpeUsageConfig.from_json(default_usage_json())
    try:
        return PpeUsageConfig.from_json(_load_json(path, "usage config"))
    except ValueError as exc:
        _fail("invalid_usage_config", str(exc), EXIT_INPUT_ERROR)


def _load_records(path):
    try:
        records = ingest_mod.read_records(path)
    except FileNotFoundError:
        _fail("file_not_found", f"records file {path} does not exist", EXIT_INPUT_ERROR)
    except (ValueError, KeyError) as exc:
        _fail("invalid_records", f"records file {path}: {exc}", EXIT_INPUT_ERROR)
    if not records:
        _fail("empty_records", f"records file {path} holds no records", EXIT_INPUT_ERROR)
    return records


def _parse_int_list(text: str, what: str):
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        _fail("invalid_argument", f"{what} must be a comma-separated integer list", 2)
    if not values:
        _fail("invalid_argument", f"{what} must not be empty", 2)
    return values


def _parse_k_range(text: str):
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError:
            _fail("invalid_argument", "k range must look like 1..10", 2)
    return _parse_int_list(text, "k range")


@click.group()
def main() -> None:
    """PPE demand forecasting pipeline."""


@main.command("show-defaults")
def show_defaults() -> None:
    """Print the shipped usage configuration."""
    _emit(default_usage_json())


@main.command()
@click.option("--admissions", required=True, type=click.Path())
@click.option("--interactions", required=True, type=click.Path())
@click.option("--icu", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="records JSON-lines file")
@click.option("--rejects", type=click.Path(), help="rejects report (default OUT.rejects.jsonl)")
def ingest(admissions, interactions, icu, out, rejects) -> None:
    """Parse and join the three CSV files into patient records."""
    try:
        result = ingest_mod.parse_dataset(admissions, interactions, icu)
    except ingest_mod.DatasetParseError as exc:
        _fail("dataset_parse_error", str(exc), EXIT_INPUT_ERROR)
    except FileNotFoundError as exc:
        _fail("file_not_found", str(exc), EXIT_INPUT_ERROR)
    ingest_mod.write_records(result.records, out)
    rejects_path = rejects or f"{out}.rejects.jsonl"
    result.write_rejects(rejects_path)
    _emit(
        {
            "records": len(result.records),
            "rejects": len(result.rejects),
            "records_path": str(out),
            "rejects_path": str(rejects_path),
        }
    )


@main.command("nhpp-test")
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--intervals", default="10,20,30,40,80,800", show_default=True)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--min-events", default=5, show_default=True)
@click.option("--last-days", type=float, default=None,
              help="restrict to admissions in the trailing window (e.g. 730)")
@click.option("--out", type=click.Path(), help="sweep CSV (stdout when omitted)")
@click.option("--diagnostics", type=click.Path(), help="sweep diagnostics JSON")
def nhpp_test(records_path, intervals, alpha, min_events, last_days, out, diagnostics) -> None:
    """Test admissions against a piecewise-constant Poisson null hypothesis."""
    records = _load_records(records_path)
    arrivals = sorted(r.admit_day for r in records)
    # pad the right edge by a minute so the newest admission is strictly inside
    end = arrivals[-1] + _ONE_MINUTE_DAYS
    start = arrivals[0] if last_days is None else end - last_days
    arrivals = [t for t in arrivals if t >= start]
    if not arrivals:
        _fail("empty_window", "no admissions inside the requested window", EXIT_INPUT_ERROR)
    counts = _parse_int_list(intervals, "intervals")
    try:
        sweep = nhpp_mod.stationarity_sweep(
            arrivals, (start, end), counts, alpha=alpha, min_events=min_events
        )
    except ValueError as exc:
        _fail("sweep_error", str(exc), EXIT_INPUT_ERROR)
    _write_text(nhpp_mod.sweep_to_csv(sweep), out)
    if diagnostics:
        Path(diagnostics).write_text(canonical_json(sweep.to_json()), encoding="utf-8")


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--k-range", default="1..10", show_default=True)
@click.option("--k", type=int, default=None, help="override the elbow suggestion")
@click.option("--seed", default=0, show_default=True)
@click.option("--n-starts", default=25, show_default=True)
@click.option("--window-hours", default=1.0, show_default=True)
@click.option("--reference-days", default=365.0, show_default=True,
              help="trailing discharge window used for annual volumes")
@click.option("--profiles-out", type=click.Path())
@click.option("--assignments-out", type=click.Path())
@click.option("--curve-out", type=click.Path())
@click.option("--embedding", "embedding_path", type=click.Path(),
              help="optional admission_id,x,y CSV for scatter-plot export")
@click.option("--scatter-out", type=click.Path(),
              help="with --embedding: admission_id,x,y,class_id CSV")
def cluster(records_path, k_range, k, seed, n_starts, window_hours,
            reference_days, profiles_out, assignments_out, curve_out,
            embedding_path, scatter_out) -> None:
    """Cluster patients and emit class profiles."""
    records = _load_records(records_path)
    extraction = ingest_mod.extract_features(records, window_hours=window_hours)
    if len(extraction.records) < 2:
        _fail("too_few_records", "need at least two usable records", EXIT_INPUT_ERROR)
    std = cluster_mod.standardize(extraction.features)
    ks = _parse_k_range(k_range)
    try:
        scan = cluster_mod.elbow_scan(std.matrix, ks, seed=seed, n_starts=n_starts)
    except ValueError as exc:
        _fail("cluster_error", str(exc), EXIT_INPUT_ERROR)
    chosen = k if k is not None else scan.suggested_k
    if chosen is None:
        _fail(
            "no_k_selected",
            "the scan range is too short for an elbow suggestion; pass --k",
            EXIT_INPUT_ERROR,
        )
    if chosen in scan.results:
        result = scan.results[chosen]
    else:
        try:
            result = cluster_mod.kmeans(std.matrix, chosen, n_starts=n_starts, seed=seed)
        except ValueError as exc:
            _fail("cluster_error", str(exc), EXIT_INPUT_ERROR)

    end = max(r.discharge_day for r in extraction.records) + _ONE_MINUTE_DAYS
    profiles = cluster_mod.build_class_profiles(
        extraction.records,
        result.labels,
        (end - reference_days, end),
        features=extraction.features,
    )
    if profiles_out:
        Path(profiles_out).write_text(
            canonical_json([p.to_json() for p in profiles]), encoding="utf-8"
        )
    if assignments_out:
        lines = ["admission_id,class_id"]
        lines += [
            f"{record.admission_id},{label + 1}"
            for record, label in zip(extraction.records, result.labels)
        ]
        Path(assignments_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if curve_out:
        Path(curve_out).write_text(canonical_json(scan.to_json()), encoding="utf-8")
    if embedding_path:
        try:
            embedding = cluster_mod.read_embedding_csv(embedding_path)
        except (ValueError, FileNotFoundError) as exc:
            _fail("invalid_embedding", str(exc), EXIT_INPUT_ERROR)
        scatter = cluster_mod.scatter_export_csv(
            extraction.records, result.labels, embedding
        )
        Path(scatter_out or f"{embedding_path}.scatter.csv").write_text(
            scatter, encoding="utf-8"
        )
    _emit(
        {
            "k": result.k,
            "suggested_k": scan.suggested_k,
            "total_within_sse": result.total_within_sse,
            "cluster_sizes": result.cluster_sizes(),
            "excluded_records": len(extraction.diagnostics),
            "sse_curve": {"ks": list(scan.ks), "sse": list(scan.sse)},
        }
    )


def _scenario_from_profiles(profiles_json, usage, horizon, quantile, arrival_scale):
    from .model import PatientClassProfile

    classes = tuple(PatientClassProfile.from_json(obj) for obj in profiles_json)
    return Scenario(
        classes=classes,
        usage=usage,
        horizon_days=horizon,
        quantile_selection=quantile,
        arrival_scale=arrival_scale,
    )


@main.command()
@click.option("--profiles", type=click.Path(), help="class profiles JSON")
@click.option("--records", "records_path", type=click.Path(),
              help="with --clusters: recluster records per cluster count")
@click.option("--clusters", default=None, help="comma list of cluster counts (needs --records)")
@click.option("--seed", default=0, show_default=True)
@click.option("--window-hours", default=1.0, show_default=True)
@click.option("--reference-days", default=365.0, show_default=True)
@click.option("--usage", "usage_path", type=click.Path(), help="usage config JSON (default: shipped)")
@click.option("--horizon", default=365.0, show_default=True)
@click.option("--quantiles", default="q1,median,q3", show_default=True)
@click.option("--arrival-scale", default=1.0, show_default=True)
@click.option("--csv-out", type=click.Path())
@click.option("--json-out", type=click.Path())
def forecast(profiles, records_path, clusters, seed, window_hours, reference_days,
             usage_path, horizon, quantiles, arrival_scale, csv_out, json_out) -> None:
    """Evaluate demand bound tables from profiles or per cluster count."""
    usage = _load_usage(usage_path)
    labels = [part.strip() for part in quantiles.split(",") if part.strip()]
    if not labels:
        _fail("invalid_argument", "need at least one quantile label", 2)

    reports = []
    if clusters is not None:
        if not records_path:
            _fail("invalid_argument", "--clusters requires --records", 2)
        records = _load_records(records_path)
        extraction = ingest_mod.extract_features(records, window_hours=window_hours)
        std = cluster_mod.standardize(extraction.features)
        end = max(r.discharge_day for r in extraction.records) + _ONE_MINUTE_DAYS
        for count in _parse_int_list(clusters, "clusters"):
            try:
                result = cluster_mod.kmeans(std.matrix, count, seed=seed)
            except ValueError as exc:
                _fail("cluster_error", str(exc), EXIT_INPUT_ERROR)
            class_profiles = cluster_mod.build_class_profiles(
                extraction.records,
                result.labels,
                (end - reference_days, end),
                features=extraction.features,
            )
            scenario = Scenario(
                classes=tuple(class_profiles),
                usage=usage,
                horizon_days=horizon,
                quantile_selection=labels[0],
                arrival_scale=arrival_scale,
            )
            reports.append(_evaluate(scenario, labels))
    else:
        if not profiles:
            _fail("invalid_argument", "pass --profiles or --records with --clusters", 2)
        scenario = _scenario_from_profiles(
            _load_json(profiles, "profiles"), usage, horizon, labels[0], arrival_scale
        )
        reports.append(_evaluate(scenario, labels))

    csv_text = forecast_mod.forecast_csv(reports)
    _write_text(csv_text, csv_out)
    if json_out:
        payload = {
            "reports": [r.to_json() for r in reports],
            "quantiles": labels,
        }
        Path(json_out).write_text(canonical_json(payload), encoding="utf-8")


def _evaluate(scenario, labels):
    try:
        return forecast_mod.bounds_table(scenario, labels)
    except ScenarioValidationError as exc:
        _fail(
            "scenario_invalid",
            "scenario failed validation",
            EXIT_VALIDATION_ERROR,
            violations=exc.violations,
        )


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--reps", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--rates", "rates_path", type=click.Path(),
              help="optional JSON {class_id: piecewise rate} driving arrivals")
@click.option("--out", type=click.Path())
def simulate(scenario_path, reps, seed, rates_path, out) -> None:
    """Compare the closed form against the simulation oracle."""
    if reps < 1:
        _fail("invalid_argument", "reps must be >= 1", 2)
    try:
        scenario = Scenario.from_json(_load_json(scenario_path, "scenario"))
    except (ValueError, KeyError) as exc:
        _fail("invalid_scenario_file", str(exc), EXIT_INPUT_ERROR)
    rates = None
    if rates_path:
        rates = {
            int(cid): nhpp_mod.PiecewiseRate.from_json(obj)
            for cid, obj in _load_json(rates_path, "rates").items()
        }
    try:
        comparison = sim_mod.oracle_comparison(
            scenario, reps=reps, seed=seed, arrival_rates=rates
        )
    except ScenarioValidationError as exc:
        _fail(
            "scenario_invalid",
            "scenario failed validation",
            EXIT_VALIDATION_ERROR,
            violations=exc.violations,
        )
    _emit(comparison, out)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(),
              help="generator spec JSON (default: a calibrated single class)")
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
def generate(spec_path, seed, out_dir) -> None:
    """Emit a synthetic dataset in the ingestion CSV schemas."""
    if spec_path:
        try:
            spec = sim_mod.GeneratorSpec.from_json(_load_json(spec_path, "generator spec"))
        except (ValueError, KeyError) as exc:
            _fail("invalid_generator_spec", str(exc), EXIT_INPUT_ERROR)
    else:
        spec = sim_mod.default_generator_spec()
    paths = sim_mod.generate_synthetic_dataset(spec, seed=seed, out_dir=out_dir)
    _emit(paths)


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--ui", "ui_dir", type=click.Path(),
              help="serve the scenario explorer from this directory (frontend/)")
def serve(port, host, data_dir, ui_dir) -> None:
    """Run the HTTP service over an immutable dataset snapshot directory."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_dir, ui_dir=ui_dir), host=host, port=port)


if __name__ == "__main__":
    main()

"""HTTP service exposing the pipeline over an immutable dataset snapshot.

Routes
    GET  /defaults                         shipped usage configuration
    POST /scenarios                        validate + store, returns {"id": hash}
    GET  /scenarios/{id}                   stored scenario
    GET  /scenarios/{id}/forecast          bound table (?quantiles=q1,median,q3)
    POST /scenarios/{id}/sensitivity       named perturbations
    GET  /datasets/{id}/clusters           k-means profiles for a dataset (?k=...)
    GET  /datasets/{id}/nhpp               stationarity sweep (?intervals=...)
    POST /simulate                         oracle comparison (bounded replications)

Scenario ids are content hashes, so storage is idempotent and cache-friendly.
Every response body is rendered with the same canonical JSON writer the CLI
uses; identical inputs produce byte-identical payloads on both paths.
Errors: 400 validation violations, 404 unknown ids, 422 closed-form
precondition failures, 503 simulation budget exhausted.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from functools import lru_cache
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.concurrency import run_in_threadpool

from . import cluster as cluster_mod
from . import ingest as ingest_mod
from . import nhpp as nhpp_mod
from . import sim as sim_mod
from .config import default_usage_json
from .forecast import Perturbation, bounds_table, sensitivity
from .model import (
    PRECONDITION_CODES,
    Scenario,
    ScenarioValidationError,
    canonical_json,
    content_hash,
    validate_scenario,
)

MAX_SIMULATION_REPS = 10_000
SIMULATION_CHUNK = 200
MAX_CONCURRENT_SIMULATIONS = 2

_ONE_MINUTE_DAYS = 1.0 / 1440.0


def _json_response(payload, status_code: int = 200) -> Response:
    return Response(
        content=canonical_json(payload),
        status_code=status_code,
        media_type="application/json",
    )


def _error(status_code: int, code: str, message: str, violations=None) -> Response:
    payload = {"error": code, "message": message}
    if violations is not None:
        payload["violations"] = [v.to_json() for v in violations]
    return _json_response(payload, status_code=status_code)


def _violation_response(violations) -> Response:
    status = 422 if any(v.code in PRECONDITION_CODES for v in violations) else 400
    return _error(status, "scenario_invalid", "scenario failed validation", violations)


def create_app(data_dir, ui_dir: Optional[str] = None) -> FastAPI:
    root = Path(data_dir)
    scenarios_dir = root / "scenarios"
    datasets_dir = root / "datasets"
    scenarios_dir.mkdir(parents=True, exist_ok=True)

    app = FastAPI(title="ppecast", version="0.1.0")
    simulation_slots = threading.Semaphore(MAX_CONCURRENT_SIMULATIONS)
    access_log = logging.getLogger("ppecast.service")

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        started = time.perf_counter()
        response = await call_next(request)
        access_log.info(
            json.dumps(
                {
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "duration_ms": round((time.perf_counter() - started) * 1e3, 3),
                },
                sort_keys=True,
            )
        )
        return response

    def load_scenario(scenario_id: str) -> Optional[Scenario]:
        path = scenarios_dir / f"{scenario_id}.json"
        if not path.is_file():
            return None
        return Scenario.from_json(json.loads(path.read_text(encoding="utf-8")))

    @lru_cache(maxsize=16)
    def load_dataset(dataset_id: str):
        base = datasets_dir / dataset_id
        if not base.is_dir():
            return None
        return ingest_mod.parse_dataset(
            base / "admissions.csv", base / "interactions.csv", base / "icu_stays.csv"
        )

    @app.get("/defaults")
    def get_defaults() -> Response:
        return _json_response(default_usage_json())

    @app.post("/scenarios")
    async def post_scenario(request: Request) -> Response:
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            return _error(400, "invalid_json", str(exc))
        try:
            scenario = Scenario.from_json(body)
        except (ValueError, KeyError, TypeError) as exc:
            return _error(400, "invalid_scenario", str(exc))
        violations = validate_scenario(scenario)
        if violations:
            return _violation_response(violations)
        payload = scenario.to_json()
        scenario_id = content_hash(payload)
        path = scenarios_dir / f"{scenario_id}.json"
        if not path.exists():
            path.write_text(canonical_json(payload), encoding="utf-8")
        return _json_response({"id": scenario_id}, status_code=201)

    @app.get("/scenarios/{scenario_id}")
    def get_scenario(scenario_id: str) -> Response:
        scenario = load_scenario(scenario_id)
        if scenario is None:
            return _error(404, "unknown_scenario", f"no scenario {scenario_id}")
        return _json_response(scenario.to_json())

    @app.get("/scenarios/{scenario_id}/forecast")
    def get_forecast(scenario_id: str, quantiles: str = "q1,median,q3") -> Response:
        scenario = load_scenario(scenario_id)
        if scenario is None:
            return _error(404, "unknown_scenario", f"no scenario {scenario_id}")
        labels = [part.strip() for part in quantiles.split(",") if part.strip()]
        if not labels:
            return _error(400, "invalid_argument", "need at least one quantile label")
        try:
            report = bounds_table(scenario, labels)
        except ScenarioValidationError as exc:
            return _violation_response(exc.violations)
        return _json_response(
            {"reports": [report.to_json()], "quantiles": labels}
        )

    @app.post("/scenarios/{scenario_id}/sensitivity")
    async def post_sensitivity(scenario_id: str, request: Request) -> Response:
        scenario = load_scenario(scenario_id)
        if scenario is None:
            return _error(404, "unknown_scenario", f"no scenario {scenario_id}")
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            return _error(400, "invalid_json", str(exc))
        try:
            perturbations = [
                Perturbation.from_json(obj) for obj in body.get("perturbations", [])
            ]
        except (ValueError, KeyError, TypeError) as exc:
            return _error(400, "invalid_perturbation", str(exc))
        if not perturbations:
            return _error(400, "invalid_argument", "need at least one perturbation")
        labels = body.get("quantiles", ["q1", "median", "q3"])
        try:
            result = sensitivity(scenario, perturbations, labels)
        except ScenarioValidationError as exc:
            return _violation_response(exc.violations)
        return _json_response(result.to_json())

    @app.get("/datasets/{dataset_id}/clusters")
    def get_clusters(
        dataset_id: str,
        k: int = 7,
        seed: int = 0,
        window_hours: float = 1.0,
        reference_days: float = 365.0,
    ) -> Response:
        dataset = load_dataset(dataset_id)
        if dataset is None:
            return _error(404, "unknown_dataset", f"no dataset {dataset_id}")
        extraction = ingest_mod.extract_features(dataset.records, window_hours=window_hours)
        if len(extraction.records) < max(k, 2):
            return _error(400, "too_few_records", "dataset too small for this k")
        std = cluster_mod.standardize(extraction.features)
        try:
            result = cluster_mod.kmeans(std.matrix, k, seed=seed)
        except ValueError as exc:
            return _error(400, "cluster_error", str(exc))
        end = max(r.discharge_day for r in extraction.records) + _ONE_MINUTE_DAYS
        profiles = cluster_mod.build_class_profiles(
            extraction.records,
            result.labels,
            (end - reference_days, end),
            features=extraction.features,
        )
        return _json_response(
            {
                "k": result.k,
                "total_within_sse": result.total_within_sse,
                "cluster_sizes": result.cluster_sizes(),
                "profiles": [p.to_json() for p in profiles],
                "assignments": {
                    record.admission_id: label + 1
                    for record, label in zip(extraction.records, result.labels)
                },
            }
        )

    @app.get("/datasets/{dataset_id}/nhpp")
    def get_nhpp(
        dataset_id: str,
        intervals: str = "10,20,30,40,80,800",
        alpha: float = 0.05,
        min_events: int = 5,
        last_days: Optional[float] = None,
    ) -> Response:
        dataset = load_dataset(dataset_id)
        if dataset is None:
            return _error(404, "unknown_dataset", f"no dataset {dataset_id}")
        if not dataset.records:
            return _error(400, "empty_dataset", "dataset holds no records")
        try:
            counts = [int(part) for part in intervals.split(",") if part.strip()]
        except ValueError:
            return _error(400, "invalid_argument", "intervals must be integers")
        arrivals = sorted(r.admit_day for r in dataset.records)
        end = arrivals[-1] + _ONE_MINUTE_DAYS
        start = arrivals[0] if last_days is None else end - last_days
        arrivals = [t for t in arrivals if t >= start]
        if not arrivals:
            return _error(400, "empty_window", "no admissions inside the window")
        try:
            sweep = nhpp_mod.stationarity_sweep(
                arrivals, (start, end), counts, alpha=alpha, min_events=min_events
            )
        except ValueError as exc:
            return _error(400, "sweep_error", str(exc))
        return _json_response(sweep.to_json())

    @app.post("/simulate")
    async def post_simulate(request: Request) -> Response:
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            return _error(400, "invalid_json", str(exc))
        reps = int(body.get("reps", 1000))
        seed = int(body.get("seed", 0))
        if reps < 1:
            return _error(400, "invalid_argument", "reps must be >= 1")
        if reps > MAX_SIMULATION_REPS:
            return _error(
                503,
                "simulation_budget_exceeded",
                f"reps {reps} exceeds the {MAX_SIMULATION_REPS} replication budget",
            )
        if "scenario_id" in body:
            scenario = load_scenario(str(body["scenario_id"]))
            if scenario is None:
                return _error(404, "unknown_scenario", f"no scenario {body['scenario_id']}")
        elif "scenario" in body:
            try:
                scenario = Scenario.from_json(body["scenario"])
            except (ValueError, KeyError, TypeError) as exc:
                return _error(400, "invalid_scenario", str(exc))
        else:
            return _error(400, "invalid_argument", "pass scenario or scenario_id")
        violations = validate_scenario(scenario)
        if violations:
            return _violation_response(violations)

        if not simulation_slots.acquire(blocking=False):
            return _error(503, "simulation_pool_busy", "all simulation workers are busy")
        try:
            chunks = []
            done = 0
            while done < reps:
                if await request.is_disconnected():
                    return _error(400, "client_disconnected", "request cancelled")
                size = min(SIMULATION_CHUNK, reps - done)
                chunk = await run_in_threadpool(
                    sim_mod.simulate_ppe,
                    scenario,
                    reps=size,
                    seed=seed,
                    mode="conditional",
                    first_rep=done,
                )
                chunks.append(chunk)
                done += size
            summary = sim_mod.merge_summaries(chunks)
            comparison = sim_mod.compare_to_closed_form(summary, scenario)
            comparison["seed"] = seed
        finally:
            simulation_slots.release()
        return _json_response(comparison)

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app

"""Acceptance suite: one test per release criterion, each printing a
pass/fail line and enforcing its runtime budget.

The oracle-style criteria compare closed-form results against Monte Carlo
means at 3 standard errors with fixed seeds; the structural criteria assert
exact identities of the forecast algebra; the pipeline criteria run the
real CLI end to end.
"""

import json
import math
import time
from collections import Counter
from contextlib import contextmanager
from math import comb

import numpy as np
import pytest
from click.testing import CliRunner

from conftest import scenario_from_rates
from ppecast.cli import main as cli_main
from ppecast.cluster import build_class_profiles, elbow_scan, standardize
from ppecast.forecast import (
    Perturbation,
    bounds_table,
    expected_demand,
    sensitivity,
    staff_baseline,
)
from ppecast.ingest import extract_features, parse_dataset
from ppecast.model import (
    InteractionType,
    PpeType,
    PpeUsageConfig,
    ReusePolicy,
    Scenario,
    canonical_json,
)
from ppecast.nhpp import (
    PiecewiseRate,
    integrate_rate,
    ks_test,
    stationarity_sweep,
)
from ppecast.sim import (
    ClassSpec,
    GeneratorSpec,
    LosDistribution,
    generate_synthetic_dataset,
    lognormal_from_quartiles,
    oracle_comparison,
    simulate_departures,
    simulate_nhpp,
    sinusoidal_rate,
)


@contextmanager
def criterion(number, description, budget_seconds):
    started = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"[FAIL] criterion {number}: {description}")
        raise
    elapsed = time.perf_counter() - started
    assert elapsed <= budget_seconds, (
        f"criterion {number} took {elapsed:.1f}s, budget {budget_seconds}s"
    )
    print(f"[PASS] criterion {number}: {description} ({elapsed:.1f}s)")


def _rates_vector(**tokens):
    row = [0.0] * 15
    for token, value in tokens.items():
        row[InteractionType(token).column] = value
    return tuple(row)


# ---------------------------------------------------------------------------
# Criterion 1: closed-form conditional demand equals the simulation oracle
# ---------------------------------------------------------------------------


def _oracle_fixtures(usage):
    horizon = 120.0
    constant = lambda r: PiecewiseRate.constant(r, 0.0, horizon)
    two_piece = lambda lo, hi: PiecewiseRate((0.0, 60.0, horizon), (lo, hi))
    wave = lambda mean, amp: sinusoidal_rate(mean, amp, 30.0, horizon, piece_days=0.5)
    q_small = {"q1": 2.0, "median": 4.0, "q3": 7.0}
    q_mid = {"q1": 5.0, "median": 9.0, "q3": 14.0}
    q_long = {"q1": 12.0, "median": 20.0, "q3": 30.0}
    vitals = _rates_vector(vital_signs=2.5, medication_admin=1.0)
    heavy = _rates_vector(medication_admin=5.0, lab_test=3.0, surgery=0.1)
    imaging = _rates_vector(xray=0.8, ct=0.4, bronchoscopy=0.15)

    reuse_usage = PpeUsageConfig(
        usage_matrices=usage.usage_matrices,
        staff_daily_use=usage.staff_daily_use,
        staffing=usage.staffing,
        reuse={PpeType.SURGICAL_MASKS: ReusePolicy(0.5, 2)},
    )

    fixtures = []
    fixtures.append(
        ("one class, constant rate, median", 1)
        + scenario_from_rates(
            [(1, q_small, vitals, constant(1.2))], usage, horizon, "median"
        )
    )
    fixtures.append(
        ("two classes, step rate, q3, scaled arrivals", 2)
        + scenario_from_rates(
            [
                (1, q_small, vitals, constant(0.8)),
                (2, q_mid, heavy, two_piece(0.3, 1.5)),
            ],
            usage,
            horizon,
            "q3",
            arrival_scale=1.5,
        )
    )
    fixtures.append(
        ("three classes, sinusoidal rate, q1", 3)
        + scenario_from_rates(
            [
                (1, q_small, vitals, wave(1.0, 0.6)),
                (2, q_mid, imaging, constant(0.7)),
                (3, q_long, heavy, two_piece(0.5, 0.2)),
            ],
            usage,
            horizon,
            "q1",
        )
    )
    fixtures.append(
        ("five classes with reuse policy, median", 5)
        + scenario_from_rates(
            [
                (1, q_small, vitals, constant(0.6)),
                (2, q_small, heavy, wave(0.8, 0.5)),
                (3, q_mid, imaging, constant(0.5)),
                (4, q_mid, vitals, two_piece(0.2, 0.9)),
                (5, q_long, heavy, constant(0.3)),
            ],
            reuse_usage,
            horizon,
            "median",
        )
    )
    fixtures.append(
        ("eight classes, mixed shapes, median", 8)
        + scenario_from_rates(
            [
                (1, q_small, vitals, constant(0.5)),
                (2, q_small, heavy, two_piece(0.6, 0.2)),
                (3, q_small, imaging, wave(0.5, 0.3)),
                (4, q_mid, vitals, constant(0.4)),
                (5, q_mid, heavy, wave(0.6, 0.4)),
                (6, q_mid, imaging, two_piece(0.1, 0.7)),
                (7, q_long, vitals, constant(0.25)),
                (8, q_long, imaging, wave(0.3, 0.2)),
            ],
            usage,
            horizon,
            "median",
        )
    )
    return fixtures


def test_criterion_1_oracle_equivalence(default_usage):
    with criterion(1, "conditional oracle matches expected demand (3 SE)", 60):
        fixtures = _oracle_fixtures(default_usage)
        assert len(fixtures) >= 5
        seen_quantiles = set()
        for name, n_classes, scenario, rates in fixtures:
            assert len(scenario.classes) == n_classes
            seen_quantiles.add(scenario.quantile_selection)
            comparison = oracle_comparison(
                scenario, reps=1000, seed=2025, arrival_rates=rates
            )
            for token, entry in comparison["ppe"].items():
                assert abs(entry["z"]) <= 3.0, f"{name} / {token}: {entry}"
        assert seen_quantiles == {"q1", "median", "q3"}


# ---------------------------------------------------------------------------
# Criterion 2: deterministic-LoS departures match the shifted rate integral
# ---------------------------------------------------------------------------


def test_criterion_2_deterministic_los_departures():
    with criterion(2, "deterministic-LoS departures match the rate integral", 30):
        horizon, sigma = 100.0, 6.0
        shapes = {
            "constant": PiecewiseRate.constant(8.0, 0.0, horizon),
            "two_piece": PiecewiseRate((0.0, 40.0, horizon), (3.0, 12.0)),
            "sinusoidal": sinusoidal_rate(8.0, 5.0, 25.0, horizon, piece_days=0.5),
        }
        for name, rate in shapes.items():
            summary = simulate_departures(
                rate, LosDistribution.deterministic(sigma), horizon, reps=600, seed=5
            )
            # departures in [0, T] arrive in [0, T - sigma]
            expected = integrate_rate(rate, -sigma, horizon - sigma)
            stats = summary.departures
            assert abs(stats.mean - expected) <= 3.0 * stats.se, name


# ---------------------------------------------------------------------------
# Criterion 3: exponential-LoS departures match the double integral
# ---------------------------------------------------------------------------


def test_criterion_3_exponential_los_departures():
    with criterion(3, "exponential-LoS departures match the double integral", 30):
        lam, mean_los, horizon = 10.0, 5.0, 100.0
        rate = PiecewiseRate.constant(lam, 0.0, horizon)
        summary = simulate_departures(
            rate, LosDistribution.exponential(mean_los), horizon, reps=600, seed=6
        )
        expected = lam * (horizon - mean_los * (1.0 - math.exp(-horizon / mean_los)))
        stats = summary.departures
        assert abs(stats.mean - expected) <= 3.0 * stats.se


# ---------------------------------------------------------------------------
# Criterion 4: KS calibration and the stationarity-sweep progression
# ---------------------------------------------------------------------------


def test_criterion_4_ks_calibration_and_sweep():
    with criterion(4, "KS calibration in [0.03, 0.07] and sweep progression", 120):
        rng = np.random.default_rng(401)
        trials, rejected = 5000, 0
        for _ in range(trials):
            _, p = ks_test(rng.exponential(1.0, size=50), "std_exponential")
            if p < 0.05:
                rejected += 1
        rate = rejected / trials
        assert 0.03 <= rate <= 0.07, f"rejection rate {rate}"

        horizon = 900.0
        wave = sinusoidal_rate(25.0, 15.0, 30.0, horizon, piece_days=0.25)
        arrivals = simulate_nhpp(wave, 0.0, horizon, np.random.default_rng(402))
        sweep = stationarity_sweep(arrivals, (0.0, horizon), [10, 30, 90, 900])
        by_count = {row.interval_count: row for row in sweep.rows}
        # strongly periodic rate: coarse partitions reject almost everywhere
        assert by_count[10].fraction_not_rejected <= 0.1
        assert by_count[30].fraction_not_rejected <= 0.1
        # one-day intervals look stationary
        assert by_count[900].fraction_not_rejected >= 0.9
        assert sweep.stationary_length_days == pytest.approx(1.0)
        # progression is monotone across the scales tested here
        fractions = [
            by_count[k].fraction_not_rejected for k in (10, 30, 90, 900)
        ]
        assert fractions == sorted(fractions)


# ---------------------------------------------------------------------------
# Criterion 5: clustering recovers generated classes
# ---------------------------------------------------------------------------


def _adjusted_rand_index(a, b):
    n = len(a)
    pair_counts = Counter(zip(a, b))
    sum_ij = sum(comb(c, 2) for c in pair_counts.values())
    sum_a = sum(comb(c, 2) for c in Counter(a).values())
    sum_b = sum(comb(c, 2) for c in Counter(b).values())
    total = comb(n, 2)
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2.0
    return (sum_ij - expected) / (max_index - expected)


def test_criterion_5_clustering_recovery(tmp_path):
    with criterion(5, "three generated classes recovered (ARI >= 0.9, elbow = 3)", 60):
        window = 90.0
        spec = GeneratorSpec(
            classes=(
                ClassSpec(
                    name="short",
                    arrival=PiecewiseRate.constant(3.0, 0.0, window),
                    los=LosDistribution.lognormal(math.log(2.0), 0.2),
                    daily_rates=_rates_vector(vital_signs=6.0, medication_admin=1.0),
                ),
                ClassSpec(
                    name="medium",
                    arrival=PiecewiseRate.constant(3.0, 0.0, window),
                    los=LosDistribution.lognormal(math.log(9.0), 0.2),
                    daily_rates=_rates_vector(medication_admin=9.0, lab_test=5.0),
                ),
                ClassSpec(
                    name="long",
                    arrival=PiecewiseRate.constant(3.0, 0.0, window),
                    los=LosDistribution.lognormal(math.log(40.0), 0.15),
                    daily_rates=_rates_vector(vital_signs=1.0, xray=1.5, dialysis=0.8),
                ),
            ),
            window_days=window,
        )
        paths = generate_synthetic_dataset(spec, seed=505, out_dir=tmp_path)
        dataset = parse_dataset(paths["admissions"], paths["interactions"], paths["icu"])
        assert dataset.rejects == []

        truth = {}
        for line in (tmp_path / "labels.csv").read_text().strip().splitlines()[1:]:
            admission_id, label = line.split(",")
            truth[admission_id] = int(label)

        extraction = extract_features(dataset.records)
        std = standardize(extraction.features)
        scan = elbow_scan(std.matrix, range(1, 9), seed=7)
        assert scan.suggested_k == 3
        assert all(b <= a for a, b in zip(scan.sse, scan.sse[1:]))

        result = scan.results[3]
        predicted = list(result.labels)
        actual = [truth[r.admission_id] for r in extraction.records]
        ari = _adjusted_rand_index(predicted, actual)
        assert ari >= 0.9, f"adjusted Rand index {ari:.3f}"


# ---------------------------------------------------------------------------
# Criterion 6: structural invariants of the forecast algebra
# ---------------------------------------------------------------------------


def test_criterion_6_structural_invariants(example_scenario, default_usage):
    with criterion(6, "forecast algebra invariants", 10):
        report = bounds_table(example_scenario)

        # additivity to 1e-9 relative
        for row in report.rows:
            for ppe in PpeType:
                parts = row.staff[ppe] + sum(v[ppe] for v in row.per_class.values())
                assert row.total[ppe] == pytest.approx(parts, rel=1e-9)

        # linearity in arrival scale, staff rate, and usage entries
        result = sensitivity(
            example_scenario,
            [
                Perturbation(name="volume", arrival_scale_factor=2.0),
                Perturbation(
                    name="mask_rate", staff_use_delta={PpeType.SURGICAL_MASKS: 1.0}
                ),
                Perturbation(name="usage", usage_scale=3.0),
            ],
        )
        volume, mask_rate, usage_scaled = result.entries
        workdays = default_usage.staff_workdays(example_scenario.horizon_days)
        for base_row, v_row, m_row, u_row in zip(
            result.baseline.rows,
            volume.report.rows,
            mask_rate.report.rows,
            usage_scaled.report.rows,
        ):
            for ppe in PpeType:
                patient_base = sum(v[ppe] for v in base_row.per_class.values())
                patient_scaled = sum(v[ppe] for v in v_row.per_class.values())
                assert patient_scaled == pytest.approx(2.0 * patient_base, rel=1e-9)
                assert v_row.staff[ppe] == base_row.staff[ppe]
                patient_3u = sum(v[ppe] for v in u_row.per_class.values())
                assert patient_3u == pytest.approx(3.0 * patient_base, rel=1e-9)
            assert m_row.total[PpeType.SURGICAL_MASKS] - base_row.total[
                PpeType.SURGICAL_MASKS
            ] == pytest.approx(workdays, rel=1e-9)

        # quantile monotonicity
        q1, median, q3 = report.rows
        for ppe in PpeType:
            assert q1.total[ppe] <= median.total[ppe] <= q3.total[ppe]

        # identical usage columns and staff rates give identical columns
        for row in report.rows:
            assert row.total[PpeType.GOWNS] == row.total[PpeType.BOUFFANTS]
            assert row.total[PpeType.GOWNS] == row.total[PpeType.BOOT_COVERS]

        # zero usage column: staff baseline only, invariant to class count
        baseline = staff_baseline(default_usage, example_scenario.horizon_days)
        shields = {row.total[PpeType.FACE_SHIELDS] for row in report.rows}
        assert shields == {baseline[PpeType.FACE_SHIELDS]}
        for count in (1, 3, 5):
            subset = Scenario(
                classes=example_scenario.classes[:count],
                usage=default_usage,
                horizon_days=example_scenario.horizon_days,
            )
            sub_report = bounds_table(subset)
            for row in sub_report.rows:
                assert row.total[PpeType.FACE_SHIELDS] == baseline[PpeType.FACE_SHIELDS]

        # reuse factor identities
        def reuse_everywhere(gamma, r):
            return PpeUsageConfig(
                usage_matrices=default_usage.usage_matrices,
                staff_daily_use=default_usage.staff_daily_use,
                staffing=default_usage.staffing,
                reuse={ppe: ReusePolicy(gamma, r) for ppe in PpeType},
            )

        from ppecast.forecast import apply_reuse

        identity = apply_reuse(report, reuse_everywhere(0.0, 1))
        halved = apply_reuse(report, reuse_everywhere(1.0, 2))
        for base_row, id_row, half_row in zip(report.rows, identity.rows, halved.rows):
            for ppe in PpeType:
                assert id_row.reuse_adjusted[ppe] == base_row.total[ppe]
                assert half_row.reuse_adjusted[ppe] == pytest.approx(
                    0.5 * base_row.total[ppe], rel=1e-12
                )


# ---------------------------------------------------------------------------
# Criterion 7: CLI pipeline determinism
# ---------------------------------------------------------------------------


def _run_pipeline(runner, spec_path, workdir, seed):
    workdir.mkdir(parents=True, exist_ok=True)
    data = workdir / "data"
    records = workdir / "records.jsonl"
    profiles = workdir / "profiles.json"
    forecast_csv_path = workdir / "forecast.csv"
    forecast_json_path = workdir / "forecast.json"

    steps = [
        ["generate", "--spec", str(spec_path), "--seed", str(seed), "--out-dir", str(data)],
        ["ingest", "--admissions", str(data / "admissions.csv"),
         "--interactions", str(data / "interactions.csv"),
         "--icu", str(data / "icu_stays.csv"), "--out", str(records)],
        ["cluster", "--records", str(records), "--k-range", "1..6", "--k", "3",
         "--seed", str(seed), "--n-starts", "8", "--profiles-out", str(profiles)],
        ["forecast", "--profiles", str(profiles), "--horizon", "365",
         "--csv-out", str(forecast_csv_path), "--json-out", str(forecast_json_path)],
    ]
    for step in steps:
        result = runner.invoke(cli_main, step)
        assert result.exit_code == 0, (step, result.output, result.stderr)
    return [
        (path.name, path.read_bytes())
        for path in (profiles, forecast_csv_path, forecast_json_path)
    ]


def test_criterion_7_pipeline_determinism(tmp_path):
    with criterion(7, "repeated CLI pipeline runs are byte-identical", 120):
        runner = CliRunner()
        spec = GeneratorSpec(
            classes=(
                ClassSpec(
                    name="a",
                    arrival=PiecewiseRate.constant(3.0, 0.0, 90.0),
                    los=lognormal_from_quartiles(2.0, 4.0, 8.0),
                    daily_rates=_rates_vector(vital_signs=3.0, lab_test=2.0),
                    duplicate_rate=0.3,
                ),
                ClassSpec(
                    name="b",
                    arrival=PiecewiseRate.constant(2.0, 0.0, 90.0),
                    los=lognormal_from_quartiles(8.0, 12.0, 18.0),
                    daily_rates=_rates_vector(medication_admin=6.0, xray=0.5),
                    duplicate_rate=0.3,
                ),
            ),
            window_days=90.0,
        )
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(canonical_json(spec.to_json()), encoding="utf-8")
        first = _run_pipeline(runner, spec_path, tmp_path / "run1", seed=99)
        second = _run_pipeline(runner, spec_path, tmp_path / "run2", seed=99)
        for (name_a, bytes_a), (name_b, bytes_b) in zip(first, second):
            assert name_a == name_b
            assert bytes_a == bytes_b, f"{name_a} differs between runs"


# ---------------------------------------------------------------------------
# Criterion 8: deduplication-window sensitivity
# ---------------------------------------------------------------------------


def test_criterion_8_dedup_sensitivity(tmp_path, default_usage):
    with criterion(8, "dedup window varies totals monotonically and boundedly", 60):
        window_days = 90.0
        spec = GeneratorSpec(
            classes=(
                ClassSpec(
                    name="general",
                    arrival=PiecewiseRate.constant(5.0, 0.0, window_days),
                    los=lognormal_from_quartiles(2.58, 4.83, 9.54),
                    daily_rates=_rates_vector(
                        vital_signs=3.5, medication_admin=2.0, lab_test=2.3
                    ),
                    duplicate_rate=0.35,
                ),
            ),
            window_days=window_days,
        )
        paths = generate_synthetic_dataset(spec, seed=808, out_dir=tmp_path)
        dataset = parse_dataset(paths["admissions"], paths["interactions"], paths["icu"])
        assert dataset.rejects == []

        reference = (
            min(r.admit_day for r in dataset.records),
            max(r.discharge_day for r in dataset.records) + 1e-6,
        )

        def total_gloves(window_hours):
            extraction = extract_features(dataset.records, window_hours=window_hours)
            profiles = build_class_profiles(
                extraction.records,
                [0] * len(extraction.records),
                reference,
                features=extraction.features,
            )
            scenario = Scenario(
                classes=tuple(profiles), usage=default_usage, horizon_days=365.0
            )
            return expected_demand(scenario).rows[0].total[PpeType.GLOVES]

        def event_count(window_hours):
            extraction = extract_features(dataset.records, window_hours=window_hours)
            return sum(len(r.events) for r in extraction.records)

        # a zero window keeps the duplicated timestamps: strictly more events
        assert event_count(0.0) > event_count(1.0)

        totals = {w: total_gloves(w) for w in (0.5, 1.0, 2.0)}
        assert totals[0.5] >= totals[1.0] >= totals[2.0]
        spread = (totals[0.5] - totals[2.0]) / totals[1.0]
        assert 0.0 <= spread <= 0.15, f"dedup spread {spread:.3f}"

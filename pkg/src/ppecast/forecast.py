"""Closed-form PPE demand: staff baseline, per-class usage, bound tables.

The demand for one PPE type over a planning horizon splits into a staff
baseline (daily per-employee use times total staff work-days) and one
term per patient class (selected LoS quantile x expected discharges x
PPE consumed per patient-day).  Conditioning each class on an LoS
quantile turns the quantile choice into lower/median/upper bound rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .model import (
    ForecastReport,
    PatientClassProfile,
    PpeType,
    PpeUsageConfig,
    QuantileForecast,
    ReportMetadata,
    ReusePolicy,
    Scenario,
    ScenarioValidationError,
    UsageMatrix,
    validate_scenario,
)
from .nhpp import PiecewiseRate, integrate_rate

BOUND_QUANTILES = ("q1", "median", "q3")


def staff_baseline(usage: PpeUsageConfig, horizon_days: float) -> dict:
    """Items consumed by staff outside patient encounters, per PPE type."""
    if horizon_days <= 0:
        raise ValueError(f"horizon must be positive, got {horizon_days}")
    workdays = usage.staff_workdays(horizon_days)
    return {ppe: usage.staff_use(ppe) * workdays for ppe in PpeType}


def class_usage(
    profile: PatientClassProfile,
    quantile_label: str,
    usage: PpeUsageConfig,
    arrival_scale: float = 1.0,
) -> dict:
    """Expected items consumed during interactions with one patient class.

    Selected LoS quantile x scaled annual discharges x items per
    patient-day (daily interaction rates dotted with the usage row).
    """
    los = profile.los_for(quantile_label)
    if los <= 0:
        raise ValueError(
            f"class {profile.class_id} quantile {quantile_label!r} is {los}; "
            "the conditional estimate requires a strictly positive LoS"
        )
    rates = np.asarray(profile.daily_rates, dtype=float)
    discharges = arrival_scale * profile.annual_discharges
    out = {}
    for ppe in PpeType:
        row = np.asarray(usage.usage_row(ppe, profile.class_id), dtype=float)
        out[ppe] = los * discharges * float(rates @ row)
    return out


def annual_discharges_from_rate(
    rate: PiecewiseRate, horizon_days: float, los_days: float
) -> float:
    """Discharge count implied by an arrival-rate curve and a fixed LoS.

    Patients departing within the horizon are exactly those arriving in the
    first `horizon - los` days, so this is the rate integral over that
    window.  Agrees with discharge counting on generated data by
    construction.
    """
    if horizon_days <= los_days:
        return 0.0
    return integrate_rate(rate, 0.0, horizon_days - los_days)


def _reuse_adjust(total: Mapping, usage: PpeUsageConfig) -> dict:
    return {ppe: total[ppe] * usage.reuse_policy(ppe).factor() for ppe in PpeType}


def _build_row(scenario: Scenario, quantile_label: str) -> QuantileForecast:
    staff = staff_baseline(scenario.usage, scenario.horizon_days)
    per_class = {}
    for profile in scenario.classes:
        per_class[profile.class_id] = class_usage(
            profile, quantile_label, scenario.usage, scenario.arrival_scale
        )
    total = {
        ppe: staff[ppe] + sum(per_class[cid][ppe] for cid in per_class)
        for ppe in PpeType
    }
    adjusted = _reuse_adjust(total, scenario.usage)
    return QuantileForecast(
        quantile=quantile_label,
        staff=staff,
        per_class=per_class,
        total=total,
        reuse_adjusted=adjusted,
        procurement={ppe: math.ceil(adjusted[ppe]) for ppe in PpeType},
    )


def expected_demand(
    scenario: Scenario, quantile_label: Optional[str] = None
) -> ForecastReport:
    """Single-quantile demand report; raises if the scenario is invalid."""
    label = quantile_label or scenario.quantile_selection
    violations = validate_scenario(scenario, quantile_labels=[label])
    if violations:
        raise ScenarioValidationError(violations)
    return ForecastReport(
        rows=(_build_row(scenario, label),),
        metadata=ReportMetadata(
            scenario_hash=scenario.hash(), class_count=len(scenario.classes)
        ),
    )


def apply_reuse(report: ForecastReport, usage: PpeUsageConfig) -> ForecastReport:
    """Recompute the reuse-adjusted totals; unadjusted fields are preserved."""
    rows = []
    for row in report.rows:
        adjusted = _reuse_adjust(row.total, usage)
        rows.append(
            QuantileForecast(
                quantile=row.quantile,
                staff=row.staff,
                per_class=row.per_class,
                total=row.total,
                reuse_adjusted=adjusted,
                procurement={ppe: math.ceil(adjusted[ppe]) for ppe in PpeType},
            )
        )
    return ForecastReport(rows=tuple(rows), metadata=report.metadata)


def bounds_table(
    scenario: Scenario, quantile_labels: Sequence[str] = BOUND_QUANTILES
) -> ForecastReport:
    """One demand row per LoS quantile, in the order requested."""
    labels = list(quantile_labels)
    if not labels:
        raise ValueError("need at least one quantile label")
    violations = validate_scenario(scenario, quantile_labels=labels)
    if violations:
        raise ScenarioValidationError(violations)
    return ForecastReport(
        rows=tuple(_build_row(scenario, label) for label in labels),
        metadata=ReportMetadata(
            scenario_hash=scenario.hash(), class_count=len(scenario.classes)
        ),
    )


# ---------------------------------------------------------------------------
# Sensitivity analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Perturbation:
    """A named what-if edit applied on top of a baseline scenario."""

    name: str
    arrival_scale_factor: float = 1.0
    staff_use_delta: Mapping[PpeType, float] = field(default_factory=dict)
    usage_scale: float = 1.0
    reuse_override: Mapping[PpeType, ReusePolicy] = field(default_factory=dict)

    def apply(self, scenario: Scenario) -> Scenario:
        usage = scenario.usage
        new_usage = PpeUsageConfig(
            usage_matrices={
                ppe: UsageMatrix(
                    base_row=tuple(v * self.usage_scale for v in matrix.base_row),
                    class_rows={
                        cid: tuple(v * self.usage_scale for v in row)
                        for cid, row in matrix.class_rows.items()
                    },
                )
                for ppe, matrix in usage.usage_matrices.items()
            },
            staff_daily_use={
                ppe: usage.staff_use(ppe) + self.staff_use_delta.get(ppe, 0.0)
                for ppe in PpeType
            },
            staffing=usage.staffing,
            reuse={
                ppe: self.reuse_override.get(ppe, usage.reuse_policy(ppe))
                for ppe in PpeType
            },
        )
        return Scenario(
            classes=scenario.classes,
            usage=new_usage,
            horizon_days=scenario.horizon_days,
            quantile_selection=scenario.quantile_selection,
            arrival_scale=scenario.arrival_scale * self.arrival_scale_factor,
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "arrival_scale_factor": self.arrival_scale_factor,
            "staff_use_delta": {
                p.value: v for p, v in sorted(
                    self.staff_use_delta.items(), key=lambda kv: kv[0].column
                )
            },
            "usage_scale": self.usage_scale,
            "reuse_override": {
                p.value: r.to_json() for p, r in sorted(
                    self.reuse_override.items(), key=lambda kv: kv[0].column
                )
            },
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Perturbation":
        return cls(
            name=str(obj["name"]),
            arrival_scale_factor=float(obj.get("arrival_scale_factor", 1.0)),
            staff_use_delta={
                PpeType.from_token(t): float(v)
                for t, v in obj.get("staff_use_delta", {}).items()
            },
            usage_scale=float(obj.get("usage_scale", 1.0)),
            reuse_override={
                PpeType.from_token(t): ReusePolicy.from_json(r)
                for t, r in obj.get("reuse_override", {}).items()
            },
        )


@dataclass(frozen=True)
class SensitivityEntry:
    name: str
    report: ForecastReport
    deltas: dict  # quantile -> ppe token -> {absolute, relative}

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "report": self.report.to_json(),
            "deltas": self.deltas,
        }


@dataclass(frozen=True)
class SensitivityReport:
    baseline: ForecastReport
    entries: tuple

    def to_json(self) -> dict:
        return {
            "baseline": self.baseline.to_json(),
            "entries": [e.to_json() for e in self.entries],
        }


def sensitivity(
    scenario: Scenario,
    perturbations: Sequence[Perturbation],
    quantile_labels: Sequence[str] = BOUND_QUANTILES,
) -> SensitivityReport:
    """Re-evaluate the bound table per perturbation and report the deltas."""
    baseline = bounds_table(scenario, quantile_labels)
    entries = []
    for perturbation in perturbations:
        perturbed = perturbation.apply(scenario)
        report = bounds_table(perturbed, quantile_labels)
        deltas: dict = {}
        for base_row, new_row in zip(baseline.rows, report.rows):
            per_ppe = {}
            for ppe in PpeType:
                absolute = new_row.total[ppe] - base_row.total[ppe]
                base_value = base_row.total[ppe]
                per_ppe[ppe.value] = {
                    "absolute": absolute,
                    "relative": absolute / base_value if base_value != 0.0 else None,
                }
            deltas[base_row.quantile] = per_ppe
        entries.append(
            SensitivityEntry(name=perturbation.name, report=report, deltas=deltas)
        )
    return SensitivityReport(baseline=baseline, entries=tuple(entries))


# ---------------------------------------------------------------------------
# Tabular export
# ---------------------------------------------------------------------------

CSV_HEADER = "clusters,quantile," + ",".join(p.value for p in PpeType)


def report_csv_rows(report: ForecastReport) -> list:
    """Rows of (cluster count, quantile, 7 totals) for one report."""
    rows = []
    for row in report.rows:
        values = ",".join(f"{row.total[p]:.6f}" for p in PpeType)
        rows.append(f"{report.metadata.class_count},{row.quantile},{values}")
    return rows


def forecast_csv(reports: Sequence[ForecastReport]) -> str:
    """Flat bound-table CSV: one block of quantile rows per report."""
    lines = [CSV_HEADER]
    for report in reports:
        lines.extend(report_csv_rows(report))
    return "\n".join(lines) + "\n"

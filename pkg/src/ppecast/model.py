"""Core domain types for the PPE demand forecasting pipeline.

Everything downstream (ingestion, clustering, forecasting, simulation,
service) exchanges the types defined here.  All types are immutable after
construction and serialize to a canonical JSON form; `canonical_json`
produces byte-stable output so identical inputs always yield identical
files and HTTP bodies.

Time is measured in real-valued days everywhere.  Absolute timestamps are
stored as days since the Unix epoch (UTC); CSV interfaces use ISO-8601 at
minute resolution and are converted on ingest.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional, Sequence


DAYS_PER_YEAR = 365.0

# One counted work-day per listed staff member per calendar day.  Sites
# running e.g. two 12-hour shifts per listed role can change this constant.
WORKDAYS_PER_STAFF_PER_DAY = 1.0


class InteractionType(enum.Enum):
    """The closed set of 15 patient-practitioner interaction categories.

    Definition order is the stable column order used by every usage and
    rate matrix; the CSV vocabulary is the enum value.
    """

    VITAL_SIGNS = "vital_signs"
    MEDICATION_ADMIN = "medication_admin"
    LAB_TEST = "lab_test"
    XRAY = "xray"
    CT = "ct"
    MRI = "mri"
    ULTRASOUND = "ultrasound"
    NUCLEAR_MEDICINE = "nuclear_medicine"
    INTERVENTIONAL_RADIOLOGY = "interventional_radiology"
    TTE = "tte"
    TEE = "tee"
    BRONCHOSCOPY = "bronchoscopy"
    DIALYSIS = "dialysis"
    SURGERY = "surgery"
    ROOM_TRANSFER = "room_transfer"

    @property
    def column(self) -> int:
        return _INTERACTION_COLUMN[self]

    @classmethod
    def from_token(cls, token: str) -> "InteractionType":
        try:
            return cls(token)
        except ValueError:
            raise ValueError(
                f"unknown interaction type {token!r}; expected one of "
                f"{[t.value for t in cls]}"
            ) from None


class PpeType(enum.Enum):
    """The closed set of 7 protective-equipment item types."""

    GLOVES = "gloves"
    GOWNS = "gowns"
    SURGICAL_MASKS = "surgical_masks"
    N95_MASKS = "n95_masks"
    FACE_SHIELDS = "face_shields"
    BOUFFANTS = "bouffants"
    BOOT_COVERS = "boot_covers"

    @property
    def column(self) -> int:
        return _PPE_COLUMN[self]

    @classmethod
    def from_token(cls, token: str) -> "PpeType":
        try:
            return cls(token)
        except ValueError:
            raise ValueError(
                f"unknown PPE type {token!r}; expected one of "
                f"{[t.value for t in cls]}"
            ) from None


_INTERACTION_COLUMN = {t: i for i, t in enumerate(InteractionType)}
_PPE_COLUMN = {t: i for i, t in enumerate(PpeType)}

N_INTERACTION_TYPES = len(InteractionType)  # 15
N_PPE_TYPES = len(PpeType)  # 7

# Ordering used when checking LoS quantile monotonicity.
LOS_QUANTILE_ORDER = ("min", "q1", "median", "q3", "max")


# ---------------------------------------------------------------------------
# Timestamp handling (minute-resolution ISO-8601 UTC <-> epoch days)
# ---------------------------------------------------------------------------

_SECONDS_PER_DAY = 86400.0


def parse_timestamp(text: str) -> float:
    """Parse an ISO-8601 timestamp (UTC assumed if naive) into epoch days."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp() / _SECONDS_PER_DAY


def format_timestamp(day: float) -> str:
    """Render epoch days as ISO-8601 UTC at minute resolution (floored)."""
    minutes = math.floor(day * 1440.0 + 1e-9)
    dt = datetime.fromtimestamp(minutes * 60.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%MZ")


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------


def canonical_json(payload) -> str:
    """Deterministic JSON used for every emitted file and HTTP body."""
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def compact_json(payload) -> str:
    """Compact deterministic JSON used for hashing."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def content_hash(payload) -> str:
    """Content address of a JSON-serializable payload (sha256 hex)."""
    return hashlib.sha256(compact_json(payload).encode("utf-8")).hexdigest()


def _ppe_map_to_json(values: Mapping["PpeType", float]) -> dict:
    return {p.value: values.get(p, 0.0) for p in PpeType}


def _ppe_map_from_json(obj: Mapping[str, float]) -> dict:
    out = {p: 0.0 for p in PpeType}
    for token, value in obj.items():
        out[PpeType.from_token(token)] = float(value)
    return out


def _rates_to_json(rates: Sequence[float]) -> dict:
    return {
        t.value: rates[t.column] for t in InteractionType if rates[t.column] != 0.0
    }


def _rates_from_json(obj: Mapping[str, float]) -> tuple:
    row = [0.0] * N_INTERACTION_TYPES
    for token, value in obj.items():
        row[InteractionType.from_token(token).column] = float(value)
    return tuple(row)


# ---------------------------------------------------------------------------
# Violations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    """One failed invariant: a machine-readable code plus a human message."""

    code: str
    message: str
    where: str = ""

    def to_json(self) -> dict:
        return {"code": self.code, "message": self.message, "where": self.where}


# Violation codes that correspond to the closed-form preconditions
# (positive LoS quantile, horizon strictly longer than every quantile).
PRECONDITION_CODES = frozenset(
    {"horizon_not_positive", "sigma_not_positive", "T_not_greater_than_sigma"}
)


class ScenarioValidationError(ValueError):
    """Raised when an operation requires a valid scenario and got violations."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        summary = "; ".join(f"{v.code}: {v.message}" for v in self.violations)
        super().__init__(f"invalid scenario: {summary}")


# ---------------------------------------------------------------------------
# Patient records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatientRecord:
    """One hospital admission with its ICU intervals and interaction events.

    `admit_day`/`discharge_day` and all event/interval times are epoch days.
    """

    admission_id: str
    patient_id: str
    admit_day: float
    discharge_day: float
    icu_intervals: tuple = ()  # ((start_day, end_day), ...)
    events: tuple = ()  # ((InteractionType, day), ...)

    def violations(self) -> list:
        found = []
        if not self.admit_day < self.discharge_day:
            found.append(
                Violation(
                    "admit_not_before_discharge",
                    "admission time must precede discharge time",
                    f"admission {self.admission_id}",
                )
            )
        for start, end in self.icu_intervals:
            if start > end:
                found.append(
                    Violation(
                        "icu_interval_reversed",
                        "ICU interval must have start <= end",
                        f"admission {self.admission_id}",
                    )
                )
            if start < self.admit_day or end > self.discharge_day:
                found.append(
                    Violation(
                        "icu_interval_outside_stay",
                        "ICU interval must lie within the admission interval",
                        f"admission {self.admission_id}",
                    )
                )
        for kind, day in self.events:
            if day < self.admit_day or day > self.discharge_day:
                found.append(
                    Violation(
                        "event_outside_stay",
                        f"{kind.value} event at day {day:.6f} falls outside the stay",
                        f"admission {self.admission_id}",
                    )
                )
        return found

    def to_json(self) -> dict:
        return {
            "admission_id": self.admission_id,
            "patient_id": self.patient_id,
            "admit_day": self.admit_day,
            "discharge_day": self.discharge_day,
            "icu_intervals": [[s, e] for s, e in self.icu_intervals],
            "events": [[t.value, day] for t, day in self.events],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PatientRecord":
        return cls(
            admission_id=str(obj["admission_id"]),
            patient_id=str(obj["patient_id"]),
            admit_day=float(obj["admit_day"]),
            discharge_day=float(obj["discharge_day"]),
            icu_intervals=tuple(
                (float(s), float(e)) for s, e in obj.get("icu_intervals", [])
            ),
            events=tuple(
                (InteractionType.from_token(t), float(day))
                for t, day in obj.get("events", [])
            ),
        )


# ---------------------------------------------------------------------------
# Class profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatientClassProfile:
    """Summary of one patient class: LoS quantiles, interaction rates, volume.

    `los_quantiles` maps a label ("q1", "median", "q3", optionally
    "min"/"max") to days.  `daily_rates` holds the average daily count of
    each interaction category, indexed by `InteractionType.column`.
    `annual_discharges` is the number of class discharges in a typical
    365-day year.
    """

    class_id: int
    los_quantiles: Mapping[str, float]
    daily_rates: tuple
    annual_discharges: float
    member_count: int = 0

    def los_for(self, quantile_label: str) -> float:
        if quantile_label not in self.los_quantiles:
            raise KeyError(
                f"class {self.class_id} has no LoS quantile {quantile_label!r}"
            )
        return float(self.los_quantiles[quantile_label])

    def to_json(self) -> dict:
        return {
            "class_id": self.class_id,
            "los_quantiles": dict(self.los_quantiles),
            "daily_rates": _rates_to_json(self.daily_rates),
            "annual_discharges": self.annual_discharges,
            "member_count": self.member_count,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PatientClassProfile":
        return cls(
            class_id=int(obj["class_id"]),
            los_quantiles={k: float(v) for k, v in obj["los_quantiles"].items()},
            daily_rates=_rates_from_json(obj.get("daily_rates", {})),
            annual_discharges=float(obj["annual_discharges"]),
            member_count=int(obj.get("member_count", 0)),
        )


# ---------------------------------------------------------------------------
# Usage configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UsageMatrix:
    """Items of one PPE type consumed per interaction, by category.

    `base_row` applies to every patient class; `class_rows` lets a class in
    a higher isolation level override the row without any schema change.
    """

    base_row: tuple
    class_rows: Mapping[int, tuple] = field(default_factory=dict)

    def row(self, class_id: int) -> tuple:
        return self.class_rows.get(class_id, self.base_row)

    def to_json(self) -> dict:
        out = {"base_row": _rates_to_json(self.base_row)}
        if self.class_rows:
            out["class_rows"] = {
                str(cid): _rates_to_json(row) for cid, row in self.class_rows.items()
            }
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "UsageMatrix":
        return cls(
            base_row=_rates_from_json(obj.get("base_row", {})),
            class_rows={
                int(cid): _rates_from_json(row)
                for cid, row in obj.get("class_rows", {}).items()
            },
        )


@dataclass(frozen=True)
class ReusePolicy:
    """Fraction of items reusable and how many interactions each one covers."""

    reusable_fraction: float = 0.0
    uses_per_item: int = 1

    def factor(self) -> float:
        return (1.0 - self.reusable_fraction) + self.reusable_fraction / self.uses_per_item

    def to_json(self) -> dict:
        return {
            "reusable_fraction": self.reusable_fraction,
            "uses_per_item": self.uses_per_item,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ReusePolicy":
        return cls(
            reusable_fraction=float(obj.get("reusable_fraction", 0.0)),
            uses_per_item=int(obj.get("uses_per_item", 1)),
        )


@dataclass(frozen=True)
class StaffGroup:
    role: str
    daily_count: float

    def to_json(self) -> dict:
        return {"role": self.role, "daily_count": self.daily_count}

    @classmethod
    def from_json(cls, obj: Mapping) -> "StaffGroup":
        return cls(role=str(obj["role"]), daily_count=float(obj["daily_count"]))


@dataclass(frozen=True)
class PpeUsageConfig:
    """Per-interaction usage matrices, staff baseline rates, staffing, reuse."""

    usage_matrices: Mapping[PpeType, UsageMatrix]
    staff_daily_use: Mapping[PpeType, float]
    staffing: tuple
    reuse: Mapping[PpeType, ReusePolicy] = field(default_factory=dict)

    def usage_row(self, ppe: PpeType, class_id: int) -> tuple:
        matrix = self.usage_matrices.get(ppe)
        if matrix is None:
            return (0.0,) * N_INTERACTION_TYPES
        return matrix.row(class_id)

    def staff_use(self, ppe: PpeType) -> float:
        return float(self.staff_daily_use.get(ppe, 0.0))

    def reuse_policy(self, ppe: PpeType) -> ReusePolicy:
        return self.reuse.get(ppe, ReusePolicy())

    def total_daily_headcount(self) -> float:
        return sum(group.daily_count for group in self.staffing)

    def staff_workdays(self, horizon_days: float) -> float:
        """Estimated work-days of all staff over the horizon."""
        return self.total_daily_headcount() * WORKDAYS_PER_STAFF_PER_DAY * horizon_days

    def to_json(self) -> dict:
        return {
            "usage_matrices": {
                p.value: m.to_json() for p, m in sorted(
                    self.usage_matrices.items(), key=lambda kv: kv[0].column
                )
            },
            "staff_daily_use": _ppe_map_to_json(self.staff_daily_use),
            "staffing": [g.to_json() for g in self.staffing],
            "reuse": {
                p.value: r.to_json() for p, r in sorted(
                    self.reuse.items(), key=lambda kv: kv[0].column
                )
            },
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PpeUsageConfig":
        return cls(
            usage_matrices={
                PpeType.from_token(token): UsageMatrix.from_json(m)
                for token, m in obj.get("usage_matrices", {}).items()
            },
            staff_daily_use=_ppe_map_from_json(obj.get("staff_daily_use", {})),
            staffing=tuple(
                StaffGroup.from_json(g) for g in obj.get("staffing", [])
            ),
            reuse={
                PpeType.from_token(token): ReusePolicy.from_json(r)
                for token, r in obj.get("reuse", {}).items()
            },
        )


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """A complete forecast input."""

    classes: tuple
    usage: PpeUsageConfig
    horizon_days: float = DAYS_PER_YEAR
    quantile_selection: str = "median"
    arrival_scale: float = 1.0

    def to_json(self) -> dict:
        return {
            "horizon_days": self.horizon_days,
            "quantile_selection": self.quantile_selection,
            "arrival_scale": self.arrival_scale,
            "classes": [c.to_json() for c in self.classes],
            "usage": self.usage.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Scenario":
        return cls(
            classes=tuple(
                PatientClassProfile.from_json(c) for c in obj.get("classes", [])
            ),
            usage=PpeUsageConfig.from_json(obj["usage"]),
            horizon_days=float(obj.get("horizon_days", DAYS_PER_YEAR)),
            quantile_selection=str(obj.get("quantile_selection", "median")),
            arrival_scale=float(obj.get("arrival_scale", 1.0)),
        )

    def hash(self) -> str:
        return content_hash(self.to_json())


def _check_rates_row(row, where: str, code: str, out: list) -> None:
    if len(row) != N_INTERACTION_TYPES:
        out.append(
            Violation(
                "rates_dimension",
                f"expected {N_INTERACTION_TYPES} interaction-rate entries, got {len(row)}",
                where,
            )
        )
        return
    for t in InteractionType:
        value = row[t.column]
        if not math.isfinite(value) or value < 0.0:
            out.append(
                Violation(code, f"{t.value} entry {value} must be finite and >= 0", where)
            )


def validate_scenario(scenario: Scenario, quantile_labels: Optional[Iterable[str]] = None) -> list:
    """Check every scenario invariant; returns all violations (empty if valid).

    `quantile_labels` extends the check to additional quantiles (e.g. the
    three bound rows); by default only `scenario.quantile_selection` must
    exist and satisfy the closed-form preconditions.
    """
    found: list = []
    labels = list(quantile_labels) if quantile_labels else [scenario.quantile_selection]

    if not math.isfinite(scenario.horizon_days) or scenario.horizon_days <= 0.0:
        found.append(
            Violation(
                "horizon_not_positive",
                f"planning horizon must be positive, got {scenario.horizon_days}",
                "horizon_days",
            )
        )
    if not math.isfinite(scenario.arrival_scale) or scenario.arrival_scale <= 0.0:
        found.append(
            Violation(
                "arrival_scale_not_positive",
                f"arrival scale must be positive, got {scenario.arrival_scale}",
                "arrival_scale",
            )
        )

    seen_ids = set()
    for profile in scenario.classes:
        where = f"class {profile.class_id}"
        if profile.class_id in seen_ids:
            found.append(
                Violation("duplicate_class_id", "class ids must be unique", where)
            )
        seen_ids.add(profile.class_id)

        ordered = [
            profile.los_quantiles[label]
            for label in LOS_QUANTILE_ORDER
            if label in profile.los_quantiles
        ]
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            found.append(
                Violation(
                    "los_quantiles_not_monotone",
                    "LoS quantiles must be non-decreasing across labels",
                    where,
                )
            )
        _check_rates_row(profile.daily_rates, where, "negative_daily_rate", found)
        if not math.isfinite(profile.annual_discharges) or profile.annual_discharges < 0.0:
            found.append(
                Violation(
                    "negative_annual_discharges",
                    f"annual discharges {profile.annual_discharges} must be >= 0",
                    where,
                )
            )
        for label in labels:
            if label not in profile.los_quantiles:
                found.append(
                    Violation(
                        "quantile_label_missing",
                        f"no LoS quantile {label!r} for this class",
                        where,
                    )
                )
                continue
            sigma = profile.los_quantiles[label]
            if sigma <= 0.0:
                found.append(
                    Violation(
                        "sigma_not_positive",
                        f"LoS quantile {label!r} is {sigma}; the conditional "
                        "estimate requires a strictly positive LoS",
                        where,
                    )
                )
            elif scenario.horizon_days <= sigma:
                found.append(
                    Violation(
                        "T_not_greater_than_sigma",
                        f"planning horizon {scenario.horizon_days} must exceed the "
                        f"{label!r} LoS quantile {sigma} of {where}",
                        where,
                    )
                )

    usage = scenario.usage
    for ppe, matrix in usage.usage_matrices.items():
        _check_rates_row(
            matrix.base_row, f"usage[{ppe.value}]", "negative_usage_entry", found
        )
        for cid, row in matrix.class_rows.items():
            _check_rates_row(
                row, f"usage[{ppe.value}] class {cid}", "negative_usage_entry", found
            )
    for ppe in PpeType:
        value = usage.staff_use(ppe)
        if not math.isfinite(value) or value < 0.0:
            found.append(
                Violation(
                    "negative_staff_daily_use",
                    f"staff daily use {value} for {ppe.value} must be >= 0",
                    f"staff_daily_use[{ppe.value}]",
                )
            )
        policy = usage.reuse_policy(ppe)
        if not 0.0 <= policy.reusable_fraction <= 1.0:
            found.append(
                Violation(
                    "reuse_fraction_out_of_range",
                    f"reusable fraction {policy.reusable_fraction} for "
                    f"{ppe.value} must lie in [0, 1]",
                    f"reuse[{ppe.value}]",
                )
            )
        if policy.uses_per_item < 1:
            found.append(
                Violation(
                    "reuse_uses_below_one",
                    f"uses per reusable item must be >= 1, got {policy.uses_per_item}",
                    f"reuse[{ppe.value}]",
                )
            )
    for group in usage.staffing:
        if not math.isfinite(group.daily_count) or group.daily_count < 0.0:
            found.append(
                Violation(
                    "negative_staff_headcount",
                    f"daily headcount {group.daily_count} for {group.role} must be >= 0",
                    f"staffing[{group.role}]",
                )
            )
    return found


# ---------------------------------------------------------------------------
# Forecast report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantileForecast:
    """Demand at one LoS quantile, split into staff and per-class components."""

    quantile: str
    staff: Mapping[PpeType, float]
    per_class: Mapping[int, Mapping[PpeType, float]]
    total: Mapping[PpeType, float]
    reuse_adjusted: Mapping[PpeType, float]
    procurement: Mapping[PpeType, int]

    def to_json(self) -> dict:
        return {
            "quantile": self.quantile,
            "staff": _ppe_map_to_json(self.staff),
            "per_class": {
                str(cid): _ppe_map_to_json(values)
                for cid, values in sorted(self.per_class.items())
            },
            "total": _ppe_map_to_json(self.total),
            "reuse_adjusted": _ppe_map_to_json(self.reuse_adjusted),
            "procurement": {
                p.value: int(self.procurement.get(p, 0)) for p in PpeType
            },
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "QuantileForecast":
        return cls(
            quantile=str(obj["quantile"]),
            staff=_ppe_map_from_json(obj["staff"]),
            per_class={
                int(cid): _ppe_map_from_json(values)
                for cid, values in obj.get("per_class", {}).items()
            },
            total=_ppe_map_from_json(obj["total"]),
            reuse_adjusted=_ppe_map_from_json(obj["reuse_adjusted"]),
            procurement={
                PpeType.from_token(token): int(v)
                for token, v in obj.get("procurement", {}).items()
            },
        )


@dataclass(frozen=True)
class ReportMetadata:
    scenario_hash: str
    class_count: int
    created_at: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "class_count": self.class_count,
            "created_at": self.created_at,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ReportMetadata":
        return cls(
            scenario_hash=str(obj["scenario_hash"]),
            class_count=int(obj["class_count"]),
            created_at=obj.get("created_at"),
        )


@dataclass(frozen=True)
class ForecastReport:
    """Bound rows (one per requested LoS quantile), with component splits."""

    rows: tuple
    metadata: ReportMetadata

    def row(self, quantile: str) -> QuantileForecast:
        for row in self.rows:
            if row.quantile == quantile:
                return row
        raise KeyError(f"report has no quantile row {quantile!r}")

    def to_json(self) -> dict:
        return {
            "rows": [r.to_json() for r in self.rows],
            "metadata": self.metadata.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ForecastReport":
        return cls(
            rows=tuple(QuantileForecast.from_json(r) for r in obj["rows"]),
            metadata=ReportMetadata.from_json(obj["metadata"]),
        )

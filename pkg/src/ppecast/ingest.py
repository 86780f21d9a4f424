"""CSV ingestion: admissions + interactions + ICU stays -> patient records.

Input schemas (ISO-8601 UTC timestamps, minute resolution):

    admissions.csv    admission_id,patient_id,admit_ts,discharge_ts
    interactions.csv  admission_id,interaction_type,ts
    icu_stays.csv     admission_id,start_ts,end_ts

Structurally malformed rows raise `DatasetParseError` with the offending
file and line number.  Rows that parse but violate record invariants
(orphan interactions, events outside the stay, ...) are collected into a
rejects report instead of being silently dropped.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .model import (
    InteractionType,
    N_INTERACTION_TYPES,
    PatientRecord,
    parse_timestamp,
)


class DatasetParseError(ValueError):
    """Structural CSV problem: bad header, column count, or field value."""

    def __init__(self, path, line_number: int, reason: str):
        self.path = str(path)
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"{self.path}:{line_number}: {reason}")


@dataclass(frozen=True)
class FeatureVector:
    """Clustering features for one admission: LoS plus 15 daily rates."""

    los_days: float
    daily_rates: tuple

    def as_row(self) -> tuple:
        return (self.los_days,) + tuple(self.daily_rates)


@dataclass
class IngestResult:
    records: list
    rejects: list  # one diagnostic dict per rejected row/record

    def write_rejects(self, path) -> None:
        """Write the rejects report as JSON lines."""
        with open(path, "w", encoding="utf-8") as fh:
            for item in self.rejects:
                fh.write(json.dumps(item, sort_keys=True) + "\n")


def _read_rows(path, expected_header: Sequence[str]):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError(path, 1, "empty file, expected a header row")
        if [h.strip() for h in header] != list(expected_header):
            raise DatasetParseError(
                path, 1, f"expected header {','.join(expected_header)}, got {','.join(header)}"
            )
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DatasetParseError(
                    path, line_number, f"expected {len(expected_header)} fields, got {len(row)}"
                )
            yield line_number, row


def _parse_ts_field(path, line_number: int, value: str) -> float:
    try:
        return parse_timestamp(value)
    except ValueError:
        raise DatasetParseError(path, line_number, f"bad timestamp {value!r}") from None


def merge_intervals(intervals: Iterable) -> tuple:
    """Merge overlapping or touching [start, end] interval pairs."""
    ordered = sorted((float(s), float(e)) for s, e in intervals)
    merged: list = []
    for start, end in ordered:
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return tuple((s, e) for s, e in merged)


def parse_dataset(admissions_csv, interactions_csv, icu_csv) -> IngestResult:
    """Join the three CSV files into one PatientRecord per admission.

    Raises DatasetParseError for structural problems; collects orphan rows
    and invariant-violating records into the rejects report.
    """
    rejects: list = []

    admissions = {}
    order = []
    for line_number, row in _read_rows(
        admissions_csv, ("admission_id", "patient_id", "admit_ts", "discharge_ts")
    ):
        admission_id, patient_id, admit_raw, discharge_raw = [f.strip() for f in row]
        admit = _parse_ts_field(admissions_csv, line_number, admit_raw)
        discharge = _parse_ts_field(admissions_csv, line_number, discharge_raw)
        if admission_id in admissions:
            rejects.append(
                {
                    "kind": "admission_row",
                    "line": line_number,
                    "admission_id": admission_id,
                    "code": "duplicate_admission_id",
                    "message": "admission id already seen; row ignored",
                }
            )
            continue
        admissions[admission_id] = {
            "patient_id": patient_id,
            "admit": admit,
            "discharge": discharge,
            "events": [],
            "icu": [],
        }
        order.append(admission_id)

    for line_number, row in _read_rows(
        interactions_csv, ("admission_id", "interaction_type", "ts")
    ):
        admission_id, token, ts_raw = [f.strip() for f in row]
        try:
            kind = InteractionType.from_token(token)
        except ValueError as exc:
            raise DatasetParseError(interactions_csv, line_number, str(exc)) from None
        ts = _parse_ts_field(interactions_csv, line_number, ts_raw)
        entry = admissions.get(admission_id)
        if entry is None:
            rejects.append(
                {
                    "kind": "interaction_row",
                    "line": line_number,
                    "admission_id": admission_id,
                    "code": "orphan_interaction",
                    "message": "no matching admission for interaction row",
                }
            )
            continue
        entry["events"].append((kind, ts))

    for line_number, row in _read_rows(icu_csv, ("admission_id", "start_ts", "end_ts")):
        admission_id, start_raw, end_raw = [f.strip() for f in row]
        start = _parse_ts_field(icu_csv, line_number, start_raw)
        end = _parse_ts_field(icu_csv, line_number, end_raw)
        entry = admissions.get(admission_id)
        if entry is None:
            rejects.append(
                {
                    "kind": "icu_row",
                    "line": line_number,
                    "admission_id": admission_id,
                    "code": "orphan_icu_stay",
                    "message": "no matching admission for ICU row",
                }
            )
            continue
        entry["icu"].append((start, end))

    records = []
    for admission_id in order:
        entry = admissions[admission_id]
        record = PatientRecord(
            admission_id=admission_id,
            patient_id=entry["patient_id"],
            admit_day=entry["admit"],
            discharge_day=entry["discharge"],
            icu_intervals=merge_intervals(entry["icu"]),
            events=tuple(sorted(entry["events"], key=lambda e: (e[1], e[0].column))),
        )
        violations = record.violations()
        if violations:
            for v in violations:
                rejects.append(
                    {
                        "kind": "record",
                        "admission_id": admission_id,
                        "code": v.code,
                        "message": v.message,
                    }
                )
            continue
        records.append(record)

    return IngestResult(records=records, rejects=rejects)


# ---------------------------------------------------------------------------
# Event deduplication and feature construction
# ---------------------------------------------------------------------------


def deduplicate_events(events: Sequence, window_hours: float = 1.0) -> list:
    """Collapse same-type timestamps inside an anchored window to one event.

    Per interaction type, the earliest event opens a group covering
    [t, t + window]; every same-type event inside collapses into it and the
    first event beyond the window anchors the next group.  A zero window
    keeps every event.  Grouping is per type: different types never collapse
    into each other.
    """
    if window_hours < 0:
        raise ValueError(f"window_hours must be >= 0, got {window_hours}")
    ordered = sorted(events, key=lambda e: (e[1], e[0].column))
    if window_hours == 0:
        return ordered

    window_days = window_hours / 24.0
    anchors: dict = {}
    kept = []
    for kind, day in ordered:
        anchor = anchors.get(kind)
        if anchor is not None and day <= anchor + window_days:
            continue
        anchors[kind] = day
        kept.append((kind, day))
    kept.sort(key=lambda e: (e[1], e[0].column))
    return kept


def effective_los(record: PatientRecord) -> float:
    """Length-of-stay in days net of time spent in the ICU.

    ICU intervals are merged before subtraction so double-logged transfers
    do not get counted twice.  May return <= 0 when the ICU covers the whole
    stay; callers exclude such records from clustering.
    """
    total = record.discharge_day - record.admit_day
    icu_days = sum(e - s for s, e in merge_intervals(record.icu_intervals))
    return total - icu_days


def feature_vector(record: PatientRecord) -> FeatureVector:
    """LoS plus per-type average daily interaction counts.

    Events must already be deduplicated; rates are raw counts divided by the
    effective LoS.
    """
    los = effective_los(record)
    if los <= 0:
        raise ValueError(
            f"zero_effective_los: admission {record.admission_id} has no time "
            "outside the ICU; rates are undefined"
        )
    counts = [0] * N_INTERACTION_TYPES
    for kind, _ in record.events:
        counts[kind.column] += 1
    return FeatureVector(
        los_days=los, daily_rates=tuple(c / los for c in counts)
    )


def extract_features(
    records: Sequence[PatientRecord], window_hours: float = 1.0
) -> "FeatureExtraction":
    """Deduplicate every record's events and compute feature vectors.

    Records whose effective LoS is not strictly positive are excluded with a
    `zero_effective_los` diagnostic instead of being clamped.
    """
    kept_records = []
    features = []
    diagnostics = []
    for record in records:
        los = effective_los(record)
        if los <= 0:
            diagnostics.append(
                {
                    "admission_id": record.admission_id,
                    "code": "zero_effective_los",
                    "message": "ICU intervals cover the entire stay; excluded from clustering",
                }
            )
            continue
        deduped = PatientRecord(
            admission_id=record.admission_id,
            patient_id=record.patient_id,
            admit_day=record.admit_day,
            discharge_day=record.discharge_day,
            icu_intervals=record.icu_intervals,
            events=tuple(deduplicate_events(record.events, window_hours)),
        )
        kept_records.append(deduped)
        features.append(feature_vector(deduped))
    return FeatureExtraction(
        records=kept_records, features=features, diagnostics=diagnostics
    )


@dataclass
class FeatureExtraction:
    records: list
    features: list
    diagnostics: list


# ---------------------------------------------------------------------------
# Record persistence between CLI stages (JSON lines)
# ---------------------------------------------------------------------------


def write_records(records: Iterable[PatientRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


def read_records(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(PatientRecord.from_json(json.loads(line)))
    return records

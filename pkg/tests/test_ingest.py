import math

import numpy as np
import pytest

from ppecast.ingest import (
    DatasetParseError,
    deduplicate_events,
    effective_los,
    extract_features,
    feature_vector,
    merge_intervals,
    parse_dataset,
)
from ppecast.model import InteractionType, PatientRecord, parse_timestamp

VS = InteractionType.VITAL_SIGNS
CT = InteractionType.CT
SURGERY = InteractionType.SURGERY


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _files(tmp_path, admissions, interactions="admission_id,interaction_type,ts\n",
           icu="admission_id,start_ts,end_ts\n"):
    return (
        _write(tmp_path / "admissions.csv", admissions),
        _write(tmp_path / "interactions.csv", interactions),
        _write(tmp_path / "icu_stays.csv", icu),
    )


def test_parse_three_row_fixture(tmp_path):
    a, i, c = _files(
        tmp_path,
        "admission_id,patient_id,admit_ts,discharge_ts\n"
        "adm1,pat1,2020-01-01T08:00Z,2020-01-05T08:00Z\n",
        "admission_id,interaction_type,ts\n"
        "adm1,vital_signs,2020-01-01T09:00Z\n"
        "adm1,ct,2020-01-02T10:00Z\n",
    )
    result = parse_dataset(a, i, c)
    assert len(result.records) == 1
    assert result.rejects == []
    record = result.records[0]
    assert len(record.events) == 2
    assert record.events[0][0] is VS
    assert record.patient_id == "pat1"


def test_interaction_after_discharge_rejects_record(tmp_path):
    a, i, c = _files(
        tmp_path,
        "admission_id,patient_id,admit_ts,discharge_ts\n"
        "adm1,pat1,2020-01-01T08:00Z,2020-01-02T08:00Z\n",
        "admission_id,interaction_type,ts\n"
        "adm1,vital_signs,2020-01-03T09:00Z\n",
    )
    result = parse_dataset(a, i, c)
    assert result.records == []
    assert any(r["code"] == "event_outside_stay" for r in result.rejects)


def test_orphan_rows_collected_not_raised(tmp_path):
    a, i, c = _files(
        tmp_path,
        "admission_id,patient_id,admit_ts,discharge_ts\n"
        "adm1,pat1,2020-01-01T08:00Z,2020-01-02T08:00Z\n",
        "admission_id,interaction_type,ts\n"
        "ghost,vital_signs,2020-01-01T09:00Z\n",
        "admission_id,start_ts,end_ts\n"
        "ghost,2020-01-01T09:00Z,2020-01-01T10:00Z\n",
    )
    result = parse_dataset(a, i, c)
    assert len(result.records) == 1
    codes = sorted(r["code"] for r in result.rejects)
    assert codes == ["orphan_icu_stay", "orphan_interaction"]


def test_malformed_rows_raise_with_line_numbers(tmp_path):
    a, i, c = _files(
        tmp_path,
        "admission_id,patient_id,admit_ts,discharge_ts\n"
        "adm1,pat1,not-a-time,2020-01-02T08:00Z\n",
    )
    with pytest.raises(DatasetParseError, match="admissions.csv:2"):
        parse_dataset(a, i, c)

    a2, i2, c2 = _files(
        tmp_path,
        "admission_id,patient_id,admit_ts,discharge_ts\n",
        "admission_id,interaction_type,ts\n"
        "adm1,vitals,2020-01-01T09:00Z\n",
    )
    with pytest.raises(DatasetParseError, match="interactions.csv:2"):
        parse_dataset(a2, i2, c2)

    bad_header = _write(tmp_path / "bad.csv", "a,b\n")
    with pytest.raises(DatasetParseError, match="bad.csv:1"):
        parse_dataset(bad_header, i2, c2)


def test_rejects_report_is_json_lines(tmp_path):
    a, i, c = _files(
        tmp_path,
        "admission_id,patient_id,admit_ts,discharge_ts\n"
        "adm1,pat1,2020-01-01T08:00Z,2020-01-02T08:00Z\n",
        "admission_id,interaction_type,ts\n"
        "ghost,vital_signs,2020-01-01T09:00Z\n",
    )
    result = parse_dataset(a, i, c)
    out = tmp_path / "rejects.jsonl"
    result.write_rejects(out)
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1
    assert '"orphan_interaction"' in lines[0]


# ---------------------------------------------------------------------------
# Deduplication
# ---------------------------------------------------------------------------


def _ev(kind, hours):
    return (kind, hours / 24.0)


def test_dedup_anchored_window_rule():
    events = [_ev(VS, 9.0), _ev(VS, 9.5), _ev(VS, 10.5)]
    kept = deduplicate_events(events, window_hours=1.0)
    assert [round(d * 24, 6) for _, d in kept] == [9.0, 10.5]
    # an event exactly on the window edge still collapses (closed interval)
    kept = deduplicate_events([_ev(VS, 9.0), _ev(VS, 10.0)], window_hours=1.0)
    assert len(kept) == 1


def test_dedup_zero_window_keeps_everything():
    events = [_ev(VS, 9.0), _ev(VS, 9.0), _ev(VS, 9.001)]
    assert len(deduplicate_events(events, window_hours=0.0)) == 3


def test_dedup_is_per_type():
    events = [_ev(VS, 9.0), _ev(CT, 9.0)]
    assert len(deduplicate_events(events, window_hours=1.0)) == 2


def test_dedup_rejects_negative_window():
    with pytest.raises(ValueError, match="window_hours"):
        deduplicate_events([], window_hours=-0.1)


def test_dedup_idempotent_and_monotone():
    rng = np.random.default_rng(42)
    events = [
        (kind, float(day))
        for kind in (VS, CT, SURGERY)
        for day in rng.uniform(0, 3.0, size=60)
    ]
    once = deduplicate_events(events, 1.0)
    twice = deduplicate_events(once, 1.0)
    assert once == twice

    counts = [
        len(deduplicate_events(events, w)) for w in (0.0, 0.25, 0.5, 1.0, 2.0, 6.0)
    ]
    assert counts == sorted(counts, reverse=True)
    assert counts[0] == len(events)


# ---------------------------------------------------------------------------
# Effective LoS and features
# ---------------------------------------------------------------------------


def _record(admit, discharge, icu=(), events=()):
    return PatientRecord(
        admission_id="a1",
        patient_id="p1",
        admit_day=admit,
        discharge_day=discharge,
        icu_intervals=tuple(icu),
        events=tuple(events),
    )


def test_effective_los_subtracts_icu_time():
    assert effective_los(_record(0.0, 10.0, icu=[(2.0, 5.0)])) == 7.0
    assert effective_los(_record(0.0, 4.83)) == 4.83
    # overlapping ICU intervals are merged before subtraction
    assert effective_los(_record(0.0, 10.0, icu=[(2.0, 5.0), (4.0, 6.0)])) == 6.0


def test_merge_intervals():
    assert merge_intervals([(4.0, 6.0), (2.0, 5.0)]) == ((2.0, 6.0),)
    assert merge_intervals([]) == ()


def test_icu_covering_stay_is_flagged_and_excluded():
    record = _record(0.0, 10.0, icu=[(0.0, 10.0)])
    assert effective_los(record) == 0.0
    with pytest.raises(ValueError, match="zero_effective_los"):
        feature_vector(record)
    extraction = extract_features([record])
    assert extraction.records == []
    assert extraction.diagnostics[0]["code"] == "zero_effective_los"


def test_feature_vector_daily_rates():
    events = [(VS, 0.1 + 0.01 * i) for i in range(12)]
    record = _record(0.0, 3.5, events=events)
    fv = feature_vector(record)
    assert fv.los_days == 3.5
    assert math.isclose(fv.daily_rates[VS.column], 12 / 3.5, rel_tol=1e-12)
    assert math.isclose(fv.daily_rates[VS.column], 3.4, rel_tol=0.01)

    empty = feature_vector(_record(0.0, 2.0))
    assert empty.daily_rates == (0.0,) * 15
    assert empty.los_days == 2.0

    surg = feature_vector(_record(0.0, 2.0, events=[(SURGERY, 1.0)]))
    assert surg.daily_rates[SURGERY.column] == 0.5


def test_feature_extraction_is_deterministic_and_conserves_events():
    rng = np.random.default_rng(7)
    records = []
    for i in range(20):
        admit = float(10 * i)
        los = float(rng.uniform(1.0, 8.0))
        events = [
            (kind, admit + float(rng.uniform(0, los)))
            for kind in (VS, CT)
            for _ in range(int(rng.integers(0, 12)))
        ]
        records.append(
            PatientRecord(
                admission_id=f"a{i}",
                patient_id=f"p{i}",
                admit_day=admit,
                discharge_day=admit + los,
                events=tuple(events),
            )
        )
    first = extract_features(records, window_hours=1.0)
    second = extract_features(records, window_hours=1.0)
    assert [f.as_row() for f in first.features] == [f.as_row() for f in second.features]

    # conservation: rate * los recovers the deduplicated event count
    for record, fv in zip(first.records, first.features):
        for kind in (VS, CT):
            expected = sum(1 for k, _ in record.events if k is kind)
            assert math.isclose(
                fv.daily_rates[kind.column] * fv.los_days, expected, rel_tol=1e-9
            )

"""Discrete-event oracle and synthetic-data generator.

Simulates the infinite-server dynamics directly - time-varying Poisson
arrivals via thinning, a length-of-stay draw per admission, per-day
interaction counts, per-interaction PPE consumption - so every closed-form
estimate in the forecaster can be checked against a Monte Carlo mean.  The
same machinery emits synthetic admission/interaction/ICU CSV files for
pipeline tests, with ground-truth class labels in a sidecar.

Randomness is hierarchical: streams are derived from
(seed, replication, class, purpose) so edits to one class never perturb
another class's draws.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Mapping, Optional, Sequence

import numpy as np

from .forecast import expected_demand
from .model import (
    InteractionType,
    N_INTERACTION_TYPES,
    PpeType,
    Scenario,
    ScenarioValidationError,
    format_timestamp,
    parse_timestamp,
    validate_scenario,
)
from .nhpp import PiecewiseRate

_STANDARD_NORMAL = NormalDist()


# ---------------------------------------------------------------------------
# Arrival simulation (thinning)
# ---------------------------------------------------------------------------


def simulate_nhpp(
    rate: PiecewiseRate, t_start: float, t_end: float, rng: np.random.Generator
) -> np.ndarray:
    """Thinning against the maximum piece rate; exact for piecewise rates.

    Candidates form a homogeneous Poisson stream at the envelope rate
    (Poisson count plus sorted uniforms) and each is accepted with
    probability rate(t)/envelope.  A uniform is drawn per candidate whether
    or not the local rate is zero, so the candidate stream is stable across
    rate edits.  Returns sorted arrival times, deterministic per generator
    state.
    """
    lo = max(float(t_start), rate.support[0])
    hi = min(float(t_end), rate.support[1])
    envelope = rate.max_rate()
    if hi <= lo or envelope <= 0.0:
        return np.empty(0)
    n_candidates = int(rng.poisson(envelope * (hi - lo)))
    times = np.sort(rng.uniform(lo, hi, n_candidates))
    accepted = rng.random(n_candidates) * envelope < rate.values_at(times)
    return times[accepted]


# ---------------------------------------------------------------------------
# Length-of-stay distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LosDistribution:
    """Length-of-stay model with strictly positive support."""

    kind: str
    sigma_days: float = 0.0  # deterministic
    log_mean: float = 0.0  # lognormal
    log_sd: float = 0.0  # lognormal
    mean_days: float = 0.0  # exponential
    samples: tuple = ()  # empirical

    @classmethod
    def deterministic(cls, sigma_days: float) -> "LosDistribution":
        if sigma_days <= 0:
            raise ValueError("deterministic LoS must be positive")
        return cls(kind="deterministic", sigma_days=float(sigma_days))

    @classmethod
    def lognormal(cls, log_mean: float, log_sd: float) -> "LosDistribution":
        if log_sd < 0:
            raise ValueError("lognormal log-sd must be >= 0")
        return cls(kind="lognormal", log_mean=float(log_mean), log_sd=float(log_sd))

    @classmethod
    def exponential(cls, mean_days: float) -> "LosDistribution":
        if mean_days <= 0:
            raise ValueError("exponential mean must be positive")
        return cls(kind="exponential", mean_days=float(mean_days))

    @classmethod
    def empirical(cls, samples: Sequence[float]) -> "LosDistribution":
        values = tuple(float(s) for s in samples)
        if not values or min(values) <= 0:
            raise ValueError("empirical samples must be positive and non-empty")
        return cls(kind="empirical", samples=values)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(n, self.sigma_days)
        if self.kind == "lognormal":
            return rng.lognormal(self.log_mean, self.log_sd, size=n)
        if self.kind == "exponential":
            return rng.exponential(self.mean_days, size=n)
        if self.kind == "empirical":
            return rng.choice(np.array(self.samples), size=n, replace=True)
        raise ValueError(f"unknown LoS kind {self.kind!r}")

    def quantile(self, p: float) -> float:
        if self.kind == "deterministic":
            return self.sigma_days
        if self.kind == "lognormal":
            return math.exp(self.log_mean + self.log_sd * _STANDARD_NORMAL.inv_cdf(p))
        if self.kind == "exponential":
            return -self.mean_days * math.log1p(-p)
        if self.kind == "empirical":
            return float(np.quantile(np.array(self.samples), p))
        raise ValueError(f"unknown LoS kind {self.kind!r}")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "deterministic":
            out["sigma_days"] = self.sigma_days
        elif self.kind == "lognormal":
            out["log_mean"] = self.log_mean
            out["log_sd"] = self.log_sd
        elif self.kind == "exponential":
            out["mean_days"] = self.mean_days
        elif self.kind == "empirical":
            out["samples"] = list(self.samples)
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "LosDistribution":
        kind = obj["kind"]
        if kind == "deterministic":
            return cls.deterministic(obj["sigma_days"])
        if kind == "lognormal":
            return cls.lognormal(obj["log_mean"], obj["log_sd"])
        if kind == "exponential":
            return cls.exponential(obj["mean_days"])
        if kind == "empirical":
            return cls.empirical(obj["samples"])
        raise ValueError(f"unknown LoS kind {kind!r}")


def lognormal_from_quartiles(q1: float, median: float, q3: float) -> LosDistribution:
    """Lognormal fitted to (Q1, median, Q3): exact median, averaged spread."""
    if not 0 < q1 <= median <= q3:
        raise ValueError("quartiles must be positive and ordered")
    z75 = _STANDARD_NORMAL.inv_cdf(0.75)
    log_sd = (math.log(q3) - math.log(q1)) / (2.0 * z75)
    return LosDistribution.lognormal(math.log(median), log_sd)


# ---------------------------------------------------------------------------
# Replication statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RepStats:
    """Per-replication values with compensated-sum aggregates."""

    values: tuple

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return math.fsum(self.values) / len(self.values)

    @property
    def variance(self) -> float:
        n = len(self.values)
        if n < 2:
            return 0.0
        m = self.mean
        return math.fsum((v - m) ** 2 for v in self.values) / (n - 1)

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / len(self.values))

    def to_json(self) -> dict:
        return {
            "replications": self.count,
            "mean": self.mean,
            "variance": self.variance,
            "se": self.se,
        }


@dataclass(frozen=True)
class SimulationSummary:
    replications: int
    arrivals: RepStats
    departures: RepStats
    ppe: Mapping[PpeType, RepStats]

    def to_json(self) -> dict:
        return {
            "replications": self.replications,
            "arrivals": self.arrivals.to_json(),
            "departures": self.departures.to_json(),
            "ppe": {p.value: s.to_json() for p, s in sorted(
                self.ppe.items(), key=lambda kv: kv[0].column
            )},
        }


def _stream(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


# ---------------------------------------------------------------------------
# Departure simulation
# ---------------------------------------------------------------------------


def simulate_departures(
    rate: PiecewiseRate,
    los: LosDistribution,
    horizon_days: float,
    reps: int,
    seed: int,
) -> SimulationSummary:
    """Arrivals thinned from the rate, one LoS draw each, departures in [0, T]."""
    if horizon_days <= 0:
        raise ValueError("horizon must be positive")
    arrivals_per_rep = []
    departures_per_rep = []
    for rep in range(reps):
        arr = np.array(
            simulate_nhpp(rate, rate.support[0], horizon_days, _stream(seed, rep, 0))
        )
        stays = los.sample(_stream(seed, rep, 1), len(arr))
        departs = arr + stays
        departures = int(np.count_nonzero((departs >= 0.0) & (departs <= horizon_days)))
        arrivals_per_rep.append(float(len(arr)))
        departures_per_rep.append(float(departures))
    return SimulationSummary(
        replications=reps,
        arrivals=RepStats(tuple(arrivals_per_rep)),
        departures=RepStats(tuple(departures_per_rep)),
        ppe={},
    )


# ---------------------------------------------------------------------------
# PPE consumption simulation
# ---------------------------------------------------------------------------


def simulate_ppe(
    scenario: Scenario,
    reps: int,
    seed: int,
    mode: str = "conditional",
    interaction_model: str = "poisson",
    arrival_rates: Optional[Mapping[int, PiecewiseRate]] = None,
    los_distributions: Optional[Mapping[int, LosDistribution]] = None,
    pin_arrivals: bool = False,
    first_rep: int = 0,
) -> SimulationSummary:
    """Simulate per-class admissions, stays, interactions, and PPE items.

    In `conditional` mode every stay is pinned to the class's selected LoS
    quantile and only patients departing within the horizon consume PPE -
    the quantity the closed-form expected demand describes.  `unconditional`
    mode samples each stay from `los_distributions`.  Interaction counts are
    per-day Poisson draws with the class's mean daily rates (or exactly the
    mean when `interaction_model="deterministic"`).  Arrival rates default
    to a constant curve that reproduces each class's scaled annual
    discharges; `pin_arrivals` fixes the admission count at that value
    exactly.

    Replication streams are keyed by absolute replication index, so running
    `first_rep=0, reps=100` then `first_rep=100, reps=100` reproduces a
    single 200-replication run chunk for chunk.
    """
    if mode not in ("conditional", "unconditional"):
        raise ValueError(f"unknown mode {mode!r}")
    if interaction_model not in ("poisson", "deterministic"):
        raise ValueError(f"unknown interaction model {interaction_model!r}")
    if mode == "unconditional" and not los_distributions:
        raise ValueError("unconditional mode requires per-class LoS distributions")

    horizon = scenario.horizon_days
    usage = scenario.usage
    staff = {
        ppe: usage.staff_use(ppe) * usage.staff_workdays(horizon) for ppe in PpeType
    }

    class_plans = []
    for profile in scenario.classes:
        sigma = profile.los_for(scenario.quantile_selection)
        discharges = scenario.arrival_scale * profile.annual_discharges
        if arrival_rates and profile.class_id in arrival_rates:
            rate = arrival_rates[profile.class_id].scaled(scenario.arrival_scale)
        else:
            if horizon <= sigma:
                raise ValueError(
                    f"class {profile.class_id}: horizon {horizon} must exceed the "
                    f"selected LoS {sigma}"
                )
            rate = PiecewiseRate.constant(discharges / (horizon - sigma), 0.0, horizon)
        class_plans.append((profile, sigma, discharges, rate))

    arrivals_per_rep = []
    departures_per_rep = []
    ppe_per_rep = {ppe: [] for ppe in PpeType}

    for rep in range(first_rep, first_rep + reps):
        rep_arrivals = 0
        rep_departures = 0
        rep_ppe = {ppe: 0.0 for ppe in PpeType}
        for profile, sigma, discharges, rate in class_plans:
            cid = profile.class_id
            if pin_arrivals:
                n_arr = int(round(discharges))
                span = max(horizon - sigma, 0.0)
                arr = (
                    np.linspace(0.0, span, n_arr, endpoint=False)
                    if n_arr
                    else np.empty(0)
                )
            else:
                arr = np.array(
                    simulate_nhpp(
                        rate, rate.support[0], horizon, _stream(seed, rep, cid, 0)
                    )
                )
            if mode == "conditional":
                stays = np.full(len(arr), sigma)
            else:
                stays = los_distributions[cid].sample(
                    _stream(seed, rep, cid, 1), len(arr)
                )
            departs = arr + stays
            departed = (departs >= 0.0) & (departs <= horizon)
            rep_arrivals += len(arr)
            rep_departures += int(np.count_nonzero(departed))

            dep_stays = stays[departed]
            if len(dep_stays):
                rates = np.asarray(profile.daily_rates, dtype=float)
                expected_counts = np.outer(dep_stays, rates)
                if interaction_model == "poisson":
                    counts = _stream(seed, rep, cid, 2).poisson(expected_counts)
                else:
                    counts = expected_counts
                for ppe in PpeType:
                    row = np.asarray(usage.usage_row(ppe, cid), dtype=float)
                    rep_ppe[ppe] += float((counts * row).sum())
        arrivals_per_rep.append(float(rep_arrivals))
        departures_per_rep.append(float(rep_departures))
        for ppe in PpeType:
            ppe_per_rep[ppe].append(rep_ppe[ppe] + staff[ppe])

    return SimulationSummary(
        replications=reps,
        arrivals=RepStats(tuple(arrivals_per_rep)),
        departures=RepStats(tuple(departures_per_rep)),
        ppe={ppe: RepStats(tuple(values)) for ppe, values in ppe_per_rep.items()},
    )


def merge_summaries(chunks: Sequence[SimulationSummary]) -> SimulationSummary:
    """Concatenate per-replication values from consecutive chunks."""
    if not chunks:
        raise ValueError("need at least one chunk")
    arrivals = tuple(v for c in chunks for v in c.arrivals.values)
    departures = tuple(v for c in chunks for v in c.departures.values)
    ppe = {
        ppe: RepStats(tuple(v for c in chunks for v in c.ppe[ppe].values))
        for ppe in chunks[0].ppe
    }
    return SimulationSummary(
        replications=len(arrivals),
        arrivals=RepStats(arrivals),
        departures=RepStats(departures),
        ppe=ppe,
    )


def compare_to_closed_form(summary: SimulationSummary, scenario: Scenario) -> dict:
    """Per PPE type: closed form, Monte Carlo mean, SE, and z-score."""
    report = expected_demand(scenario)
    row = report.rows[0]
    per_ppe = {}
    for ppe in PpeType:
        closed_form = row.total[ppe]
        stats = summary.ppe[ppe]
        diff = stats.mean - closed_form
        if stats.se > 0.0:
            z = diff / stats.se
        else:
            z = 0.0 if abs(diff) <= 1e-9 * max(1.0, abs(closed_form)) else math.inf
        per_ppe[ppe.value] = {
            "closed_form": closed_form,
            "mc_mean": stats.mean,
            "se": stats.se,
            "z": z,
        }
    return {
        "replications": summary.replications,
        "quantile": row.quantile,
        "ppe": per_ppe,
    }


def oracle_comparison(
    scenario: Scenario,
    reps: int,
    seed: int,
    arrival_rates: Optional[Mapping[int, PiecewiseRate]] = None,
    interaction_model: str = "poisson",
) -> dict:
    """Closed form vs conditional-mode Monte Carlo mean, with z-scores."""
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioValidationError(violations)
    summary = simulate_ppe(
        scenario,
        reps=reps,
        seed=seed,
        mode="conditional",
        interaction_model=interaction_model,
        arrival_rates=arrival_rates,
    )
    out = compare_to_closed_form(summary, scenario)
    out["seed"] = seed
    return out


# ---------------------------------------------------------------------------
# Synthetic dataset generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassSpec:
    """Ground-truth description of one synthetic patient class."""

    name: str
    arrival: PiecewiseRate  # over days relative to the window start
    los: LosDistribution
    daily_rates: tuple  # mean daily interaction counts per category
    icu_probability: float = 0.0
    icu_fraction: float = 0.25  # fraction of the stay spent in the ICU
    duplicate_rate: float = 0.0  # chance an event logs burst duplicates

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "arrival": self.arrival.to_json(),
            "los": self.los.to_json(),
            "daily_rates": {
                t.value: self.daily_rates[t.column]
                for t in InteractionType
                if self.daily_rates[t.column] != 0.0
            },
            "icu_probability": self.icu_probability,
            "icu_fraction": self.icu_fraction,
            "duplicate_rate": self.duplicate_rate,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ClassSpec":
        rates = [0.0] * N_INTERACTION_TYPES
        for token, value in obj.get("daily_rates", {}).items():
            rates[InteractionType.from_token(token).column] = float(value)
        return cls(
            name=str(obj["name"]),
            arrival=PiecewiseRate.from_json(obj["arrival"]),
            los=LosDistribution.from_json(obj["los"]),
            daily_rates=tuple(rates),
            icu_probability=float(obj.get("icu_probability", 0.0)),
            icu_fraction=float(obj.get("icu_fraction", 0.25)),
            duplicate_rate=float(obj.get("duplicate_rate", 0.0)),
        )


@dataclass(frozen=True)
class GeneratorSpec:
    classes: tuple
    window_days: float = 365.0
    start_ts: str = "2018-01-01T00:00Z"

    def to_json(self) -> dict:
        return {
            "classes": [c.to_json() for c in self.classes],
            "window_days": self.window_days,
            "start_ts": self.start_ts,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "GeneratorSpec":
        return cls(
            classes=tuple(ClassSpec.from_json(c) for c in obj.get("classes", [])),
            window_days=float(obj.get("window_days", 365.0)),
            start_ts=str(obj.get("start_ts", "2018-01-01T00:00Z")),
        )


def sinusoidal_rate(
    mean: float,
    amplitude: float,
    period_days: float,
    window_days: float,
    piece_days: float = 0.25,
) -> PiecewiseRate:
    """Piecewise-constant approximation of a sinusoidal arrival intensity."""
    if mean < 0 or period_days <= 0 or piece_days <= 0:
        raise ValueError("mean >= 0 and positive period/piece lengths required")
    breakpoints = [0.0]
    while breakpoints[-1] + piece_days < window_days:
        breakpoints.append(breakpoints[-1] + piece_days)
    breakpoints.append(window_days)
    rates = []
    for lo, hi in zip(breakpoints, breakpoints[1:]):
        mid = 0.5 * (lo + hi)
        rates.append(max(0.0, mean + amplitude * math.sin(2.0 * math.pi * mid / period_days)))
    return PiecewiseRate(breakpoints=tuple(breakpoints), rates=tuple(rates))


def default_generator_spec() -> GeneratorSpec:
    """Single stationary class calibrated to a typical ward LoS profile
    (median 4.83 days, quartiles 2.58 and 9.54)."""
    rates = [0.0] * N_INTERACTION_TYPES
    rates[InteractionType.VITAL_SIGNS.column] = 3.5
    rates[InteractionType.MEDICATION_ADMIN.column] = 2.0
    rates[InteractionType.LAB_TEST.column] = 2.3
    rates[InteractionType.XRAY.column] = 0.2
    rates[InteractionType.CT.column] = 0.1
    rates[InteractionType.ROOM_TRANSFER.column] = 0.2
    return GeneratorSpec(
        classes=(
            ClassSpec(
                name="general",
                arrival=PiecewiseRate.constant(10.0, 0.0, 365.0),
                los=lognormal_from_quartiles(2.58, 4.83, 9.54),
                daily_rates=tuple(rates),
                icu_probability=0.07,
                icu_fraction=0.2,
                duplicate_rate=0.25,
            ),
        ),
        window_days=365.0,
    )


_MIN_LOS_DAYS = 2.5 / 1440.0  # rounding to minutes must keep admit < discharge


def generate_synthetic_dataset(spec: GeneratorSpec, seed: int, out_dir) -> dict:
    """Emit admissions/interactions/icu CSVs plus a ground-truth label sidecar.

    Generated rows satisfy every record invariant by construction, so they
    ingest with zero rejects.  Returns the file paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    day0 = parse_timestamp(spec.start_ts)

    admissions_rows = []
    interaction_rows = []
    icu_rows = []
    label_rows = []

    admission_seq = 0
    for ci, cls_spec in enumerate(spec.classes, start=1):
        arrivals = simulate_nhpp(
            cls_spec.arrival, 0.0, spec.window_days, _stream(seed, ci, 0)
        )
        rng = _stream(seed, ci, 1)
        for arrival in arrivals:
            admission_seq += 1
            admission_id = f"adm{admission_seq:06d}"
            patient_id = f"pat{admission_seq:06d}"
            los = max(float(cls_spec.los.sample(rng, 1)[0]), _MIN_LOS_DAYS)
            admit = day0 + arrival
            discharge = admit + los

            icu = []
            if (
                cls_spec.icu_probability > 0.0
                and los >= 0.5
                and rng.random() < cls_spec.icu_probability
            ):
                frac = min(cls_spec.icu_fraction * (0.5 + rng.random()), 0.6)
                icu_len = frac * los
                icu_start = admit + rng.random() * (los - icu_len - 2.0 * _MIN_LOS_DAYS)
                icu.append((icu_start, icu_start + icu_len))

            events = []
            for kind in InteractionType:
                mean_count = cls_spec.daily_rates[kind.column] * los
                if mean_count <= 0.0:
                    continue
                count = int(rng.poisson(mean_count))
                for _ in range(count):
                    ts = admit + rng.random() * los
                    events.append((kind, ts))
                    # repeated charting of one episode: extra stamps minutes apart
                    if cls_spec.duplicate_rate > 0.0 and rng.random() < cls_spec.duplicate_rate:
                        for _ in range(int(rng.integers(1, 3))):
                            burst = ts + rng.random() * (15.0 / 1440.0)
                            events.append((kind, min(burst, discharge)))

            admissions_rows.append(
                (
                    admission_id,
                    patient_id,
                    format_timestamp(admit),
                    format_timestamp(discharge),
                )
            )
            label_rows.append((admission_id, ci))
            for s, e in icu:
                icu_rows.append((admission_id, format_timestamp(s), format_timestamp(e)))
            events.sort(key=lambda ev: (ev[1], ev[0].column))
            for kind, ts in events:
                interaction_rows.append((admission_id, kind.value, format_timestamp(ts)))

    paths = {
        "admissions": out / "admissions.csv",
        "interactions": out / "interactions.csv",
        "icu": out / "icu_stays.csv",
        "labels": out / "labels.csv",
    }
    _write_csv(
        paths["admissions"],
        ("admission_id", "patient_id", "admit_ts", "discharge_ts"),
        admissions_rows,
    )
    _write_csv(
        paths["interactions"], ("admission_id", "interaction_type", "ts"), interaction_rows
    )
    _write_csv(paths["icu"], ("admission_id", "start_ts", "end_ts"), icu_rows)
    _write_csv(paths["labels"], ("admission_id", "true_class"), label_rows)
    return {key: str(path) for key, path in paths.items()}


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)

"""Patient clustering: standardized features, seeded k-means, elbow scan.

Patients are grouped on 16 standardized features (LoS plus 15 daily
interaction rates).  k-means runs Lloyd's algorithm from 25 seeded
k-means++ starts; the elbow scan additionally warm-starts each k from the
previous solution, which guarantees a non-increasing error curve.  Class
profiles (LoS quantiles, mean daily rates, annual discharge counts) are the
hand-off to the forecaster.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ingest import FeatureVector, extract_features
from .model import DAYS_PER_YEAR, PatientClassProfile, PatientRecord

log = logging.getLogger(__name__)

_MAX_ITER = 300


def feature_matrix(features: Sequence[FeatureVector]) -> np.ndarray:
    return np.array([f.as_row() for f in features], dtype=float)


@dataclass(frozen=True)
class Standardization:
    """Z-scored matrix plus the column stats needed to invert it."""

    matrix: np.ndarray
    mean: np.ndarray
    std: np.ndarray  # population (divide by n); zero-variance columns keep std 0
    zero_variance_columns: tuple

    def unstandardize(self, matrix: Optional[np.ndarray] = None) -> np.ndarray:
        z = self.matrix if matrix is None else matrix
        scale = np.where(self.std == 0.0, 1.0, self.std)
        return z * scale + self.mean


def standardize(features) -> Standardization:
    """Z-score each column (population stddev); zero-variance columns -> 0."""
    X = features if isinstance(features, np.ndarray) else feature_matrix(features)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two feature rows to standardize")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population convention, fixed for determinism
    zero_cols = tuple(int(c) for c in np.flatnonzero(std == 0.0))
    if zero_cols:
        log.warning("zero-variance feature columns mapped to 0: %s", zero_cols)
    scale = np.where(std == 0.0, 1.0, std)
    return Standardization(
        matrix=(X - mean) / scale,
        mean=mean,
        std=std,
        zero_variance_columns=zero_cols,
    )


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusteringResult:
    """Converged k-means solution in standardized feature space."""

    k: int
    labels: tuple  # 0-based cluster index per patient
    centroids: np.ndarray
    total_within_sse: float

    def cluster_sizes(self) -> list:
        counts = [0] * self.k
        for label in self.labels:
            counts[label] += 1
        return counts

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "labels": list(self.labels),
            "centroids": [[float(v) for v in row] for row in self.centroids],
            "total_within_sse": self.total_within_sse,
        }


def _sq_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[int(rng.integers(n))]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[i] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[i]) ** 2, axis=1))
    return centroids


def _lloyd(X: np.ndarray, centroids: np.ndarray) -> ClusteringResult:
    n, k = X.shape[0], centroids.shape[0]
    centroids = centroids.copy()
    labels = np.full(n, -1)
    for _ in range(_MAX_ITER):
        d2 = _sq_distances(X, centroids)
        new_labels = d2.argmin(axis=1)
        # Re-seed empty clusters at the point farthest from its own centroid.
        reseeded = set()
        for j in range(k):
            if np.any(new_labels == j):
                continue
            own = d2[np.arange(n), new_labels].astype(float)
            for taken in reseeded:
                own[taken] = -np.inf
            far = int(own.argmax())
            centroids[j] = X[far]
            new_labels[far] = j
            reseeded.add(far)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            centroids[j] = X[labels == j].mean(axis=0)
    final_d2 = _sq_distances(X, centroids)
    sse = float(final_d2[np.arange(n), labels].sum())
    return ClusteringResult(
        k=k,
        labels=tuple(int(v) for v in labels),
        centroids=centroids,
        total_within_sse=sse,
    )


def kmeans(
    X: np.ndarray,
    k: int,
    n_starts: int = 25,
    seed: int = 0,
    initial_centroids: Optional[np.ndarray] = None,
) -> ClusteringResult:
    """Best of `n_starts` seeded k-means++ runs (plus an optional warm start).

    Fully deterministic in (X, k, n_starts, seed); ties between starts keep
    the earliest one.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > X.shape[0]:
        raise ValueError(f"k={k} exceeds the number of points {X.shape[0]}")
    best: Optional[ClusteringResult] = None
    for start in range(n_starts):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k, start]))
        result = _lloyd(X, _kmeanspp_init(X, k, rng))
        if best is None or result.total_within_sse < best.total_within_sse:
            best = result
    if initial_centroids is not None:
        result = _lloyd(X, np.asarray(initial_centroids, dtype=float))
        if best is None or result.total_within_sse < best.total_within_sse:
            best = result
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# Elbow scan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ElbowResult:
    ks: tuple
    sse: tuple
    suggested_k: Optional[int]
    results: dict  # k -> ClusteringResult

    def to_json(self) -> dict:
        return {
            "ks": list(self.ks),
            "sse": list(self.sse),
            "suggested_k": self.suggested_k,
        }


def _pad_centroids(X: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    """Grow a centroid set to size k by adding the farthest points."""
    out = centroids.copy()
    while out.shape[0] < k:
        d2 = _sq_distances(X, out).min(axis=1)
        out = np.vstack([out, X[int(d2.argmax())]])
    return out


def elbow_scan(
    X: np.ndarray, k_range: Sequence[int], seed: int = 0, n_starts: int = 25
) -> ElbowResult:
    """SSE curve over k with a curvature-based suggestion.

    Each k gets the usual randomized starts plus a warm start built from the
    previous solution's centroids padded with the farthest points, so the
    curve is non-increasing by construction.  The suggestion (largest second
    difference of the curve) is advisory; the operator may override it.
    """
    ks = list(k_range)
    if not ks:
        raise ValueError("k_range must be non-empty")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("k_range must be ascending")
    results = {}
    sse = []
    previous: Optional[ClusteringResult] = None
    for k in ks:
        warm = None
        if previous is not None and previous.k <= k:
            warm = _pad_centroids(X, previous.centroids, k)
        result = kmeans(X, k, n_starts=n_starts, seed=seed, initial_centroids=warm)
        results[k] = result
        sse.append(result.total_within_sse)
        previous = result

    suggested = None
    if len(ks) >= 3:
        best_curvature = -np.inf
        for i in range(1, len(ks) - 1):
            curvature = sse[i - 1] - 2.0 * sse[i] + sse[i + 1]
            if curvature > best_curvature:
                best_curvature = curvature
                suggested = ks[i]
    return ElbowResult(ks=tuple(ks), sse=tuple(sse), suggested_k=suggested, results=results)


# ---------------------------------------------------------------------------
# Class profiles
# ---------------------------------------------------------------------------

_QUANTILE_LABELS = (("min", 0.0), ("q1", 0.25), ("median", 0.5), ("q3", 0.75), ("max", 1.0))


def read_embedding_csv(path) -> dict:
    """Optional externally computed 2-D embedding: admission_id -> (x, y).

    Used purely for scatter-plot export alongside cluster assignments; the
    clustering itself always runs on the standardized features.
    """
    import csv as _csv

    points = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["admission_id", "x", "y"]:
            raise ValueError(f"{path}: expected header admission_id,x,y")
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}: expected 3 fields, got {len(row)}")
            points[row[0].strip()] = (float(row[1]), float(row[2]))
    return points


def scatter_export_csv(records, labels, embedding: dict) -> str:
    """Rows `admission_id,x,y,class_id` for admissions present in the embedding."""
    lines = ["admission_id,x,y,class_id"]
    for record, label in zip(records, labels):
        point = embedding.get(record.admission_id)
        if point is not None:
            lines.append(
                f"{record.admission_id},{point[0]!r},{point[1]!r},{label + 1}"
            )
    return "\n".join(lines) + "\n"


def build_class_profiles(
    records: Sequence[PatientRecord],
    assignments: Sequence[int],
    reference_year: tuple,
    features: Optional[Sequence[FeatureVector]] = None,
    window_hours: float = 1.0,
) -> list:
    """Aggregate per-cluster LoS quantiles, mean daily rates, and volumes.

    `assignments` holds 0-based cluster labels aligned with `records`;
    emitted class ids are 1-based.  Annual discharges count the members
    discharged inside `reference_year` (epoch days), scaled to a 365-day
    year when the window differs.
    """
    if len(assignments) != len(records):
        raise ValueError(
            f"{len(assignments)} assignments do not cover {len(records)} records"
        )
    if features is None:
        extraction = extract_features(records, window_hours=window_hours)
        if len(extraction.records) != len(records):
            raise ValueError(
                "records with non-positive effective LoS cannot be profiled; "
                "filter them before assignment"
            )
        features = extraction.features

    ref_start, ref_end = float(reference_year[0]), float(reference_year[1])
    if ref_end <= ref_start:
        raise ValueError("reference year window must have positive length")
    year_scale = DAYS_PER_YEAR / (ref_end - ref_start)

    by_label: dict = {}
    for idx, label in enumerate(assignments):
        by_label.setdefault(int(label), []).append(idx)

    profiles = []
    for label in sorted(by_label):
        members = by_label[label]
        if not members:
            raise ValueError(f"cluster {label} has no members")
        class_id = label + 1
        if len(members) < 10:
            log.warning(
                "los_estimate_unreliable: class %d has only %d members",
                class_id,
                len(members),
            )
        los = np.array([features[i].los_days for i in members])
        rates = np.array([features[i].daily_rates for i in members])
        discharges = sum(
            1
            for i in members
            if ref_start <= records[i].discharge_day < ref_end
        )
        profiles.append(
            PatientClassProfile(
                class_id=class_id,
                los_quantiles={
                    name: float(np.quantile(los, q)) for name, q in _QUANTILE_LABELS
                },
                daily_rates=tuple(float(v) for v in rates.mean(axis=0)),
                annual_discharges=discharges * year_scale,
                member_count=len(members),
            )
        )
    return profiles

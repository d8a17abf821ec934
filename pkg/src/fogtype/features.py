"""Per-timestep feature matrices (sets A-G) and per-file summary vectors.

Fixed column orders per set:
    A = [AccV, AccML, AccAP]
    B = A + [TimeFrac]
    C = B + [JerkV, JerkML, JerkAP]
    D = C + [AccM, JerkM]
    E = C + [Gender, Medication]
    F = D + [Gender, Medication]
    G = C + one-hot subject-cluster columns
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .data import Medication, Sex, Subject, TimeSeries, TrialMetadata
from .errors import IntegrityError, ShapeError, ValidationError

# Columns that get z-scored by `standardize`; TimeFrac, Gender, Medication
# and cluster one-hots pass through unchanged.
SIGNAL_COLUMNS = frozenset(
    ["AccV", "AccML", "AccAP", "JerkV", "JerkML", "JerkAP", "AccM", "JerkM"]
)


class FeatureSetId(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"
    G = "G"


@dataclass(frozen=True)
class FeatureMatrix:
    trial_id: str
    set_id: FeatureSetId
    columns: tuple[str, ...]
    values: np.ndarray  # (T, D) float64

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise ShapeError(
                f"feature matrix shape {values.shape} does not match "
                f"{len(self.columns)} columns"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))


@dataclass(frozen=True)
class SummaryVector:
    """12 per-file statistics: (mean, max, min, std) for each of AccV,
    AccML, AccAP, in that order. std is the population standard deviation.
    """

    trial_id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (12,):
            raise ShapeError(f"summary vector must have 12 entries, got {values.shape}")
        object.__setattr__(self, "values", values)


SUMMARY_COLUMNS = tuple(
    f"{ch}_{stat}" for ch in ("AccV", "AccML", "AccAP") for stat in ("mean", "max", "min", "std")
)


def compute_time_frac(t_len: int) -> np.ndarray:
    """Elapsed-time fraction i/(T-1), endpoint-inclusive; [0.0] for T=1."""
    if t_len < 1:
        raise ValidationError("time fraction undefined for an empty series")
    if t_len == 1:
        return np.zeros(1)
    return np.arange(t_len, dtype=np.float64) / (t_len - 1)


def compute_jerk(channel: np.ndarray, sample_rate_hz: float) -> np.ndarray:
    """First difference scaled by the sample rate (m/s^3), zero-padded at
    index 0 so the result keeps T rows.
    """
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 1 or channel.shape[0] < 1:
        raise ValidationError("jerk requires a non-empty 1-D channel")
    jerk = np.zeros_like(channel)
    jerk[1:] = np.diff(channel) * sample_rate_hz
    return jerk


def compute_magnitude(acc_v, acc_ml, acc_ap) -> np.ndarray:
    v, ml, ap = (np.asarray(a, dtype=np.float64) for a in (acc_v, acc_ml, acc_ap))
    if not (v.shape == ml.shape == ap.shape):
        raise ShapeError(f"channel lengths differ: {v.shape}, {ml.shape}, {ap.shape}")
    return np.sqrt(v * v + ml * ml + ap * ap)


def feature_columns(
    set_id: FeatureSetId, n_clusters: int | None = None
) -> tuple[str, ...]:
    """The fixed column order for a feature set (set G needs the cluster
    count for its one-hot block)."""
    base_c = ("AccV", "AccML", "AccAP", "TimeFrac", "JerkV", "JerkML", "JerkAP")
    if set_id is FeatureSetId.A:
        return base_c[:3]
    if set_id is FeatureSetId.B:
        return base_c[:4]
    if set_id is FeatureSetId.C:
        return base_c
    if set_id is FeatureSetId.D:
        return base_c + ("AccM", "JerkM")
    if set_id is FeatureSetId.E:
        return base_c + ("Gender", "Medication")
    if set_id is FeatureSetId.F:
        return base_c + ("AccM", "JerkM", "Gender", "Medication")
    if n_clusters is None:
        raise ValidationError("set G column order requires the cluster count")
    return base_c + tuple(f"Cluster{i}" for i in range(n_clusters))


def build_feature_matrix(
    series: TimeSeries,
    set_id: FeatureSetId,
    meta: TrialMetadata | None = None,
    subject: Subject | None = None,
    cluster_map: Mapping[str, int] | None = None,
    n_clusters: int | None = None,
) -> FeatureMatrix:
    """Assemble the feature matrix for one trial.

    The series must be unit-harmonized first. Sets E/F need `meta` and
    `subject` (Gender male=1, Medication on=1, broadcast as constant
    columns); set G needs `meta` plus a subject -> cluster map.
    """
    if not series.units_harmonized:
        raise ValidationError(
            f"trial {series.trial_id!r}: harmonize units before building features"
        )
    t_len = series.n_timesteps
    rate = series.sample_rate_hz

    cols: list[np.ndarray] = [series.acc_v, series.acc_ml, series.acc_ap]
    if set_id is not FeatureSetId.A:
        cols.append(compute_time_frac(t_len))
    if set_id is not FeatureSetId.A and set_id is not FeatureSetId.B:
        cols.extend(compute_jerk(ch, rate) for ch in (series.acc_v, series.acc_ml, series.acc_ap))
    if set_id in (FeatureSetId.D, FeatureSetId.F):
        magnitude = compute_magnitude(series.acc_v, series.acc_ml, series.acc_ap)
        cols.append(magnitude)
        cols.append(compute_jerk(magnitude, rate))
    if set_id in (FeatureSetId.E, FeatureSetId.F):
        if meta is None or subject is None:
            raise ValidationError(f"set {set_id.value} requires metadata and subject records")
        gender = 1.0 if subject.sex is Sex.MALE else 0.0
        medication = 1.0 if meta.medication is Medication.ON else 0.0
        cols.append(np.full(t_len, gender))
        cols.append(np.full(t_len, medication))

    k = n_clusters
    if set_id is FeatureSetId.G:
        if cluster_map is None:
            raise ValidationError("set G requires a subject cluster map")
        if meta is None:
            raise ValidationError("set G requires trial metadata to find the subject")
        if meta.subject_id not in cluster_map:
            raise IntegrityError(
                f"subject {meta.subject_id!r} missing from the cluster map"
            )
        if k is None:
            k = max(cluster_map.values()) + 1
        one_hot = np.zeros((t_len, k))
        one_hot[:, cluster_map[meta.subject_id]] = 1.0
        cols.extend(one_hot.T)

    return FeatureMatrix(
        trial_id=series.trial_id,
        set_id=set_id,
        columns=feature_columns(set_id, n_clusters=k),
        values=np.column_stack(cols),
    )


def file_summary_vector(series: TimeSeries) -> SummaryVector:
    """12-dimensional per-file statistics vector."""
    values = []
    for channel in (series.acc_v, series.acc_ml, series.acc_ap):
        values.extend(
            [channel.mean(), channel.max(), channel.min(), channel.std()]
        )
    return SummaryVector(trial_id=series.trial_id, values=np.asarray(values))


@dataclass(frozen=True)
class ColumnStats:
    """Per-column mean/std frozen from training-split matrices."""

    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray


def fit_column_stats(matrices: Sequence[FeatureMatrix]) -> ColumnStats:
    """Pool all rows of the given (training-split) matrices and compute
    per-column mean and population std."""
    if not matrices:
        raise ValidationError("need at least one matrix to fit column stats")
    columns = matrices[0].columns
    for m in matrices[1:]:
        if m.columns != columns:
            raise IntegrityError(f"column mismatch: {m.columns} vs {columns}")
    stacked = np.concatenate([m.values for m in matrices], axis=0)
    return ColumnStats(columns=columns, mean=stacked.mean(axis=0), std=stacked.std(axis=0))


def standardize(matrix: FeatureMatrix, stats: ColumnStats) -> FeatureMatrix:
    """Z-score the acceleration/jerk/magnitude columns using training-split
    stats; other columns (and zero-std columns) pass through unchanged."""
    if matrix.columns != stats.columns:
        raise IntegrityError(f"column mismatch: {matrix.columns} vs {stats.columns}")
    values = matrix.values.copy()
    for j, name in enumerate(matrix.columns):
        if name in SIGNAL_COLUMNS and stats.std[j] > 0.0:
            values[:, j] = (values[:, j] - stats.mean[j]) / stats.std[j]
    return FeatureMatrix(
        trial_id=matrix.trial_id, set_id=matrix.set_id, columns=matrix.columns, values=values
    )

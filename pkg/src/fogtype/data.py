"""Dataset domain model: trial time series, metadata, subjects, CSV I/O,
unit harmonization, and a synthetic trial generator for desk-scale runs.

Three file families exist. Defog and Notype trials are recorded at 124 Hz
with acceleration stored in units of g (9.81 m/s^2); Tdcsfog trials are
recorded at 100 Hz in m/s^2. `harmonize_units` converts everything to m/s^2
exactly once.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import IntegrityError, ParseError, SchemaError, ValidationError

GRAVITY_MS2 = 9.81

EVENT_TYPES = ("start_hesitation", "turn", "walking")

TYPED_HEADER = ["Time", "AccV", "AccML", "AccAP", "StartHesitation", "Turn", "Walking"]
NOTYPE_HEADER = ["Time", "AccV", "AccML", "AccAP", "Event"]
METADATA_HEADER = ["Id", "Subject", "Medication"]
SUBJECTS_HEADER = ["Subject", "Age", "Sex", "YearsSinceDx", "UPDRS_On", "UPDRS_Off", "NFOGQ"]


class Domain(str, Enum):
    DEFOG = "defog"
    TDCSFOG = "tdcsfog"
    NOTYPE = "notype"

    @property
    def sample_rate_hz(self) -> float:
        return 100.0 if self is Domain.TDCSFOG else 124.0

    @property
    def stored_in_g(self) -> bool:
        """Whether raw files store acceleration in units of g."""
        return self is not Domain.TDCSFOG


class Medication(str, Enum):
    ON = "on"
    OFF = "off"


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"


def format_number(x: float) -> str:
    """Decimal text with up to 9 significant digits (round-trip stable)."""
    return f"{x:.9g}"


@dataclass(frozen=True)
class TimeSeries:
    """One trial's 3-axis acceleration plus per-timestep event labels.

    `labels` has shape (T, 3) for Defog/Tdcsfog (StartHesitation, Turn,
    Walking) and (T, 1) for Notype (Event). Arrays are made read-only so a
    constructed series is safe to share across workers.
    """

    trial_id: str
    domain: Domain
    acc_v: np.ndarray
    acc_ml: np.ndarray
    acc_ap: np.ndarray
    labels: np.ndarray
    units_harmonized: bool = False

    def __post_init__(self):
        for name in ("acc_v", "acc_ml", "acc_ap"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 2:
            raise ValidationError(f"labels must be 2-D, got shape {labels.shape}")
        object.__setattr__(self, "labels", labels)

        t = self.acc_v.shape[0]
        if t < 1:
            raise ValidationError(f"trial {self.trial_id!r}: empty series")
        for name in ("acc_v", "acc_ml", "acc_ap"):
            arr = getattr(self, name)
            if arr.ndim != 1 or arr.shape[0] != t:
                raise ValidationError(
                    f"trial {self.trial_id!r}: channel {name} length {arr.shape} != {t}"
                )
        expected_cols = 1 if self.domain is Domain.NOTYPE else 3
        if labels.shape != (t, expected_cols):
            raise ValidationError(
                f"trial {self.trial_id!r}: labels shape {labels.shape}, "
                f"expected ({t}, {expected_cols})"
            )
        if not np.isin(labels, (0, 1)).all():
            raise ValidationError(f"trial {self.trial_id!r}: labels must be 0/1")
        if expected_cols == 3 and (labels.sum(axis=1) > 1).any():
            row = int(np.argmax(labels.sum(axis=1) > 1))
            raise ValidationError(
                f"trial {self.trial_id!r}: multiple event types at timestep {row}"
            )
        for name in ("acc_v", "acc_ml", "acc_ap", "labels"):
            getattr(self, name).flags.writeable = False

    @property
    def n_timesteps(self) -> int:
        return self.acc_v.shape[0]

    @property
    def sample_rate_hz(self) -> float:
        return self.domain.sample_rate_hz

    def channels(self) -> np.ndarray:
        """(T, 3) array of [AccV, AccML, AccAP]."""
        return np.column_stack([self.acc_v, self.acc_ml, self.acc_ap])


@dataclass(frozen=True)
class TrialMetadata:
    trial_id: str
    subject_id: str
    medication: Medication


@dataclass(frozen=True)
class Subject:
    subject_id: str
    age: float
    sex: Sex
    years_since_dx: float
    updrs_on: float
    updrs_off: float
    nfogq: float

    def __post_init__(self):
        if self.age <= 0:
            raise ValidationError(f"subject {self.subject_id!r}: age must be > 0")
        if self.nfogq < 0:
            raise ValidationError(f"subject {self.subject_id!r}: nfogq must be >= 0")


@dataclass
class Dataset:
    """All trials plus their metadata and subject records.

    `pseudo` flags trials that carry generated labels; it maps trial_id to
    the provenance record attached by the pseudolabel stage.
    """

    series: dict[str, TimeSeries]
    metadata: dict[str, TrialMetadata]
    subjects: dict[str, Subject]
    pseudo: dict[str, object] = field(default_factory=dict)

    def validate(self) -> None:
        for trial_id in self.series:
            if trial_id not in self.metadata:
                raise IntegrityError(f"trial {trial_id!r} has no metadata row")
        for meta in self.metadata.values():
            if meta.subject_id not in self.subjects:
                raise IntegrityError(
                    f"metadata for trial {meta.trial_id!r} references unknown "
                    f"subject {meta.subject_id!r}"
                )

    def subject_for_trial(self, trial_id: str) -> Subject:
        meta = self.metadata[trial_id]
        return self.subjects[meta.subject_id]


# ---------------------------------------------------------------------------
# CSV parsing helpers
# ---------------------------------------------------------------------------


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)
    return [h.strip() for h in header], rows


def _column_indices(path: Path, header: list[str], required: Sequence[str]) -> list[int]:
    """Indices of `required` columns; unknown extras warn, missing raise."""
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}; header was {header}")
    extra = [c for c in header if c not in required]
    if extra:
        warnings.warn(f"{path}: ignoring unknown column(s) {extra}", stacklevel=3)
    return [header.index(c) for c in required]


def _parse_float(cell: str, path: Path, row_idx: int, col: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(
            f"{path}: non-numeric value {cell!r} in column {col} at data row {row_idx}"
        ) from None


def load_time_series(path: str | Path, domain: Domain) -> TimeSeries:
    """Parse one trial file. The filename stem is the trial id.

    Raises SchemaError for a bad header, ParseError (with the data row
    index) for non-numeric cells or ragged rows, ValidationError for label
    values outside {0, 1} or overlapping event types.
    """
    path = Path(path)
    required = NOTYPE_HEADER if domain is Domain.NOTYPE else TYPED_HEADER
    header, rows = _read_rows(path)
    indices = _column_indices(path, header, required)
    n_cols = len(header)

    t = len(rows)
    channels = np.empty((t, 3), dtype=np.float64)
    labels = np.empty((t, len(required) - 4), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != n_cols:
            raise ParseError(
                f"{path}: ragged row at data row {i} ({len(row)} fields, expected {n_cols})"
            )
        time_val = _parse_float(row[indices[0]], path, i, required[0])
        if time_val != int(time_val):
            raise ParseError(f"{path}: Time must be an integer index at data row {i}")
        for j in range(3):
            channels[i, j] = _parse_float(row[indices[1 + j]], path, i, required[1 + j])
        for j in range(labels.shape[1]):
            val = _parse_float(row[indices[4 + j]], path, i, required[4 + j])
            labels[i, j] = int(val)
            if val not in (0.0, 1.0):
                raise ValidationError(
                    f"{path}: label {required[4 + j]} must be 0/1 at data row {i}"
                )

    return TimeSeries(
        trial_id=path.stem,
        domain=domain,
        acc_v=channels[:, 0],
        acc_ml=channels[:, 1],
        acc_ap=channels[:, 2],
        labels=labels,
        units_harmonized=False,
    )


def write_time_series(series: TimeSeries, path: str | Path) -> None:
    """Emit the trial in its domain's CSV schema (values as stored).

    Numbers use up to 9 significant digits, so write -> load -> write is
    byte-stable.
    """
    path = Path(path)
    header = NOTYPE_HEADER if series.domain is Domain.NOTYPE else TYPED_HEADER
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(series.n_timesteps):
            row = [
                str(i),
                format_number(series.acc_v[i]),
                format_number(series.acc_ml[i]),
                format_number(series.acc_ap[i]),
            ]
            row.extend(str(int(v)) for v in series.labels[i])
            writer.writerow(row)


def load_metadata_and_subjects(
    meta_paths: Sequence[str | Path], subject_path: str | Path
) -> tuple[dict[str, TrialMetadata], dict[str, Subject]]:
    """Load trial metadata files plus the subject file.

    Duplicate trial or subject ids raise IntegrityError; a medication value
    outside {on, off} raises ValidationError.
    """
    metadata: dict[str, TrialMetadata] = {}
    for meta_path in meta_paths:
        meta_path = Path(meta_path)
        header, rows = _read_rows(meta_path)
        idx = _column_indices(meta_path, header, METADATA_HEADER)
        for i, row in enumerate(rows):
            if len(row) != len(header):
                raise ParseError(f"{meta_path}: ragged row at data row {i}")
            trial_id = row[idx[0]].strip()
            if trial_id in metadata:
                raise IntegrityError(f"{meta_path}: duplicate trial id {trial_id!r}")
            med_raw = row[idx[2]].strip().lower()
            try:
                medication = Medication(med_raw)
            except ValueError:
                raise ValidationError(
                    f"{meta_path}: medication must be 'on' or 'off', got {row[idx[2]]!r} "
                    f"at data row {i}"
                ) from None
            metadata[trial_id] = TrialMetadata(
                trial_id=trial_id, subject_id=row[idx[1]].strip(), medication=medication
            )

    subject_path = Path(subject_path)
    header, rows = _read_rows(subject_path)
    idx = _column_indices(subject_path, header, SUBJECTS_HEADER)
    subjects: dict[str, Subject] = {}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"{subject_path}: ragged row at data row {i}")
        subject_id = row[idx[0]].strip()
        if subject_id in subjects:
            raise IntegrityError(f"{subject_path}: duplicate subject id {subject_id!r}")
        sex_raw = row[idx[2]].strip().lower()
        sex = {"m": Sex.MALE, "male": Sex.MALE, "f": Sex.FEMALE, "female": Sex.FEMALE}.get(sex_raw)
        if sex is None:
            raise ValidationError(
                f"{subject_path}: unrecognized sex value {row[idx[2]]!r} at data row {i}"
            )
        numeric = [
            _parse_float(row[idx[j]], subject_path, i, SUBJECTS_HEADER[j]) for j in (1, 3, 4, 5, 6)
        ]
        subjects[subject_id] = Subject(
            subject_id=subject_id,
            age=numeric[0],
            sex=sex,
            years_since_dx=numeric[1],
            updrs_on=numeric[2],
            updrs_off=numeric[3],
            nfogq=numeric[4],
        )
    return metadata, subjects


def harmonize_units(series: TimeSeries) -> TimeSeries:
    """Return a copy with all channels in m/s^2.

    Defog/Notype channels are multiplied by 9.81; Tdcsfog is already in
    m/s^2. Calling this twice on the same trial would double-scale, so a
    second call raises ValidationError.
    """
    if series.units_harmonized:
        raise ValidationError(f"trial {series.trial_id!r}: units already harmonized")
    scale = GRAVITY_MS2 if series.domain.stored_in_g else 1.0
    return TimeSeries(
        trial_id=series.trial_id,
        domain=series.domain,
        acc_v=series.acc_v * scale,
        acc_ml=series.acc_ml * scale,
        acc_ap=series.acc_ap * scale,
        labels=series.labels,
        units_harmonized=True,
    )


# ---------------------------------------------------------------------------
# Synthetic trial generation
# ---------------------------------------------------------------------------

# Base gait amplitude (m/s^2) differs per recording regime so the two file
# families remain separable in summary statistics, mirroring the home/lab
# acquisition difference.
_BASE_AMPLITUDE = {Domain.DEFOG: 1.0, Domain.NOTYPE: 1.0, Domain.TDCSFOG: 2.5}
_NOISE_STD = 0.1
_EPISODE_DAMPING = 0.5
_TREMOR_HZ = 6.0
_TREMOR_AMPLITUDE = 0.8
# Each event type expresses its tremor mainly on one axis (V, ML, AP) so the
# three classes are mutually distinguishable by a learned model.
_TYPE_CHANNEL = {"start_hesitation": 2, "turn": 1, "walking": 0}
_GRAVITY_OFFSET = (-9.8, 0.0, 0.0)  # resting V channel sits near -1 g
_CHANNEL_PHASE = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)


def _validate_episodes(
    episodes: Sequence[tuple[str, float, float]], domain: Domain, duration_s: float
) -> list[tuple[str, float, float]]:
    valid_types = set(EVENT_TYPES) | ({"event"} if domain is Domain.NOTYPE else set())
    ordered = sorted(episodes, key=lambda e: e[1])
    prev_end = 0.0
    for ev_type, start_s, len_s in ordered:
        if ev_type not in valid_types:
            raise ValidationError(f"episode type {ev_type!r} invalid for domain {domain.value}")
        if len_s <= 0:
            raise ValidationError(f"episode length must be positive, got {len_s}")
        if start_s < 0 or start_s + len_s > duration_s:
            raise ValidationError(
                f"episode ({ev_type}, {start_s}, {len_s}) outside [0, {duration_s}]"
            )
        if start_s < prev_end:
            raise ValidationError(f"episodes overlap at {start_s} s")
        prev_end = start_s + len_s
    return ordered


def generate_trial(
    seed: int,
    domain: Domain,
    duration_s: float,
    episodes: Sequence[tuple[str, float, float]],
    trial_id: str | None = None,
) -> TimeSeries:
    """Synthesize one trial: sinusoidal gait plus seeded noise, with
    FOG-like episodes (damped amplitude plus a 6 Hz tremor component).

    `episodes` is a list of (event_type, start_s, length_s). Typed domains
    accept the three event types; Notype additionally accepts "event" (an
    episode with no per-axis type signature). The series is returned in raw
    stored units (g for Defog/Notype), deterministic in `seed`.
    """
    episodes = _validate_episodes(episodes, domain, duration_s)
    rate = domain.sample_rate_hz
    t_len = int(round(duration_s * rate))
    if t_len < 1:
        raise ValidationError(f"duration {duration_s} s too short at {rate} Hz")
    rng = np.random.default_rng(seed)
    time_s = np.arange(t_len) / rate

    amp = _BASE_AMPLITUDE[domain]
    osc = np.empty((t_len, 3))
    for c, phase in enumerate(_CHANNEL_PHASE):
        osc[:, c] = amp * (
            np.sin(2.0 * math.pi * 1.0 * time_s + phase)
            + 0.5 * np.sin(2.0 * math.pi * 2.0 * time_s + 2.0 * phase)
        )
    noise = rng.normal(0.0, _NOISE_STD, size=(t_len, 3))

    n_label_cols = 1 if domain is Domain.NOTYPE else 3
    labels = np.zeros((t_len, n_label_cols), dtype=np.int64)
    tremor = np.zeros((t_len, 3))
    for ev_type, start_s, len_s in episodes:
        lo = int(round(start_s * rate))
        hi = min(int(round((start_s + len_s) * rate)), t_len)
        if hi <= lo:
            continue
        osc[lo:hi] *= _EPISODE_DAMPING
        wave = _TREMOR_AMPLITUDE * np.sin(2.0 * math.pi * _TREMOR_HZ * time_s[lo:hi])
        if ev_type == "event":
            tremor[lo:hi] += wave[:, None] / 3.0
        else:
            focus = _TYPE_CHANNEL[ev_type]
            for c in range(3):
                tremor[lo:hi, c] += wave * (1.0 if c == focus else 0.25)
        if domain is Domain.NOTYPE:
            labels[lo:hi, 0] = 1
        else:
            labels[lo:hi, EVENT_TYPES.index(ev_type)] = 1

    physical = osc + tremor + noise + np.asarray(_GRAVITY_OFFSET)
    stored = physical / GRAVITY_MS2 if domain.stored_in_g else physical
    return TimeSeries(
        trial_id=trial_id or f"syn_{domain.value}_{seed}",
        domain=domain,
        acc_v=stored[:, 0],
        acc_ml=stored[:, 1],
        acc_ap=stored[:, 2],
        labels=labels,
        units_harmonized=False,
    )


def random_episodes(
    rng: np.random.Generator,
    domain: Domain,
    duration_s: float,
    n_episodes: int,
    type_offset: int = 0,
) -> list[tuple[str, float, float]]:
    """Non-overlapping episodes in equal slots, event types cycling."""
    episodes = []
    slot = duration_s / max(n_episodes, 1)
    for i in range(n_episodes):
        ev_type = EVENT_TYPES[(type_offset + i) % 3]
        length = float(rng.uniform(0.35, 0.6) * slot)
        start = float(i * slot + rng.uniform(0.05, 0.3) * slot)
        episodes.append((ev_type, start, length))
    return episodes


def build_corpus(
    seed: int,
    n_defog: int,
    n_tdcsfog: int,
    n_notype: int = 0,
    n_subjects: int = 6,
    duration_s: float = 8.0,
    episodes_per_trial: int = 2,
) -> Dataset:
    """Deterministic synthetic corpus with metadata and subject records."""
    root = np.random.default_rng(seed)
    subjects: dict[str, Subject] = {}
    for i in range(n_subjects):
        sid = f"sub{i:03d}"
        subjects[sid] = Subject(
            subject_id=sid,
            age=float(round(root.uniform(55.0, 80.0), 1)),
            sex=Sex.MALE if i % 2 == 0 else Sex.FEMALE,
            years_since_dx=float(round(root.uniform(2.0, 15.0), 1)),
            updrs_on=float(round(root.uniform(10.0, 40.0), 1)),
            updrs_off=float(round(root.uniform(20.0, 60.0), 1)),
            nfogq=0.0 if i == 0 else float(round(root.uniform(1.0, 28.0), 1)),
        )
    subject_ids = list(subjects)

    series: dict[str, TimeSeries] = {}
    metadata: dict[str, TrialMetadata] = {}
    counts = [(Domain.DEFOG, n_defog), (Domain.TDCSFOG, n_tdcsfog), (Domain.NOTYPE, n_notype)]
    trial_counter = 0
    for domain, count in counts:
        for i in range(count):
            trial_id = f"{domain.value}{i:03d}"
            trial_seed = int(root.integers(0, 2**31 - 1))
            episodes = random_episodes(
                root, domain, duration_s, episodes_per_trial, type_offset=trial_counter
            )
            series[trial_id] = generate_trial(
                trial_seed, domain, duration_s, episodes, trial_id=trial_id
            )
            metadata[trial_id] = TrialMetadata(
                trial_id=trial_id,
                subject_id=subject_ids[trial_counter % n_subjects],
                medication=Medication.ON if trial_counter % 2 == 0 else Medication.OFF,
            )
            trial_counter += 1

    dataset = Dataset(series=series, metadata=metadata, subjects=subjects)
    dataset.validate()
    return dataset


# ---------------------------------------------------------------------------
# Corpus directory layout (used by the CLI)
# ---------------------------------------------------------------------------


def write_corpus_dir(dataset: Dataset, out_dir: str | Path) -> None:
    """Write a dataset as the on-disk corpus layout:

    <out>/defog/*.csv, <out>/tdcsfog/*.csv, <out>/notype/*.csv,
    <out>/defog_metadata.csv (covers Defog and Notype trials),
    <out>/tdcsfog_metadata.csv, <out>/subjects.csv.
    """
    out_dir = Path(out_dir)
    for domain in Domain:
        (out_dir / domain.value).mkdir(parents=True, exist_ok=True)
    for trial_id, series in sorted(dataset.series.items()):
        write_time_series(series, out_dir / series.domain.value / f"{trial_id}.csv")

    def _write_meta(path, rows):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METADATA_HEADER)
            for meta in rows:
                writer.writerow([meta.trial_id, meta.subject_id, meta.medication.value])

    defog_rows = [
        dataset.metadata[tid]
        for tid in sorted(dataset.series)
        if dataset.series[tid].domain in (Domain.DEFOG, Domain.NOTYPE)
    ]
    tdcs_rows = [
        dataset.metadata[tid]
        for tid in sorted(dataset.series)
        if dataset.series[tid].domain is Domain.TDCSFOG
    ]
    _write_meta(out_dir / "defog_metadata.csv", defog_rows)
    _write_meta(out_dir / "tdcsfog_metadata.csv", tdcs_rows)

    with open(out_dir / "subjects.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUBJECTS_HEADER)
        for sid in sorted(dataset.subjects):
            s = dataset.subjects[sid]
            writer.writerow(
                [
                    s.subject_id,
                    format_number(s.age),
                    "M" if s.sex is Sex.MALE else "F",
                    format_number(s.years_since_dx),
                    format_number(s.updrs_on),
                    format_number(s.updrs_off),
                    format_number(s.nfogq),
                ]
            )


def load_corpus_dir(data_dir: str | Path, domains: Iterable[Domain] = tuple(Domain)) -> Dataset:
    """Load a corpus directory written by `write_corpus_dir` (or assembled
    by hand in the same layout). Missing domain subdirectories are fine.
    """
    data_dir = Path(data_dir)
    meta_paths = [
        p for p in (data_dir / "defog_metadata.csv", data_dir / "tdcsfog_metadata.csv") if p.exists()
    ]
    if not meta_paths:
        raise SchemaError(f"{data_dir}: no metadata files found")
    metadata, subjects = load_metadata_and_subjects(meta_paths, data_dir / "subjects.csv")

    series: dict[str, TimeSeries] = {}
    for domain in domains:
        subdir = data_dir / domain.value
        if not subdir.is_dir():
            continue
        for path in sorted(subdir.glob("*.csv")):
            ts = load_time_series(path, domain)
            if ts.trial_id in series:
                raise IntegrityError(f"duplicate trial id {ts.trial_id!r}")
            series[ts.trial_id] = ts

    dataset = Dataset(series=series, metadata=metadata, subjects=subjects)
    dataset.validate()
    return dataset

"""Semi-pseudo-labeling: turn Notype event flags into typed labels using a
model group's class probabilities, and assemble the augmented Defog
training pool.

Where Event=1 the class with the highest predicted probability gets a 1
(ties resolved toward the lowest class index: start_hesitation < turn <
walking); where Event=0 all three generated columns stay 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, Domain, TimeSeries, write_time_series
from .errors import IntegrityError, ShapeError, ValidationError


@dataclass(frozen=True)
class PseudoProvenance:
    group_id: str
    feature_set: str
    seed: int | None = None


@dataclass(frozen=True)
class PseudoLabeledSeries:
    """A Notype trial plus its generated typed label columns."""

    series: TimeSeries
    labels: np.ndarray  # (T, 3)
    provenance: PseudoProvenance

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        event = self.series.labels[:, 0]
        per_row = labels.sum(axis=1)
        if ((event == 1) & (per_row != 1)).any() or ((event == 0) & (per_row != 0)).any():
            raise ValidationError(
                f"trial {self.series.trial_id!r}: generated labels inconsistent with events"
            )

    @property
    def trial_id(self) -> str:
        return self.series.trial_id

    def to_time_series(self) -> TimeSeries:
        """The trial rebadged as a Defog series carrying the generated
        typed labels (Notype data follow the Defog protocol)."""
        return TimeSeries(
            trial_id=self.series.trial_id,
            domain=Domain.DEFOG,
            acc_v=self.series.acc_v,
            acc_ml=self.series.acc_ml,
            acc_ap=self.series.acc_ap,
            labels=self.labels,
            units_harmonized=self.series.units_harmonized,
        )


def assign_pseudo_labels(
    series: TimeSeries, probabilities: np.ndarray, provenance: PseudoProvenance
) -> PseudoLabeledSeries:
    """Argmax the three class probabilities on every Event=1 timestep."""
    if series.domain is not Domain.NOTYPE:
        raise ValidationError(f"trial {series.trial_id!r} is not a Notype trial")
    probabilities = np.asarray(probabilities, dtype=np.float64)
    t_len = series.n_timesteps
    if probabilities.shape != (t_len, 3):
        raise ShapeError(
            f"probabilities shape {probabilities.shape} does not match ({t_len}, 3)"
        )
    event = series.labels[:, 0]
    labels = np.zeros((t_len, 3), dtype=np.int64)
    winners = probabilities.argmax(axis=1)  # argmax takes the lowest index on ties
    rows = event == 1
    labels[rows, winners[rows]] = 1
    return PseudoLabeledSeries(series=series, labels=labels, provenance=provenance)


def build_augmented_dataset(
    defog: Dataset, pseudo: Sequence[PseudoLabeledSeries]
) -> Dataset:
    """Union of the Defog pool and the pseudo-labeled trials; pseudo trials
    stay flagged (with provenance) so fold splitting and loss weighting can
    see them."""
    series = dict(defog.series)
    flags: dict[str, object] = dict(defog.pseudo)
    metadata = dict(defog.metadata)
    for item in pseudo:
        if item.trial_id in series:
            raise IntegrityError(f"duplicate trial id {item.trial_id!r} in augmented dataset")
        series[item.trial_id] = item.to_time_series()
        flags[item.trial_id] = item.provenance
    merged = Dataset(series=series, metadata=metadata, subjects=dict(defog.subjects), pseudo=flags)
    merged.validate()
    return merged


def write_pseudo_labeled(item: PseudoLabeledSeries, out_dir: str | Path) -> tuple[Path, Path]:
    """Write the pseudo-labeled trial in the typed CSV schema plus a
    sidecar JSON provenance file; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{item.trial_id}.csv"
    write_time_series(item.to_time_series(), csv_path)
    sidecar_path = out_dir / f"{item.trial_id}.provenance.json"
    with open(sidecar_path, "w") as fh:
        json.dump({"trial_id": item.trial_id, **asdict(item.provenance)}, fh, sort_keys=True)
        fh.write("\n")
    return csv_path, sidecar_path


def load_pseudo_provenance(sidecar_path: str | Path) -> PseudoProvenance:
    with open(sidecar_path) as fh:
        payload = json.load(fh)
    return PseudoProvenance(
        group_id=payload["group_id"],
        feature_set=payload["feature_set"],
        seed=payload.get("seed"),
    )

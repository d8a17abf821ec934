"""Scoring arithmetic: average precision, MAP, MAE, the Defog/Tdcsfog
weighted feature-set performance, and the private/public combined score.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ShapeError, UndefinedMetricError, ValidationError

DEFOG_WEIGHT = 0.657  # proportion of Defog data in the corpus
TDCSFOG_WEIGHT = 0.343
PRIVATE_WEIGHT = 0.68  # private share of the testing data
PUBLIC_WEIGHT = 0.32


def average_precision(scores, labels) -> float:
    """Rank-based average precision of binary labels under real scores.

    Items are ranked by descending score with ties broken by ascending
    original index; AP = (1/P) * sum over positive ranks k of precision@k.
    Raises UndefinedMetricError when there is no positive label.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} must match, 1-D")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision undefined without positive labels")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order].astype(np.float64)
    precision_at = np.cumsum(hits) / np.arange(1, scores.size + 1)
    return float(precision_at[hits == 1].sum() / n_pos)


def map_score(probabilities, labels) -> float:
    """Mean per-class AP over classes that have at least one positive;
    positive-free classes are excluded from the mean."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    if probabilities.shape != labels.shape or probabilities.ndim != 2:
        raise ShapeError(
            f"probabilities {probabilities.shape} and labels {labels.shape} must match, 2-D"
        )
    aps = [
        average_precision(probabilities[:, c], labels[:, c])
        for c in range(labels.shape[1])
        if labels[:, c].sum() > 0
    ]
    if not aps:
        raise UndefinedMetricError("MAP undefined: no class has a positive label")
    return float(np.mean(aps))


def mae(probabilities, labels) -> float:
    """Mean absolute error over all entries."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probabilities.shape != labels.shape:
        raise ShapeError(f"shape mismatch: {probabilities.shape} vs {labels.shape}")
    if probabilities.size == 0:
        raise ValidationError("MAE undefined for empty input")
    return float(np.abs(probabilities - labels).mean())


def _check_weighted(name_a, a, name_b, b, w_a, w_b):
    if abs(w_a + w_b - 1.0) > 1e-9:
        raise ValidationError(f"weights {w_a} + {w_b} must sum to 1")
    for name, value in ((name_a, a), (name_b, b)):
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{name}={value} outside [0, 1]")


def feature_set_performance(
    dmap: float, tmap: float, w_defog: float = DEFOG_WEIGHT, w_tdcs: float = TDCSFOG_WEIGHT
) -> float:
    """Weighted combination of the Defog and Tdcsfog group MAPs."""
    _check_weighted("dmap", dmap, "tmap", tmap, w_defog, w_tdcs)
    return w_defog * dmap + w_tdcs * tmap


def combined_score(
    private: float,
    public: float,
    w_private: float = PRIVATE_WEIGHT,
    w_public: float = PUBLIC_WEIGHT,
) -> float:
    """Weighted combination of the private and public testing MAPs."""
    _check_weighted("private", private, "public", public, w_private, w_public)
    return w_private * private + w_public * public


@dataclass(frozen=True)
class ReportRow:
    feature_set: str
    dmap: float
    tmap: float
    fp: float
    private: float | None = None
    public: float | None = None
    total: float | None = None


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple[ReportRow, ...]

    REPORT_COLUMNS = ("FeatSet", "DMAP", "TMAP", "FP", "Private", "Public", "Total")

    def render_markdown(self) -> str:
        lines = [
            "| " + " | ".join(self.REPORT_COLUMNS) + " |",
            "|" + "---|" * len(self.REPORT_COLUMNS),
        ]
        for row in self.rows:
            cells = [row.feature_set] + [
                ("-" if v is None else f"{v:.3f}")
                for v in (row.dmap, row.tmap, row.fp, row.private, row.public, row.total)
            ]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.REPORT_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [row.feature_set]
                    + [
                        ("" if v is None else f"{v:.9g}")
                        for v in (row.dmap, row.tmap, row.fp, row.private, row.public, row.total)
                    ]
                )


def build_report(entries: Sequence[dict]) -> EvaluationReport:
    """Assemble a report from per-feature-set entries with keys
    feature_set, dmap, tmap and optional private/public."""
    rows = []
    for entry in entries:
        dmap, tmap = entry["dmap"], entry["tmap"]
        private = entry.get("private")
        public = entry.get("public")
        total = None if private is None or public is None else combined_score(private, public)
        rows.append(
            ReportRow(
                feature_set=entry["feature_set"],
                dmap=dmap,
                tmap=tmap,
                fp=feature_set_performance(dmap, tmap),
                private=private,
                public=public,
                total=total,
            )
        )
    return EvaluationReport(rows=tuple(rows))

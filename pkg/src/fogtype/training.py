"""Training harness: sliding windows, per-class BCE loss on per-patch
targets, Adam, 3-fold cross-validation with best-val-MAE checkpointing,
and model groups ensembled by prediction averaging.

Folds are split by trial, never within a trial. Everything is
deterministic in the configured seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, Domain, TimeSeries
from .errors import IntegrityError, NumericError, ValidationError
from .evaluation import map_score
from .features import (
    ColumnStats,
    FeatureMatrix,
    FeatureSetId,
    build_feature_matrix,
    fit_column_stats,
    standardize,
)
from .model import TransBiLSTM, TransBiLSTMConfig, load_checkpoint, save_checkpoint
from .nn import bce_with_logits

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class TrainConfig:
    feature_set: FeatureSetId
    model: TransBiLSTMConfig
    window_len: int = 512
    window_stride: int = 256
    batch_size: int = 16
    max_epochs: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    n_folds: int = 3
    standardize: bool = False
    pseudo_weight: float = 1.0

    def __post_init__(self):
        if not 1 <= self.window_stride <= self.window_len:
            raise ValidationError(
                f"stride {self.window_stride} outside [1, window_len={self.window_len}]"
            )
        if self.n_folds < 2:
            raise ValidationError(f"n_folds must be >= 2, got {self.n_folds}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValidationError("max_epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class Window:
    """One training window; the tail of a sequence is zero-padded and
    `mask` marks the real timesteps."""

    features: np.ndarray  # (W, D)
    labels: np.ndarray  # (W, C)
    mask: np.ndarray  # (W,) bool
    trial_id: str = ""
    start: int = 0
    weight: float = 1.0


def make_windows(
    matrix: FeatureMatrix | np.ndarray,
    labels: np.ndarray,
    window_len: int,
    stride: int,
    trial_id: str = "",
    weight: float = 1.0,
) -> list[Window]:
    """Windows starting at 0, stride, 2*stride, ... for every start below
    T; the final partial window is zero-padded with a validity mask."""
    values = matrix.values if isinstance(matrix, FeatureMatrix) else np.asarray(matrix)
    labels = np.asarray(labels)
    t_len = values.shape[0]
    if labels.shape[0] != t_len:
        raise ValidationError(f"labels rows {labels.shape[0]} != feature rows {t_len}")
    windows = []
    for start in range(0, t_len, stride):
        stop = min(start + window_len, t_len)
        feats = np.zeros((window_len, values.shape[1]))
        labs = np.zeros((window_len, labels.shape[1]), dtype=labels.dtype)
        mask = np.zeros(window_len, dtype=bool)
        feats[: stop - start] = values[start:stop]
        labs[: stop - start] = labels[start:stop]
        mask[: stop - start] = True
        windows.append(
            Window(features=feats, labels=labs, mask=mask, trial_id=trial_id, start=start,
                   weight=weight)
        )
    return windows


def patch_targets(
    labels: np.ndarray, mask: np.ndarray, patch_len: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-patch training targets: majority label over the patch's valid
    timesteps, ties resolved positive. Patches with no valid timestep are
    masked out."""
    t_len, n_classes = labels.shape
    n = -(-t_len // patch_len)
    targets = np.zeros((n, n_classes))
    patch_mask = np.zeros(n, dtype=bool)
    for p in range(n):
        sl = slice(p * patch_len, min((p + 1) * patch_len, t_len))
        valid = mask[sl]
        if not valid.any():
            continue
        patch_mask[p] = True
        targets[p] = (labels[sl][valid].mean(axis=0) >= 0.5).astype(np.float64)
    return targets, patch_mask


class Adam:
    """Adaptive-moment gradient descent over a model's named parameters."""

    def __init__(self, model: TransBiLSTM, lr: float, beta1: float, beta2: float, eps: float):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in model.named_params()}
        self.v = {name: np.zeros_like(p) for name, p in model.named_params()}

    def step(self, model: TransBiLSTM) -> None:
        self.t += 1
        grads = dict(model.named_grads())
        for name, p in model.named_params():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1**self.t)
            v_hat = self.v[name] / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def validation_mae(model: TransBiLSTM, windows: Sequence[Window]) -> float:
    """Mean |probability - label| over all valid timesteps and classes."""
    total = 0.0
    count = 0
    for win in windows:
        probs = model.forward(win.features)
        valid = win.mask
        total += np.abs(probs[valid] - win.labels[valid]).sum()
        count += int(valid.sum()) * win.labels.shape[1]
    return total / count


def train_fold(
    train_windows: Sequence[Window],
    val_windows: Sequence[Window],
    cfg: TrainConfig,
    model_seed: int,
) -> tuple[TransBiLSTM, list[tuple[int, float, float]]]:
    """Train one model, snapshotting after every epoch and returning the
    snapshot with the lowest validation MAE (earliest epoch wins ties)
    plus the (epoch, train_loss, val_mae) curve."""
    if not train_windows or not val_windows:
        raise ValidationError("train and validation window sets must be non-empty")
    model = TransBiLSTM(cfg.model, seed=model_seed)
    optimizer = Adam(model, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([model_seed, 1]))
    dropout_rng = np.random.default_rng(np.random.SeedSequence([model_seed, 2]))
    patch_len = cfg.model.patch_len

    curve: list[tuple[int, float, float]] = []
    best_mae = np.inf
    best_state = model.state_dict()
    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(len(train_windows))
        loss_sum = 0.0
        for batch_idx, lo in enumerate(range(0, len(order), cfg.batch_size)):
            batch = order[lo : lo + cfg.batch_size]
            model.zero_grads()
            batch_loss = 0.0
            try:
                for w_idx in batch:
                    win = train_windows[w_idx]
                    targets, pmask = patch_targets(win.labels, win.mask, patch_len)
                    _, logits = model.forward_patches(win.features, train=True, rng=dropout_rng)
                    loss, dlogits = bce_with_logits(logits, targets, pmask)
                    batch_loss += win.weight * loss
                    model.backward_from_logits(win.weight * dlogits / len(batch))
            except NumericError as exc:
                raise NumericError(
                    f"{exc} (lr={cfg.learning_rate}, epoch={epoch}, batch={batch_idx})"
                ) from exc
            batch_loss /= len(batch)
            if not np.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite loss (lr={cfg.learning_rate}, epoch={epoch}, "
                    f"batch={batch_idx})"
                )
            optimizer.step(model)
            loss_sum += batch_loss * len(batch)
        train_loss = loss_sum / len(order)
        val_mae = validation_mae(model, val_windows)
        curve.append((epoch, train_loss, val_mae))
        if val_mae < best_mae:
            best_mae = val_mae
            best_state = model.state_dict()
    model.load_state(best_state)
    return model, curve


def predict_trial(
    model: TransBiLSTM, matrix: FeatureMatrix | np.ndarray, window_len: int, stride: int
) -> np.ndarray:
    """Per-timestep probabilities for a whole trial: overlapping inference
    windows are averaged per timestep."""
    values = matrix.values if isinstance(matrix, FeatureMatrix) else np.asarray(matrix)
    t_len = values.shape[0]
    n_classes = model.config.n_classes
    acc = np.zeros((t_len, n_classes))
    count = np.zeros(t_len)
    for win in make_windows(values, np.zeros((t_len, n_classes)), window_len, stride):
        probs = model.forward(win.features)
        n_valid = int(win.mask.sum())
        acc[win.start : win.start + n_valid] += probs[:n_valid]
        count[win.start : win.start + n_valid] += 1.0
    return acc / count[:, None]


@dataclass
class TrialBundle:
    """One trial prepared for training: its feature matrix and (T, 3)
    label block, plus whether the labels are pseudo-generated."""

    trial_id: str
    matrix: FeatureMatrix
    labels: np.ndarray
    pseudo: bool = False


def prepare_bundle(
    series: TimeSeries,
    dataset: Dataset,
    feature_set: FeatureSetId,
    cluster_map: Mapping[str, int] | None = None,
    n_clusters: int | None = None,
    labels: np.ndarray | None = None,
    pseudo: bool = False,
) -> TrialBundle:
    """Harmonize (if needed) and build one trial's feature matrix and
    labels. `labels` overrides the series labels (pseudo-label path)."""
    if not series.units_harmonized:
        from .data import harmonize_units

        series = harmonize_units(series)
    meta = dataset.metadata.get(series.trial_id)
    subject = dataset.subjects.get(meta.subject_id) if meta else None
    matrix = build_feature_matrix(
        series, feature_set, meta=meta, subject=subject, cluster_map=cluster_map,
        n_clusters=n_clusters,
    )
    label_block = series.labels if labels is None else np.asarray(labels)
    if label_block.shape[1] != 3:
        raise ValidationError(
            f"trial {series.trial_id!r}: training needs 3 label columns, "
            f"got {label_block.shape[1]} (pseudo-label Notype trials first)"
        )
    return TrialBundle(trial_id=series.trial_id, matrix=matrix, labels=label_block, pseudo=pseudo)


@dataclass
class ModelGroup:
    """The trained models of one cross-validation run, ensembled by
    averaging predictions."""

    members: list[TransBiLSTM]
    feature_set: FeatureSetId
    feature_columns: tuple[str, ...]
    train_config: TrainConfig
    fold_assignments: list[list[str]]
    oof_maps: list[float]
    group_map: float
    fold_curves: list[list[tuple[int, float, float]]] = field(default_factory=list)
    cluster_map: dict[str, int] | None = None
    group_id: str = ""


def train_model_group(bundles: Sequence[TrialBundle], cfg: TrainConfig) -> ModelGroup:
    """Trial-level k-fold cross-validation: each fold trains on the other
    folds' windows and validates on its own; the member's score is the MAP
    of its predictions on the out-of-fold trials, and the group score is
    the mean of the member MAPs."""
    if len(bundles) < cfg.n_folds:
        raise ValidationError(f"need at least {cfg.n_folds} trials, got {len(bundles)}")
    by_id = {b.trial_id: b for b in bundles}
    if len(by_id) != len(bundles):
        raise IntegrityError("duplicate trial ids in training bundles")
    ordered = sorted(by_id)
    perm = np.random.default_rng(cfg.seed).permutation(len(ordered))
    folds = [[ordered[i] for i in perm[f :: cfg.n_folds]] for f in range(cfg.n_folds)]

    members: list[TransBiLSTM] = []
    oof_maps: list[float] = []
    curves: list[list[tuple[int, float, float]]] = []
    for f, val_ids in enumerate(folds):
        train_ids = [tid for tid in ordered if tid not in set(val_ids)]
        matrices = {tid: by_id[tid].matrix for tid in ordered}
        if cfg.standardize:
            stats = fit_column_stats([matrices[tid] for tid in train_ids])
            matrices = {tid: standardize(m, stats) for tid, m in matrices.items()}

        def windows_for(ids):
            out = []
            for tid in ids:
                b = by_id[tid]
                out.extend(
                    make_windows(
                        matrices[tid],
                        b.labels,
                        cfg.window_len,
                        cfg.window_stride,
                        trial_id=tid,
                        weight=cfg.pseudo_weight if b.pseudo else 1.0,
                    )
                )
            return out

        model_seed = int(
            np.random.SeedSequence([cfg.seed, f]).generate_state(1, dtype=np.uint32)[0]
        )
        model, curve = train_fold(windows_for(train_ids), windows_for(val_ids), cfg, model_seed)
        members.append(model)
        curves.append(curve)

        probs = np.concatenate(
            [
                predict_trial(model, matrices[tid], cfg.window_len, cfg.window_stride)
                for tid in val_ids
            ]
        )
        labels = np.concatenate([by_id[tid].labels for tid in val_ids])
        oof_maps.append(map_score(probs, labels))

    columns = bundles[0].matrix.columns
    return ModelGroup(
        members=members,
        feature_set=cfg.feature_set,
        feature_columns=columns,
        train_config=cfg,
        fold_assignments=folds,
        oof_maps=oof_maps,
        group_map=float(np.mean(oof_maps)),
        fold_curves=curves,
    )


def predict_group(group: ModelGroup, matrix: FeatureMatrix) -> np.ndarray:
    """Pointwise mean of the member models' per-timestep probabilities."""
    if matrix.columns != group.feature_columns:
        raise IntegrityError(
            f"feature fingerprint mismatch: matrix has {matrix.columns}, "
            f"group expects {group.feature_columns}"
        )
    cfg = group.train_config
    preds = [
        predict_trial(member, matrix, cfg.window_len, cfg.window_stride)
        for member in group.members
    ]
    return np.mean(preds, axis=0)


# ---------------------------------------------------------------------------
# Group persistence: member checkpoints plus a JSON manifest
# ---------------------------------------------------------------------------


def save_model_group(group: ModelGroup, out_dir: str | Path, domain: Domain | None = None) -> Path:
    """Write member checkpoints, per-fold training-log CSVs, and the group
    manifest. Paths inside the manifest are relative, and JSON keys are
    sorted, so identical runs produce byte-identical manifests."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = group.train_config
    members = []
    for f, model in enumerate(group.members):
        name = f"member{f}.ckpt"
        save_checkpoint(
            model, out_dir / name, feature_set=group.feature_set.value,
            feature_columns=group.feature_columns,
        )
        members.append({"checkpoint": name, "fold": f, "oof_map": group.oof_maps[f]})
    for f, curve in enumerate(group.fold_curves):
        with open(out_dir / f"fold{f}_log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_mae"])
            for epoch, train_loss, val_mae in curve:
                writer.writerow([epoch, f"{train_loss:.9g}", f"{val_mae:.9g}"])

    train_cfg = asdict(cfg)
    train_cfg["feature_set"] = cfg.feature_set.value
    manifest = {
        "format_version": 1,
        "group_id": group.group_id
        or f"{domain.value if domain else 'any'}-{group.feature_set.value}-seed{cfg.seed}",
        "domain": domain.value if domain else None,
        "feature_set": group.feature_set.value,
        "feature_columns": list(group.feature_columns),
        "seed": cfg.seed,
        "train_config": train_cfg,
        "fold_assignments": group.fold_assignments,
        "members": members,
        "oof_maps": group.oof_maps,
        "group_map": group.group_map,
        "cluster_map": group.cluster_map,
    }
    manifest_path = out_dir / MANIFEST_NAME
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest_path


def load_model_group(manifest_path: str | Path) -> tuple[ModelGroup, dict]:
    """Load a group manifest plus its member checkpoints; returns the
    group and the raw manifest dict."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != 1:
        raise ValidationError(f"{manifest_path}: unsupported manifest version")
    train_cfg = dict(manifest["train_config"])
    train_cfg["feature_set"] = FeatureSetId(train_cfg["feature_set"])
    train_cfg["model"] = TransBiLSTMConfig(**train_cfg["model"])
    cfg = TrainConfig(**train_cfg)

    members = []
    for entry in manifest["members"]:
        model, header = load_checkpoint(manifest_path.parent / entry["checkpoint"])
        if tuple(header["feature_columns"]) != tuple(manifest["feature_columns"]):
            raise IntegrityError(
                f"{entry['checkpoint']}: feature fingerprint differs from manifest"
            )
        members.append(model)
    group = ModelGroup(
        members=members,
        feature_set=FeatureSetId(manifest["feature_set"]),
        feature_columns=tuple(manifest["feature_columns"]),
        train_config=cfg,
        fold_assignments=[list(f) for f in manifest["fold_assignments"]],
        oof_maps=[float(m) for m in manifest["oof_maps"]],
        group_map=float(manifest["group_map"]),
        cluster_map=manifest.get("cluster_map"),
        group_id=manifest["group_id"],
    )
    return group, manifest

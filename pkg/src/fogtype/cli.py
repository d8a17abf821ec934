"""Command-line pipeline driver.

Subcommands: synth, validate, features, cluster-subjects,
analyze-separation, train, predict, pseudolabel, retrain, evaluate,
gradcheck. Every run writes its fully-resolved configuration next to its
outputs; all randomness flows from the single configured seed.

Exit codes: 0 success, 1 failed invariant/diagnostic (with one
machine-readable JSON error line on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import stats
from .data import (
    Dataset,
    Domain,
    build_corpus,
    harmonize_units,
    load_corpus_dir,
    load_time_series,
    write_corpus_dir,
)
from .errors import FogtypeError, ValidationError
from .evaluation import build_report, map_score
from .features import (
    FeatureSetId,
    build_feature_matrix,
    feature_columns,
    file_summary_vector,
)
from .model import TransBiLSTMConfig, check_model_gradients, init_model
from .nn import layer_gradcheck_suite
from .pseudolabel import (
    PseudoProvenance,
    assign_pseudo_labels,
    load_pseudo_provenance,
    write_pseudo_labeled,
)
from .training import (
    TrainConfig,
    load_model_group,
    predict_group,
    prepare_bundle,
    save_model_group,
    train_model_group,
)

DATA_ROOT_ENV = "FOGTYPE_DATA_ROOT"
RESOLVED_CONFIG_NAME = "config.resolved"


@dataclass
class ExperimentConfig:
    """Flat key=value run configuration; unknown keys are rejected.

    Model defaults are the full-scale architecture; desk-scale runs
    override them via a config file or flags (see README).
    """

    domain: str = "defog"
    feature_set: str = "C"
    seed: int = 0
    window_len: int = 512
    window_stride: int = 256
    batch_size: int = 16
    max_epochs: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    n_folds: int = 3
    standardize: bool = False
    pseudo_weight: float = 1.0
    d_model: int = 320
    n_heads: int = 6
    d_head: int = 320
    n_encoder_layers: int = 5
    ffn_dense_units: int = 320
    dropout_rate: float = 0.1
    n_bilstm_layers: int = 3
    bilstm_out: int = 320
    n_classes: int = 3
    patch_len: int = 15
    cluster_k: int = 3

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None) -> "ExperimentConfig":
        known = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        if path is not None:
            for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValidationError(f"{path}:{line_no}: expected key=value, got {raw!r}")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in known:
                    raise ValidationError(f"{path}:{line_no}: unknown config key {key!r}")
                values[key] = value.strip()
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        cfg = cls()
        for key, value in values.items():
            setattr(cfg, key, _coerce(key, value, type(getattr(cfg, key))))
        return cfg

    def write_resolved(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = [f"{f.name}={_render(getattr(self, f.name))}" for f in fields(self)]
        (out_dir / RESOLVED_CONFIG_NAME).write_text("\n".join(lines) + "\n")

    def train_config(self, input_dim: int) -> TrainConfig:
        model = TransBiLSTMConfig(
            input_dim=input_dim,
            d_model=self.d_model,
            n_heads=self.n_heads,
            d_head=self.d_head,
            n_encoder_layers=self.n_encoder_layers,
            ffn_dense_units=self.ffn_dense_units,
            dropout_rate=self.dropout_rate,
            n_bilstm_layers=self.n_bilstm_layers,
            bilstm_out=self.bilstm_out,
            n_classes=self.n_classes,
            patch_len=self.patch_len,
        )
        return TrainConfig(
            feature_set=FeatureSetId(self.feature_set),
            model=model,
            window_len=self.window_len,
            window_stride=self.window_stride,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            seed=self.seed,
            n_folds=self.n_folds,
            standardize=self.standardize,
            pseudo_weight=self.pseudo_weight,
        )


def _coerce(key: str, value, target_type):
    if isinstance(value, target_type) and not isinstance(value, str):
        return value
    text = str(value).strip()
    if target_type is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValidationError(f"config key {key!r}: expected a boolean, got {text!r}")
    try:
        return target_type(text)
    except ValueError:
        raise ValidationError(
            f"config key {key!r}: expected {target_type.__name__}, got {text!r}"
        ) from None


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _data_dir(args) -> Path:
    data = args.data or os.environ.get(DATA_ROOT_ENV)
    if not data:
        raise ValidationError(f"no data directory given (use --data or ${DATA_ROOT_ENV})")
    return Path(data)


def _load_cluster_map(path: str | Path) -> dict[str, int]:
    cluster_map: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header[:2]] != ["Subject", "Cluster"]:
            raise ValidationError(f"{path}: expected header Subject,Cluster")
        for row in reader:
            cluster_map[row[0].strip()] = int(row[1])
    return cluster_map


def _bundles_for_domain(
    dataset: Dataset,
    domain: Domain,
    feature_set: FeatureSetId,
    cluster_map: dict[str, int] | None,
):
    trials = [s for s in dataset.series.values() if s.domain is domain]
    n_clusters = (max(cluster_map.values()) + 1) if cluster_map else None
    return [
        prepare_bundle(
            s,
            dataset,
            feature_set,
            cluster_map=cluster_map,
            n_clusters=n_clusters,
            pseudo=s.trial_id in dataset.pseudo,
        )
        for s in sorted(trials, key=lambda s: s.trial_id)
    ]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = ExperimentConfig.load(args.config, {"seed": args.seed})
    dataset = build_corpus(
        seed=cfg.seed,
        n_defog=args.n_defog,
        n_tdcsfog=args.n_tdcsfog,
        n_notype=args.n_notype,
        n_subjects=args.n_subjects,
        duration_s=args.duration_s,
        episodes_per_trial=args.episodes_per_trial,
    )
    out = Path(args.out)
    write_corpus_dir(dataset, out)
    cfg.write_resolved(out)
    manifest = {
        "seed": cfg.seed,
        "n_defog": args.n_defog,
        "n_tdcsfog": args.n_tdcsfog,
        "n_notype": args.n_notype,
        "n_subjects": args.n_subjects,
        "duration_s": args.duration_s,
        "episodes_per_trial": args.episodes_per_trial,
    }
    (out / "synth_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"wrote {len(dataset.series)} trials to {out}")
    return 0


def cmd_validate(args) -> int:
    dataset = load_corpus_dir(_data_dir(args))
    dataset.validate()
    by_domain = {d: 0 for d in Domain}
    for series in dataset.series.values():
        by_domain[series.domain] += 1
    counts = ", ".join(f"{d.value}={n}" for d, n in by_domain.items())
    print(f"ok: {len(dataset.series)} trials ({counts}), "
          f"{len(dataset.subjects)} subjects")
    return 0


def cmd_features(args) -> int:
    cfg = ExperimentConfig.load(args.config, {"feature_set": args.feature_set, "seed": args.seed})
    dataset = load_corpus_dir(_data_dir(args))
    feature_set = FeatureSetId(cfg.feature_set)
    domain = Domain(args.domain)
    cluster_map = _load_cluster_map(args.clusters) if args.clusters else None
    n_clusters = (max(cluster_map.values()) + 1) if cluster_map else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    trials = [s for s in dataset.series.values() if s.domain is domain]
    if args.trial:
        trials = [s for s in trials if s.trial_id == args.trial]
        if not trials:
            raise ValidationError(f"trial {args.trial!r} not found in domain {domain.value}")
    for series in sorted(trials, key=lambda s: s.trial_id):
        harmonized = harmonize_units(series)
        meta = dataset.metadata[series.trial_id]
        matrix = build_feature_matrix(
            harmonized,
            feature_set,
            meta=meta,
            subject=dataset.subjects[meta.subject_id],
            cluster_map=cluster_map,
            n_clusters=n_clusters,
        )
        path = out / f"{series.trial_id}_features_{feature_set.value}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(matrix.columns)
            for row in matrix.values:
                writer.writerow([f"{v:.9g}" for v in row])
    cfg.write_resolved(out)
    print(f"wrote {len(trials)} feature matrices (set {feature_set.value}) to {out}")
    return 0


def cmd_cluster_subjects(args) -> int:
    cfg = ExperimentConfig.load(args.config, {"seed": args.seed, "cluster_k": args.k})
    dataset = load_corpus_dir(_data_dir(args))
    cluster_map = stats.cluster_subjects(dataset.subjects, k=cfg.cluster_k, seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "subject_clusters.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Subject", "Cluster"])
        for sid in sorted(cluster_map):
            writer.writerow([sid, cluster_map[sid]])
    cfg.write_resolved(out)
    print(f"clustered {len(cluster_map)} subjects into k={cfg.cluster_k} groups")
    return 0


def _scatter_svg(points: np.ndarray, domains: list[str]) -> str:
    size, margin = 420, 30
    lo = points.min(axis=0)
    spread = np.ptp(points, axis=0)
    span = np.where(spread > 0, spread, 1.0)
    colors = {"defog": "#5e3c99", "tdcsfog": "#e6a117"}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for (x, y), dom in zip(points, domains):
        px = margin + (x - lo[0]) / span[0] * (size - 2 * margin)
        py = size - margin - (y - lo[1]) / span[1] * (size - 2 * margin)
        parts.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="4" fill="{colors[dom]}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_analyze_separation(args) -> int:
    cfg = ExperimentConfig.load(args.config, {"seed": args.seed})
    dataset = load_corpus_dir(_data_dir(args))
    trials = [
        s
        for s in sorted(dataset.series.values(), key=lambda s: s.trial_id)
        if s.domain in (Domain.DEFOG, Domain.TDCSFOG)
    ]
    if len(trials) < 2:
        raise ValidationError("separation analysis needs at least 2 Defog/Tdcsfog trials")
    summaries = np.array([file_summary_vector(harmonize_units(s)).values for s in trials])
    std = summaries.std(axis=0)
    std[std == 0.0] = 1.0
    scaled = (summaries - summaries.mean(axis=0)) / std
    _, scores = stats.pca_fit_transform(scaled, p=2)
    domains = [s.domain.value for s in trials]
    labels = np.array([0 if d == "defog" else 1 for d in domains])
    silhouette = stats.silhouette_score(scores, labels)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pca_scatter.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["TrialId", "Domain", "PC1", "PC2"])
        for series, (pc1, pc2) in zip(trials, scores):
            writer.writerow([series.trial_id, series.domain.value, f"{pc1:.9g}", f"{pc2:.9g}"])
    (out / "pca_scatter.svg").write_text(_scatter_svg(scores, domains))
    (out / "separation.json").write_text(
        json.dumps({"silhouette": silhouette, "n_trials": len(trials)}, sort_keys=True) + "\n"
    )
    cfg.write_resolved(out)
    print(f"domain silhouette after PCA(2): {silhouette:.4f}")
    return 0


def cmd_train(args) -> int:
    cfg = ExperimentConfig.load(
        args.config,
        {"domain": args.domain, "feature_set": args.feature_set, "seed": args.seed},
    )
    dataset = load_corpus_dir(_data_dir(args))
    domain = Domain(cfg.domain)
    if domain is Domain.NOTYPE:
        raise ValidationError("training runs on defog or tdcsfog trials only")
    feature_set = FeatureSetId(cfg.feature_set)
    cluster_map = _load_cluster_map(args.clusters) if args.clusters else None
    if feature_set is FeatureSetId.G and cluster_map is None:
        raise ValidationError("feature set G requires --clusters (run cluster-subjects first)")

    bundles = _bundles_for_domain(dataset, domain, feature_set, cluster_map)
    if not bundles:
        raise ValidationError(f"no {domain.value} trials in the data directory")
    train_cfg = cfg.train_config(input_dim=len(bundles[0].matrix.columns))
    group = train_model_group(bundles, train_cfg)
    group.cluster_map = cluster_map
    out = Path(args.out)
    save_model_group(group, out, domain=domain)
    cfg.write_resolved(out)
    maps = ", ".join(f"{m:.4f}" for m in group.oof_maps)
    print(f"trained {domain.value} group (set {feature_set.value}): "
          f"fold MAPs [{maps}], group MAP {group.group_map:.4f}")
    return 0


def _features_for_manifest(series, dataset, manifest):
    feature_set = FeatureSetId(manifest["feature_set"])
    cluster_map = manifest.get("cluster_map")
    n_clusters = (max(cluster_map.values()) + 1) if cluster_map else None
    meta = dataset.metadata.get(series.trial_id)
    subject = dataset.subjects.get(meta.subject_id) if meta else None
    harmonized = series if series.units_harmonized else harmonize_units(series)
    return build_feature_matrix(
        harmonized, feature_set, meta=meta, subject=subject,
        cluster_map=cluster_map, n_clusters=n_clusters,
    )


def cmd_predict(args) -> int:
    group, manifest = load_model_group(args.group_manifest)
    dataset = load_corpus_dir(_data_dir(args))
    if args.trial not in dataset.series:
        raise ValidationError(f"trial {args.trial!r} not found")
    series = dataset.series[args.trial]
    group_domain = Domain(manifest["domain"])
    allowed = (
        (Domain.DEFOG, Domain.NOTYPE) if group_domain is Domain.DEFOG else (Domain.TDCSFOG,)
    )
    if series.domain not in allowed:
        raise ValidationError(
            f"trial {args.trial!r} is {series.domain.value} data; this group handles "
            f"{'/'.join(d.value for d in allowed)}"
        )
    matrix = _features_for_manifest(series, dataset, manifest)
    probs = predict_group(group, matrix)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{args.trial}_pred.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Time", "StartHesitation", "Turn", "Walking"])
        for i, row in enumerate(probs):
            writer.writerow([i] + [f"{p:.9g}" for p in row])
    print(f"wrote per-timestep probabilities for {args.trial} to {out}")
    return 0


def cmd_pseudolabel(args) -> int:
    group, manifest = load_model_group(args.group_manifest)
    if manifest["domain"] != Domain.DEFOG.value:
        raise ValidationError("only Defog model groups generate pseudo labels")
    dataset = load_corpus_dir(_data_dir(args))
    notype = [s for s in dataset.series.values() if s.domain is Domain.NOTYPE]
    if not notype:
        raise ValidationError("no Notype trials found to pseudo-label")
    provenance = PseudoProvenance(
        group_id=manifest["group_id"],
        feature_set=manifest["feature_set"],
        seed=manifest["seed"],
    )
    out = Path(args.out)
    for series in sorted(notype, key=lambda s: s.trial_id):
        matrix = _features_for_manifest(series, dataset, manifest)
        probs = predict_group(group, matrix)
        labeled = assign_pseudo_labels(series, probs, provenance)
        write_pseudo_labeled(labeled, out)
    print(f"pseudo-labeled {len(notype)} Notype trials into {out}")
    return 0


def cmd_retrain(args) -> int:
    cfg = ExperimentConfig.load(
        args.config,
        {"domain": args.domain, "feature_set": args.feature_set, "seed": args.seed},
    )
    if Domain(cfg.domain) is not Domain.DEFOG:
        raise ValidationError("pseudo-labeled retraining applies to the defog domain only")
    dataset = load_corpus_dir(_data_dir(args))
    feature_set = FeatureSetId(cfg.feature_set)

    pseudo_dir = Path(args.pseudo)
    pseudo_files = sorted(pseudo_dir.glob("*.csv"))
    if not pseudo_files:
        raise ValidationError(f"no pseudo-labeled trials found in {pseudo_dir}")
    for path in pseudo_files:
        sidecar = path.parent / f"{path.stem}.provenance.json"
        if not sidecar.exists():
            raise ValidationError(f"{path}: missing provenance sidecar")
        provenance = load_pseudo_provenance(sidecar)
        if provenance.feature_set != feature_set.value:
            raise ValidationError(
                f"{path.stem}: pseudo labels were generated by a set "
                f"{provenance.feature_set} group but retraining uses set {feature_set.value}"
            )
        series = load_time_series(path, Domain.DEFOG)
        if series.trial_id in dataset.series and dataset.series[series.trial_id].domain is not Domain.NOTYPE:
            raise ValidationError(f"duplicate trial id {series.trial_id!r} in pseudo pool")
        dataset.series[series.trial_id] = series
        dataset.pseudo[series.trial_id] = provenance
    dataset.validate()

    cluster_map = _load_cluster_map(args.clusters) if args.clusters else None
    if feature_set is FeatureSetId.G and cluster_map is None:
        raise ValidationError("feature set G requires --clusters")
    bundles = _bundles_for_domain(dataset, Domain.DEFOG, feature_set, cluster_map)
    train_cfg = cfg.train_config(input_dim=len(bundles[0].matrix.columns))
    group = train_model_group(bundles, train_cfg)
    group.cluster_map = cluster_map
    out = Path(args.out)
    save_model_group(group, out, domain=Domain.DEFOG)
    cfg.write_resolved(out)
    n_pseudo = sum(1 for b in bundles if b.pseudo)
    print(f"retrained defog group on {len(bundles)} trials ({n_pseudo} pseudo): "
          f"group MAP {group.group_map:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = ExperimentConfig.load(args.config, {"seed": args.seed})
    test_dataset = load_corpus_dir(Path(args.test_data)) if args.test_data else None
    entries = []
    for set_name, defog_path, tdcs_path in args.group:
        defog_group, defog_manifest = load_model_group(defog_path)
        tdcs_group, tdcs_manifest = load_model_group(tdcs_path)
        entry = {
            "feature_set": set_name,
            "dmap": defog_manifest["group_map"],
            "tmap": tdcs_manifest["group_map"],
        }
        if test_dataset is not None:
            entry.update(
                _test_scores(test_dataset, defog_group, defog_manifest, tdcs_group,
                             tdcs_manifest, cfg.seed)
            )
        entries.append(entry)

    report = build_report(entries)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text(report.render_markdown())
    report.write_csv(out / "report.csv")
    cfg.write_resolved(out)
    print(report.render_markdown(), end="")
    return 0


def _test_scores(dataset, defog_group, defog_manifest, tdcs_group, tdcs_manifest, seed):
    """Desk-scale analog of the competition's hidden test split: held-out
    trials are partitioned 68/32 (private/public) by seeded shuffle and each
    domain's group predicts its own trials."""
    trials = [
        s
        for s in sorted(dataset.series.values(), key=lambda s: s.trial_id)
        if s.domain in (Domain.DEFOG, Domain.TDCSFOG)
    ]
    if len(trials) < 2:
        raise ValidationError("test data needs at least 2 Defog/Tdcsfog trials")
    perm = np.random.default_rng(seed).permutation(len(trials))
    n_private = max(1, min(len(trials) - 1, int(round(0.68 * len(trials)))))
    private_idx = set(perm[:n_private].tolist())

    split_probs: dict[bool, list[np.ndarray]] = {True: [], False: []}
    split_labels: dict[bool, list[np.ndarray]] = {True: [], False: []}
    for i, series in enumerate(trials):
        if series.domain is Domain.DEFOG:
            group, manifest = defog_group, defog_manifest
        else:
            group, manifest = tdcs_group, tdcs_manifest
        matrix = _features_for_manifest(series, dataset, manifest)
        probs = predict_group(group, matrix)
        is_private = i in private_idx
        split_probs[is_private].append(probs)
        split_labels[is_private].append(series.labels)
    private = map_score(np.concatenate(split_probs[True]), np.concatenate(split_labels[True]))
    public = map_score(np.concatenate(split_probs[False]), np.concatenate(split_labels[False]))
    return {"private": private, "public": public}


def cmd_gradcheck(args) -> int:
    worst = layer_gradcheck_suite(n_seeds=args.seeds, eps=args.eps)
    ok = True
    for name, err in worst.items():
        passed = err < 1e-5
        ok &= passed
        print(f"{name:12s} max_rel_err={err:.3e} {'PASS' if passed else 'FAIL'}")
    toy = TransBiLSTMConfig(
        input_dim=3, d_model=8, n_heads=2, d_head=4, n_encoder_layers=1,
        ffn_dense_units=8, dropout_rate=0.1, n_bilstm_layers=1, bilstm_out=8,
        n_classes=3, patch_len=2,
    )
    model = init_model(toy, seed=0)
    rng = np.random.default_rng(1)
    features = rng.normal(size=(8, 3)) * 0.5
    targets = (rng.random((4, 3)) < 0.5).astype(np.float64)
    err = check_model_gradients(model, features, targets, eps=args.eps)
    passed = err < 1e-4
    ok &= passed
    print(f"{'full_model':12s} max_rel_err={err:.3e} {'PASS' if passed else 'FAIL'}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fogtype",
        description="Freezing-of-gait event-type prediction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, out=True, config=True, seed=True):
        if data:
            p.add_argument("--data", help=f"corpus directory (default ${DATA_ROOT_ENV})")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        if config:
            p.add_argument("--config", help="key=value config file")
        if seed:
            p.add_argument("--seed", type=int, help="root random seed")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p, data=False)
    p.add_argument("--n-defog", type=int, default=6)
    p.add_argument("--n-tdcsfog", type=int, default=6)
    p.add_argument("--n-notype", type=int, default=4)
    p.add_argument("--n-subjects", type=int, default=6)
    p.add_argument("--duration-s", type=float, default=6.0)
    p.add_argument("--episodes-per-trial", type=int, default=2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="schema-check a corpus directory")
    common(p, out=False, config=False, seed=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("features", help="dump feature matrices as CSV")
    common(p)
    p.add_argument("--domain", required=True, choices=[d.value for d in Domain])
    p.add_argument("--feature-set", choices=[s.value for s in FeatureSetId])
    p.add_argument("--trial", help="restrict to one trial id")
    p.add_argument("--clusters", help="Subject,Cluster CSV (required for set G)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("cluster-subjects", help="k-means over subject attributes")
    common(p)
    p.add_argument("--k", type=int, help="cluster count (default from config)")
    p.set_defaults(func=cmd_cluster_subjects)

    p = sub.add_parser(
        "analyze-separation", help="summary vectors -> PCA(2) -> domain silhouette"
    )
    common(p)
    p.set_defaults(func=cmd_analyze_separation)

    p = sub.add_parser("train", help="train one model group for one domain")
    common(p)
    p.add_argument("--domain", required=True, choices=["defog", "tdcsfog"])
    p.add_argument("--feature-set", choices=[s.value for s in FeatureSetId])
    p.add_argument("--clusters", help="Subject,Cluster CSV (required for set G)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-timestep probabilities for one trial")
    common(p, config=False, seed=False)
    p.add_argument("--group-manifest", required=True)
    p.add_argument("--trial", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("pseudolabel", help="generate typed labels for Notype trials")
    common(p, config=False, seed=False)
    p.add_argument("--group-manifest", required=True, help="a trained Defog group")
    p.set_defaults(func=cmd_pseudolabel)

    p = sub.add_parser("retrain", help="retrain a Defog group on real + pseudo trials")
    common(p)
    p.add_argument("--pseudo", required=True, help="directory written by pseudolabel")
    p.add_argument("--domain", default="defog", choices=["defog"])
    p.add_argument("--feature-set", choices=[s.value for s in FeatureSetId])
    p.add_argument("--clusters", help="Subject,Cluster CSV (required for set G)")
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("evaluate", help="emit the scoring report from group manifests")
    common(p, data=False)
    p.add_argument(
        "--group",
        nargs=3,
        action="append",
        required=True,
        metavar=("SET", "DEFOG_MANIFEST", "TDCS_MANIFEST"),
        help="one report row: feature-set name plus the two group manifests",
    )
    p.add_argument("--test-data", help="held-out corpus for private/public scores")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference oracle suite")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--eps", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FogtypeError as exc:
        line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
        print(line, file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

"""Freezing-of-gait event-type prediction from lower-back accelerometry."""

from .data import (
    Dataset,
    Domain,
    Medication,
    Sex,
    Subject,
    TimeSeries,
    TrialMetadata,
    build_corpus,
    generate_trial,
    harmonize_units,
    load_corpus_dir,
    load_metadata_and_subjects,
    load_time_series,
    write_corpus_dir,
    write_time_series,
)
from .evaluation import (
    EvaluationReport,
    average_precision,
    combined_score,
    feature_set_performance,
    mae,
    map_score,
)
from .features import (
    FeatureMatrix,
    FeatureSetId,
    SummaryVector,
    build_feature_matrix,
    compute_jerk,
    compute_magnitude,
    compute_time_frac,
    file_summary_vector,
    standardize,
)
from .model import TransBiLSTM, TransBiLSTMConfig, init_model, param_count
from .pseudolabel import (
    PseudoLabeledSeries,
    PseudoProvenance,
    assign_pseudo_labels,
    build_augmented_dataset,
)
from .stats import (
    Clustering,
    PcaModel,
    cluster_subjects,
    kmeans,
    pca_fit_transform,
    pearson_correlation,
    silhouette_score,
)
from .training import (
    ModelGroup,
    TrainConfig,
    Window,
    make_windows,
    predict_group,
    predict_trial,
    train_fold,
    train_model_group,
    validation_mae,
)

__version__ = "0.1.0"

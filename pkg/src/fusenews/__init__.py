"""fusenews: hybrid statistical/semantic feature-fusion fake news classifier.

The package fuses eight hand-computed text statistics with a dense semantic
embedding through per-feature tokens, multi-head feature attention and a
cross-feature interaction matrix, trains the whole stack with hand-written
backpropagation, and explains predictions via attention heatmaps and exact
Shapley attributions.
"""

from .errors import (
    DegenerateDataError,
    DimensionError,
    ExplainModeError,
    FuseNewsError,
    InputFormatError,
    MissingFileError,
    NonFiniteError,
    NotTrainedError,
    WeightsFormatError,
)
from .features import (
    FEATURE_NAMES,
    Article,
    NormalizationStats,
    apply_zscore,
    default_lexicon,
    extract_stat_features,
    fit_normalizer,
    load_dataset,
    load_lexicon,
    preprocess,
    sentiment_polarity,
)
from .encoding import (
    EmbeddingStore,
    Vocab,
    build_vocab,
    encode_builtin,
    load_precomputed,
    write_store,
)
from .model import (
    FusionModel,
    ModelConfig,
    backward,
    forward,
    load_model,
    new_model,
    save_model,
)
from .training import (
    ConfusionMatrix,
    FoldPlan,
    MetricsReport,
    TrainConfig,
    adam_step,
    cross_entropy,
    cross_validate,
    run_ablation,
    stratified_kfold,
    train,
)
from .explain import (
    HeatmapExport,
    ShapleyReport,
    attention_heatmap,
    exact_shapley,
    permutation_importance,
    sampled_shapley,
)
from .estimator import FusionNewsClassifier, StatFeatureExtractor
from .synthetic import make_planted_corpus

__version__ = "0.1.0"

__all__ = [
    "Article",
    "ConfusionMatrix",
    "DegenerateDataError",
    "DimensionError",
    "EmbeddingStore",
    "ExplainModeError",
    "FEATURE_NAMES",
    "FoldPlan",
    "FuseNewsError",
    "FusionModel",
    "FusionNewsClassifier",
    "HeatmapExport",
    "InputFormatError",
    "MetricsReport",
    "MissingFileError",
    "ModelConfig",
    "NonFiniteError",
    "NormalizationStats",
    "NotTrainedError",
    "ShapleyReport",
    "StatFeatureExtractor",
    "TrainConfig",
    "Vocab",
    "WeightsFormatError",
    "adam_step",
    "apply_zscore",
    "attention_heatmap",
    "backward",
    "build_vocab",
    "cross_entropy",
    "cross_validate",
    "default_lexicon",
    "encode_builtin",
    "exact_shapley",
    "extract_stat_features",
    "fit_normalizer",
    "forward",
    "load_dataset",
    "load_lexicon",
    "load_model",
    "load_precomputed",
    "make_planted_corpus",
    "new_model",
    "permutation_importance",
    "preprocess",
    "run_ablation",
    "sampled_shapley",
    "save_model",
    "sentiment_polarity",
    "stratified_kfold",
    "train",
    "write_store",
]

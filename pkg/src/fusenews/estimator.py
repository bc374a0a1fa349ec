"""scikit-learn compatible front end for the fusion classifier.

``FusionNewsClassifier`` exposes the hand-rolled training pipeline through
the standard fit/predict/predict_proba surface, so the model drops into
sklearn tooling (cross_val_score, GridSearchCV, pipelines) unchanged.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .model import ENCODER_BUILTIN, ModelConfig
from .training import TrainConfig, predict_prepared, prepare_articles, train
from .validation import build_articles, check_binary_labels, check_text_input


class FusionNewsClassifier(BaseEstimator, ClassifierMixin):
    """Binary fake-news classifier over raw (title, body) text samples.

    X may be a sequence of (title, body) pairs, dicts with title/text keys,
    plain strings (body only), or a DataFrame with title and text columns.
    y holds 0 (real) / 1 (fake) labels.
    """

    def __init__(
        self,
        d_h: int = 32,
        heads: int = 4,
        d_t: int = 64,
        ffn_hidden: int | None = None,
        use_stat: bool = True,
        use_attention: bool = True,
        use_interaction: bool = True,
        learning_rate: float = 1e-3,
        batch_size: int = 32,
        max_epochs: int = 20,
        patience: int = 3,
        vocab_cap: int = 20_000,
        random_state: int = 0,
    ):
        self.d_h = d_h
        self.heads = heads
        self.d_t = d_t
        self.ffn_hidden = ffn_hidden
        self.use_stat = use_stat
        self.use_attention = use_attention
        self.use_interaction = use_interaction
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.vocab_cap = vocab_cap
        self.random_state = random_state

    def _configs(self) -> tuple[ModelConfig, TrainConfig]:
        model_config = ModelConfig(
            d_t=self.d_t,
            d_h=self.d_h,
            heads=self.heads,
            ffn_hidden=self.ffn_hidden,
            use_stat=self.use_stat,
            use_attention=self.use_attention,
            use_interaction=self.use_interaction,
        )
        train_config = TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            vocab_cap=self.vocab_cap,
            seed=self.random_state,
        )
        return model_config, train_config

    def fit(self, X, y):
        pairs = check_text_input(X)
        labels = check_binary_labels(y, len(pairs))
        articles = build_articles(pairs, labels)
        model_config, train_config = self._configs()
        result = train(articles, model_config, train_config, encoder=ENCODER_BUILTIN)
        self.model_ = result.model
        self.history_ = result.history
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = len(self.model_.feature_names)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "This FusionNewsClassifier instance is not fitted yet; call fit first."
            )

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        pairs = check_text_input(X)
        prepared = prepare_articles(build_articles(pairs))
        fake_probs, _ = predict_prepared(self.model_, prepared)
        return np.column_stack([1.0 - fake_probs, fake_probs])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.two_d_array = False
        tags.input_tags.string = True
        return tags


class StatFeatureExtractor(BaseEstimator):
    """Transformer from raw text samples to the raw 8-feature matrix."""

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        pairs = check_text_input(X)
        prepared = prepare_articles(build_articles(pairs))
        return np.stack([pa.raw_features for pa in prepared])

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X, y).transform(X)

    def get_feature_names_out(self, input_features=None):
        from .features import FEATURE_NAMES

        return np.array(FEATURE_NAMES)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.two_d_array = False
        tags.input_tags.string = True
        return tags

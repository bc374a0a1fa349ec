"""Interpretability outputs: attention heatmaps and Shapley attributions.

The Shapley game has nine players: the eight statistical features plus the
semantic embedding masked jointly as a single player. Masking replaces a
feature with its training mean, which is exactly zero after z-scoring; the
semantic player masks to the zero vector. The value function is the model's
fake-class probability, so attributions are in probability units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .encoding import EmbeddingStore
from .errors import DegenerateDataError, ExplainModeError, NotTrainedError
from .features import Article, apply_zscore
from .model import FusionModel, forward
from .numerics import Rng
from .training import (
    confusion_from_predictions,
    metrics_from_confusion,
    prepare_articles,
    semantic_vector,
)

MAX_EXACT_PLAYERS = 20


@dataclass
class HeatmapExport:
    """Per-head and head-averaged attention maps with token labels."""

    labels: list[str]
    per_head: np.ndarray  # (heads, n, n)
    averaged: np.ndarray  # (n, n)


@dataclass
class ShapleyReport:
    players: list[str]
    phi: np.ndarray
    base_value: float
    prediction: float
    stderr: np.ndarray | None = None

    @property
    def efficiency_residual(self) -> float:
        return float(abs(self.phi.sum() - (self.prediction - self.base_value)))

    def ranking(self) -> list[int]:
        """Player indices ordered by |phi|, largest first."""
        return list(np.argsort(-np.abs(self.phi), kind="stable"))


def token_labels(model: FusionModel) -> list[str]:
    if model.config.use_stat:
        if model.config.d_s == len(model.feature_names):
            return list(model.feature_names) + ["semantic"]
        return [f"f{i}" for i in range(model.config.d_s)] + ["semantic"]
    return ["semantic"]


def attention_heatmap(
    model: FusionModel,
    article: Article,
    lexicon: dict[str, float] | None = None,
    store: EmbeddingStore | None = None,
) -> HeatmapExport:
    """Attention maps from a forward pass on one article."""
    if not model.config.use_attention:
        raise ExplainModeError("no attention in this configuration")
    if model.normalization is None:
        raise NotTrainedError("model has no fitted normalization stats")
    prepared = prepare_articles([article], lexicon)[0]
    z = apply_zscore(prepared.raw_features, model.normalization)
    s = semantic_vector(model, prepared, store)
    res = forward(z if model.config.use_stat else None, s, model)
    return HeatmapExport(
        labels=token_labels(model),
        per_head=res.attention,
        averaged=res.attention.mean(axis=0),
    )


# ---------------------------------------------------------------------------
# Shapley values
# ---------------------------------------------------------------------------

@dataclass
class ExactShapleyResult:
    phi: np.ndarray
    evaluations: int
    empty_value: float
    full_value: float


def shapley_exact_values(
    value_fn: Callable[[tuple[bool, ...]], float], n_players: int
) -> ExactShapleyResult:
    """Exact Shapley values by full coalition enumeration.

    ``value_fn`` maps a membership mask to a scalar; it is memoized, so the
    number of evaluations is exactly 2**n_players (reported for auditing,
    together with the empty- and full-coalition values from the same memo).
    """
    if n_players > MAX_EXACT_PLAYERS:
        raise DegenerateDataError(
            f"{n_players} players means 2^{n_players} coalitions; "
            "use the sampled estimator instead"
        )
    values: dict[int, float] = {}

    def v(mask_bits: int) -> float:
        if mask_bits not in values:
            mask = tuple(bool(mask_bits >> i & 1) for i in range(n_players))
            values[mask_bits] = float(value_fn(mask))
        return values[mask_bits]

    fact = [math.factorial(i) for i in range(n_players + 1)]
    denom = fact[n_players]
    phi = np.zeros(n_players, dtype=np.float64)
    for player in range(n_players):
        for subset in range(1 << n_players):
            if subset >> player & 1:
                continue
            size = bin(subset).count("1")
            weight = fact[size] * fact[n_players - size - 1] / denom
            phi[player] += weight * (v(subset | 1 << player) - v(subset))
    return ExactShapleyResult(
        phi=phi,
        evaluations=len(values),
        empty_value=v(0),
        full_value=v((1 << n_players) - 1),
    )


def _masked_value_fn(
    model: FusionModel,
    z: np.ndarray,
    s: np.ndarray,
) -> Callable[[tuple[bool, ...]], float]:
    """Fake-class probability with masked-out players at the baseline.

    Players 0..d_s-1 gate the z-scored features (baseline 0); the last
    player gates the whole semantic vector (baseline zero vector).
    """
    cfg = model.config
    zero_s = np.zeros_like(s)

    def value(mask: tuple[bool, ...]) -> float:
        z_in = None
        if cfg.use_stat:
            gate = np.array(mask[: cfg.d_s], dtype=np.float64)
            z_in = z * gate
        s_in = s if mask[-1] else zero_s
        return float(forward(z_in, s_in, model).probs[1])

    return value


def _score_inputs(
    model: FusionModel,
    article: Article,
    lexicon: dict[str, float] | None,
    store: EmbeddingStore | None,
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    if model.normalization is None:
        raise NotTrainedError("model has no fitted normalization stats")
    prepared = prepare_articles([article], lexicon)[0]
    z = apply_zscore(prepared.raw_features, model.normalization)
    s = semantic_vector(model, prepared, store)
    if model.config.use_stat:
        players = list(token_labels(model))
    else:
        players = ["semantic"]
    return z, s, players


def exact_shapley(
    model: FusionModel,
    article: Article,
    lexicon: dict[str, float] | None = None,
    store: EmbeddingStore | None = None,
) -> ShapleyReport:
    """Exact per-feature attribution of the fake-class probability."""
    z, s, players = _score_inputs(model, article, lexicon, store)
    value_fn = _masked_value_fn(model, z, s)
    result = shapley_exact_values(value_fn, len(players))
    return ShapleyReport(
        players=players,
        phi=result.phi,
        base_value=result.empty_value,
        prediction=result.full_value,
    )


def sampled_shapley(
    model: FusionModel,
    article: Article,
    permutations: int,
    seed: int,
    lexicon: dict[str, float] | None = None,
    store: EmbeddingStore | None = None,
) -> ShapleyReport:
    """Monte-Carlo permutation estimator with per-player standard errors.

    With a single permutation the attributions telescope, so their sum equals
    prediction minus baseline exactly, same as the exact method.
    """
    if permutations < 1:
        raise ValueError("permutations must be >= 1")
    z, s, players = _score_inputs(model, article, lexicon, store)
    value_fn = _masked_value_fn(model, z, s)
    n = len(players)
    rng = Rng(seed)
    mean = np.zeros(n, dtype=np.float64)
    m2 = np.zeros(n, dtype=np.float64)
    base = value_fn(tuple(False for _ in range(n)))
    pred = value_fn(tuple(True for _ in range(n)))
    for it in range(1, permutations + 1):
        order = rng.permutation(n)
        mask = [False] * n
        prev = base
        contrib = np.zeros(n, dtype=np.float64)
        for player in order:
            mask[player] = True
            cur = value_fn(tuple(mask))
            contrib[player] = cur - prev
            prev = cur
        delta = contrib - mean
        mean += delta / it
        m2 += delta * (contrib - mean)
    if permutations > 1:
        stderr = np.sqrt(m2 / (permutations - 1) / permutations)
    else:
        stderr = np.zeros(n, dtype=np.float64)
    return ShapleyReport(
        players=players, phi=mean, base_value=base, prediction=pred, stderr=stderr
    )


def permutation_importance(
    model: FusionModel,
    articles: list[Article],
    feature: int,
    seed: int,
    lexicon: dict[str, float] | None = None,
    store: EmbeddingStore | None = None,
) -> float:
    """F1 drop after shuffling one z-scored feature column across the dataset."""
    if len(articles) < 50:
        raise DegenerateDataError(
            f"permutation importance needs >= 50 samples, got {len(articles)}"
        )
    if model.normalization is None:
        raise NotTrainedError("model has no fitted normalization stats")
    if not model.config.use_stat:
        raise ExplainModeError("no statistical features in this configuration")
    if not 0 <= feature < model.config.d_s:
        raise ValueError(f"feature index {feature} out of range")
    prepared = prepare_articles(articles, lexicon)
    labels = [pa.label for pa in prepared]
    z_rows = [apply_zscore(pa.raw_features, model.normalization) for pa in prepared]
    sems = [semantic_vector(model, pa, store) for pa in prepared]

    def f1_with(zs: list[np.ndarray]) -> float:
        predicted = [
            1 if forward(zs[i], sems[i], model).probs[1] >= 0.5 else 0
            for i in range(len(prepared))
        ]
        return metrics_from_confusion(confusion_from_predictions(labels, predicted)).f1

    base_f1 = f1_with(z_rows)
    rng = Rng(seed)
    order = rng.permutation(len(z_rows))
    shuffled = []
    for i, row in enumerate(z_rows):
        row = row.copy()
        row[feature] = z_rows[order[i]][feature]
        shuffled.append(row)
    return base_f1 - f1_with(shuffled)

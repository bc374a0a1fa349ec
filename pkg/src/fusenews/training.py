"""Training loop, stratified cross-validation and confusion-matrix metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .encoding import (
    EmbeddingStore,
    Vocab,
    build_vocab,
    encode_builtin,
    token_index_counts,
)
from .errors import DegenerateDataError, DimensionError, InputFormatError
from .features import (
    Article,
    NormalizationStats,
    apply_zscore,
    default_lexicon,
    extract_stat_features,
    fit_normalizer,
    preprocess,
)
from .model import (
    ENCODER_BUILTIN,
    ENCODER_PRECOMPUTED,
    ForwardResult,
    FusionModel,
    ModelConfig,
    backward,
    forward,
    new_model,
)
from .numerics import Rng


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop hyperparameters."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 3
    val_fraction: float = 0.1
    seed: int = 0
    vocab_cap: int = 20_000

    def __post_init__(self):
        if min(self.learning_rate, self.beta1, self.beta2, self.eps) <= 0:
            raise ValueError("optimizer constants must be positive")
        if min(self.batch_size, self.max_epochs, self.patience) < 1:
            raise ValueError("batch size, epochs and patience must be >= 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "val_fraction": self.val_fraction,
            "seed": self.seed,
            "vocab_cap": self.vocab_cap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """-ln p[label], with the probability clamped below at 1e-12."""
    p = max(float(probs[label]), 1e-12)
    return -float(np.log(p))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; params and state are updated in place."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name, g in grads.items():
        if name not in params:
            raise DimensionError(f"gradient for unknown parameter '{name}'")
        if g.shape != params[name].shape:
            raise DimensionError(
                f"gradient shape {g.shape} != parameter shape {params[name].shape} for '{name}'"
            )
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        params[name] -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    return params, state


# ---------------------------------------------------------------------------
# Stratified k-fold plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    """k disjoint index sets covering the dataset, plus per-fold class counts."""

    folds: tuple[tuple[int, ...], ...]
    class_counts: tuple[dict[int, int], ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_indices(self, fold: int) -> list[int]:
        out: list[int] = []
        for i, members in enumerate(self.folds):
            if i != fold:
                out.extend(members)
        return out


def stratified_kfold(labels: list[int], k: int, seed: int) -> FoldPlan:
    """Per-class seeded shuffle then round-robin assignment into k folds.

    The starting fold is offset by the class rank so the per-class remainders
    land on different folds and overall fold sizes differ by at most one.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    by_class: dict[int, list[int]] = {}
    for idx, label in enumerate(labels):
        by_class.setdefault(label, []).append(idx)
    rng = Rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for rank, cls in enumerate(sorted(by_class)):
        members = by_class[cls]
        if len(members) < k:
            raise DegenerateDataError(
                f"class {cls} has {len(members)} samples, fewer than k={k}"
            )
        rng.shuffle(members)
        for pos, idx in enumerate(members):
            folds[(pos + rank) % k].append(idx)
    counts = tuple(
        {cls: sum(1 for i in f if labels[i] == cls) for cls in sorted(by_class)}
        for f in folds
    )
    plan = FoldPlan(
        folds=tuple(tuple(sorted(f)) for f in folds),
        class_counts=counts,
        seed=seed,
    )
    _check_partition(plan, len(labels))
    return plan


def _check_partition(plan: FoldPlan, n: int) -> None:
    seen: set[int] = set()
    total = 0
    for members in plan.folds:
        total += len(members)
        seen.update(members)
    if total != n or seen != set(range(n)):
        raise AssertionError("fold plan is not a partition of the dataset indices")


def check_fold_isolation(stats: NormalizationStats, eval_fold: int) -> None:
    """Assert that normalization stats were fitted with the eval fold held out."""
    expected = f"excl-fold-{eval_fold}"
    if stats.fitted_on != expected:
        raise AssertionError(
            f"normalization fitted on '{stats.fitted_on}', evaluating fold {eval_fold}"
        )


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with "fake" (label 1) as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_from_predictions(labels: list[int], predicted: list[int]) -> ConfusionMatrix:
    if len(labels) != len(predicted):
        raise DimensionError("labels and predictions differ in length")
    tp = fp = fn = tn = 0
    for y, p in zip(labels, predicted):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1 and y == 0:
            fp += 1
        elif p == 0 and y == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def f1_from_pr(precision: float, recall: float) -> float:
    """F1 = 2PR / (P + R); defined as 0 when P + R = 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class FoldMetrics:
    fold: int
    cm: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float
    time_ms: float
    flags: tuple[str, ...] = ()


def metrics_from_confusion(cm: ConfusionMatrix, fold: int = 0, time_ms: float = 0.0) -> FoldMetrics:
    flags: list[str] = []
    if cm.total == 0:
        raise DegenerateDataError("cannot compute metrics over zero samples")
    accuracy = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp == 0:
        precision = 0.0
        flags.append("no_positive_predictions")
    else:
        precision = cm.tp / (cm.tp + cm.fp)
    if cm.tp + cm.fn == 0:
        recall = 0.0
        flags.append("no_positive_labels")
    else:
        recall = cm.tp / (cm.tp + cm.fn)
    return FoldMetrics(
        fold=fold,
        cm=cm,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1_from_pr(precision, recall),
        time_ms=time_ms,
        flags=tuple(flags),
    )


@dataclass
class MetricsReport:
    folds: list[FoldMetrics]
    seed: int

    _METRICS = ("accuracy", "precision", "recall", "f1", "time_ms")

    def mean(self, metric: str) -> float:
        return float(np.mean([getattr(f, metric) for f in self.folds]))

    def std(self, metric: str) -> float:
        return float(np.std([getattr(f, metric) for f in self.folds]))

    def summary(self) -> dict[str, tuple[float, float]]:
        return {m: (self.mean(m), self.std(m)) for m in self._METRICS}


# ---------------------------------------------------------------------------
# Article preparation and encoding
# ---------------------------------------------------------------------------

@dataclass
class PreparedArticle:
    id: str
    label: int
    tokens: list[str]
    raw_features: np.ndarray


def prepare_articles(
    articles: list[Article], lexicon: dict[str, float] | None = None
) -> list[PreparedArticle]:
    """Tokenize (title + body) and extract raw features once per article."""
    if lexicon is None:
        lexicon = default_lexicon()
    out = []
    for a in articles:
        tokens = preprocess(a.title) + preprocess(a.body)
        out.append(
            PreparedArticle(
                id=a.id,
                label=a.label,
                tokens=tokens,
                raw_features=extract_stat_features(a, lexicon),
            )
        )
    return out


def semantic_vector(
    model: FusionModel, prepared: PreparedArticle, store: EmbeddingStore | None
) -> np.ndarray:
    if model.encoder == ENCODER_BUILTIN:
        return encode_builtin(prepared.tokens, model.vocab, model.params["emb_table"])
    if store is None:
        raise InputFormatError(
            "model uses precomputed embeddings but no embedding store was provided"
        )
    vec = store.get(prepared.id)
    if vec.shape != (model.config.d_t,):
        raise DimensionError(
            f"embedding for '{prepared.id}' has dim {vec.shape[0]}, model expects {model.config.d_t}"
        )
    return vec


def score_article(
    model: FusionModel, prepared: PreparedArticle, store: EmbeddingStore | None = None
) -> ForwardResult:
    """Featurize, normalize, encode and run the forward pass for one article."""
    if model.normalization is None:
        raise DegenerateDataError("model has no fitted normalization stats")
    z = apply_zscore(prepared.raw_features, model.normalization)
    s = semantic_vector(model, prepared, store)
    return forward(z if model.config.use_stat else None, s, model)


def predict_prepared(
    model: FusionModel,
    prepared: list[PreparedArticle],
    store: EmbeddingStore | None = None,
) -> tuple[np.ndarray, float]:
    """Fake-class probabilities for a batch, plus mean per-sample wall time (ms)."""
    probs = np.empty(len(prepared), dtype=np.float64)
    start = time.perf_counter()
    for i, pa in enumerate(prepared):
        probs[i] = score_article(model, pa, store).probs[1]
    elapsed = time.perf_counter() - start
    per_sample_ms = (elapsed / len(prepared) * 1000.0) if prepared else 0.0
    return probs, per_sample_ms


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float


@dataclass
class TrainResult:
    model: FusionModel
    history: list[EpochStats]
    best_epoch: int


def _stratified_split(
    labels: list[int], fraction: float, rng: Rng
) -> tuple[list[int], list[int]]:
    """Per-class shuffle; first ceil(fraction * n_c) of each class go to val."""
    by_class: dict[int, list[int]] = {}
    for i, y in enumerate(labels):
        by_class.setdefault(y, []).append(i)
    val: list[int] = []
    train: list[int] = []
    for cls in sorted(by_class):
        members = by_class[cls]
        rng.shuffle(members)
        n_val = max(1, int(round(fraction * len(members))))
        if n_val >= len(members):
            raise DegenerateDataError(
                f"class {cls} has too few samples ({len(members)}) for a validation split"
            )
        val.extend(members[:n_val])
        train.extend(members[n_val:])
    return sorted(train), sorted(val)


def train(
    articles: list[Article],
    model_config: ModelConfig,
    train_config: TrainConfig,
    encoder: str = ENCODER_BUILTIN,
    store: EmbeddingStore | None = None,
    lexicon: dict[str, float] | None = None,
    fitted_tag: str = "train",
) -> TrainResult:
    """Fit a fusion model on ``articles`` with early stopping on validation F1.

    The normalizer and (for the builtin encoder) the vocabulary are fitted on
    the internal training split only. All randomness flows from
    ``train_config.seed``: split first, then parameter init, then the epoch
    shuffles, in that documented order.
    """
    if encoder not in (ENCODER_BUILTIN, ENCODER_PRECOMPUTED):
        raise ValueError(f"unknown encoder '{encoder}'")
    labels = [a.label for a in articles]
    if len(set(labels)) < 2:
        raise DegenerateDataError("training data must contain both classes")
    prepared = prepare_articles(articles, lexicon)

    rng = Rng(train_config.seed)
    train_idx, val_idx = _stratified_split(labels, train_config.val_fraction, rng)

    stats = fit_normalizer(
        np.stack([prepared[i].raw_features for i in train_idx]), fitted_on=fitted_tag
    )

    vocab: Vocab | None = None
    if encoder == ENCODER_BUILTIN:
        vocab = build_vocab(
            [prepared[i].tokens for i in train_idx], cap=train_config.vocab_cap
        )
    elif store is not None and model_config.d_t != store.dim:
        # the embedding file is the source of truth for d_t on this path
        model_config = replace(model_config, d_t=store.dim)

    model = new_model(model_config, seed=rng.next_uint64() & 0x7FFFFFFF, encoder=encoder, vocab=vocab)
    model.normalization = stats
    z_scored = [apply_zscore(pa.raw_features, stats) for pa in prepared]

    state = AdamState.zeros_like(model.params)
    history: list[EpochStats] = []
    best_f1 = -1.0
    best_params = model.copy_params()
    best_epoch = 0
    stale = 0

    def sample_pass(i: int, accumulate: dict[str, np.ndarray] | None) -> float:
        pa = prepared[i]
        s = semantic_vector(model, pa, store)
        res = forward(z_scored[i] if model_config.use_stat else None, s, model)
        loss = cross_entropy(res.probs, pa.label)
        if accumulate is not None:
            grads, d_sem = backward(model, res.cache, pa.label)
            if encoder == ENCODER_BUILTIN:
                g_table = accumulate.setdefault(
                    "emb_table", np.zeros_like(model.params["emb_table"])
                )
                if pa.tokens:
                    w = 1.0 / len(pa.tokens)
                    for row, count in token_index_counts(pa.tokens, model.vocab).items():
                        g_table[row] += d_sem * (count * w)
            for name, g in grads.items():
                if name in accumulate:
                    accumulate[name] += g
                else:
                    accumulate[name] = g.copy()
        return loss

    for epoch in range(1, train_config.max_epochs + 1):
        order = list(train_idx)
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            acc: dict[str, np.ndarray] = {}
            for i in batch:
                epoch_loss += sample_pass(i, acc)
            inv = 1.0 / len(batch)
            for g in acc.values():
                g *= inv
            adam_step(model.params, acc, state, train_config)
        epoch_loss /= len(order)

        val_loss = 0.0
        val_pred = []
        for i in val_idx:
            pa = prepared[i]
            s = semantic_vector(model, pa, store)
            res = forward(z_scored[i] if model_config.use_stat else None, s, model)
            val_loss += cross_entropy(res.probs, pa.label)
            val_pred.append(1 if res.probs[1] >= 0.5 else 0)
        val_loss /= len(val_idx)
        cm = confusion_from_predictions([labels[i] for i in val_idx], val_pred)
        val_f1 = metrics_from_confusion(cm).f1
        history.append(
            EpochStats(epoch=epoch, train_loss=epoch_loss, val_loss=val_loss, val_f1=val_f1)
        )
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_params = model.copy_params()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= train_config.patience:
                break

    model.params = best_params
    return TrainResult(model=model, history=history, best_epoch=best_epoch)


# ---------------------------------------------------------------------------
# Cross-validated evaluation and ablations
# ---------------------------------------------------------------------------

def cross_validate(
    articles: list[Article],
    k: int,
    model_config: ModelConfig,
    train_config: TrainConfig,
    encoder: str = ENCODER_BUILTIN,
    store: EmbeddingStore | None = None,
    lexicon: dict[str, float] | None = None,
) -> MetricsReport:
    """Train on k-1 folds and score the held-out fold, for each fold.

    Per-fold seeds derive deterministically from the base seed; normalization
    and vocab are refitted inside each fold's training data only, which
    :func:`check_fold_isolation` asserts before any test sample is scored.
    """
    labels = [a.label for a in articles]
    plan = stratified_kfold(labels, k, train_config.seed)
    fold_metrics: list[FoldMetrics] = []
    for fold in range(plan.k):
        train_articles = [articles[i] for i in plan.train_indices(fold)]
        fold_cfg = replace(train_config, seed=train_config.seed + fold)
        result = train(
            train_articles,
            model_config,
            fold_cfg,
            encoder=encoder,
            store=store,
            lexicon=lexicon,
            fitted_tag=f"excl-fold-{fold}",
        )
        check_fold_isolation(result.model.normalization, fold)
        test_prepared = prepare_articles([articles[i] for i in plan.folds[fold]], lexicon)
        probs, per_sample_ms = predict_prepared(result.model, test_prepared, store)
        predicted = [1 if p >= 0.5 else 0 for p in probs]
        cm = confusion_from_predictions([pa.label for pa in test_prepared], predicted)
        fold_metrics.append(metrics_from_confusion(cm, fold=fold, time_ms=per_sample_ms))
    return MetricsReport(folds=fold_metrics, seed=train_config.seed)


ABLATION_LADDER: tuple[tuple[str, dict], ...] = (
    ("semantic-only", {"use_stat": False, "use_attention": False, "use_interaction": False}),
    ("stat", {"use_stat": True, "use_attention": False, "use_interaction": False}),
    ("attention", {"use_stat": True, "use_attention": True, "use_interaction": False}),
    ("full", {"use_stat": True, "use_attention": True, "use_interaction": True}),
)


def run_ablation(
    articles: list[Article],
    k: int,
    model_config: ModelConfig,
    train_config: TrainConfig,
    encoder: str = ENCODER_BUILTIN,
    store: EmbeddingStore | None = None,
    lexicon: dict[str, float] | None = None,
) -> list[tuple[str, MetricsReport]]:
    """Evaluate the component ladder under identical folds and seeds."""
    results = []
    for name, flags in ABLATION_LADDER:
        cfg = replace(model_config, **flags)
        results.append(
            (name, cross_validate(articles, k, cfg, train_config, encoder, store, lexicon))
        )
    return results

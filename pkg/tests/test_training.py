import math

import numpy as np
import pytest

from fusenews.errors import DegenerateDataError, DimensionError
from fusenews.features import Article
from fusenews.model import ModelConfig, save_model
from fusenews.numerics import Rng
from fusenews.synthetic import MARKER_TOKEN, make_planted_corpus
from fusenews.training import (
    AdamState,
    ConfusionMatrix,
    TrainConfig,
    adam_step,
    check_fold_isolation,
    confusion_from_predictions,
    cross_entropy,
    cross_validate,
    f1_from_pr,
    metrics_from_confusion,
    run_ablation,
    stratified_kfold,
    train,
)

FAST_MODEL = ModelConfig(d_t=16, d_h=8, heads=2)
FAST_TRAIN = TrainConfig(seed=3, max_epochs=6, learning_rate=3e-3, vocab_cap=500)


class TestCrossEntropy:
    def test_even_split(self):
        assert cross_entropy(np.array([0.5, 0.5]), 0) == pytest.approx(math.log(2))
        assert cross_entropy(np.array([0.5, 0.5]), 1) == pytest.approx(math.log(2))

    def test_certain_correct(self):
        assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0

    def test_clamped_floor(self):
        assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(27.631, abs=1e-3)


class TestAdam:
    def _params(self):
        return {"w": np.array([1.0, -2.0, 3.0])}

    def test_zero_gradient_no_move(self):
        params = self._params()
        state = AdamState.zeros_like(params)
        adam_step(params, {"w": np.zeros(3)}, state, TrainConfig())
        np.testing.assert_allclose(params["w"], [1.0, -2.0, 3.0])

    def test_first_step_magnitude_is_lr(self):
        cfg = TrainConfig(learning_rate=0.01)
        params = self._params()
        state = AdamState.zeros_like(params)
        g = np.array([0.3, -4.0, 0.001])
        adam_step(params, {"w": g}, state, cfg)
        step = self._params()["w"] - params["w"]
        np.testing.assert_allclose(step, cfg.learning_rate * np.sign(g), rtol=1e-4)

    def test_deterministic(self):
        def run():
            params = self._params()
            state = AdamState.zeros_like(params)
            rng = Rng(5)
            for _ in range(10):
                adam_step(params, {"w": rng.uniforms(3, -1, 1)}, state, TrainConfig())
            return params["w"]

        np.testing.assert_array_equal(run(), run())

    def test_shape_mismatch(self):
        params = self._params()
        state = AdamState.zeros_like(params)
        with pytest.raises(DimensionError):
            adam_step(params, {"w": np.zeros(4)}, state, TrainConfig())


class TestMetrics:
    def test_hand_confusion(self):
        m = metrics_from_confusion(ConfusionMatrix(tp=9, fp=1, fn=1, tn=9))
        assert m.precision == pytest.approx(0.9)
        assert m.recall == pytest.approx(0.9)
        assert m.f1 == pytest.approx(0.9)
        assert m.accuracy == pytest.approx(0.9)

    def test_f1_identity_on_reference_pairs(self):
        assert f1_from_pr(0.943, 0.947) == pytest.approx(0.945, abs=5e-4)
        assert f1_from_pr(0.925, 0.935) == pytest.approx(0.930, abs=5e-4)

    def test_zero_denominators_flagged_not_nan(self):
        m = metrics_from_confusion(ConfusionMatrix(tp=0, fp=0, fn=0, tn=5))
        assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
        assert "no_positive_predictions" in m.flags and "no_positive_labels" in m.flags

    def test_confusion_from_predictions(self):
        cm = confusion_from_predictions([1, 1, 0, 0], [1, 0, 1, 0])
        assert (cm.tp, cm.fn, cm.fp, cm.tn) == (1, 1, 1, 1)


class TestStratifiedKFold:
    def test_balanced_ten(self):
        labels = [1, 0] * 5
        plan = stratified_kfold(labels, k=5, seed=1)
        for members, counts in zip(plan.folds, plan.class_counts):
            assert len(members) == 2
            assert counts == {0: 1, 1: 1}

    def test_partition_and_size_balance(self):
        rng = Rng(9)
        labels = [rng.randint(2) for _ in range(237)]
        plan = stratified_kfold(labels, k=5, seed=4)
        all_indices = sorted(i for f in plan.folds for i in f)
        assert all_indices == list(range(237))
        sizes = [len(f) for f in plan.folds]
        assert max(sizes) - min(sizes) <= 1
        for cls in (0, 1):
            per_fold = [c[cls] for c in plan.class_counts]
            assert max(per_fold) - min(per_fold) <= 1

    def test_same_seed_same_plan(self):
        labels = [i % 2 for i in range(40)]
        assert stratified_kfold(labels, 4, 7) == stratified_kfold(labels, 4, 7)
        assert stratified_kfold(labels, 4, 7) != stratified_kfold(labels, 4, 8)

    def test_small_class_rejected(self):
        with pytest.raises(DegenerateDataError):
            stratified_kfold([0, 0, 0, 0, 1, 1], k=3, seed=0)

    def test_isolation_guard(self):
        from fusenews.features import NormalizationStats

        stats = NormalizationStats(np.zeros(8), np.ones(8), fitted_on="excl-fold-2")
        check_fold_isolation(stats, 2)
        with pytest.raises(AssertionError):
            check_fold_isolation(stats, 1)


class TestTrain:
    def test_single_class_rejected(self):
        arts = [Article(id=str(i), title="t", body="b", label=1) for i in range(10)]
        with pytest.raises(DegenerateDataError):
            train(arts, FAST_MODEL, FAST_TRAIN)

    def test_learns_planted_corpus(self):
        corpus = make_planted_corpus(300, seed=2)
        result = train(corpus, FAST_MODEL, TrainConfig(seed=3, max_epochs=12, learning_rate=3e-3))
        assert max(h.val_f1 for h in result.history) >= 0.9

    def test_loss_moving_average_non_increasing_early(self):
        corpus = make_planted_corpus(300, seed=4)
        result = train(corpus, FAST_MODEL, FAST_TRAIN)
        losses = [h.train_loss for h in result.history[:4]]
        avg = [(losses[i] + losses[i + 1]) / 2 for i in range(len(losses) - 1)]
        assert all(avg[i + 1] <= avg[i] + 1e-9 for i in range(len(avg) - 1))

    def test_same_seed_identical_weight_bytes(self, tmp_path):
        corpus = make_planted_corpus(120, seed=6)
        p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        save_model(train(corpus, FAST_MODEL, FAST_TRAIN).model, p1)
        save_model(train(corpus, FAST_MODEL, FAST_TRAIN).model, p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_normalizer_tagged_and_vocab_from_training_only(self):
        corpus = make_planted_corpus(120, seed=8)
        result = train(corpus, FAST_MODEL, FAST_TRAIN, fitted_tag="excl-fold-0")
        assert result.model.normalization.fitted_on == "excl-fold-0"
        assert result.model.vocab is not None
        assert MARKER_TOKEN in result.model.vocab.index

    def test_best_epoch_weights_returned(self):
        corpus = make_planted_corpus(200, seed=10)
        result = train(corpus, FAST_MODEL, TrainConfig(seed=3, max_epochs=8, learning_rate=3e-3))
        best = max(h.val_f1 for h in result.history)
        assert result.history[result.best_epoch - 1].val_f1 == best


class TestCrossValidate:
    def test_report_shape_and_aggregates(self):
        corpus = make_planted_corpus(150, seed=12)
        report = cross_validate(corpus, 3, FAST_MODEL, FAST_TRAIN)
        assert len(report.folds) == 3
        assert sum(f.cm.total for f in report.folds) == 150
        mean_f1 = sum(f.f1 for f in report.folds) / 3
        assert abs(report.mean("f1") - mean_f1) < 1e-12
        assert all(f.time_ms > 0 for f in report.folds)

    def test_deterministic_metrics(self):
        corpus = make_planted_corpus(120, seed=13)
        r1 = cross_validate(corpus, 2, FAST_MODEL, FAST_TRAIN)
        r2 = cross_validate(corpus, 2, FAST_MODEL, FAST_TRAIN)
        assert [f.cm for f in r1.folds] == [f.cm for f in r2.folds]


class TestPrecomputedEncoder:
    def _corpus_and_store(self, n=120, d=10, seed=50):
        from fusenews.encoding import EmbeddingStore

        corpus = make_planted_corpus(n, seed=seed)
        rng = Rng(seed + 1)
        vectors = {}
        for a in corpus:
            base = rng.uniforms(d, -0.3, 0.3)
            base[0] += 2.0 if a.label == 1 else -2.0  # separable direction
            vectors[a.id] = base
        return corpus, EmbeddingStore(vectors=vectors, dim=d, source="test")

    def test_trains_on_store_and_adopts_dim(self):
        corpus, store = self._corpus_and_store()
        cfg = ModelConfig(d_t=999, d_h=8, heads=2)  # d_t comes from the store
        result = train(corpus, cfg, FAST_TRAIN, encoder="precomputed", store=store)
        assert result.model.config.d_t == store.dim
        assert result.model.vocab is None
        assert "emb_table" not in result.model.params
        assert max(h.val_f1 for h in result.history) >= 0.9

    def test_missing_embedding_id_fails(self):
        from fusenews.errors import InputFormatError

        corpus, store = self._corpus_and_store(n=60)
        del store.vectors[corpus[0].id]
        with pytest.raises(InputFormatError):
            train(corpus, ModelConfig(d_t=10, d_h=8, heads=2), FAST_TRAIN,
                  encoder="precomputed", store=store)

    def test_cross_validate_on_store(self):
        corpus, store = self._corpus_and_store(n=80)
        report = cross_validate(
            corpus, 2, ModelConfig(d_t=10, d_h=8, heads=2), FAST_TRAIN,
            encoder="precomputed", store=store,
        )
        assert len(report.folds) == 2
        assert report.mean("f1") > 0.8


class TestAblation:
    def test_ladder_rows_and_fold_identity(self):
        corpus = make_planted_corpus(120, seed=14)
        rows = run_ablation(corpus, 2, FAST_MODEL, FAST_TRAIN)
        assert [name for name, _ in rows] == ["semantic-only", "stat", "attention", "full"]
        # identical seeds imply identical fold plans; totals must agree per fold
        base = [f.cm.total for f in rows[0][1].folds]
        for _, report in rows[1:]:
            assert [f.cm.total for f in report.folds] == base
        for _, report in rows:
            assert {"f1", "precision", "recall"} <= set(report.summary())

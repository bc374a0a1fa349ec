import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import StratifiedKFold, cross_val_score

from fusenews.estimator import FusionNewsClassifier, StatFeatureExtractor
from fusenews.features import FEATURE_NAMES
from fusenews.synthetic import make_planted_corpus

FAST = dict(d_h=8, heads=2, d_t=16, max_epochs=5, learning_rate=3e-3, vocab_cap=500)


def corpus_arrays(n=160, seed=31):
    corpus = make_planted_corpus(n, seed=seed)
    X = np.empty((n, 2), dtype=object)
    for i, a in enumerate(corpus):
        X[i, 0] = a.title
        X[i, 1] = a.body
    y = np.array([a.label for a in corpus])
    return X, y


class TestEstimatorBasics:
    def test_fit_predict_shapes(self):
        X, y = corpus_arrays()
        clf = FusionNewsClassifier(**FAST).fit(X, y)
        proba = clf.predict_proba(X[:10])
        assert proba.shape == (10, 2)
        np.testing.assert_allclose(proba.sum(axis=1), np.ones(10), atol=1e-12)
        preds = clf.predict(X[:10])
        assert set(preds) <= {0, 1}

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            FusionNewsClassifier().predict([("a", "b")])

    def test_get_set_params_roundtrip(self):
        clf = FusionNewsClassifier(d_h=16, heads=4)
        params = clf.get_params()
        assert params["d_h"] == 16
        clf.set_params(d_h=8, heads=2)
        assert clf.d_h == 8

    def test_clone_preserves_params(self):
        clf = FusionNewsClassifier(**FAST, random_state=9)
        cloned = clone(clf)
        assert cloned.get_params() == clf.get_params()

    def test_accepts_dicts_strings_and_dataframes(self):
        X, y = corpus_arrays(60)
        clf = FusionNewsClassifier(**{**FAST, "max_epochs": 3}).fit(
            [{"title": t, "text": b} for t, b in X], y
        )
        assert clf.predict([("SOME TITLE", "body text")]).shape == (1,)
        assert clf.predict(["just a body string"]).shape == (1,)
        pd = pytest.importorskip("pandas")
        frame = pd.DataFrame({"title": X[:5, 0], "text": X[:5, 1]})
        assert clf.predict(frame).shape == (5,)

    def test_determinism_same_random_state(self):
        X, y = corpus_arrays(80)
        p1 = FusionNewsClassifier(**FAST, random_state=4).fit(X, y).predict_proba(X[:8])
        p2 = FusionNewsClassifier(**FAST, random_state=4).fit(X, y).predict_proba(X[:8])
        np.testing.assert_array_equal(p1, p2)

    def test_learns_signal(self):
        X, y = corpus_arrays(240)
        clf = FusionNewsClassifier(**{**FAST, "max_epochs": 8}).fit(X, y)
        assert clf.score(X, y) >= 0.9

    def test_invalid_inputs_rejected(self):
        clf = FusionNewsClassifier(**FAST)
        with pytest.raises(TypeError):
            clf.fit("single string", [0])
        with pytest.raises(ValueError):
            clf.fit([("t", "b"), ("t2", "b2")], [0, 2])
        with pytest.raises(ValueError):
            clf.fit([("t", "b")], [0, 1])


class TestSklearnComposition:
    def test_cross_val_score(self):
        X, y = corpus_arrays(120)
        clf = FusionNewsClassifier(**{**FAST, "max_epochs": 3})
        cv = StratifiedKFold(n_splits=2)
        scores = cross_val_score(clf, X, y, cv=cv, error_score="raise")
        assert scores.shape == (2,)
        assert (scores > 0.5).all()

    def test_feature_extractor_transform(self):
        X, _ = corpus_arrays(20)
        mat = StatFeatureExtractor().fit_transform(X)
        assert mat.shape == (20, len(FEATURE_NAMES))
        assert list(StatFeatureExtractor().get_feature_names_out()) == list(FEATURE_NAMES)

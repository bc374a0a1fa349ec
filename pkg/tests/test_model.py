import json
import os

import numpy as np
import pytest

from oracles import naive_attention, naive_forward
from fusenews.encoding import build_vocab
from fusenews.errors import DimensionError, WeightsFormatError
from fusenews.model import (
    ENCODER_PRECOMPUTED,
    ModelConfig,
    backward,
    classify,
    cross_interaction,
    feature_attention,
    forward,
    load_model,
    new_model,
    param_spec,
    save_model,
    transform_features,
)
from fusenews.features import NormalizationStats
from fusenews.numerics import Rng

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def tiny_model(seed=7, **cfg_kwargs):
    defaults = dict(d_s=8, d_t=12, d_h=16, heads=4)
    defaults.update(cfg_kwargs)
    cfg = ModelConfig(**defaults)
    return new_model(cfg, seed=seed, encoder=ENCODER_PRECOMPUTED, vocab=None)


def random_inputs(cfg, seed=5):
    rng = Rng(seed)
    z = rng.uniforms(cfg.d_s, -2, 2)
    s = rng.uniforms(cfg.d_t, -1, 1)
    return z, s


class TestConfig:
    def test_heads_must_divide(self):
        with pytest.raises(DimensionError):
            ModelConfig(d_h=30, heads=4)

    def test_ffn_hidden_defaults_to_twice_dh(self):
        assert ModelConfig(d_h=32).ffn_hidden == 64

    def test_roundtrip(self):
        cfg = ModelConfig(d_t=20, d_h=8, heads=2, use_interaction=False)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestTransform:
    def test_shapes(self):
        m = tiny_model(d_t=64, d_h=32, heads=4)
        z, s = random_inputs(m.config)
        tokens, _ = transform_features(z, s, m)
        assert tokens.shape == (9, 32)

    def test_zero_feature_ignores_scale(self):
        m = tiny_model()
        z, s = random_inputs(m.config)
        z[3] = 0.0
        tokens, _ = transform_features(z, s, m)
        m2 = tiny_model()
        m2.params["stat_scale"][3] = Rng(123).uniforms(16, -5, 5)
        tokens2, _ = transform_features(z, s, m2)
        np.testing.assert_allclose(tokens[3], tokens2[3], atol=1e-12)

    def test_semantic_only_single_token(self):
        m = tiny_model(use_stat=False)
        _, s = random_inputs(m.config)
        tokens, _ = transform_features(None, s, m)
        assert tokens.shape == (1, 16)

    def test_dim_mismatch(self):
        m = tiny_model()
        with pytest.raises(DimensionError):
            transform_features(np.zeros(5), np.zeros(m.config.d_t), m)


class TestAttention:
    def test_zero_qk_uniform_rows(self):
        m = tiny_model()
        m.params["attn_wq"][:] = 0.0
        m.params["attn_wk"][:] = 0.0
        z, s = random_inputs(m.config)
        tokens, _ = transform_features(z, s, m)
        _, maps, _ = feature_attention(tokens, m)
        np.testing.assert_allclose(maps, np.full_like(maps, 1.0 / 9.0), atol=1e-15)

    def test_single_token_residual_form(self):
        m = tiny_model(use_stat=False)
        _, s = random_inputs(m.config)
        tokens, _ = transform_features(None, s, m)
        out, maps, _ = feature_attention(tokens, m)
        np.testing.assert_allclose(maps, np.ones((4, 1, 1)))
        h1 = tokens[0]
        concat = np.concatenate(
            [h1 @ m.params["attn_wv"][h] for h in range(m.config.heads)]
        )
        expected = h1 + concat @ m.params["attn_wo"]
        np.testing.assert_allclose(out[0], expected, atol=1e-12)

    def test_matches_naive_loop_oracle(self):
        cfg = ModelConfig(d_s=2, d_t=6, d_h=6, heads=2)
        m = new_model(cfg, seed=31, encoder=ENCODER_PRECOMPUTED)
        rng = Rng(17)
        tokens = rng.uniforms(3 * 6, -1, 1).reshape(3, 6)
        out, maps, _ = feature_attention(tokens, m)
        n_maps, n_out = naive_attention(
            tokens.tolist(),
            m.params["attn_wq"].tolist(),
            m.params["attn_wk"].tolist(),
            m.params["attn_wv"].tolist(),
            m.params["attn_wo"].tolist(),
            heads=2,
            d_k=3,
        )
        assert np.abs(np.array(n_maps) - maps).max() < 1e-12
        assert np.abs(np.array(n_out) - out).max() < 1e-12

    def test_row_stochastic_property(self):
        rng = Rng(71)
        for trial in range(20):
            m = tiny_model(seed=trial)
            tokens = rng.uniforms(9 * 16, -3, 3).reshape(9, 16)
            _, maps, _ = feature_attention(tokens, m)
            assert (maps >= 0).all()
            assert np.abs(maps.sum(axis=2) - 1.0).max() <= 1e-9

    def test_permutation_equivariance(self):
        m = tiny_model()
        rng = Rng(3)
        tokens = rng.uniforms(9 * 16, -2, 2).reshape(9, 16)
        out, maps, _ = feature_attention(tokens, m)
        for _ in range(5):
            perm = np.array(rng.permutation(9))
            out_p, maps_p, _ = feature_attention(tokens[perm], m)
            np.testing.assert_allclose(out_p, out[perm], atol=1e-12)
            for h in range(m.config.heads):
                np.testing.assert_allclose(
                    maps_p[h], maps[h][np.ix_(perm, perm)], atol=1e-12
                )


class TestInteraction:
    def test_zero_us_uniform_rows(self):
        m_mat, fused, _ = cross_interaction(np.zeros(16), Rng(2).uniforms(16, -1, 1), 16)
        np.testing.assert_allclose(m_mat, np.full((16, 16), 1.0 / 16.0))
        assert fused.shape == (64,)

    def test_matrix_is_dh_by_dh(self):
        u = Rng(4).uniforms(4, -1, 1)
        w = Rng(5).uniforms(4, -1, 1)
        m_mat, fused, _ = cross_interaction(u, w, 4)
        assert m_mat.shape == (4, 4)
        assert fused.shape == (16,)

    def test_rows_stochastic_and_fused_layout(self):
        rng = Rng(8)
        for _ in range(20):
            u_s = rng.uniforms(16, -4, 4)
            u_t = rng.uniforms(16, -4, 4)
            m_mat, fused, _ = cross_interaction(u_s, u_t, 16)
            assert np.abs(m_mat.sum(axis=1) - 1.0).max() <= 1e-12
            # direct recomputation oracle
            scores = np.outer(u_s, u_t) / np.sqrt(16)
            expect = np.exp(scores - scores.max(axis=1, keepdims=True))
            expect /= expect.sum(axis=1, keepdims=True)
            np.testing.assert_allclose(m_mat, expect, atol=1e-12)
            np.testing.assert_allclose(fused[:16], u_s)
            np.testing.assert_allclose(fused[16:32], u_t)
            np.testing.assert_allclose(fused[32:48], m_mat @ u_t, atol=1e-12)
            np.testing.assert_allclose(fused[48:], m_mat.T @ u_s, atol=1e-12)


class TestClassify:
    def test_zero_weights_coin_flip(self):
        m = tiny_model()
        for k in ("ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2"):
            m.params[k][:] = 0.0
        probs, _ = classify(np.ones(m.config.fused_dim), m)
        np.testing.assert_allclose(probs, [0.5, 0.5])

    def test_probs_sum_to_one(self):
        rng = Rng(31)
        m = tiny_model()
        for _ in range(30):
            probs, _ = classify(rng.uniforms(m.config.fused_dim, -5, 5), m)
            assert abs(probs.sum() - 1.0) <= 1e-12

    def test_known_logits(self):
        m = tiny_model()
        m.params["ffn_w1"][:] = 0.0
        m.params["ffn_b1"][:] = 0.0
        m.params["ffn_w2"][:] = 0.0
        m.params["ffn_b2"][:] = np.array([np.log(3.0), 0.0])
        probs, _ = classify(np.zeros(m.config.fused_dim), m)
        np.testing.assert_allclose(probs, [0.75, 0.25], atol=1e-12)


class TestForward:
    def test_deterministic(self):
        m = tiny_model()
        z, s = random_inputs(m.config)
        r1 = forward(z, s, m)
        r2 = forward(z, s, m)
        assert np.array_equal(r1.probs, r2.probs)
        assert np.array_equal(r1.attention, r2.attention)

    def test_semantic_only_path_shape(self):
        m = tiny_model(use_stat=False)
        _, s = random_inputs(m.config)
        res = forward(None, s, m)
        assert res.attention.shape == (4, 1, 1)
        assert res.probs.shape == (2,)

    def test_golden_straight_line_reimplementation(self):
        with open(os.path.join(DATA_DIR, "forward_golden.json"), encoding="utf-8") as fh:
            golden = json.load(fh)
        cfg = ModelConfig.from_dict(golden["config"])
        vocab = build_vocab(golden["vocab_corpus"], cap=golden["vocab_cap"])
        model = new_model(cfg, seed=golden["seed"], vocab=vocab)
        res = forward(np.array(golden["z"]), np.array(golden["s"]), model)
        np.testing.assert_allclose(res.probs, golden["expected_probs"], atol=1e-12)
        np.testing.assert_allclose(
            res.attention, golden["expected_attention"], atol=1e-12
        )
        np.testing.assert_allclose(
            res.interaction, golden["expected_interaction"], atol=1e-12
        )

    def test_matches_oracle_on_fresh_random_instance(self):
        cfg = ModelConfig(d_s=8, d_t=10, d_h=8, heads=2)
        m = new_model(cfg, seed=900, encoder=ENCODER_PRECOMPUTED)
        z, s = random_inputs(cfg, seed=901)
        res = forward(z, s, m)
        probs, maps, inter, _ = naive_forward(
            {k: v.tolist() for k, v in m.params.items()},
            {**cfg.to_dict(), "ffn_hidden": cfg.ffn_hidden},
            z.tolist(),
            s.tolist(),
        )
        np.testing.assert_allclose(res.probs, probs, atol=1e-12)
        np.testing.assert_allclose(res.attention, maps, atol=1e-12)
        np.testing.assert_allclose(res.interaction, inter, atol=1e-12)


class TestAblationStructure:
    def counts(self, **flags):
        return tiny_model(**flags).parameter_count

    def test_parameter_count_ordering(self):
        full = self.counts()
        no_inter = self.counts(use_interaction=False)
        stat_only = self.counts(use_attention=False, use_interaction=False)
        sem_only = self.counts(use_stat=False, use_attention=False, use_interaction=False)
        assert full > no_inter > stat_only > sem_only

    def test_flags_remove_blocks(self):
        assert "attn_wq" not in tiny_model(use_attention=False).params
        assert "stat_scale" not in tiny_model(use_stat=False).params

    def test_semantic_only_with_attention_has_zero_qk_grads(self):
        # with one token the attention map is constant, so the analytic
        # gradient of the query/key projections must vanish identically
        m = tiny_model(use_stat=False, use_attention=True, use_interaction=True)
        _, s = random_inputs(m.config)
        res = forward(None, s, m)
        grads, _ = backward(m, res.cache, label=1)
        assert np.array_equal(grads["attn_wq"], np.zeros_like(m.params["attn_wq"]))
        assert np.array_equal(grads["attn_wk"], np.zeros_like(m.params["attn_wk"]))
        assert not np.array_equal(grads["attn_wv"], np.zeros_like(m.params["attn_wv"]))

    def test_grad_keys_match_param_keys(self):
        for flags in (
            {},
            {"use_interaction": False},
            {"use_attention": False, "use_interaction": False},
            {"use_stat": False, "use_attention": False, "use_interaction": False},
        ):
            m = tiny_model(**flags)
            z, s = random_inputs(m.config)
            res = forward(z if m.config.use_stat else None, s, m)
            grads, _ = backward(m, res.cache, label=0)
            assert set(grads) == set(m.params)


class TestBackwardEdgeCases:
    def test_zero_loss_zero_logit_gradient(self):
        m = tiny_model()
        z, s = random_inputs(m.config)
        res = forward(z, s, m)
        # force a saturated correct prediction through the head cache
        res.cache["head"]["probs"] = np.array([0.0, 1.0])
        grads, _ = backward(m, res.cache, label=1)
        np.testing.assert_allclose(grads["ffn_b2"], np.zeros(2))


class TestPersistence:
    def _fitted_model(self):
        vocab = build_vocab([["alpha", "beta", "beta"]], cap=100)
        m = new_model(ModelConfig(d_t=6, d_h=8, heads=2), seed=12, vocab=vocab)
        m.normalization = NormalizationStats(
            mean=np.arange(8, dtype=float), std=np.ones(8), fitted_on="train"
        )
        return m

    def test_roundtrip_bit_exact(self, tmp_path):
        m = self._fitted_model()
        path = str(tmp_path / "w.json")
        save_model(m, path, meta={"config_hash": "abc"})
        loaded = load_model(path)
        assert loaded.config == m.config
        assert set(loaded.params) == set(m.params)
        for k in m.params:
            assert np.array_equal(loaded.params[k], m.params[k])
        assert loaded.vocab.index == m.vocab.index
        assert np.array_equal(loaded.normalization.mean, m.normalization.mean)

    def test_save_is_byte_deterministic(self, tmp_path):
        m = self._fitted_model()
        p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        save_model(m, p1)
        save_model(m, p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_corrupted_version_field(self, tmp_path):
        m = self._fitted_model()
        path = str(tmp_path / "w.json")
        save_model(m, path)
        doc = json.load(open(path))
        doc["format_version"] = 99
        json.dump(doc, open(path, "w"))
        with pytest.raises(WeightsFormatError) as err:
            load_model(path)
        assert err.value.field == "format_version"

    def test_wrong_block_shape_detected(self, tmp_path):
        m = self._fitted_model()
        path = str(tmp_path / "w.json")
        save_model(m, path)
        doc = json.load(open(path))
        doc["params"]["sem_bias"]["shape"] = [4]
        json.dump(doc, open(path, "w"))
        with pytest.raises(WeightsFormatError):
            load_model(path)

    def test_param_spec_covers_init(self):
        cfg = ModelConfig(d_t=6, d_h=8, heads=2)
        vocab = build_vocab([["x"]], cap=5)
        m = new_model(cfg, seed=1, vocab=vocab)
        spec = param_spec(cfg, vocab.size)
        assert {k: v.shape for k, v in m.params.items()} == spec

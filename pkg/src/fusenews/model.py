"""The fusion classifier core.

Pipeline: per-feature tokenization into a shared d_h space, multi-head
attention across the feature tokens, pooling, a cross-feature interaction
matrix coupling the statistical and semantic summaries, and a two-layer
classifier head. Forward and backward passes are written out analytically;
the finite-difference checker in :mod:`fusenews.numerics` validates every
parameter block.

Structure toggles: ``use_stat`` adds the eight statistical-feature tokens,
``use_attention`` inserts the attention block, ``use_interaction`` widens
the classifier input with the interaction products. Disabling a toggle
removes the corresponding parameters entirely.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass

import numpy as np

from .encoding import Vocab, vocab_from_tokens
from .errors import DimensionError, WeightsFormatError
from .features import FEATURE_NAMES, NormalizationStats
from .numerics import (
    Rng,
    layer_norm_backward,
    layer_norm_cached,
    matmul,
    row_softmax,
    softmax_stable,
    xavier_init,
)

WEIGHTS_FORMAT = "fusenews-weights"
WEIGHTS_VERSION = 1

ENCODER_BUILTIN = "builtin"
ENCODER_PRECOMPUTED = "precomputed"


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and structure toggles of the fusion model."""

    d_s: int = 8
    d_t: int = 64
    d_h: int = 32
    heads: int = 4
    ffn_hidden: int | None = None
    use_stat: bool = True
    use_attention: bool = True
    use_interaction: bool = True

    def __post_init__(self):
        if min(self.d_s, self.d_t, self.d_h, self.heads) < 1:
            raise DimensionError("all model dimensions must be >= 1")
        if self.d_h % self.heads != 0:
            raise DimensionError(
                f"heads ({self.heads}) must divide d_h ({self.d_h})"
            )
        if self.ffn_hidden is None:
            object.__setattr__(self, "ffn_hidden", 2 * self.d_h)
        if self.ffn_hidden < 1:
            raise DimensionError("ffn_hidden must be >= 1")

    @property
    def d_k(self) -> int:
        return self.d_h // self.heads

    @property
    def n_tokens(self) -> int:
        return self.d_s + 1 if self.use_stat else 1

    @property
    def fused_dim(self) -> int:
        return 4 * self.d_h if self.use_interaction else 2 * self.d_h

    def to_dict(self) -> dict:
        return {
            "d_s": self.d_s,
            "d_t": self.d_t,
            "d_h": self.d_h,
            "heads": self.heads,
            "ffn_hidden": self.ffn_hidden,
            "use_stat": self.use_stat,
            "use_attention": self.use_attention,
            "use_interaction": self.use_interaction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def param_spec(config: ModelConfig, vocab_size: int | None = None) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every parameter block implied by ``config``.

    The insertion order here is also the deterministic initialization order.
    """
    spec: dict[str, tuple[int, ...]] = {}
    if config.use_stat:
        spec["stat_scale"] = (config.d_s, config.d_h)
        spec["stat_bias"] = (config.d_s, config.d_h)
    spec["sem_proj"] = (config.d_t, config.d_h)
    spec["sem_bias"] = (config.d_h,)
    spec["sem_ln_gamma"] = (config.d_h,)
    spec["sem_ln_beta"] = (config.d_h,)
    if config.use_attention:
        spec["attn_wq"] = (config.heads, config.d_h, config.d_k)
        spec["attn_wk"] = (config.heads, config.d_h, config.d_k)
        spec["attn_wv"] = (config.heads, config.d_h, config.d_k)
        spec["attn_wo"] = (config.d_h, config.d_h)
    spec["ffn_w1"] = (config.fused_dim, config.ffn_hidden)
    spec["ffn_b1"] = (config.ffn_hidden,)
    spec["ffn_w2"] = (config.ffn_hidden, 2)
    spec["ffn_b2"] = (2,)
    if vocab_size is not None:
        spec["emb_table"] = (vocab_size, config.d_t)
    return spec


def init_params(
    config: ModelConfig, rng: Rng, vocab_size: int | None = None
) -> dict[str, np.ndarray]:
    """Deterministically initialize all parameter blocks from ``rng``.

    Weight matrices are Glorot-uniform; biases start at zero, layer-norm
    gains at one. The statistical token scale AND bias rows are both drawn
    randomly: with a zero bias, layer normalization would reduce each token
    to sign(z_k) times a fixed direction and erase the feature magnitude.
    """
    params: dict[str, np.ndarray] = {}
    for name, shape in param_spec(config, vocab_size).items():
        if name in ("sem_bias", "sem_ln_beta", "ffn_b1", "ffn_b2"):
            params[name] = np.zeros(shape, dtype=np.float64)
        elif name == "sem_ln_gamma":
            params[name] = np.ones(shape, dtype=np.float64)
        elif len(shape) == 3:
            params[name] = np.stack(
                [xavier_init(shape[1], shape[2], rng) for _ in range(shape[0])]
            )
        elif len(shape) == 2:
            params[name] = xavier_init(shape[0], shape[1], rng)
        else:
            params[name] = xavier_init(1, shape[0], rng).reshape(shape)
    return params


@dataclass
class FusionModel:
    """Parameters plus the fitted state needed to score raw articles."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    encoder: str = ENCODER_BUILTIN
    normalization: NormalizationStats | None = None
    vocab: Vocab | None = None
    feature_names: tuple[str, ...] = FEATURE_NAMES
    seed: int = 0

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


def new_model(
    config: ModelConfig,
    seed: int,
    encoder: str = ENCODER_BUILTIN,
    vocab: Vocab | None = None,
) -> FusionModel:
    rng = Rng(seed)
    vocab_size = None
    if encoder == ENCODER_BUILTIN:
        if vocab is None:
            raise ValueError("builtin encoder requires a vocab")
        vocab_size = vocab.size
    return FusionModel(
        config=config,
        params=init_params(config, rng, vocab_size),
        encoder=encoder,
        vocab=vocab,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

_ONES: dict[int, np.ndarray] = {}
_ZEROS: dict[int, np.ndarray] = {}


def _ones(d: int) -> np.ndarray:
    if d not in _ONES:
        _ONES[d] = np.ones(d, dtype=np.float64)
    return _ONES[d]


def _zeros(d: int) -> np.ndarray:
    if d not in _ZEROS:
        _ZEROS[d] = np.zeros(d, dtype=np.float64)
    return _ZEROS[d]


def transform_features(
    z: np.ndarray | None, s: np.ndarray, model: FusionModel
) -> tuple[np.ndarray, dict]:
    """Map z-scored statistics and the semantic vector into d_h tokens.

    Statistical token k is layer_norm(z_k * scale_k + bias_k) with fixed unit
    gain; the semantic token gets a learned projection followed by layer norm
    with learned gain/shift. Token order: the d_s statistical tokens, then
    the semantic token last.
    """
    cfg = model.config
    p = model.params
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (cfg.d_t,):
        raise DimensionError(f"semantic vector has shape {s.shape}, expected ({cfg.d_t},)")
    rows = []
    cache: dict = {"sem_input": s}
    if cfg.use_stat:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (cfg.d_s,):
            raise DimensionError(f"feature vector has shape {z.shape}, expected ({cfg.d_s},)")
        cache["z"] = z
        stat_caches = []
        for k in range(cfg.d_s):
            pre = z[k] * p["stat_scale"][k] + p["stat_bias"][k]
            tok, ln_cache = layer_norm_cached(pre, _ones(cfg.d_h), _zeros(cfg.d_h))
            stat_caches.append(ln_cache)
            rows.append(tok)
        cache["stat_ln"] = stat_caches
    sem_pre = matmul(s[None, :], p["sem_proj"])[0] + p["sem_bias"]
    sem_tok, sem_cache = layer_norm_cached(sem_pre, p["sem_ln_gamma"], p["sem_ln_beta"])
    cache["sem_ln"] = sem_cache
    rows.append(sem_tok)
    tokens = np.stack(rows)
    cache["tokens"] = tokens
    return tokens, cache


def feature_attention(
    tokens: np.ndarray, model: FusionModel
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Multi-head scaled dot-product attention over the feature tokens.

    Per head: scores e_ij = (x_i Wq) . (x_j Wk) / sqrt(d_k), row-softmaxed
    into the attention map; head outputs are concatenated, projected by Wo
    and added back onto the input tokens (residual). Returns the weighted
    tokens and the per-head maps, shape (heads, n, n).
    """
    cfg = model.config
    p = model.params
    n = tokens.shape[0]
    scale = 1.0 / np.sqrt(cfg.d_k)
    heads_q, heads_k, heads_v, maps, outs = [], [], [], [], []
    for h in range(cfg.heads):
        q = matmul(tokens, p["attn_wq"][h])
        k = matmul(tokens, p["attn_wk"][h])
        v = matmul(tokens, p["attn_wv"][h])
        e = matmul(q, k.T) * scale
        a = row_softmax(e)
        outs.append(matmul(a, v))
        heads_q.append(q)
        heads_k.append(k)
        heads_v.append(v)
        maps.append(a)
    concat = np.concatenate(outs, axis=1)
    attended = tokens + matmul(concat, p["attn_wo"])
    attn_maps = np.stack(maps)
    cache = {
        "attn_in": tokens,
        "q": heads_q,
        "k": heads_k,
        "v": heads_v,
        "maps": attn_maps,
        "concat": concat,
    }
    return attended, attn_maps, cache


def cross_interaction(
    u_s: np.ndarray, u_t: np.ndarray, d_h: int
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Couple the two pooled summaries through a row-stochastic matrix.

    Raw scores S_ij = u_s[i] * u_t[j] / sqrt(d_h) are row-softmaxed into M;
    the fused vector is concat(u_s, u_t, M u_t, M^T u_s), length 4 d_h.
    """
    if u_s.shape != (d_h,) or u_t.shape != (d_h,):
        raise DimensionError(
            f"interaction expects two ({d_h},) vectors, got {u_s.shape} and {u_t.shape}"
        )
    scores = np.outer(u_s, u_t) / np.sqrt(d_h)
    m = row_softmax(scores)
    v = m @ u_t
    v_rev = m.T @ u_s
    fused = np.concatenate([u_s, u_t, v, v_rev])
    cache = {"m": m, "u_s": u_s, "u_t": u_t}
    return m, fused, cache


def classify(fused: np.ndarray, model: FusionModel) -> tuple[np.ndarray, dict]:
    """One hidden ReLU layer then a linear map to two logits and softmax."""
    cfg = model.config
    p = model.params
    if fused.shape != (cfg.fused_dim,):
        raise DimensionError(
            f"classifier input has shape {fused.shape}, expected ({cfg.fused_dim},)"
        )
    pre1 = matmul(fused[None, :], p["ffn_w1"])[0] + p["ffn_b1"]
    hidden = np.maximum(pre1, 0.0)
    logits = matmul(hidden[None, :], p["ffn_w2"])[0] + p["ffn_b2"]
    probs = softmax_stable(logits)
    cache = {"fused": fused, "pre1": pre1, "hidden": hidden, "logits": logits, "probs": probs}
    return probs, cache


@dataclass
class ForwardResult:
    probs: np.ndarray
    attention: np.ndarray | None
    interaction: np.ndarray | None
    cache: dict


def forward(z: np.ndarray | None, s: np.ndarray, model: FusionModel) -> ForwardResult:
    """Full pipeline: tokens -> attention -> pooling -> interaction -> head.

    ``probs`` is (p_real, p_fake); index 1 is the fake class.
    """
    cfg = model.config
    tokens, cache = transform_features(z, s, model)
    attn_maps = None
    if cfg.use_attention:
        attended, attn_maps, attn_cache = feature_attention(tokens, model)
        cache["attn"] = attn_cache
    else:
        attended = tokens
    if cfg.use_stat:
        u_s = attended[: cfg.d_s].mean(axis=0)
        u_t = attended[cfg.d_s]
    else:
        u_s = np.zeros(cfg.d_h, dtype=np.float64)
        u_t = attended[0]
    cache["u_s"], cache["u_t"] = u_s, u_t
    interaction = None
    if cfg.use_interaction:
        interaction, fused, inter_cache = cross_interaction(u_s, u_t, cfg.d_h)
        cache["inter"] = inter_cache
    else:
        fused = np.concatenate([u_s, u_t])
    probs, head_cache = classify(fused, model)
    cache["head"] = head_cache
    return ForwardResult(probs=probs, attention=attn_maps, interaction=interaction, cache=cache)


# ---------------------------------------------------------------------------
# Backward pass (cross-entropy loss on the two softmax outputs)
# ---------------------------------------------------------------------------

def backward(
    model: FusionModel, cache: dict, label: int
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Analytic gradients of -log p[label] for every parameter block.

    Returns (grads, d_semantic_input); the latter feeds the embedding-table
    update when the builtin encoder is being trained. Gradient keys exactly
    match the model's parameter keys (ablated blocks have no entry).
    """
    cfg = model.config
    p = model.params
    grads: dict[str, np.ndarray] = {}
    head = cache["head"]

    d_logits = head["probs"].copy()
    d_logits[label] -= 1.0

    grads["ffn_w2"] = np.outer(head["hidden"], d_logits)
    grads["ffn_b2"] = d_logits
    d_hidden = p["ffn_w2"] @ d_logits
    d_pre1 = d_hidden * (head["pre1"] > 0.0)
    grads["ffn_w1"] = np.outer(head["fused"], d_pre1)
    grads["ffn_b1"] = d_pre1
    d_fused = p["ffn_w1"] @ d_pre1

    d_h = cfg.d_h
    if cfg.use_interaction:
        inter = cache["inter"]
        m, u_s, u_t = inter["m"], inter["u_s"], inter["u_t"]
        d_us = d_fused[:d_h].copy()
        d_ut = d_fused[d_h : 2 * d_h].copy()
        d_v = d_fused[2 * d_h : 3 * d_h]
        d_vrev = d_fused[3 * d_h :]
        # v = M u_t ; v_rev = M^T u_s
        d_m = np.outer(d_v, u_t) + np.outer(u_s, d_vrev)
        d_ut += m.T @ d_v
        d_us += m @ d_vrev
        # row-softmax backward, then S_ij = u_s_i u_t_j / sqrt(d_h)
        d_scores = m * (d_m - np.sum(d_m * m, axis=1, keepdims=True))
        inv = 1.0 / np.sqrt(d_h)
        d_us += (d_scores @ u_t) * inv
        d_ut += (d_scores.T @ u_s) * inv
    else:
        d_us = d_fused[:d_h].copy()
        d_ut = d_fused[d_h:].copy()

    n = cfg.n_tokens
    d_tokens = np.zeros((n, d_h), dtype=np.float64)
    if cfg.use_stat:
        d_tokens[: cfg.d_s] += d_us / cfg.d_s
        d_tokens[cfg.d_s] += d_ut
    else:
        d_tokens[0] += d_ut  # u_s is a constant zero vector here

    if cfg.use_attention:
        attn = cache["attn"]
        x = attn["attn_in"]
        d_y = d_tokens
        d_x = d_y.copy()
        grads["attn_wo"] = attn["concat"].T @ d_y
        d_concat = d_y @ p["attn_wo"].T
        d_k_dim = cfg.d_k
        scale = 1.0 / np.sqrt(d_k_dim)
        g_wq = np.zeros_like(p["attn_wq"])
        g_wk = np.zeros_like(p["attn_wk"])
        g_wv = np.zeros_like(p["attn_wv"])
        for h in range(cfg.heads):
            q, k, v = attn["q"][h], attn["k"][h], attn["v"][h]
            a = attn["maps"][h]
            d_o = d_concat[:, h * d_k_dim : (h + 1) * d_k_dim]
            d_a = d_o @ v.T
            d_v_h = a.T @ d_o
            d_e = a * (d_a - np.sum(d_a * a, axis=1, keepdims=True))
            d_q = (d_e @ k) * scale
            d_k_h = (d_e.T @ q) * scale
            g_wq[h] = x.T @ d_q
            g_wk[h] = x.T @ d_k_h
            g_wv[h] = x.T @ d_v_h
            d_x += d_q @ p["attn_wq"][h].T
            d_x += d_k_h @ p["attn_wk"][h].T
            d_x += d_v_h @ p["attn_wv"][h].T
        grads["attn_wq"], grads["attn_wk"], grads["attn_wv"] = g_wq, g_wk, g_wv
        d_tokens = d_x

    if cfg.use_stat:
        z = cache["z"]
        g_scale = np.zeros_like(p["stat_scale"])
        g_bias = np.zeros_like(p["stat_bias"])
        for k_i in range(cfg.d_s):
            d_pre, _, _ = layer_norm_backward(d_tokens[k_i], cache["stat_ln"][k_i])
            g_scale[k_i] = d_pre * z[k_i]
            g_bias[k_i] = d_pre
        grads["stat_scale"] = g_scale
        grads["stat_bias"] = g_bias
        sem_row = cfg.d_s
    else:
        sem_row = 0

    d_sem_pre, d_gamma, d_beta = layer_norm_backward(d_tokens[sem_row], cache["sem_ln"])
    grads["sem_ln_gamma"] = d_gamma
    grads["sem_ln_beta"] = d_beta
    grads["sem_bias"] = d_sem_pre
    s = cache["sem_input"]
    grads["sem_proj"] = np.outer(s, d_sem_pre)
    d_sem_input = model.params["sem_proj"] @ d_sem_pre
    return grads, d_sem_input


# ---------------------------------------------------------------------------
# Persistence (versioned, bit-exact round trip)
# ---------------------------------------------------------------------------

def _encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict, name: str) -> np.ndarray:
    try:
        raw = base64.b64decode(obj["data"].encode("ascii"), validate=True)
        arr = np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)
    except Exception as exc:
        raise WeightsFormatError(f"cannot decode array ({exc})", field=name) from None
    return arr


def save_model(model: FusionModel, path: str, meta: dict | None = None) -> None:
    """Write a versioned weights file. Identical models produce identical bytes."""
    doc = {
        "format": WEIGHTS_FORMAT,
        "format_version": WEIGHTS_VERSION,
        "config": model.config.to_dict(),
        "encoder": model.encoder,
        "feature_order": list(model.feature_names),
        "seed": model.seed,
        "meta": meta or {},
        "normalization": None,
        "vocab": None,
        "params": {k: _encode_array(v) for k, v in model.params.items()},
    }
    if model.normalization is not None:
        doc["normalization"] = {
            "mean": _encode_array(model.normalization.mean),
            "std": _encode_array(model.normalization.std),
            "fitted_on": model.normalization.fitted_on,
        }
    if model.vocab is not None:
        doc["vocab"] = {"tokens": model.vocab.ordered_tokens(), "cap": model.vocab.cap}
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    os.replace(tmp, path)


def load_model(path: str) -> FusionModel:
    """Read a weights file, validating version, config and block shapes."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise WeightsFormatError(f"weights file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise WeightsFormatError(f"not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != WEIGHTS_FORMAT:
        raise WeightsFormatError("unrecognized file format", field="format")
    if doc.get("format_version") != WEIGHTS_VERSION:
        raise WeightsFormatError(
            f"unsupported version {doc.get('format_version')!r}, expected {WEIGHTS_VERSION}",
            field="format_version",
        )
    try:
        config = ModelConfig.from_dict(doc["config"])
    except (KeyError, TypeError, DimensionError) as exc:
        raise WeightsFormatError(f"bad model config ({exc})", field="config") from None
    feature_order = tuple(doc.get("feature_order", ()))
    encoder = doc.get("encoder")
    if encoder not in (ENCODER_BUILTIN, ENCODER_PRECOMPUTED):
        raise WeightsFormatError(f"unknown encoder '{encoder}'", field="encoder")
    vocab = None
    if doc.get("vocab") is not None:
        vocab = vocab_from_tokens(doc["vocab"]["tokens"], doc["vocab"]["cap"])
    normalization = None
    if doc.get("normalization") is not None:
        nd = doc["normalization"]
        normalization = NormalizationStats(
            mean=_decode_array(nd["mean"], "normalization.mean"),
            std=_decode_array(nd["std"], "normalization.std"),
            fitted_on=nd.get("fitted_on", ""),
        )
    params = {k: _decode_array(v, k) for k, v in doc.get("params", {}).items()}
    vocab_size = vocab.size if (encoder == ENCODER_BUILTIN and vocab is not None) else None
    expected = param_spec(config, vocab_size)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise WeightsFormatError(
            f"parameter blocks mismatch (missing {missing}, unexpected {extra})",
            field="params",
        )
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise WeightsFormatError(
                f"shape {params[name].shape}, expected {shape}", field=name
            )
    return FusionModel(
        config=config,
        params=params,
        encoder=encoder,
        normalization=normalization,
        vocab=vocab,
        feature_names=feature_order or FEATURE_NAMES,
        seed=int(doc.get("seed", 0)),
    )

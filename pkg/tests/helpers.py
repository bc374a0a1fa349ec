"""Shared test utilities: flattened-parameter loss closures for gradient checks."""

import numpy as np

from fusenews.encoding import encode_builtin, token_index_counts
from fusenews.model import FusionModel, forward, backward
from fusenews.training import cross_entropy


def flat_loss_fn(model, z, s_or_tokens, label, with_embedding=False):
    """Build f(theta) -> (loss, grad) over all parameters flattened.

    With ``with_embedding`` the semantic input is re-encoded from tokens on
    every call so the embedding-table gradient is exercised too; otherwise
    ``s_or_tokens`` is the fixed semantic vector.
    """
    names = sorted(model.params)
    shapes = {k: model.params[k].shape for k in names}
    sizes = {k: model.params[k].size for k in names}

    def unflatten(theta):
        out = {}
        offset = 0
        for k in names:
            out[k] = theta[offset : offset + sizes[k]].reshape(shapes[k])
            offset += sizes[k]
        return out

    def f(theta):
        params = unflatten(theta)
        probe = FusionModel(
            config=model.config,
            params=params,
            encoder=model.encoder,
            vocab=model.vocab,
            seed=model.seed,
        )
        if with_embedding:
            s = encode_builtin(s_or_tokens, model.vocab, params["emb_table"])
        else:
            s = s_or_tokens
        res = forward(z if model.config.use_stat else None, s, probe)
        loss = cross_entropy(res.probs, label)
        grads, d_sem = backward(probe, res.cache, label)
        if with_embedding:
            g_table = np.zeros_like(params["emb_table"])
            if s_or_tokens:
                w = 1.0 / len(s_or_tokens)
                for row, count in token_index_counts(s_or_tokens, model.vocab).items():
                    g_table[row] += d_sem * (count * w)
            grads["emb_table"] = g_table
        flat = np.concatenate([grads[k].ravel() for k in names])
        return loss, flat

    theta0 = np.concatenate([model.params[k].ravel() for k in names])
    return f, theta0

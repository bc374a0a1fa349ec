"""Semantic vectors per article: precomputed-embedding files or a trainable
mean-pooled embedding bag.

The interchange file format (shared contract with the external exporter):
UTF-8 text, first line ``dim=<d>``, then one line per article,
``id<TAB>v1,v2,...,vd`` with decimal floats.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputFormatError, MissingFileError

OOV_INDEX = 0
OOV_TOKEN = "<oov>"

DEFAULT_VOCAB_CAP = 20_000


@dataclass(frozen=True)
class Vocab:
    """Token-to-index map with index 0 reserved for out-of-vocabulary tokens."""

    index: dict[str, int]
    cap: int

    @property
    def size(self) -> int:
        """Number of embedding rows, OOV row included."""
        return len(self.index) + 1

    def lookup(self, token: str) -> int:
        return self.index.get(token, OOV_INDEX)

    def ordered_tokens(self) -> list[str]:
        """Tokens sorted by their index (1..size-1); OOV excluded."""
        return [t for t, _ in sorted(self.index.items(), key=lambda kv: kv[1])]


def build_vocab(corpus: list[list[str]], cap: int = DEFAULT_VOCAB_CAP) -> Vocab:
    """Top-``cap`` tokens by frequency, ties broken lexicographically.

    Built from training folds only; an empty corpus yields the OOV-only vocab.
    """
    if cap < 1:
        raise ValueError(f"vocab cap must be >= 1, got {cap}")
    counts: Counter[str] = Counter()
    for tokens in corpus:
        counts.update(tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:cap]
    index = {token: i + 1 for i, (token, _) in enumerate(ranked)}
    return Vocab(index=index, cap=cap)


def vocab_from_tokens(tokens: list[str], cap: int) -> Vocab:
    """Rebuild a Vocab from its serialized index-ordered token list."""
    return Vocab(index={t: i + 1 for i, t in enumerate(tokens)}, cap=cap)


def encode_builtin(tokens: list[str], vocab: Vocab, table: np.ndarray) -> np.ndarray:
    """Mean of the embedding rows selected by ``tokens``.

    Unknown tokens hit the shared OOV row; an empty token list encodes to the
    zero vector. Differentiable w.r.t. ``table`` (see ``token_index_counts``).
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] != vocab.size:
        raise DimensionError(
            f"embedding table has {table.shape[0] if table.ndim == 2 else '?'} rows, "
            f"vocab needs {vocab.size}"
        )
    if not tokens:
        return np.zeros(table.shape[1], dtype=np.float64)
    idx = [vocab.lookup(t) for t in tokens]
    return table[idx].mean(axis=0)


def token_index_counts(tokens: list[str], vocab: Vocab) -> dict[int, int]:
    """Row-index multiplicities behind :func:`encode_builtin`'s mean.

    The gradient of the encoding w.r.t. table row r is count(r)/len(tokens)
    times the upstream gradient; this map is the cache for that backward step.
    """
    counts: dict[int, int] = {}
    for t in tokens:
        i = vocab.lookup(t)
        counts[i] = counts.get(i, 0) + 1
    return counts


@dataclass
class EmbeddingStore:
    """Article-id keyed semantic vectors of a single declared dimension."""

    vectors: dict[str, np.ndarray]
    dim: int
    source: str = "precomputed"

    def __len__(self) -> int:
        return len(self.vectors)

    def get(self, article_id: str) -> np.ndarray:
        if article_id not in self.vectors:
            raise InputFormatError(
                f"no embedding for article id '{article_id}'"
            )
        return self.vectors[article_id]


def load_precomputed(path: str) -> EmbeddingStore:
    """Parse an embedding interchange file into an :class:`EmbeddingStore`."""
    if not os.path.exists(path):
        raise MissingFileError("embedding file not found", path=path)
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("dim="):
            raise InputFormatError(
                f"expected 'dim=<d>' header, got '{header}'", path=path, line=1
            )
        try:
            dim = int(header[4:])
        except ValueError:
            raise InputFormatError(
                f"dimension '{header[4:]}' is not an integer", path=path, line=1
            ) from None
        if dim < 1:
            raise InputFormatError(f"dimension must be >= 1, got {dim}", path=path, line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise InputFormatError(
                    "expected 'id<TAB>values'", path=path, line=lineno
                )
            article_id, _, payload = line.partition("\t")
            if article_id in vectors:
                raise InputFormatError(
                    f"duplicate id '{article_id}'", path=path, line=lineno
                )
            parts = payload.split(",")
            try:
                values = np.array([float(p) for p in parts], dtype=np.float64)
            except ValueError:
                raise InputFormatError(
                    "non-numeric embedding value", path=path, line=lineno
                ) from None
            if values.size != dim:
                raise DimensionError(
                    f"{path}:{lineno}: row has {values.size} values, header declares dim={dim}"
                )
            vectors[article_id] = values
    return EmbeddingStore(vectors=vectors, dim=dim, source=path)


def write_store(store: EmbeddingStore, path: str) -> None:
    """Write a store in the interchange format; inverse of :func:`load_precomputed`.

    Floats are printed with ``repr``, which round-trips float64 exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={store.dim}\n")
        for article_id, vec in store.vectors.items():
            if "\t" in article_id or "\n" in article_id:
                raise InputFormatError(
                    f"article id {article_id!r} contains tab/newline"
                )
            if vec.size != store.dim:
                raise DimensionError(
                    f"vector for '{article_id}' has size {vec.size}, store dim is {store.dim}"
                )
            fh.write(article_id + "\t" + ",".join(repr(float(x)) for x in vec) + "\n")

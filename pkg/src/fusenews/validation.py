"""Input validation helpers for the estimator layer."""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from .features import Article


def as_title_body(x: Any) -> tuple[str, str]:
    """Coerce one sample into a (title, body) string pair.

    Accepts a plain string (treated as body with an empty title), a
    (title, body) pair, or a mapping with title/text or title/body keys.
    """
    if isinstance(x, str):
        return "", x
    if isinstance(x, dict):
        title = x.get("title", "")
        body = x.get("text", x.get("body", ""))
        if not isinstance(title, str) or not isinstance(body, str):
            raise TypeError("title/text values must be strings")
        return title, body
    if isinstance(x, (tuple, list, np.ndarray)) and len(x) == 2:
        title, body = x[0], x[1]
        if isinstance(title, str) and isinstance(body, str):
            return title, body
    raise TypeError(
        f"cannot interpret sample of type {type(x).__name__} as (title, body) text"
    )


def check_text_input(X: Any) -> list[tuple[str, str]]:
    """Validate an input collection into a list of (title, body) pairs.

    Understands pandas DataFrames with title/text columns as well as any
    sequence of the per-sample forms handled by :func:`as_title_body`.
    """
    if hasattr(X, "columns") and hasattr(X, "iterrows"):  # DataFrame duck-typing
        cols = set(X.columns)
        if not {"title", "text"} <= cols and not {"title", "body"} <= cols:
            raise ValueError("DataFrame input needs 'title' and 'text' (or 'body') columns")
        body_col = "text" if "text" in cols else "body"
        return [(str(row["title"]), str(row[body_col])) for _, row in X.iterrows()]
    if isinstance(X, str):
        raise TypeError("X must be a sequence of samples, not a single string")
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"X of type {type(X).__name__} is not iterable") from None
    if not items:
        raise ValueError("X is empty")
    return [as_title_body(x) for x in items]


def check_binary_labels(y: Any, n: int) -> list[int]:
    """Validate labels: right length, values drawn from {0, 1}."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"y must be 1-dimensional, got shape {arr.shape}")
    if arr.shape[0] != n:
        raise ValueError(f"X has {n} samples but y has {arr.shape[0]}")
    labels = []
    for value in arr:
        iv = int(value)
        if iv != value or iv not in (0, 1):
            raise ValueError(f"labels must be 0 or 1, got {value!r}")
        labels.append(iv)
    return labels


def build_articles(
    pairs: Sequence[tuple[str, str]], labels: Sequence[int] | None = None
) -> list[Article]:
    if labels is None:
        labels = [0] * len(pairs)
    return [
        Article(id=f"x{i}", title=t, body=b, label=y)
        for i, ((t, b), y) in enumerate(zip(pairs, labels))
    ]

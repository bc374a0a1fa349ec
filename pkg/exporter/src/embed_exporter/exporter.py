"""Batch [CLS] embedding export for news article CSVs.

Runs a pretrained transformer encoder over every article (title and body as
a sentence pair, so one separator token sits between them) and writes the
final-layer [CLS] vector per article in the interchange format consumed by
the fusenews loader:

    line 1:  dim=<hidden_size>
    line n:  <id>\\t<v1>,<v2>,...,<v_dim>

Floats are printed with repr, which round-trips float64 exactly, so a
re-parse reproduces the vectors bit for bit.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer


class ExportError(Exception):
    """Any failure that should abort the export with a nonzero exit."""


@dataclass(frozen=True)
class ExportJob:
    dataset: str
    output: str
    model_name: str = "bert-base-uncased"
    batch_size: int = 16
    max_length: int = 256

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError("batch size must be >= 1")
        if self.max_length < 2:
            raise ExportError("max sequence length must be >= 2")


def read_articles(path: str) -> list[tuple[str, str, str]]:
    """(id, title, body) rows from a dataset CSV; the label column is optional."""
    if not os.path.exists(path):
        raise ExportError(f"dataset file not found: {path}")
    rows: list[tuple[str, str, str]] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in ("id", "title", "text"):
            if col not in fields:
                raise ExportError(f"{path}: missing required column '{col}'")
        for row in reader:
            rid = row.get("id") or ""
            if not rid:
                raise ExportError(f"{path}:{reader.line_num}: empty id")
            if rid in seen:
                raise ExportError(f"{path}:{reader.line_num}: duplicate id '{rid}'")
            seen.add(rid)
            rows.append((rid, row.get("title") or "", row.get("text") or ""))
    return rows


def load_encoder(model_name: str):
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_name)
        model = AutoModel.from_pretrained(model_name)
    except Exception as exc:
        raise ExportError(f"cannot load encoder '{model_name}': {exc}") from exc
    model.eval()
    return tokenizer, model


@torch.no_grad()
def encode_batch(tokenizer, model, pairs: list[tuple[str, str]], max_length: int) -> np.ndarray:
    titles = [t for t, _ in pairs]
    bodies = [b for _, b in pairs]
    enc = tokenizer(
        titles,
        bodies,
        truncation=True,
        max_length=max_length,
        padding=True,
        return_tensors="pt",
    )
    out = model(**enc)
    cls = out.last_hidden_state[:, 0, :]
    return cls.to(torch.float64).cpu().numpy()


def export_embeddings(job: ExportJob) -> int:
    """Write one embedding line per input article; returns the row count.

    Vectors are cached by exact (title, body) text, so identical articles
    always receive identical vectors regardless of batch boundaries.
    """
    rows = read_articles(job.dataset)
    tokenizer, model = load_encoder(job.model_name)
    dim = int(model.config.hidden_size)

    cache: dict[tuple[str, str], np.ndarray] = {}
    pending: list[tuple[str, str]] = []
    for _, title, body in rows:
        key = (title, body)
        if key not in cache and key not in pending:
            pending.append(key)
    for start in range(0, len(pending), job.batch_size):
        batch = pending[start : start + job.batch_size]
        vectors = encode_batch(tokenizer, model, batch, job.max_length)
        if vectors.shape[1] != dim:
            raise ExportError(
                f"encoder returned dim {vectors.shape[1]}, expected hidden size {dim}"
            )
        for key, vec in zip(batch, vectors):
            cache[key] = vec

    parent = os.path.dirname(job.output)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(job.output, "w", encoding="utf-8") as fh:
        fh.write(f"dim={dim}\n")
        for rid, title, body in rows:
            if "\t" in rid or "\n" in rid:
                raise ExportError(f"id {rid!r} contains tab/newline")
            vec = cache[(title, body)]
            fh.write(rid + "\t" + ",".join(repr(float(x)) for x in vec) + "\n")
    return len(rows)

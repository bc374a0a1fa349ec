"""Deterministic text preprocessing and statistical feature extraction.

The eight surface features computed here are the hand-crafted half of the
classifier input. Their order is frozen (see ``FEATURE_NAMES``) and recorded
in every weights file; changing it is a format version bump.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import DegenerateDataError, InputFormatError, MissingFileError

FEATURE_NAMES: tuple[str, ...] = (
    "title_len_tokens",
    "body_len_tokens",
    "title_punct_count",
    "body_punct_count",
    "title_caps_ratio",
    "body_caps_ratio",
    "numeric_token_freq",
    "sentiment_polarity",
)
N_FEATURES = len(FEATURE_NAMES)

# Fixed punctuation set counted by the *_punct_count features.
PUNCTUATION = set(".,!?;:'\"()-")

_VOWELS = set("aeiou")


@dataclass(frozen=True)
class Article:
    """One news record. ``label`` is 1 for fake, 0 for real."""

    id: str
    title: str
    body: str
    label: int


def _strip_suffix(token: str) -> str:
    """Suffix normalization for a single lowercase token.

    Rules, applied in order (at most one of the -ing/-ed/-s rules fires):

    1. a trailing possessive ``'s`` is removed, then any leading or trailing
       apostrophes are trimmed (interior ones stay: ``don't``),
    2. for purely alphabetic tokens:
       - ``-ing`` is dropped when the token has >= 6 characters,
       - else ``-ed`` is dropped when the token has >= 5 characters,
       - else ``-s`` is dropped when the token has >= 5 characters and does
         not end in ``ss``, ``us`` or ``is``,
    3. after dropping ``-ing``/``-ed``, a resulting doubled final letter is
       collapsed (``running -> runn -> run``).

    The length guards keep short words intact ("wins", "used", "red" are
    unchanged); tokens containing digits are never stripped.
    """
    if token.endswith("'s"):
        token = token[:-2]
    token = token.strip("'")
    if not token.isalpha():
        return token
    stripped = token
    if token.endswith("ing") and len(token) >= 6:
        stripped = token[:-3]
        if len(stripped) >= 2 and stripped[-1] == stripped[-2]:
            stripped = stripped[:-1]
    elif token.endswith("ed") and len(token) >= 5:
        stripped = token[:-2]
        if len(stripped) >= 2 and stripped[-1] == stripped[-2]:
            stripped = stripped[:-1]
    elif (
        token.endswith("s")
        and len(token) >= 5
        and not token.endswith(("ss", "us", "is"))
    ):
        stripped = token[:-1]
    return stripped


def preprocess(raw: str) -> list[str]:
    """Normalize raw text into a token list.

    Lowercases, replaces every character that is not alphanumeric or an
    apostrophe with a space, splits on whitespace, then applies the suffix
    rules of :func:`_strip_suffix`. Empty input yields an empty list.
    """
    lowered = raw.lower()
    cleaned = "".join(
        ch if (ch.isalnum() or ch == "'") else " " for ch in lowered
    )
    tokens = []
    for tok in cleaned.split():
        tok = _strip_suffix(tok)
        if tok:
            tokens.append(tok)
    return tokens


def sentiment_polarity(tokens: list[str], lexicon: dict[str, float]) -> float:
    """Mean lexicon polarity over matched tokens; 0.0 when nothing matches."""
    hits = [lexicon[t] for t in tokens if t in lexicon]
    if not hits:
        return 0.0
    return float(sum(hits) / len(hits))


def _caps_ratio(raw: str) -> float:
    letters = [ch for ch in raw if ch.isalpha()]
    if not letters:
        return 0.0
    upper = sum(1 for ch in letters if ch.isupper())
    return upper / len(letters)


def _punct_count(raw: str) -> int:
    return sum(1 for ch in raw if ch in PUNCTUATION)


def _numeric_token_freq(raw: str) -> float:
    tokens = raw.split()
    if not tokens:
        return 0.0
    numeric = sum(1 for t in tokens if any(ch.isdigit() for ch in t))
    return numeric / len(tokens)


def extract_stat_features(
    article: Article, lexicon: dict[str, float] | None = None
) -> np.ndarray:
    """Compute the raw 8-feature vector for one article.

    Token lengths use the preprocessed token lists; punctuation counts, caps
    ratios and numeric-token frequency are measured on the raw text.
    ``lexicon`` defaults to the bundled polarity table.
    """
    if lexicon is None:
        lexicon = default_lexicon()
    title_tokens = preprocess(article.title)
    body_tokens = preprocess(article.body)
    combined_raw = article.title + " " + article.body
    vec = np.array(
        [
            float(len(title_tokens)),
            float(len(body_tokens)),
            float(_punct_count(article.title)),
            float(_punct_count(article.body)),
            _caps_ratio(article.title),
            _caps_ratio(article.body),
            _numeric_token_freq(combined_raw),
            sentiment_polarity(title_tokens + body_tokens, lexicon),
        ],
        dtype=np.float64,
    )
    return vec


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature population mean/std, tagged with the data it was fit on."""

    mean: np.ndarray
    std: np.ndarray
    fitted_on: str = ""

    @property
    def degenerate(self) -> np.ndarray:
        """Boolean mask of zero-variance features."""
        return self.std == 0.0


def fit_normalizer(
    vectors: np.ndarray | list[np.ndarray], fitted_on: str = ""
) -> NormalizationStats:
    """Population mean and standard deviation per feature over training rows."""
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 2:
        raise DegenerateDataError(
            f"normalizer needs >= 2 training vectors, got {0 if mat.ndim != 2 else mat.shape[0]}"
        )
    mean = mat.mean(axis=0)
    std = mat.std(axis=0)  # population (ddof=0)
    return NormalizationStats(mean=mean, std=std, fitted_on=fitted_on)


def apply_zscore(x: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Z = (x - mean) / std per feature; zero-variance features map to 0."""
    x = np.asarray(x, dtype=np.float64)
    safe_std = np.where(stats.std == 0.0, 1.0, stats.std)
    z = (x - stats.mean) / safe_std
    return np.where(stats.std == 0.0, 0.0, z)


# ---------------------------------------------------------------------------
# Dataset and lexicon ingestion
# ---------------------------------------------------------------------------

DATASET_COLUMNS = ("id", "title", "text", "label")

LEXICON_ENV_VAR = "FUSENEWS_LEXICON"


def load_dataset(
    path: str, label_fake: int = 1, require_label: bool = True
) -> list[Article]:
    """Read a dataset CSV (columns id,title,text,label) into Article records.

    ``label_fake`` selects which raw label value means "fake"; internally
    fake is always 1. With ``require_label=False`` (prediction inputs) the
    label column may be absent and defaults to 0. Raises
    :class:`InputFormatError` with the offending line number for malformed
    rows, duplicate ids or bad labels.
    """
    if label_fake not in (0, 1):
        raise InputFormatError(f"label_fake must be 0 or 1, got {label_fake}")
    if not os.path.exists(path):
        raise MissingFileError("dataset file not found", path=path)
    articles: list[Article] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputFormatError("dataset has no header row", path=path, line=1)
        required = DATASET_COLUMNS if require_label else DATASET_COLUMNS[:-1]
        for col in required:
            if col not in reader.fieldnames:
                raise InputFormatError(
                    f"missing required column '{col}'", path=path, line=1
                )
        has_label = "label" in reader.fieldnames
        for row in reader:
            line = reader.line_num
            rid = row.get("id")
            if rid is None or rid == "" or any(
                row.get(c) is None for c in required
            ):
                raise InputFormatError("incomplete row", path=path, line=line)
            if rid in seen:
                raise InputFormatError(f"duplicate id '{rid}'", path=path, line=line)
            seen.add(rid)
            if has_label:
                raw_label = (row["label"] or "").strip()
                if raw_label not in ("0", "1"):
                    raise InputFormatError(
                        f"label must be 0 or 1, got '{raw_label}'", path=path, line=line
                    )
                label = 1 if int(raw_label) == label_fake else 0
            else:
                label = 0
            articles.append(
                Article(id=rid, title=row["title"], body=row["text"], label=label)
            )
    return articles


def load_lexicon(path: str) -> dict[str, float]:
    """Read a two-column token,polarity CSV into a normalized polarity map.

    Tokens are passed through :func:`preprocess` so lookups match the
    tokenizer output; entries collapsing to the same normalized form are
    averaged. Polarities must lie in [-1, 1].
    """
    if not os.path.exists(path):
        raise MissingFileError("lexicon file not found", path=path)
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            if i == 1 and [c.strip().lower() for c in row[:2]] == ["token", "polarity"]:
                continue
            if len(row) < 2:
                raise InputFormatError("expected token,polarity", path=path, line=i)
            try:
                polarity = float(row[1])
            except ValueError:
                raise InputFormatError(
                    f"polarity '{row[1]}' is not a number", path=path, line=i
                ) from None
            if not -1.0 <= polarity <= 1.0:
                raise InputFormatError(
                    f"polarity {polarity} outside [-1, 1]", path=path, line=i
                )
            for tok in preprocess(row[0]):
                sums[tok] = sums.get(tok, 0.0) + polarity
                counts[tok] = counts.get(tok, 0) + 1
    return {tok: sums[tok] / counts[tok] for tok in sums}


@lru_cache(maxsize=1)
def _bundled_lexicon_path() -> str:
    return str(resources.files("fusenews").joinpath("data/sentiment_lexicon.csv"))


def default_lexicon() -> dict[str, float]:
    """The bundled polarity table, overridable via the FUSENEWS_LEXICON env var."""
    override = os.environ.get(LEXICON_ENV_VAR)
    if override:
        return load_lexicon(override)
    return _cached_bundled()


@lru_cache(maxsize=1)
def _cached_bundled() -> dict[str, float]:
    return load_lexicon(_bundled_lexicon_path())

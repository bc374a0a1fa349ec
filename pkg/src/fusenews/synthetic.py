"""Synthetic corpora with a known decision rule, for end-to-end checks.

The generator plants the label signal jointly in one statistical feature
(title capitalization ratio) and one body token: an article is fake exactly
when its title is majority-uppercase AND the marker token appears in the
body. Each cue alone is deliberately ambiguous, so a model must fuse both
sides to reach the (perfect) Bayes rule.
"""

from __future__ import annotations

from .features import Article
from .numerics import Rng

MARKER_TOKEN = "zorblat"

_FILLER = (
    "market report votes council city budget river bridge school weather storm "
    "election mayor traffic sports game player season coach revenue growth study "
    "university science project water energy police festival museum garden street "
    "airport train harbor theater library doctor hospital farm harvest wildlife"
).split()

_SENTIMENT_NOISE = ("good", "bad", "great", "awful", "fine", "poor")


def _title(rng: Rng, caps_ratio: float) -> str:
    """Title whose uppercase-letter proportion is exactly round(ratio * letters)."""
    words = [_FILLER[rng.randint(len(_FILLER))] for _ in range(4 + rng.randint(5))]
    letters = [ch for w in words for ch in w]
    n_upper = int(round(caps_ratio * len(letters)))
    positions = rng.permutation(len(letters))[:n_upper]
    flip = set(positions)
    out = []
    i = 0
    for w in words:
        out.append("".join(ch.upper() if i + j in flip else ch for j, ch in enumerate(w)))
        i += len(w)
    return " ".join(out)


def _body(rng: Rng, with_marker: bool) -> str:
    words = [_FILLER[rng.randint(len(_FILLER))] for _ in range(10 + rng.randint(21))]
    if rng.randint(3) == 0:
        words.insert(rng.randint(len(words) + 1), str(rng.randint(2000)))
    if rng.randint(4) == 0:
        words.insert(rng.randint(len(words) + 1), _SENTIMENT_NOISE[rng.randint(len(_SENTIMENT_NOISE))])
    if with_marker:
        words.insert(rng.randint(len(words) + 1), MARKER_TOKEN)
    text = " ".join(words)
    for _ in range(rng.randint(4)):
        text += "!?."[rng.randint(3)]
    return text


def make_planted_corpus(n: int, seed: int) -> list[Article]:
    """Balanced corpus of ``n`` articles following the planted AND rule.

    Fake articles (n/2): high-caps title (ratio in [0.65, 0.95]) and the
    marker token in the body. Real articles split between the three
    non-fake cells: low caps without marker (40%), low caps with marker
    (30%), high caps without marker (30%). A cue in isolation therefore has
    an F1 ceiling around 0.87 while the conjunction separates perfectly.
    """
    if n < 4 or n % 2 != 0:
        raise ValueError("corpus size must be an even number >= 4")
    rng = Rng(seed)
    articles: list[Article] = []
    half = n // 2
    for i in range(half):
        caps = rng.uniform(0.65, 0.95)
        articles.append(
            Article(
                id=f"fake-{i}",
                title=_title(rng, caps),
                body=_body(rng, with_marker=True),
                label=1,
            )
        )
    for i in range(half):
        cell = rng.uniform()
        if cell < 0.4:
            caps, marker = rng.uniform(0.05, 0.35), False
        elif cell < 0.7:
            caps, marker = rng.uniform(0.05, 0.35), True
        else:
            caps, marker = rng.uniform(0.65, 0.95), False
        articles.append(
            Article(
                id=f"real-{i}",
                title=_title(rng, caps),
                body=_body(rng, with_marker=marker),
                label=0,
            )
        )
    order = rng.permutation(len(articles))
    return [articles[i] for i in order]

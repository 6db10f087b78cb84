"""Corpus diagnostics: counts, n-gram divergence, and grounding ratio.

The grounding ratio measures how much of a corpus is "visually grounded":
the fraction of token occurrences whose types occur more than a threshold
number of times in caption data, after dropping stop words and punctuation.
Divergence between corpora is the base-2 Jensen-Shannon divergence of
their n-gram distributions, so values stay in [0, 1].
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import Corpus, _is_punctuation


class StatsError(ValueError):
    pass


def _is_pure_punctuation(text: str) -> bool:
    return bool(text) and all(_is_punctuation(ch) for ch in text)


def default_stopwords() -> frozenset[str]:
    """The fixed 179-entry English stop-word list shipped with the package."""
    data = resources.files("vokenizer").joinpath("data/stopwords_en.txt")
    return frozenset(data.read_text(encoding="utf-8").split())


def load_stopwords(path: str | Path) -> frozenset[str]:
    return frozenset(Path(path).read_text(encoding="utf-8").split())


@dataclass(frozen=True)
class NGramDistribution:
    n: int
    counts: dict[tuple[str, ...], int]
    total: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise StatsError(f"n must be 1 or 2, got {self.n}")
        if self.total != sum(self.counts.values()):
            raise StatsError("total does not match the sum of counts")
        if self.total <= 0:
            raise StatsError("distribution is empty")


@dataclass(frozen=True)
class GroundedTokenSet:
    token_types: frozenset[str]
    source_corpus: str
    occurrence_threshold: int


@dataclass(frozen=True)
class CorpusReport:
    token_count: int
    sentence_count: int
    vocab_size: int
    tokens_per_sentence: float
    jsd_1gram: float
    jsd_2gram: float
    grounding_ratio: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "token_count": self.token_count,
                "sentence_count": self.sentence_count,
                "vocab_size": self.vocab_size,
                "tokens_per_sentence": self.tokens_per_sentence,
                "jsd_1gram": self.jsd_1gram,
                "jsd_2gram": self.jsd_2gram,
                "grounding_ratio": self.grounding_ratio,
            }
        )


def build_ngram_distribution(corpus: Corpus, n: int) -> NGramDistribution:
    """Within-sentence n-gram counts; bigrams never cross a sentence boundary."""
    if n not in (1, 2):
        raise StatsError(f"n must be 1 or 2, got {n}")
    counts: Counter[tuple[str, ...]] = Counter()
    for sentence in corpus.sentences:
        texts = sentence.token_texts()
        for i in range(len(texts) - n + 1):
            counts[tuple(texts[i : i + n])] += 1
    if not counts:
        raise StatsError(f"corpus {corpus.name!r} has no {n}-grams")
    return NGramDistribution(n=n, counts=dict(counts), total=sum(counts.values()))


def jsd(p: NGramDistribution, q: NGramDistribution) -> float:
    """Base-2 Jensen-Shannon divergence over the sorted union support.

    The accumulation order is fixed by sorting, and every elementwise
    step is commutative in its two inputs, so jsd(p, q) == jsd(q, p)
    bitwise, not just approximately.
    """
    if p.n != q.n:
        raise StatsError(f"mismatched n-gram orders: {p.n} vs {q.n}")
    support = sorted(set(p.counts) | set(q.counts))
    pv = np.array([p.counts.get(g, 0) for g in support], dtype=np.float64) / p.total
    qv = np.array([q.counts.get(g, 0) for g in support], dtype=np.float64) / q.total
    m = 0.5 * (pv + qv)

    def half(a: np.ndarray) -> np.ndarray:
        # 0 * log 0 = 0 by convention
        out = np.zeros_like(a)
        mask = a > 0
        out[mask] = a[mask] * np.log2(a[mask] / m[mask])
        return out

    value = 0.5 * float(np.sum(half(pv) + half(qv)))
    return min(max(value, 0.0), 1.0)


def build_grounded_set(
    captions: Corpus,
    stopwords: frozenset[str] | set[str],
    threshold: int = 100,
) -> GroundedTokenSet:
    """Token types occurring more than `threshold` times in the captions,
    with stop words and pure-punctuation tokens removed first."""
    if not captions.sentences:
        raise StatsError(f"corpus {captions.name!r} is empty")
    counts: Counter[str] = Counter()
    for sentence in captions.sentences:
        for token in sentence.tokens:
            if token.text in stopwords or _is_pure_punctuation(token.text):
                continue
            counts[token.text] += 1
    grounded = frozenset(t for t, c in counts.items() if c > threshold)
    return GroundedTokenSet(
        token_types=grounded,
        source_corpus=captions.name,
        occurrence_threshold=threshold,
    )


def grounding_ratio(
    corpus: Corpus,
    grounded: GroundedTokenSet,
    stopwords: frozenset[str] | set[str],
) -> float:
    """Grounded-token occurrences over all content-token occurrences.

    Stop words and pure punctuation count toward neither side.
    """
    numer = 0
    denom = 0
    for sentence in corpus.sentences:
        for token in sentence.tokens:
            if token.text in stopwords or _is_pure_punctuation(token.text):
                continue
            denom += 1
            if token.text in grounded.token_types:
                numer += 1
    if denom == 0:
        raise StatsError(
            f"corpus {corpus.name!r} has no content tokens after stop-word removal"
        )
    return numer / denom


def report(
    corpus: Corpus,
    reference: Corpus,
    grounded: GroundedTokenSet,
    stopwords: frozenset[str] | set[str] | None = None,
) -> CorpusReport:
    """Full diagnostic report of `corpus` against a reference corpus.

    Vocabulary size counts token types with more than 5 occurrences,
    with no stop-word or punctuation filtering.
    """
    if stopwords is None:
        stopwords = default_stopwords()
    if not corpus.sentences or not reference.sentences:
        raise StatsError("both corpora must be non-empty")
    token_count = corpus.token_count()
    sentence_count = len(corpus.sentences)
    type_counts: Counter[str] = Counter()
    for sentence in corpus.sentences:
        type_counts.update(sentence.token_texts())
    vocab_size = sum(1 for c in type_counts.values() if c > 5)
    return CorpusReport(
        token_count=token_count,
        sentence_count=sentence_count,
        vocab_size=vocab_size,
        tokens_per_sentence=token_count / sentence_count,
        jsd_1gram=jsd(build_ngram_distribution(corpus, 1),
                      build_ngram_distribution(reference, 1)),
        jsd_2gram=jsd(build_ngram_distribution(corpus, 2),
                      build_ngram_distribution(reference, 2)),
        grounding_ratio=grounding_ratio(corpus, grounded, stopwords),
    )


def entropy_bits(probs) -> float:
    """Shannon entropy in bits; handy for checking jsd by hand."""
    return -sum(p * math.log2(p) for p in probs if p > 0)

"""Exact maximum-inner-product retrieval over the voken vocabulary.

Because vocabulary rows and queries are all unit-norm, the inner-product
argmax coincides with the Euclidean nearest neighbor
(||f - y||^2 = 2 - 2 f.y), so exact search needs nothing cleverer than a
blocked matrix product with a running per-query maximum.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .corpus import Corpus
from .features import FeatureMatrix
from .matcher import MatcherModel, project_tokens

# Queries are processed this many tokens at a time to bound memory.
TOKEN_BLOCK = 4096
VOCAB_BLOCK = 4096

NORM_TOL = 1e-6


class RetrievalError(ValueError):
    """Raised for malformed vocabularies, queries, or assignments."""


@dataclass(frozen=True)
class VokenVocabulary:
    """The retrievable image set: unit-norm embeddings plus stable ids."""

    embeddings: FeatureMatrix
    image_ids: tuple[str, ...]

    def __post_init__(self):
        if self.embeddings.rows != len(self.image_ids):
            raise RetrievalError(
                f"vocabulary has {self.embeddings.rows} embedding rows but "
                f"{len(self.image_ids)} image ids"
            )
        if len(set(self.image_ids)) != len(self.image_ids):
            raise RetrievalError("image ids must be unique")
        norms = np.linalg.norm(self.embeddings.as_float64(), axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > NORM_TOL)[0]
        if bad.size:
            raise RetrievalError(
                f"vocabulary row {int(bad[0])} has norm {norms[bad[0]]:.9f}, expected 1"
            )

    @property
    def size(self) -> int:
        return self.embeddings.rows


@dataclass(frozen=True)
class VokenAssignment:
    """One voken id (and its winning score) per token of one sentence."""

    sentence_id: int
    voken_ids: tuple[int, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.voken_ids) != len(self.scores):
            raise RetrievalError(
                f"sentence {self.sentence_id}: {len(self.voken_ids)} voken ids "
                f"but {len(self.scores)} scores"
            )
        if any(v < -1 for v in self.voken_ids):
            raise RetrievalError(f"sentence {self.sentence_id}: voken id below -1")


class Index:
    """Immutable exact-search index; safe for concurrent queries."""

    def __init__(self, embeddings: np.ndarray):
        self._embeddings = embeddings
        self._embeddings.setflags(write=False)

    @property
    def size(self) -> int:
        return self._embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self._embeddings.shape[1]

    def query_block(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact argmax inner product for a [n x dim] query block.

        Ties break toward the lowest voken id: within a vocabulary block
        np.argmax returns the first maximum, and across blocks the running
        best is only replaced on a strictly greater score.
        """
        queries = np.asarray(queries, dtype=np.float64)
        if queries.ndim != 2 or queries.shape[1] != self.dim:
            raise RetrievalError(
                f"queries must be 2-D with dim {self.dim}, got shape {queries.shape}"
            )
        norms = np.linalg.norm(queries, axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > NORM_TOL)[0]
        if bad.size:
            raise RetrievalError(
                f"query row {int(bad[0])} has norm {norms[bad[0]]:.9f}, expected 1"
            )
        n = queries.shape[0]
        best_ids = np.zeros(n, dtype=np.int64)
        best_scores = np.full(n, -np.inf)
        for start in range(0, self.size, VOCAB_BLOCK):
            block = self._embeddings[start : start + VOCAB_BLOCK]
            scores = queries @ block.T
            local = np.argmax(scores, axis=1)
            local_best = scores[np.arange(n), local]
            better = local_best > best_scores
            best_ids[better] = start + local[better]
            best_scores[better] = local_best[better]
        return best_ids, best_scores

    def query(self, f: np.ndarray) -> tuple[int, float]:
        f = np.asarray(f, dtype=np.float64)
        if f.ndim != 1:
            raise RetrievalError(f"query must be a vector, got shape {f.shape}")
        ids, scores = self.query_block(f[None, :])
        return int(ids[0]), float(scores[0])


def build_index(vocab: VokenVocabulary) -> Index:
    embeddings = vocab.embeddings.as_float64()
    norms = np.linalg.norm(embeddings, axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > NORM_TOL)[0]
    if bad.size:
        raise RetrievalError(
            f"vocabulary row {int(bad[0])} has norm {norms[bad[0]]:.9f}, expected 1"
        )
    return Index(embeddings)


def vokenize_corpus(
    corpus: Corpus,
    token_feats: Mapping[int, np.ndarray],
    model: MatcherModel,
    index: Index,
    threads: int = 1,
) -> list[VokenAssignment]:
    """Assign each token of each sentence its argmax-relevance voken.

    `token_feats` maps sentence_id to that sentence's [n_tokens x dim]
    feature rows, in token order. With threads > 1 the query blocks run
    concurrently, but results land in preallocated slots by position, so
    output is identical to the sequential order.
    """
    if threads < 1:
        raise RetrievalError(f"threads must be >= 1, got {threads}")
    projected: list[np.ndarray] = []
    lengths: list[int] = []
    for sentence in corpus.sentences:
        if sentence.sentence_id not in token_feats:
            raise RetrievalError(f"sentence {sentence.sentence_id}: no token features")
        feats = np.asarray(token_feats[sentence.sentence_id], dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != len(sentence.tokens):
            raise RetrievalError(
                f"sentence {sentence.sentence_id}: {len(sentence.tokens)} tokens "
                f"but feature shape {feats.shape}"
            )
        lengths.append(feats.shape[0])
        if feats.shape[0]:
            projected.append(project_tokens(model, feats))

    assignments: list[VokenAssignment] = []
    if projected:
        queries = np.vstack(projected)
        ids = np.empty(queries.shape[0], dtype=np.int64)
        scores = np.empty(queries.shape[0])
        starts = range(0, queries.shape[0], TOKEN_BLOCK)

        def run_block(start: int) -> None:
            stop = min(start + TOKEN_BLOCK, queries.shape[0])
            ids[start:stop], scores[start:stop] = index.query_block(queries[start:stop])

        if threads == 1:
            for start in starts:
                run_block(start)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run_block, starts))
    else:
        ids = np.empty(0, dtype=np.int64)
        scores = np.empty(0)
    offset = 0
    for sentence, count in zip(corpus.sentences, lengths):
        assignments.append(
            VokenAssignment(
                sentence_id=sentence.sentence_id,
                voken_ids=tuple(int(v) for v in ids[offset : offset + count]),
                scores=tuple(float(s) for s in scores[offset : offset + count]),
            )
        )
        offset += count
    return assignments


def linear_scan(vocab_embeddings: np.ndarray, f: np.ndarray) -> tuple[int, float]:
    """Reference brute-force argmax, row by row; the oracle for the index."""
    best_id = 0
    best_score = -np.inf
    for i in range(vocab_embeddings.shape[0]):
        score = float(vocab_embeddings[i] @ f)
        if score > best_score:
            best_id = i
            best_score = score
    return best_id, best_score

"""Non-contextual and ablation labeling strategies to compare against
full vokenization: term-frequency retrieval through a Boltzmann
distribution, sentence-level labels propagated to tokens, and the
random / shuffle / tokens label generators.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import CaptionPair, Corpus
from .index import Index, VokenAssignment
from .matcher import SENTENCE_LEVEL, MatcherModel, project_tokens

DEFAULT_GAMMA = 0.01
SHUFFLE_BATCH_SENTENCES = 256


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class ConditionalTF:
    """Per-image term frequencies with a softmax temperature.

    The "document" for image i is the concatenation of all its captions;
    tf(tok, i) is tok's share of that document, so each image's
    frequencies sum to 1.
    """

    image_ids: tuple[str, ...]
    tf_by_image: tuple[dict[str, float], ...]
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.gamma <= 0:
            raise BaselineError(f"gamma must be positive, got {self.gamma}")
        if len(self.image_ids) != len(self.tf_by_image):
            raise BaselineError("one tf table required per image")
        for image_id, table in zip(self.image_ids, self.tf_by_image):
            total = sum(table.values())
            if abs(total - 1.0) > 1e-9:
                raise BaselineError(
                    f"image {image_id!r}: term frequencies sum to {total}, not 1"
                )

    @property
    def n_images(self) -> int:
        return len(self.image_ids)

    def tf(self, tok: str, image_index: int) -> float:
        return self.tf_by_image[image_index].get(tok, 0.0)

    def tf_vector(self, tok: str) -> np.ndarray:
        return np.fromiter(
            (table.get(tok, 0.0) for table in self.tf_by_image),
            dtype=np.float64,
            count=self.n_images,
        )


def build_tf(
    caption_pairs: Sequence[CaptionPair],
    captions: Corpus,
    image_ids: Sequence[str],
    gamma: float = DEFAULT_GAMMA,
) -> ConditionalTF:
    """Count caption tokens per image and normalize to frequencies.

    Every image must receive at least one caption token; an unlabeled
    image would have no distribution to sample from.
    """
    sentences = {s.sentence_id: s for s in captions.sentences}
    counts: dict[str, Counter[str]] = {image_id: Counter() for image_id in image_ids}
    if len(counts) != len(image_ids):
        raise BaselineError("image ids must be unique")
    for pair in caption_pairs:
        if pair.image_id not in counts:
            raise BaselineError(f"caption pair references unknown image {pair.image_id!r}")
        if pair.sentence_id not in sentences:
            raise BaselineError(f"caption pair references unknown sentence {pair.sentence_id}")
        counts[pair.image_id].update(sentences[pair.sentence_id].token_texts())
    tables: list[dict[str, float]] = []
    for image_id in image_ids:
        total = sum(counts[image_id].values())
        if total == 0:
            raise BaselineError(f"image {image_id!r} has no caption tokens")
        tables.append({tok: c / total for tok, c in counts[image_id].items()})
    return ConditionalTF(image_ids=tuple(image_ids), tf_by_image=tuple(tables), gamma=gamma)


def tf_distribution(tfm: ConditionalTF, tok: str) -> np.ndarray:
    """Boltzmann distribution over images: softmax of tf(tok, .) / gamma.

    A token absent from every caption has all-zero frequencies, which
    softmax maps to the uniform distribution, the maximum-entropy choice
    for an unknown token.
    """
    values = tfm.tf_vector(tok) / tfm.gamma
    values -= values.max()
    exp = np.exp(values)
    return exp / exp.sum()


def tf_sample(
    tfm: ConditionalTF, tok: str, rng: int | np.random.Generator
) -> int:
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return int(rng.choice(tfm.n_images, p=tf_distribution(tfm, tok)))


def tf_label_corpus(
    tfm: ConditionalTF, corpus: Corpus, seed: int
) -> list[VokenAssignment]:
    """Stochastically label every token via its Boltzmann distribution.

    Each sentence draws from its own (seed, sentence_id) stream, so the
    result is independent of sentence processing order.
    """
    out: list[VokenAssignment] = []
    for sentence in corpus.sentences:
        rng = np.random.default_rng([seed, sentence.sentence_id])
        ids = []
        scores = []
        for token in sentence.tokens:
            dist = tf_distribution(tfm, token.text)
            voken = int(rng.choice(tfm.n_images, p=dist))
            ids.append(voken)
            scores.append(float(dist[voken]))
        out.append(
            VokenAssignment(
                sentence_id=sentence.sentence_id,
                voken_ids=tuple(ids),
                scores=tuple(scores),
            )
        )
    return out


def sentence_label(
    corpus: Corpus,
    cls_feats: Mapping[int, np.ndarray],
    model: MatcherModel,
    index: Index,
) -> list[tuple[int, float]]:
    """One argmax voken per sentence from its sentence embedding."""
    if model.mode != SENTENCE_LEVEL:
        raise BaselineError(
            f"sentence labeling needs a {SENTENCE_LEVEL} model, got {model.mode}"
        )
    features = []
    for sentence in corpus.sentences:
        if sentence.sentence_id not in cls_feats:
            raise BaselineError(f"sentence {sentence.sentence_id}: no sentence embedding")
        features.append(np.asarray(cls_feats[sentence.sentence_id], dtype=np.float64))
    if not features:
        return []
    projected = project_tokens(model, np.vstack(features))
    ids, scores = index.query_block(projected)
    return [(int(v), float(s)) for v, s in zip(ids, scores)]


def propagate(
    sentence_labels: Sequence[tuple[int, float]], corpus: Corpus
) -> list[VokenAssignment]:
    """Copy each sentence's label onto all of its tokens."""
    if len(sentence_labels) != len(corpus.sentences):
        raise BaselineError(
            f"{len(sentence_labels)} labels for {len(corpus.sentences)} sentences"
        )
    out: list[VokenAssignment] = []
    for sentence, (voken, score) in zip(corpus.sentences, sentence_labels):
        n = len(sentence.tokens)
        out.append(
            VokenAssignment(
                sentence_id=sentence.sentence_id,
                voken_ids=(voken,) * n,
                scores=(score,) * n,
            )
        )
    return out


def ablation_labels(
    kind: str,
    corpus: Corpus,
    vocab_size: int,
    assignments: Sequence[VokenAssignment] | None = None,
    seed: int = 0,
) -> list[VokenAssignment]:
    """Control-condition labels: `random` draws uniform ids, `shuffle`
    permutes existing labels within 256-sentence batches, and `tokens`
    uses each token's own type id as its label.
    """
    if kind == "random":
        out = []
        for sentence in corpus.sentences:
            rng = np.random.default_rng([seed, sentence.sentence_id])
            ids = rng.integers(0, vocab_size, size=len(sentence.tokens))
            out.append(
                VokenAssignment(
                    sentence_id=sentence.sentence_id,
                    voken_ids=tuple(int(v) for v in ids),
                    scores=(0.0,) * len(sentence.tokens),
                )
            )
        return out
    if kind == "shuffle":
        if assignments is None:
            raise BaselineError("shuffle ablation requires existing assignments")
        by_id = {a.sentence_id: a for a in assignments}
        missing = [s.sentence_id for s in corpus.sentences if s.sentence_id not in by_id]
        if missing:
            raise BaselineError(f"sentence {missing[0]}: no assignment to shuffle")
        out = []
        for batch_no, start in enumerate(range(0, len(corpus.sentences), SHUFFLE_BATCH_SENTENCES)):
            batch = corpus.sentences[start : start + SHUFFLE_BATCH_SENTENCES]
            pool = [
                (v, s)
                for sentence in batch
                for v, s in zip(
                    by_id[sentence.sentence_id].voken_ids,
                    by_id[sentence.sentence_id].scores,
                )
            ]
            rng = np.random.default_rng([seed, batch_no])
            order = rng.permutation(len(pool))
            cursor = 0
            for sentence in batch:
                n = len(by_id[sentence.sentence_id].voken_ids)
                picked = [pool[order[cursor + j]] for j in range(n)]
                cursor += n
                out.append(
                    VokenAssignment(
                        sentence_id=sentence.sentence_id,
                        voken_ids=tuple(v for v, _ in picked),
                        scores=tuple(s for _, s in picked),
                    )
                )
        return out
    if kind == "tokens":
        return [
            VokenAssignment(
                sentence_id=sentence.sentence_id,
                voken_ids=tuple(t.type_id for t in sentence.tokens),
                scores=(0.0,) * len(sentence.tokens),
            )
            for sentence in corpus.sentences
        ]
    raise BaselineError(f"unknown ablation kind {kind!r}; use random, shuffle, or tokens")

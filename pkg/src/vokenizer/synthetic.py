"""Seeded synthetic caption/image fixture with known cluster structure.

Images and caption tokens are drawn around shared cluster directions
(image i belongs to cluster i mod n_clusters), so the correct retrieval
for any held-out token is any image of its sentence's cluster. That
gives an exact precision oracle for the full train / index / retrieve
pipeline without any real data.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CaptionPair, Corpus, TokenizedSentence, WhitespaceTokenizer
from .features import ROLE_IMAGE_EMBEDDING, ROLE_TOKEN_HIDDEN, FeatureMatrix
from .index import VokenAssignment
from .matcher import TrainConfig
from .storage import write_caption_pairs, write_features, write_manifest


@dataclass(frozen=True)
class SyntheticConfig:
    n_clusters: int = 8
    n_images: int = 512
    n_train_sentences: int = 200
    n_heldout_sentences: int = 50
    tokens_per_sentence: int = 10
    token_dim: int = 32
    image_dim: int = 48
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_images < self.n_clusters:
            raise ValueError("need at least one image per cluster")


@dataclass(frozen=True)
class SyntheticFixture:
    config: SyntheticConfig
    train_corpus: Corpus
    heldout_corpus: Corpus
    caption_pairs: tuple[CaptionPair, ...]
    image_ids: tuple[str, ...]
    image_matrix: np.ndarray
    token_feats_train: dict[int, np.ndarray]
    token_feats_heldout: dict[int, np.ndarray]
    train_clusters: tuple[int, ...]
    heldout_clusters: tuple[int, ...]

    def image_feats(self) -> dict[str, np.ndarray]:
        return {iid: self.image_matrix[i] for i, iid in enumerate(self.image_ids)}

    def image_cluster(self, voken_id: int) -> int:
        return voken_id % self.config.n_clusters


def _make_sentences(
    rng: np.random.Generator,
    tokenizer: WhitespaceTokenizer,
    clusters: np.ndarray,
    cfg: SyntheticConfig,
    first_id: int = 0,
) -> list[TokenizedSentence]:
    sentences = []
    for offset, cluster in enumerate(clusters):
        words = [
            f"c{cluster}w{rng.integers(0, 50)}" for _ in range(cfg.tokens_per_sentence)
        ]
        raw = " ".join(words)
        sentences.append(
            TokenizedSentence(
                sentence_id=first_id + offset,
                raw=raw,
                tokens=tuple(tokenizer.tokenize(raw)),
                tokenizer_id="whitespace",
            )
        )
    return sentences


def generate(cfg: SyntheticConfig) -> SyntheticFixture:
    rng = np.random.default_rng(cfg.seed)
    k = cfg.n_clusters

    token_dirs = rng.normal(size=(k, cfg.token_dim))
    token_dirs /= np.linalg.norm(token_dirs, axis=1, keepdims=True)
    image_dirs = rng.normal(size=(k, cfg.image_dim))
    image_dirs /= np.linalg.norm(image_dirs, axis=1, keepdims=True)

    image_matrix = (
        image_dirs[np.arange(cfg.n_images) % k]
        + cfg.noise * rng.normal(size=(cfg.n_images, cfg.image_dim))
    ).astype(np.float32)
    image_ids = tuple(f"img{i:05d}" for i in range(cfg.n_images))
    by_cluster = [
        [i for i in range(cfg.n_images) if i % k == c] for c in range(k)
    ]

    tokenizer = WhitespaceTokenizer()
    train_clusters = rng.integers(0, k, size=cfg.n_train_sentences)
    heldout_clusters = rng.integers(0, k, size=cfg.n_heldout_sentences)
    train_sents = _make_sentences(rng, tokenizer, train_clusters, cfg)
    heldout_sents = _make_sentences(rng, tokenizer, heldout_clusters, cfg)

    def token_rows(clusters: np.ndarray) -> list[np.ndarray]:
        rows = []
        for cluster in clusters:
            rows.append(
                (
                    token_dirs[cluster]
                    + cfg.noise * rng.normal(size=(cfg.tokens_per_sentence, cfg.token_dim))
                ).astype(np.float32)
            )
        return rows

    token_feats_train = {
        s.sentence_id: rows for s, rows in zip(train_sents, token_rows(train_clusters))
    }
    token_feats_heldout = {
        s.sentence_id: rows
        for s, rows in zip(heldout_sents, token_rows(heldout_clusters))
    }

    pairs = tuple(
        CaptionPair(
            sentence_id=s.sentence_id,
            image_id=image_ids[by_cluster[c][rng.integers(0, len(by_cluster[c]))]],
        )
        for s, c in zip(train_sents, train_clusters)
    )

    return SyntheticFixture(
        config=cfg,
        train_corpus=Corpus(name="synthetic-train", sentences=tuple(train_sents)),
        heldout_corpus=Corpus(name="synthetic-heldout", sentences=tuple(heldout_sents)),
        caption_pairs=pairs,
        image_ids=image_ids,
        image_matrix=image_matrix,
        token_feats_train=token_feats_train,
        token_feats_heldout=token_feats_heldout,
        train_clusters=tuple(int(c) for c in train_clusters),
        heldout_clusters=tuple(int(c) for c in heldout_clusters),
    )


def suggested_train_config(seed: int = 0) -> TrainConfig:
    """Settings under which the fixture trains to high precision quickly."""
    return TrainConfig(epochs=20, batch_size=64, learning_rate=0.05, seed=seed)


def precision_at_1(
    fixture: SyntheticFixture, assignments: list[VokenAssignment]
) -> float:
    """Fraction of held-out tokens whose retrieved image sits in the
    generating cluster of their sentence."""
    clusters = {
        s.sentence_id: c
        for s, c in zip(fixture.heldout_corpus.sentences, fixture.heldout_clusters)
    }
    hits = 0
    total = 0
    for assignment in assignments:
        want = clusters[assignment.sentence_id]
        for voken in assignment.voken_ids:
            total += 1
            if fixture.image_cluster(voken) == want:
                hits += 1
    if total == 0:
        raise ValueError("no tokens to score")
    return hits / total


def write_fixture(directory: str | Path, fixture: SyntheticFixture) -> dict[str, Path]:
    """Materialize the fixture as pipeline input files.

    Returns the paths keyed by artifact name; token feature rows follow
    corpus token order, image rows follow manifest order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "train_corpus": directory / "train.txt",
        "heldout_corpus": directory / "heldout.txt",
        "pairs": directory / "pairs.tsv",
        "train_token_feats": directory / "train_tokens.vkft",
        "heldout_token_feats": directory / "heldout_tokens.vkft",
        "image_feats": directory / "images.vkft",
        "manifest": directory / "manifest.tsv",
        "heldout_labels": directory / "heldout_labels.tsv",
    }
    paths["train_corpus"].write_text(
        "".join(s.raw + "\n" for s in fixture.train_corpus.sentences), encoding="utf-8"
    )
    paths["heldout_corpus"].write_text(
        "".join(s.raw + "\n" for s in fixture.heldout_corpus.sentences), encoding="utf-8"
    )
    write_caption_pairs(paths["pairs"], fixture.caption_pairs)

    def stack(corpus: Corpus, feats: dict[int, np.ndarray]) -> np.ndarray:
        return np.vstack([feats[s.sentence_id] for s in corpus.sentences])

    write_features(
        paths["train_token_feats"],
        FeatureMatrix(
            values=stack(fixture.train_corpus, fixture.token_feats_train),
            role=ROLE_TOKEN_HIDDEN,
        ),
    )
    write_features(
        paths["heldout_token_feats"],
        FeatureMatrix(
            values=stack(fixture.heldout_corpus, fixture.token_feats_heldout),
            role=ROLE_TOKEN_HIDDEN,
        ),
    )
    write_features(
        paths["image_feats"],
        FeatureMatrix(values=fixture.image_matrix, role=ROLE_IMAGE_EMBEDDING),
    )
    write_manifest(
        paths["manifest"],
        [(iid, f"synthetic://{iid}") for iid in fixture.image_ids],
    )
    paths["heldout_labels"].write_text(
        "".join(
            f"{s.sentence_id}\t{c}\n"
            for s, c in zip(fixture.heldout_corpus.sentences, fixture.heldout_clusters)
        ),
        encoding="utf-8",
    )
    return paths

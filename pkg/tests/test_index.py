import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vokenizer.corpus import Corpus, tokenize_sentence
from vokenizer.features import ROLE_IMAGE_EMBEDDING, FeatureMatrix
from vokenizer.index import (
    Index,
    RetrievalError,
    VokenAssignment,
    VokenVocabulary,
    build_index,
    linear_scan,
    vokenize_corpus,
)
from vokenizer.matcher import new_model, project_tokens


def unit_rows(rng, n, dim):
    rows = rng.normal(size=(n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def vocab_from_rows(rows):
    matrix = FeatureMatrix(rows.astype(np.float32), role=ROLE_IMAGE_EMBEDDING)
    ids = tuple(f"im{i}" for i in range(matrix.rows))
    return VokenVocabulary(embeddings=matrix, image_ids=ids)


def corpus_of(sentences):
    return Corpus(
        name="test",
        sentences=tuple(
            tokenize_sentence(raw, "whitespace", sentence_id=i)
            for i, raw in enumerate(sentences)
        ),
    )


class TestQuery:
    def test_hand_case(self):
        rows = np.array([[0.8, 0.6], [0.6, -0.8], [0.0, 1.0]])
        index = Index(rows)
        voken, score = index.query(np.array([1.0, 0.0]))
        assert voken == 0
        assert score == pytest.approx(0.8, abs=1e-7)

    def test_singleton_vocabulary(self):
        index = Index(np.array([[0.0, 1.0]]))
        voken, score = index.query(np.array([1.0, 0.0]))
        assert voken == 0
        assert score == pytest.approx(0.0, abs=1e-12)

    def test_duplicate_rows_break_toward_lowest_id(self):
        row = np.array([0.6, 0.8])
        index = Index(np.stack([row, row, row]))
        voken, _ = index.query(row)
        assert voken == 0

    def test_query_must_be_unit_norm(self):
        index = Index(np.eye(3))
        with pytest.raises(RetrievalError, match="query row 1"):
            index.query_block(np.array([[1.0, 0, 0], [2.0, 0, 0]]))

    def test_query_dim_checked(self):
        index = Index(np.eye(3))
        with pytest.raises(RetrievalError, match="dim"):
            index.query(np.array([1.0, 0.0]))

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_matches_linear_scan(self, seed):
        rng = np.random.default_rng(seed)
        rows = unit_rows(rng, 37, 8)
        index = Index(rows)
        queries = unit_rows(rng, 11, 8)
        ids, scores = index.query_block(queries)
        for i in range(queries.shape[0]):
            want_id, want_score = linear_scan(rows, queries[i])
            assert ids[i] == want_id
            assert scores[i] == pytest.approx(want_score, abs=1e-12)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_inner_product_argmax_is_nearest_neighbor(self, seed):
        # For unit vectors ||f - y||^2 = 2 - 2 f.y, so maximum inner
        # product and minimum distance must pick the same row.
        rng = np.random.default_rng(seed)
        rows = unit_rows(rng, 29, 6)
        f = unit_rows(rng, 1, 6)[0]
        voken, score = Index(rows).query(f)
        dists = np.linalg.norm(rows - f, axis=1)
        assert voken == int(np.argmin(dists))
        assert dists[voken] ** 2 == pytest.approx(2.0 - 2.0 * score, abs=1e-9)

    def test_blocked_scan_crosses_vocab_blocks(self, monkeypatch):
        monkeypatch.setattr("vokenizer.index.VOCAB_BLOCK", 7)
        rng = np.random.default_rng(13)
        rows = unit_rows(rng, 50, 5)
        # Plant an exact duplicate of row 3 late in the vocabulary; the
        # running max must keep the earlier id.
        rows[44] = rows[3]
        index = Index(rows)
        voken, _ = index.query(rows[3])
        assert voken == 3
        queries = unit_rows(rng, 20, 5)
        ids, _ = index.query_block(queries)
        for i in range(20):
            assert ids[i] == linear_scan(rows, queries[i])[0]


class TestVocabulary:
    def test_row_count_must_match_ids(self):
        matrix = FeatureMatrix(np.eye(3, dtype=np.float32), role=ROLE_IMAGE_EMBEDDING)
        with pytest.raises(RetrievalError, match="3 embedding rows but 2"):
            VokenVocabulary(embeddings=matrix, image_ids=("a", "b"))

    def test_ids_must_be_unique(self):
        matrix = FeatureMatrix(np.eye(2, dtype=np.float32), role=ROLE_IMAGE_EMBEDDING)
        with pytest.raises(RetrievalError, match="unique"):
            VokenVocabulary(embeddings=matrix, image_ids=("a", "a"))

    def test_rows_must_be_unit_norm(self):
        rows = np.eye(3, dtype=np.float32)
        rows[1, 1] = 0.5
        matrix = FeatureMatrix(rows, role=ROLE_IMAGE_EMBEDDING)
        with pytest.raises(RetrievalError, match="row 1"):
            VokenVocabulary(embeddings=matrix, image_ids=("a", "b", "c"))

    def test_build_index_round_trip(self):
        rng = np.random.default_rng(3)
        rows = unit_rows(rng, 10, 4)
        vocab = vocab_from_rows(rows)
        index = build_index(vocab)
        assert index.size == 10
        assert index.dim == 4
        # float32 storage then float64 search still agrees with the oracle.
        stored = vocab.embeddings.as_float64()
        q = unit_rows(rng, 1, 4)[0]
        assert index.query(q)[0] == linear_scan(stored, q)[0]

    def test_index_rejects_writes(self):
        index = Index(np.eye(2))
        with pytest.raises(ValueError):
            index._embeddings[0, 0] = 5.0


class TestAssignment:
    def test_scores_and_ids_must_align(self):
        with pytest.raises(RetrievalError, match="2 voken ids but 1"):
            VokenAssignment(sentence_id=0, voken_ids=(1, 2), scores=(0.5,))

    def test_ids_below_sentinel_rejected(self):
        with pytest.raises(RetrievalError, match="below -1"):
            VokenAssignment(sentence_id=4, voken_ids=(-2,), scores=(0.0,))

    def test_sentinel_is_allowed(self):
        a = VokenAssignment(sentence_id=0, voken_ids=(-1, 3), scores=(0.0, 0.9))
        assert a.voken_ids == (-1, 3)


class TestVokenizeCorpus:
    def setup_method(self):
        self.rng = np.random.default_rng(7)
        self.model = new_model(token_dim=6, image_dim=6, seed=1, hidden_dim=8, out_dim=5)
        self.corpus = corpus_of(["a b c", "d e", "f g h i"])
        self.token_feats = {
            s.sentence_id: self.rng.normal(size=(len(s.tokens), 6))
            for s in self.corpus.sentences
        }
        vocab_rows = unit_rows(self.rng, 23, 5)
        self.index = Index(vocab_rows)
        self.vocab_rows = vocab_rows

    def test_agrees_with_brute_force(self):
        assignments = vokenize_corpus(self.corpus, self.token_feats, self.model, self.index)
        assert [a.sentence_id for a in assignments] == [0, 1, 2]
        for sentence, assignment in zip(self.corpus.sentences, assignments):
            assert len(assignment.voken_ids) == len(sentence.tokens)
            projected = project_tokens(self.model, self.token_feats[sentence.sentence_id])
            for t, row in enumerate(projected):
                want_id, want_score = linear_scan(self.vocab_rows, row)
                assert assignment.voken_ids[t] == want_id
                assert assignment.scores[t] == pytest.approx(want_score, abs=1e-12)

    def test_two_threads_match_one(self, monkeypatch):
        monkeypatch.setattr("vokenizer.index.TOKEN_BLOCK", 2)
        sequential = vokenize_corpus(self.corpus, self.token_feats, self.model, self.index)
        threaded = vokenize_corpus(
            self.corpus, self.token_feats, self.model, self.index, threads=2
        )
        assert sequential == threaded

    def test_same_type_different_context_can_differ(self):
        # Assignment is per occurrence: identical token types with
        # different feature rows may get different vokens.
        corpus = corpus_of(["bank bank"])
        feats = {0: np.stack([self.rng.normal(size=6), self.rng.normal(size=6)])}
        [assignment] = vokenize_corpus(corpus, feats, self.model, self.index)
        projected = project_tokens(self.model, feats[0])
        want = [linear_scan(self.vocab_rows, row)[0] for row in projected]
        assert list(assignment.voken_ids) == want

    def test_empty_corpus(self):
        assignments = vokenize_corpus(
            Corpus(name="empty", sentences=()), {}, self.model, self.index
        )
        assert assignments == []

    def test_missing_features_named(self):
        del self.token_feats[1]
        with pytest.raises(RetrievalError, match="sentence 1: no token features"):
            vokenize_corpus(self.corpus, self.token_feats, self.model, self.index)

    def test_row_count_mismatch_named(self):
        self.token_feats[2] = self.token_feats[2][:-1]
        with pytest.raises(RetrievalError, match="sentence 2: 4 tokens"):
            vokenize_corpus(self.corpus, self.token_feats, self.model, self.index)

    def test_thread_count_validated(self):
        with pytest.raises(RetrievalError, match="threads"):
            vokenize_corpus(self.corpus, self.token_feats, self.model, self.index, threads=0)

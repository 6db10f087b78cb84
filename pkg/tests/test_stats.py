import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vokenizer.corpus import Corpus, tokenize_sentence
from vokenizer.stats import (
    CorpusReport,
    GroundedTokenSet,
    NGramDistribution,
    StatsError,
    build_grounded_set,
    build_ngram_distribution,
    default_stopwords,
    entropy_bits,
    grounding_ratio,
    jsd,
    load_stopwords,
    report,
)


def corpus_of(raws, name="test"):
    return Corpus(
        name=name,
        sentences=tuple(
            tokenize_sentence(raw, "whitespace", sentence_id=i)
            for i, raw in enumerate(raws)
        ),
    )


def dist(counts, n=1):
    counts = {(k,) if isinstance(k, str) else k: v for k, v in counts.items()}
    return NGramDistribution(n=n, counts=counts, total=sum(counts.values()))


# Random corpora over a small alphabet give varied but honest n-gram tables.
random_corpus = st.lists(
    st.lists(st.sampled_from("abcdef"), min_size=1, max_size=6).map(" ".join),
    min_size=1,
    max_size=10,
)


class TestNGrams:
    def test_unigrams_counted_per_occurrence(self):
        d = build_ngram_distribution(corpus_of(["a b a", "a"]), 1)
        assert d.counts == {("a",): 3, ("b",): 1}
        assert d.total == 4

    def test_bigrams_stay_within_sentences(self):
        d = build_ngram_distribution(corpus_of(["a b", "c d"]), 2)
        assert d.counts == {("a", "b"): 1, ("c", "d"): 1}

    def test_single_token_sentences_have_no_bigrams(self):
        with pytest.raises(StatsError, match="no 2-grams"):
            build_ngram_distribution(corpus_of(["a", "b"]), 2)

    def test_order_validated(self):
        with pytest.raises(StatsError, match="n must be 1 or 2"):
            build_ngram_distribution(corpus_of(["a b"]), 3)

    def test_total_validated(self):
        with pytest.raises(StatsError, match="total"):
            NGramDistribution(n=1, counts={("a",): 2}, total=3)


class TestJsd:
    def test_identical_distributions_are_zero(self):
        p = dist({"a": 3, "b": 1})
        assert jsd(p, p) == 0.0

    def test_disjoint_supports_are_one(self):
        assert jsd(dist({"a": 1}), dist({"b": 1})) == 1.0

    def test_hand_computed_case(self):
        # P = (1/2, 1/2), Q = (1, 0): M = (3/4, 1/4),
        # JSD = H(M) - (H(P) + H(Q)) / 2 = H(3/4, 1/4) - 1/2.
        value = jsd(dist({"a": 1, "b": 1}), dist({"a": 2}))
        want = entropy_bits([0.75, 0.25]) - 0.5
        assert value == pytest.approx(want, abs=1e-12)
        assert value == pytest.approx(0.3112781244591328, abs=1e-4)

    def test_mismatched_orders_rejected(self):
        with pytest.raises(StatsError, match="orders"):
            jsd(dist({"a": 1}), dist({("a", "b"): 1}, n=2))

    @given(random_corpus, random_corpus)
    @settings(max_examples=150, deadline=None)
    def test_symmetry_is_bitwise(self, raws_a, raws_b):
        p = build_ngram_distribution(corpus_of(raws_a, "a"), 1)
        q = build_ngram_distribution(corpus_of(raws_b, "b"), 1)
        forward = jsd(p, q)
        backward = jsd(q, p)
        assert forward == backward
        assert 0.0 <= forward <= 1.0

    @given(random_corpus)
    @settings(max_examples=100, deadline=None)
    def test_self_divergence_is_zero(self, raws):
        p = build_ngram_distribution(corpus_of(raws), 1)
        assert jsd(p, p) == 0.0

    @given(random_corpus, random_corpus)
    @settings(max_examples=100, deadline=None)
    def test_agrees_with_entropy_formula(self, raws_a, raws_b):
        p = build_ngram_distribution(corpus_of(raws_a, "a"), 1)
        q = build_ngram_distribution(corpus_of(raws_b, "b"), 1)
        support = sorted(set(p.counts) | set(q.counts))
        pv = [p.counts.get(g, 0) / p.total for g in support]
        qv = [q.counts.get(g, 0) / q.total for g in support]
        m = [(a + b) / 2 for a, b in zip(pv, qv)]
        want = entropy_bits(m) - (entropy_bits(pv) + entropy_bits(qv)) / 2
        assert jsd(p, q) == pytest.approx(want, abs=1e-9)


class TestGroundedSet:
    def test_threshold_is_strict(self):
        corpus = corpus_of(["cat cat cat", "cat dog"])
        grounded = build_grounded_set(corpus, frozenset(), threshold=3)
        assert grounded.token_types == frozenset({"cat"})

    def test_stopwords_and_punctuation_removed(self):
        corpus = corpus_of(["the cat .", "the cat .", "the cat ."])
        grounded = build_grounded_set(corpus, frozenset({"the"}), threshold=2)
        assert grounded.token_types == frozenset({"cat"})

    def test_empty_corpus_rejected(self):
        with pytest.raises(StatsError, match="empty"):
            build_grounded_set(Corpus(name="none", sentences=()), frozenset())

    @given(random_corpus, st.integers(0, 5))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_threshold(self, raws, threshold):
        corpus = corpus_of(raws)
        low = build_grounded_set(corpus, frozenset(), threshold=threshold)
        high = build_grounded_set(corpus, frozenset(), threshold=threshold + 1)
        assert high.token_types <= low.token_types

    def test_metadata_recorded(self):
        grounded = build_grounded_set(corpus_of(["x"], name="caps"), frozenset(), 7)
        assert grounded.source_corpus == "caps"
        assert grounded.occurrence_threshold == 7


class TestGroundingRatio:
    def grounded(self, *types):
        return GroundedTokenSet(
            token_types=frozenset(types), source_corpus="caps", occurrence_threshold=0
        )

    def test_hand_case(self):
        corpus = corpus_of(["the cat sat on a mat"])
        ratio = grounding_ratio(corpus, self.grounded("cat", "mat"), {"the", "on", "a"})
        # Content tokens: cat, sat, mat; grounded: cat, mat.
        assert ratio == pytest.approx(2 / 3, abs=1e-12)

    def test_all_grounded_is_one(self):
        corpus = corpus_of(["cat mat"])
        assert grounding_ratio(corpus, self.grounded("cat", "mat"), frozenset()) == 1.0

    def test_none_grounded_is_zero(self):
        corpus = corpus_of(["cat mat"])
        assert grounding_ratio(corpus, self.grounded(), frozenset()) == 0.0

    def test_stopword_only_corpus_rejected(self):
        corpus = corpus_of(["the the the"])
        with pytest.raises(StatsError, match="no content tokens"):
            grounding_ratio(corpus, self.grounded("cat"), {"the"})

    @given(random_corpus, st.integers(0, 3))
    @settings(max_examples=100, deadline=None)
    def test_bounded_and_monotone_in_grounded_set(self, raws, threshold):
        corpus = corpus_of(raws)
        small = build_grounded_set(corpus, frozenset(), threshold=threshold + 1)
        large = build_grounded_set(corpus, frozenset(), threshold=threshold)
        r_small = grounding_ratio(corpus, small, frozenset())
        r_large = grounding_ratio(corpus, large, frozenset())
        assert 0.0 <= r_small <= r_large <= 1.0


class TestStopwords:
    def test_default_list_has_expected_size(self):
        words = default_stopwords()
        assert len(words) == 179
        assert {"the", "a", "of", "and"} <= words
        assert all(w == w.lower() for w in words)

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "stops.txt"
        path.write_text("alpha\nbeta\n")
        assert load_stopwords(path) == frozenset({"alpha", "beta"})


class TestReport:
    def test_fields_and_json(self):
        corpus = corpus_of(
            ["cat cat cat cat cat cat dog", "cat mat"], name="main"
        )
        reference = corpus_of(["cat dog", "mat cat"], name="ref")
        grounded = GroundedTokenSet(
            token_types=frozenset({"cat"}), source_corpus="caps", occurrence_threshold=0
        )
        rep = report(corpus, reference, grounded, stopwords=frozenset())
        assert rep.token_count == 9
        assert rep.sentence_count == 2
        # Only "cat" clears the >5 occurrence bar.
        assert rep.vocab_size == 1
        assert rep.tokens_per_sentence == pytest.approx(4.5)
        assert rep.grounding_ratio == pytest.approx(7 / 9)
        assert 0.0 <= rep.jsd_1gram <= 1.0
        assert 0.0 <= rep.jsd_2gram <= 1.0
        decoded = json.loads(rep.to_json())
        assert set(decoded) == {
            "token_count",
            "sentence_count",
            "vocab_size",
            "tokens_per_sentence",
            "jsd_1gram",
            "jsd_2gram",
            "grounding_ratio",
        }
        assert decoded["vocab_size"] == 1

    def test_self_report_has_zero_divergence(self):
        corpus = corpus_of(["a b c", "a b d"], name="same")
        grounded = GroundedTokenSet(
            token_types=frozenset({"a"}), source_corpus="x", occurrence_threshold=0
        )
        rep = report(corpus, corpus, grounded, stopwords=frozenset())
        assert rep.jsd_1gram == 0.0
        assert rep.jsd_2gram == 0.0

    def test_empty_corpus_rejected(self):
        grounded = GroundedTokenSet(
            token_types=frozenset(), source_corpus="x", occurrence_threshold=0
        )
        with pytest.raises(StatsError, match="non-empty"):
            report(Corpus(name="e", sentences=()), corpus_of(["a b"]), grounded, frozenset())


class TestEntropy:
    def test_uniform_entropy(self):
        assert entropy_bits([0.5, 0.5]) == pytest.approx(1.0, abs=1e-12)
        assert entropy_bits([0.25] * 4) == pytest.approx(2.0, abs=1e-12)

    def test_point_mass_is_zero(self):
        assert entropy_bits([1.0]) == 0.0

    def test_matches_math_formula(self):
        probs = [0.1, 0.2, 0.3, 0.4]
        want = -sum(p * math.log2(p) for p in probs)
        assert entropy_bits(probs) == pytest.approx(want, abs=1e-12)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vokenizer.corpus import tokenize_sentence
from vokenizer.index import VokenAssignment
from vokenizer.supervision import (
    KEEP,
    MASK_SYMBOL,
    RANDOM_TOKEN,
    LossReport,
    MaskSet,
    SupervisionError,
    mask_tokens,
    mlm_loss,
    vlm_loss,
    voken_cls_loss,
)


def sentence_of(raw, sid=0):
    return tokenize_sentence(raw, "whitespace", sentence_id=sid)


def rows(*probs):
    return np.array(probs, dtype=np.float64)


class TestMaskTokens:
    def test_count_is_ceiling_of_ratio(self):
        for length, want in ((1, 1), (6, 1), (7, 2), (13, 2), (14, 3), (20, 3)):
            sentence = sentence_of(" ".join(f"w{i}" for i in range(length)))
            mask = mask_tokens(sentence, 0.15, rng_seed=0)
            assert len(mask.masked_positions) == want, length
            assert want == math.ceil(0.15 * length)

    def test_positions_sorted_unique_in_range(self):
        sentence = sentence_of(" ".join(f"w{i}" for i in range(40)))
        mask = mask_tokens(sentence, 0.15, rng_seed=3)
        positions = mask.masked_positions
        assert list(positions) == sorted(set(positions))
        assert all(0 <= p < 40 for p in positions)

    def test_deterministic_per_seed_and_sentence(self):
        sentence = sentence_of("a b c d e f g h", sid=11)
        assert mask_tokens(sentence, 0.15, 5) == mask_tokens(sentence, 0.15, 5)
        other_seed = mask_tokens(sentence, 0.15, 6)
        other_sentence = mask_tokens(sentence_of("a b c d e f g h", sid=12), 0.15, 5)
        assert (
            other_seed != mask_tokens(sentence, 0.15, 5)
            or other_sentence != mask_tokens(sentence, 0.15, 5)
        )

    def test_ratio_validated(self):
        sentence = sentence_of("a b")
        for ratio in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(SupervisionError, match="mask ratio"):
                mask_tokens(sentence, ratio, 0)

    def test_action_frequencies(self):
        # Over many sentences the 80/10/10 action split shows up in the
        # empirical frequencies.
        counts = {MASK_SYMBOL: 0, RANDOM_TOKEN: 0, KEEP: 0}
        total = 0
        for sid in range(2000):
            sentence = sentence_of(" ".join(f"w{i}" for i in range(20)), sid=sid)
            mask = mask_tokens(sentence, 0.15, rng_seed=1)
            for action in mask.replacement:
                counts[action] += 1
                total += 1
        assert counts[MASK_SYMBOL] / total == pytest.approx(0.8, abs=0.03)
        assert counts[RANDOM_TOKEN] / total == pytest.approx(0.1, abs=0.02)
        assert counts[KEEP] / total == pytest.approx(0.1, abs=0.02)

    def test_validation_of_mask_set(self):
        with pytest.raises(SupervisionError, match="sorted and unique"):
            MaskSet(0, (2, 1), (MASK_SYMBOL, MASK_SYMBOL))
        with pytest.raises(SupervisionError, match="one replacement action"):
            MaskSet(0, (1,), ())
        with pytest.raises(SupervisionError, match="unknown replacement"):
            MaskSet(0, (1,), ("explode",))


class TestMlmLoss:
    def test_hand_case(self):
        # Two masked positions with true-token probabilities 0.5 and 0.25.
        dists = rows([0.5, 0.5], [0.25, 0.75], [0.9, 0.1])
        mask = MaskSet(0, (0, 1), (MASK_SYMBOL, MASK_SYMBOL))
        loss = mlm_loss(dists, [0, 0, 1], mask)
        want = -(math.log(0.5) + math.log(0.25))
        assert loss == pytest.approx(want, abs=1e-12)
        assert loss == pytest.approx(2.0794415416798357, abs=1e-6)

    def test_unmasked_rows_do_not_matter(self):
        mask = MaskSet(0, (1,), (MASK_SYMBOL,))
        targets = [0, 1, 0]
        a = mlm_loss(rows([0.5, 0.5], [0.3, 0.7], [0.9, 0.1]), targets, mask)
        b = mlm_loss(rows([0.99, 0.01], [0.3, 0.7], [0.2, 0.8]), targets, mask)
        assert a == b

    def test_uniform_distribution_gives_k_log_v(self):
        v = 11
        uniform = np.full((5, v), 1.0 / v)
        mask = MaskSet(0, (0, 2, 4), (MASK_SYMBOL,) * 3)
        loss = mlm_loss(uniform, [3, 1, 4, 1, 5], mask)
        assert abs(loss - 3 * math.log(v)) < 1e-9

    def test_empty_mask_is_zero(self):
        loss = mlm_loss(rows([1.0, 0.0]), [0], MaskSet(0, (), ()))
        assert loss == 0.0

    def test_row_sums_validated(self):
        mask = MaskSet(0, (0,), (MASK_SYMBOL,))
        with pytest.raises(SupervisionError, match="row 0 sums"):
            mlm_loss(rows([0.5, 0.4]), [0], mask)

    def test_zero_probability_rejected(self):
        mask = MaskSet(0, (0,), (MASK_SYMBOL,))
        with pytest.raises(SupervisionError, match="zero probability"):
            mlm_loss(rows([0.0, 1.0]), [0], mask)

    def test_mask_outside_sentence_rejected(self):
        mask = MaskSet(0, (4,), (MASK_SYMBOL,))
        with pytest.raises(SupervisionError, match="outside sentence"):
            mlm_loss(rows([0.5, 0.5]), [0], mask)

    def test_target_outside_vocab_rejected(self):
        mask = MaskSet(0, (0,), (MASK_SYMBOL,))
        with pytest.raises(SupervisionError, match="outside vocabulary"):
            mlm_loss(rows([0.5, 0.5]), [9], mask)


class TestVokenClsLoss:
    def test_hand_case(self):
        # Probabilities at the assigned vokens: 0.1, 0.2, 1.0.
        dists = rows([0.1, 0.9], [0.8, 0.2], [0.0, 1.0])
        assignment = VokenAssignment(0, (0, 1, 1), (0.0, 0.0, 0.0))
        loss = voken_cls_loss(dists, assignment)
        want = -(math.log(0.1) + math.log(0.2) + math.log(1.0))
        assert loss == pytest.approx(want, abs=1e-12)
        assert loss == pytest.approx(3.912023005428146, abs=1e-6)

    def test_sentinel_positions_skipped(self):
        dists = rows([0.1, 0.9], [0.5, 0.5])
        with_sentinel = VokenAssignment(0, (-1, 1), (0.0, 0.0))
        assert voken_cls_loss(dists, with_sentinel) == pytest.approx(
            -math.log(0.5), abs=1e-12
        )
        all_sentinel = VokenAssignment(0, (-1, -1), (0.0, 0.0))
        assert voken_cls_loss(dists, all_sentinel) == 0.0

    def test_uniform_distribution_gives_k_log_v(self):
        v = 7
        uniform = np.full((4, v), 1.0 / v)
        assignment = VokenAssignment(0, (0, 3, 6, 2), (0.0,) * 4)
        loss = voken_cls_loss(uniform, assignment)
        assert abs(loss - 4 * math.log(v)) < 1e-9

    def test_row_count_must_match_assignment(self):
        assignment = VokenAssignment(3, (0, 1), (0.0, 0.0))
        with pytest.raises(SupervisionError, match="sentence 3: 1 distribution"):
            voken_cls_loss(rows([0.5, 0.5]), assignment)

    def test_voken_outside_vocabulary_rejected(self):
        assignment = VokenAssignment(0, (5,), (0.0,))
        with pytest.raises(SupervisionError, match="outside the 2-image"):
            voken_cls_loss(rows([0.5, 0.5]), assignment)

    def test_zero_probability_rejected(self):
        assignment = VokenAssignment(0, (0,), (0.0,))
        with pytest.raises(SupervisionError, match="zero probability"):
            voken_cls_loss(rows([0.0, 1.0]), assignment)


class TestVlmLoss:
    def test_combination_and_json(self):
        reportable = vlm_loss(3.912023005428146, 2.0794415416798357, 1.0)
        assert reportable.l_vlm == pytest.approx(5.991464547107982, abs=1e-6)
        decoded = json.loads(reportable.to_json())
        assert set(decoded) == {"l_mlm", "l_voken_cls", "lambda", "l_vlm"}
        assert decoded["lambda"] == 1.0

    def test_ratio_scales_mlm_term(self):
        half = vlm_loss(1.0, 2.0, 0.5)
        assert half.l_vlm == pytest.approx(2.0, abs=1e-12)

    @given(
        st.floats(min_value=0.0, max_value=50.0),
        st.floats(min_value=0.0, max_value=50.0),
        st.floats(min_value=0.0, max_value=4.0),
    )
    @settings(max_examples=100)
    def test_invariant_holds(self, cls, mlm, ratio):
        reportable = vlm_loss(cls, mlm, ratio)
        assert reportable.l_vlm == cls + ratio * mlm

    def test_inconsistent_report_rejected(self):
        with pytest.raises(SupervisionError, match="does not equal"):
            LossReport(l_mlm=1.0, l_voken_cls=1.0, loss_ratio=1.0, l_vlm=3.0)

    def test_negative_losses_rejected(self):
        with pytest.raises(SupervisionError, match="non-negative"):
            LossReport(l_mlm=-0.1, l_voken_cls=0.0, loss_ratio=1.0, l_vlm=-0.1)


class TestPerturbationInvariants:
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_mlm_ignores_unmasked_perturbations(self, seed):
        rng = np.random.default_rng(seed)
        length, vocab = 6, 5
        dists = rng.random((length, vocab)) + 1e-3
        dists /= dists.sum(axis=1, keepdims=True)
        targets = [int(t) for t in rng.integers(0, vocab, length)]
        masked = tuple(int(p) for p in np.sort(rng.choice(length, 2, replace=False)))
        mask = MaskSet(0, masked, (MASK_SYMBOL,) * 2)
        base = mlm_loss(dists, targets, mask)
        perturbed = dists.copy()
        for pos in range(length):
            if pos not in masked:
                row = rng.random(vocab) + 1e-3
                perturbed[pos] = row / row.sum()
        assert mlm_loss(perturbed, targets, mask) == base

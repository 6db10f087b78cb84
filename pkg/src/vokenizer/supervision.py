"""Masking and loss arithmetic for visually-supervised language modeling.

The language model itself lives elsewhere; these functions score its
output distributions. Two losses are combined: masked-token negative
log-likelihood over the masked positions only, and voken-classification
negative log-likelihood over every token of the sentence. Both are sums
(not means) over their positions, in natural log.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import TokenizedSentence
from .index import VokenAssignment

MASK_SYMBOL = "mask_symbol"
RANDOM_TOKEN = "random_token"
KEEP = "keep"

DEFAULT_MASK_RATIO = 0.15
DEFAULT_LOSS_RATIO = 1.0

# Action split for selected positions: 80% mask symbol, 10% random
# replacement, 10% left unchanged.
_MASK_P = 0.8
_RANDOM_P = 0.1

ROW_SUM_TOL = 1e-6


class SupervisionError(ValueError):
    pass


@dataclass(frozen=True)
class MaskSet:
    sentence_id: int
    masked_positions: tuple[int, ...]
    replacement: tuple[str, ...]

    def __post_init__(self):
        if len(self.masked_positions) != len(self.replacement):
            raise SupervisionError("one replacement action per masked position")
        if list(self.masked_positions) != sorted(set(self.masked_positions)):
            raise SupervisionError("masked positions must be sorted and unique")
        bad = set(self.replacement) - {MASK_SYMBOL, RANDOM_TOKEN, KEEP}
        if bad:
            raise SupervisionError(f"unknown replacement actions: {sorted(bad)}")


@dataclass(frozen=True)
class LossReport:
    l_mlm: float
    l_voken_cls: float
    loss_ratio: float
    l_vlm: float

    def __post_init__(self):
        if self.l_mlm < 0 or self.l_voken_cls < 0:
            raise SupervisionError("losses must be non-negative")
        expected = self.l_voken_cls + self.loss_ratio * self.l_mlm
        if not math.isclose(self.l_vlm, expected, rel_tol=0.0, abs_tol=1e-12):
            raise SupervisionError(
                f"l_vlm {self.l_vlm} does not equal l_voken_cls + ratio*l_mlm {expected}"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "l_mlm": self.l_mlm,
                "l_voken_cls": self.l_voken_cls,
                "lambda": self.loss_ratio,
                "l_vlm": self.l_vlm,
            }
        )


def mask_tokens(
    sentence: TokenizedSentence, mask_ratio: float, rng_seed: int
) -> MaskSet:
    """Pick ceil(ratio * length) positions uniformly without replacement.

    Draws come from a (seed, sentence_id) stream, so masking a corpus in
    parallel gives the same result as masking it sequentially.
    """
    if not 0.0 < mask_ratio < 1.0:
        raise SupervisionError(f"mask ratio must lie in (0, 1), got {mask_ratio}")
    length = len(sentence.tokens)
    if length == 0:
        return MaskSet(sentence.sentence_id, (), ())
    k = math.ceil(mask_ratio * length)
    rng = np.random.default_rng([rng_seed, sentence.sentence_id])
    positions = np.sort(rng.choice(length, size=k, replace=False))
    draws = rng.random(k)
    actions = tuple(
        MASK_SYMBOL if u < _MASK_P else (RANDOM_TOKEN if u < _MASK_P + _RANDOM_P else KEEP)
        for u in draws
    )
    return MaskSet(
        sentence_id=sentence.sentence_id,
        masked_positions=tuple(int(p) for p in positions),
        replacement=actions,
    )


def _check_rows(distributions: np.ndarray, what: str) -> np.ndarray:
    distributions = np.asarray(distributions, dtype=np.float64)
    if distributions.ndim != 2:
        raise SupervisionError(f"{what} must be 2-D, got shape {distributions.shape}")
    sums = distributions.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
    if bad.size:
        raise SupervisionError(
            f"{what} row {int(bad[0])} sums to {sums[bad[0]]:.9f}, not 1"
        )
    return distributions


def mlm_loss(
    token_distributions: np.ndarray,
    targets: Sequence[int],
    mask: MaskSet,
) -> float:
    """Negative log-likelihood of the true tokens at masked positions.

    `token_distributions` holds one row per sentence position (masked or
    not); only rows at masked positions contribute, so unmasked rows can
    be perturbed freely without changing the value.
    """
    dists = _check_rows(token_distributions, "token distributions")
    if dists.shape[0] != len(targets):
        raise SupervisionError(
            f"{dists.shape[0]} distribution rows for {len(targets)} targets"
        )
    total = 0.0
    for pos in mask.masked_positions:
        if pos >= dists.shape[0]:
            raise SupervisionError(f"masked position {pos} outside sentence")
        target = targets[pos]
        if not 0 <= target < dists.shape[1]:
            raise SupervisionError(f"target id {target} outside vocabulary")
        p = dists[pos, target]
        if p <= 0.0:
            raise SupervisionError(
                f"zero probability at target {target} (position {pos}); "
                f"floor the distribution before scoring"
            )
        total -= math.log(p)
    return total


def voken_cls_loss(
    voken_distributions: np.ndarray, assignment: VokenAssignment
) -> float:
    """Negative log-likelihood of the assigned voken at every token.

    Sentinel (-1) positions carry no voken and are skipped.
    """
    dists = _check_rows(voken_distributions, "voken distributions")
    if dists.shape[0] != len(assignment.voken_ids):
        raise SupervisionError(
            f"sentence {assignment.sentence_id}: {dists.shape[0]} distribution "
            f"rows for {len(assignment.voken_ids)} tokens"
        )
    total = 0.0
    for pos, voken in enumerate(assignment.voken_ids):
        if voken == -1:
            continue
        if voken >= dists.shape[1]:
            raise SupervisionError(
                f"voken id {voken} outside the {dists.shape[1]}-image vocabulary"
            )
        p = dists[pos, voken]
        if p <= 0.0:
            raise SupervisionError(
                f"zero probability at voken {voken} (position {pos}); "
                f"floor the distribution before scoring"
            )
        total -= math.log(p)
    return total


def vlm_loss(
    l_voken_cls: float, l_mlm: float, loss_ratio: float = DEFAULT_LOSS_RATIO
) -> LossReport:
    return LossReport(
        l_mlm=l_mlm,
        l_voken_cls=l_voken_cls,
        loss_ratio=loss_ratio,
        l_vlm=l_voken_cls + loss_ratio * l_mlm,
    )

"""Transfer voken annotations between tokenizations of the same text.

Different tokenizers cut the same sentence differently, so annotations
attached to one token sequence are moved to another by assigning each
target token the source token with maximum character-span overlap
(Jaccard index). Subword markers never matter here: overlap is computed
on character positions, not token text.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import Corpus, Token, TokenizedSentence
from .index import VokenAssignment


class RevokenError(ValueError):
    pass


@dataclass(frozen=True)
class AlignmentMap:
    """For target token j, ind[j] is the source token index it maps to
    and iou[j] the span Jaccard achieved there."""

    ind: tuple[int, ...]
    iou: tuple[float, ...]

    def __post_init__(self):
        if len(self.ind) != len(self.iou):
            raise RevokenError("ind and iou must have equal length")

    @property
    def zero_overlap_count(self) -> int:
        """Target tokens that overlapped nothing and fell back to source
        token 0; nonzero values are worth surfacing in diagnostics."""
        return sum(1 for v in self.iou if v == 0.0)


def span_iou(a: Token, b: Token) -> float:
    inter = min(a.span_end, b.span_end) - max(a.span_start, b.span_start)
    if inter <= 0:
        return 0.0
    union = (a.span_end - a.span_start) + (b.span_end - b.span_start) - inter
    return inter / union


def align(t1: TokenizedSentence, t2: TokenizedSentence) -> AlignmentMap:
    """Nearest-neighbor alignment of t2's tokens onto t1's by span IoU.

    Ties (including the all-zero-overlap case) break toward the smallest
    t1 index.
    """
    if t1.raw != t2.raw:
        raise RevokenError(
            f"sentences {t1.sentence_id} and {t2.sentence_id} have different raw text"
        )
    if not t1.tokens:
        raise RevokenError(f"sentence {t1.sentence_id}: empty source tokenization")
    ind: list[int] = []
    iou: list[float] = []
    for u in t2.tokens:
        best_i = 0
        best = -1.0
        for i, w in enumerate(t1.tokens):
            value = span_iou(w, u)
            if value > best:
                best_i = i
                best = value
        ind.append(best_i)
        iou.append(best)
    return AlignmentMap(ind=tuple(ind), iou=tuple(iou))


def revokenize(assignment: VokenAssignment, amap: AlignmentMap) -> VokenAssignment:
    """Pull each target token's voken from its aligned source token."""
    n_source = len(assignment.voken_ids)
    if amap.ind and max(amap.ind) >= n_source:
        raise RevokenError(
            f"sentence {assignment.sentence_id}: alignment references source "
            f"token {max(amap.ind)} but only {n_source} vokens are present"
        )
    return VokenAssignment(
        sentence_id=assignment.sentence_id,
        voken_ids=tuple(assignment.voken_ids[i] for i in amap.ind),
        scores=tuple(assignment.scores[i] for i in amap.ind),
    )


def revokenize_corpus(
    source: Corpus,
    target: Corpus,
    assignments: Sequence[VokenAssignment],
) -> list[VokenAssignment]:
    """Per-sentence align + transfer across two tokenizations of one text."""
    if len(source.sentences) != len(target.sentences):
        raise RevokenError(
            f"source has {len(source.sentences)} sentences, "
            f"target has {len(target.sentences)}"
        )
    by_id = {a.sentence_id: a for a in assignments}
    out: list[VokenAssignment] = []
    for t1, t2 in zip(source.sentences, target.sentences):
        if t1.sentence_id != t2.sentence_id:
            raise RevokenError(
                f"sentence id mismatch: {t1.sentence_id} vs {t2.sentence_id}"
            )
        if t1.sentence_id not in by_id:
            raise RevokenError(f"sentence {t1.sentence_id}: no voken assignment")
        out.append(revokenize(by_id[t1.sentence_id], align(t1, t2)))
    return out

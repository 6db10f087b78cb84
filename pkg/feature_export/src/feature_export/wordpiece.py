"""Uncased wordpiece tokenization matching the pipeline's corpus loader.

Exported feature rows must line up one-to-one with the tokens the
downstream corpus loader produces, so this module reimplements the
loader's documented behavior: sentences are non-blank lines (NFC
normalized, CR stripped), words are whitespace runs with punctuation
split off, and each word is segmented greedily into the longest
vocabulary pieces, continuations carrying the ``##`` marker. A
character no piece covers becomes its own token with the unknown id.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Piece:
    text: str
    piece_id: int


def _is_punctuation(ch: str) -> bool:
    cp = ord(ch)
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


class Wordpiece:
    """Greedy longest-match segmenter over a fixed piece inventory."""

    def __init__(self, pieces, lowercase: bool = True) -> None:
        self.vocab: dict[str, int] = {}
        for piece in pieces:
            if piece not in self.vocab:
                self.vocab[piece] = len(self.vocab)
        self.lowercase = lowercase
        self.unk_id = self.vocab.get("[UNK]", len(self.vocab))
        self._max_piece = max((len(p.lstrip("#")) for p in self.vocab), default=1)

    def tokenize(self, raw: str) -> list[Piece]:
        out: list[Piece] = []
        for start, end in self._words(raw):
            out.extend(self._segment(raw[start:end]))
        return out

    def texts(self, raw: str) -> list[str]:
        return [p.text for p in self.tokenize(raw)]

    def _words(self, raw: str):
        start = None
        for i, ch in enumerate(raw):
            if ch.isspace():
                if start is not None:
                    yield start, i
                    start = None
            elif _is_punctuation(ch):
                if start is not None:
                    yield start, i
                yield i, i + 1
                start = None
            elif start is None:
                start = i
        if start is not None:
            yield start, len(raw)

    def _segment(self, word: str) -> list[Piece]:
        if self.lowercase:
            word = word.lower()
        pieces: list[Piece] = []
        pos = 0
        while pos < len(word):
            prefix = "##" if pos > 0 else ""
            match_len = 0
            limit = min(len(word) - pos, self._max_piece)
            for length in range(limit, 0, -1):
                if prefix + word[pos : pos + length] in self.vocab:
                    match_len = length
                    break
            if match_len == 0:
                pieces.append(Piece(text=prefix + word[pos], piece_id=self.unk_id))
                pos += 1
                continue
            text = prefix + word[pos : pos + match_len]
            pieces.append(Piece(text=text, piece_id=self.vocab[text]))
            pos += match_len
        return pieces


def load_vocab(path: str | Path) -> list[str]:
    """One piece per line; blank lines are ignored."""
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"vocabulary file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    return [line for line in lines if line]

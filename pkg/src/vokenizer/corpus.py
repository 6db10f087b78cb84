"""Tokenized corpora with character-span provenance.

Every token records the half-open character range it came from, in
Unicode scalar values, so downstream span alignment is independent of
the byte encoding and of subword markers.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

# Sentences longer than this are split at sentence-final punctuation
# (hard-split if none) so downstream fixed-length pipelines stay bounded.
MAX_SENTENCE_TOKENS = 512

_SENTENCE_FINAL = {".", "!", "?"}


class CorpusError(ValueError):
    """Raised for malformed corpus input or tokenizer registry misuse."""


@dataclass(frozen=True)
class Token:
    """One token plus the character span it occupies in the raw sentence."""

    text: str
    span_start: int
    span_end: int
    type_id: int

    def __post_init__(self) -> None:
        if not 0 <= self.span_start < self.span_end:
            raise CorpusError(
                f"invalid span [{self.span_start}, {self.span_end}) for token {self.text!r}"
            )


@dataclass(frozen=True)
class TokenizedSentence:
    sentence_id: int
    raw: str
    tokens: tuple[Token, ...]
    tokenizer_id: str

    def __post_init__(self) -> None:
        prev_start = -1
        prev_end = 0
        for tok in self.tokens:
            if tok.span_end > len(self.raw):
                raise CorpusError(
                    f"token {tok.text!r} span ends at {tok.span_end}, "
                    f"past sentence length {len(self.raw)}"
                )
            if tok.span_start < prev_start:
                raise CorpusError("token spans must be non-decreasing in start")
            if tok.span_start < prev_end:
                raise CorpusError("token spans must not overlap")
            prev_start, prev_end = tok.span_start, tok.span_end

    def __len__(self) -> int:
        return len(self.tokens)

    def token_texts(self) -> list[str]:
        return [t.text for t in self.tokens]


@dataclass(frozen=True)
class Corpus:
    name: str
    sentences: tuple[TokenizedSentence, ...]

    def __post_init__(self) -> None:
        for i, sent in enumerate(self.sentences):
            if sent.sentence_id != i:
                raise CorpusError(
                    f"sentence_ids must be dense from 0; position {i} has id {sent.sentence_id}"
                )

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass(frozen=True)
class CaptionPair:
    """Caption sentence paired with the image it describes."""

    sentence_id: int
    image_id: str


class Tokenizer(Protocol):
    def tokenize(self, raw: str) -> list[Token]: ...


class WhitespaceTokenizer:
    """Lowercasing tokenizer splitting on runs of whitespace only.

    Type ids are interned in first-seen order, so tokenizing the same
    input twice through the same instance is byte-identical.
    """

    def __init__(self) -> None:
        self._type_ids: dict[str, int] = {}

    def tokenize(self, raw: str) -> list[Token]:
        tokens: list[Token] = []
        start = None
        for i, ch in enumerate(raw):
            if ch.isspace():
                if start is not None:
                    tokens.append(self._make(raw, start, i))
                    start = None
            elif start is None:
                start = i
        if start is not None:
            tokens.append(self._make(raw, start, len(raw)))
        return tokens

    def _make(self, raw: str, start: int, end: int) -> Token:
        text = raw[start:end].lower()
        type_id = self._type_ids.setdefault(text, len(self._type_ids))
        return Token(text=text, span_start=start, span_end=end, type_id=type_id)


def _is_punctuation(ch: str) -> bool:
    cp = ord(ch)
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


class SubwordTokenizer:
    """Greedy longest-match subword tokenizer over a fixed vocabulary.

    Words are split on whitespace and punctuation, lowercased, then
    segmented left to right into the longest vocabulary pieces;
    continuation pieces carry the ``##`` marker. A character with no
    matching piece becomes its own token with the unknown type id, which
    keeps spans exact.
    """

    def __init__(self, vocab: Iterable[str], lowercase: bool = True) -> None:
        self.vocab: dict[str, int] = {}
        for piece in vocab:
            if piece not in self.vocab:
                self.vocab[piece] = len(self.vocab)
        self.lowercase = lowercase
        self.unk_id = self.vocab.get("[UNK]", len(self.vocab))
        self._max_piece = max((len(p.lstrip("#")) for p in self.vocab), default=1)

    @classmethod
    def from_vocab_file(cls, path: str | Path, lowercase: bool = True) -> "SubwordTokenizer":
        path = Path(path)
        if not path.is_file():
            raise CorpusError(f"tokenizer vocabulary file not found: {path}")
        pieces = [line.rstrip("\n") for line in path.read_text(encoding="utf-8").splitlines()]
        return cls((p for p in pieces if p), lowercase=lowercase)

    def tokenize(self, raw: str) -> list[Token]:
        tokens: list[Token] = []
        for start, end in self._words(raw):
            tokens.extend(self._segment(raw, start, end))
        return tokens

    def _words(self, raw: str):
        """Yield spans of whitespace-free runs, with punctuation split off."""
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

    def _segment(self, raw: str, start: int, end: int) -> list[Token]:
        word = raw[start:end]
        if self.lowercase:
            word = word.lower()
        tokens: list[Token] = []
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
                # Unsegmentable character: keep its real text and span.
                piece = prefix + word[pos]
                tokens.append(
                    Token(
                        text=piece,
                        span_start=start + pos,
                        span_end=start + pos + 1,
                        type_id=self.unk_id,
                    )
                )
                pos += 1
                continue
            piece = prefix + word[pos : pos + match_len]
            tokens.append(
                Token(
                    text=piece,
                    span_start=start + pos,
                    span_end=start + pos + match_len,
                    type_id=self.vocab[piece],
                )
            )
            pos += match_len
        return tokens


class TokenizerRegistry:
    """Named tokenizers; ids are unique and resolvable by every loader."""

    def __init__(self) -> None:
        self._tokenizers: dict[str, Tokenizer] = {}

    def register(self, tokenizer_id: str, rules: "Tokenizer | str") -> None:
        if tokenizer_id in self._tokenizers:
            raise CorpusError(f"tokenizer id {tokenizer_id!r} already registered")
        self._tokenizers[tokenizer_id] = _build_tokenizer(rules)

    def get(self, tokenizer_id: str) -> Tokenizer:
        try:
            return self._tokenizers[tokenizer_id]
        except KeyError:
            known = ", ".join(sorted(self._tokenizers)) or "<none>"
            raise CorpusError(
                f"unknown tokenizer id {tokenizer_id!r}; registered: {known}"
            ) from None

    def ids(self) -> list[str]:
        return sorted(self._tokenizers)


def _build_tokenizer(rules: "Tokenizer | str") -> Tokenizer:
    """Accept a tokenizer object or a spec string.

    Spec strings: ``whitespace`` or ``subword:<vocab file path>``.
    """
    if isinstance(rules, str):
        if rules == "whitespace":
            return WhitespaceTokenizer()
        if rules.startswith("subword:"):
            return SubwordTokenizer.from_vocab_file(rules.split(":", 1)[1])
        raise CorpusError(f"unrecognized tokenizer spec {rules!r}")
    if not hasattr(rules, "tokenize"):
        raise CorpusError("tokenizer rules must provide a tokenize(raw) method")
    return rules


_default_registry = TokenizerRegistry()
_default_registry.register("whitespace", "whitespace")


def default_registry() -> TokenizerRegistry:
    return _default_registry


def register_tokenizer(
    tokenizer_id: str, rules: "Tokenizer | str", registry: TokenizerRegistry | None = None
) -> None:
    (registry or _default_registry).register(tokenizer_id, rules)


def tokenize_sentence(
    raw: str,
    tokenizer_id: str,
    sentence_id: int = 0,
    registry: TokenizerRegistry | None = None,
) -> TokenizedSentence:
    tokenizer = (registry or _default_registry).get(tokenizer_id)
    return TokenizedSentence(
        sentence_id=sentence_id,
        raw=raw,
        tokens=tuple(tokenizer.tokenize(raw)),
        tokenizer_id=tokenizer_id,
    )


def _split_long(raw: str, tokens: list[Token]) -> list[tuple[str, list[Token]]]:
    """Split an over-long token list into <= MAX_SENTENCE_TOKENS chunks.

    Cuts fall after sentence-final punctuation where possible, else hard
    at the limit; chunk raws tile the original string exactly.
    """
    if len(tokens) <= MAX_SENTENCE_TOKENS:
        return [(raw, tokens)]
    pieces: list[tuple[str, list[Token]]] = []
    chunk_char_start = 0
    i = 0
    while i < len(tokens):
        window = tokens[i : i + MAX_SENTENCE_TOKENS]
        if i + len(window) == len(tokens):
            cut = len(window)
        else:
            cut = 0
            for j in range(len(window) - 1, -1, -1):
                if window[j].text and window[j].text[-1] in _SENTENCE_FINAL:
                    cut = j + 1
                    break
            if cut == 0:
                cut = len(window)
        chunk_tokens = window[:cut]
        last_end = chunk_tokens[-1].span_end
        chunk_char_end = len(raw) if i + cut == len(tokens) else last_end
        chunk_raw = raw[chunk_char_start:chunk_char_end]
        rebased = [
            Token(
                text=t.text,
                span_start=t.span_start - chunk_char_start,
                span_end=t.span_end - chunk_char_start,
                type_id=t.type_id,
            )
            for t in chunk_tokens
        ]
        pieces.append((chunk_raw, rebased))
        chunk_char_start = chunk_char_end
        i += cut
    return pieces


def load_corpus(
    path: str | Path,
    tokenizer_id: str,
    name: str | None = None,
    registry: TokenizerRegistry | None = None,
) -> Corpus:
    """Load a one-sentence-per-line UTF-8 text file.

    Blank (or whitespace-only) lines are document separators and produce
    no sentence. Each line is NFC-normalized before tokenization.
    """
    path = Path(path)
    tokenizer = (registry or _default_registry).get(tokenizer_id)
    sentences: list[TokenizedSentence] = []
    try:
        raw_bytes = path.read_bytes()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc
    for lineno, line_bytes in enumerate(raw_bytes.split(b"\n"), start=1):
        try:
            line = line_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: malformed UTF-8 line ({exc})") from exc
        line = unicodedata.normalize("NFC", line.rstrip("\r"))
        if not line.strip():
            continue
        tokens = tokenizer.tokenize(line)
        for chunk_raw, chunk_tokens in _split_long(line, tokens):
            sentences.append(
                TokenizedSentence(
                    sentence_id=len(sentences),
                    raw=chunk_raw,
                    tokens=tuple(chunk_tokens),
                    tokenizer_id=tokenizer_id,
                )
            )
    return Corpus(name=name or path.name, sentences=tuple(sentences))

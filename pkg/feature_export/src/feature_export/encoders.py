"""Frozen checkpoint-backed encoders.

These are desk-scale stand-ins with the same output contract as the
full pretrained backbones (see backbones): weights load from disk,
inference only, and the text side reports each token as the
concatenation of its last four hidden layers. Weight derivation is a
pure function of (inventory, sizes, seed), so a checkpoint can be
rebuilt bit-identically anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .wordpiece import Piece, Wordpiece

N_FEATURE_LAYERS = 4

CHECKPOINT_VERSION = 1


class EncoderError(ValueError):
    pass


def _as_f32(name: str, arr, shape: tuple[int, ...]) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float32)
    if out.shape != shape:
        raise EncoderError(f"{name} must have shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise EncoderError(f"{name} contains non-finite entries")
    return out


@dataclass
class TextEncoder:
    """Contextual token encoder over a wordpiece inventory.

    Position 0 is a sentence slot filled by ``cls_vector``; each layer
    mixes every token with the running sentence mean, so a token's
    features depend on its whole sentence. Token features are the last
    four layers concatenated; the sentence slot's row backs the
    per-sentence output.
    """

    vocab: tuple[str, ...]
    embeddings: np.ndarray
    positions: np.ndarray
    cls_vector: np.ndarray
    layers: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]
    _wordpiece: Wordpiece = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.vocab = tuple(self.vocab)
        if "[UNK]" not in self.vocab:
            raise EncoderError("encoder inventory must contain the [UNK] piece")
        if len(set(self.vocab)) != len(self.vocab):
            raise EncoderError("encoder inventory contains duplicate pieces")
        hidden = int(np.asarray(self.embeddings).shape[-1])
        self.embeddings = _as_f32("embeddings", self.embeddings, (len(self.vocab), hidden))
        n_positions = int(np.asarray(self.positions).shape[0])
        if n_positions < 2:
            raise EncoderError("need at least two positions (sentence slot plus one token)")
        self.positions = _as_f32("positions", self.positions, (n_positions, hidden))
        self.cls_vector = _as_f32("cls_vector", self.cls_vector, (hidden,))
        if len(self.layers) < N_FEATURE_LAYERS:
            raise EncoderError(
                f"need at least {N_FEATURE_LAYERS} layers, got {len(self.layers)}"
            )
        self.layers = tuple(
            (
                _as_f32(f"layer {i} w", w, (hidden, hidden)),
                _as_f32(f"layer {i} u", u, (hidden, hidden)),
                _as_f32(f"layer {i} b", b, (hidden,)),
            )
            for i, (w, u, b) in enumerate(self.layers)
        )
        self._wordpiece = Wordpiece(self.vocab)

    @property
    def hidden_size(self) -> int:
        return self.embeddings.shape[1]

    @property
    def feature_dim(self) -> int:
        return N_FEATURE_LAYERS * self.hidden_size

    @property
    def max_tokens(self) -> int:
        return self.positions.shape[0] - 1

    def vocabulary(self) -> tuple[str, ...]:
        return self.vocab

    def pieces(self, raw: str) -> list[Piece]:
        return self._wordpiece.tokenize(raw)

    def tokenize(self, raw: str) -> list[str]:
        return self._wordpiece.texts(raw)

    def encode(self, raw: str) -> tuple[np.ndarray, np.ndarray]:
        """(token rows [n, feature_dim], sentence row [feature_dim])."""
        ids = [p.piece_id for p in self._wordpiece.tokenize(raw)]
        n = len(ids)
        if n > self.max_tokens:
            raise EncoderError(f"{n} tokens exceed the {self.max_tokens}-token window")
        h = np.concatenate([self.cls_vector[None, :], self.embeddings[ids]])
        h = h + self.positions[: n + 1]
        collected = []
        for w, u, b in self.layers:
            context = h.mean(axis=0)
            h = h + np.tanh(h @ w + context @ u + b)
            collected.append(h)
        features = np.concatenate(collected[-N_FEATURE_LAYERS:], axis=1)
        return features[1:], features[0]


@dataclass
class ImageEncoder:
    """Pooled image embedder: pinned resize, then a frozen projection."""

    input_size: int
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        if self.input_size < 1:
            raise EncoderError("input size must be positive")
        flat = self.input_size * self.input_size * 3
        width = int(np.asarray(self.weights).shape[-1])
        self.weights = _as_f32("weights", self.weights, (flat, width))
        self.bias = _as_f32("bias", self.bias, (width,))

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    def prepare(self, path: str | Path) -> np.ndarray:
        """Evaluation transform: RGB, bilinear resize, scale to [0, 1]."""
        with Image.open(path) as im:
            im = im.convert("RGB").resize(
                (self.input_size, self.input_size), Image.BILINEAR
            )
            return np.asarray(im, dtype=np.float32) / 255.0

    def embed_pixels(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float32)
        want = (self.input_size, self.input_size, 3)
        if batch.ndim != 4 or batch.shape[1:] != want:
            raise EncoderError(f"pixel batch must be [n, {want[0]}, {want[1]}, 3], got {batch.shape}")
        flat = batch.reshape(batch.shape[0], -1)
        # Row-at-a-time keeps each embedding bit-identical however the
        # caller groups its batches.
        rows = [np.tanh(row @ self.weights + self.bias) for row in flat]
        return np.stack(rows) if rows else np.zeros((0, self.width), np.float32)


# ---------------------------------------------------------------------------
# Derivation and checkpoint files


def derive_text_encoder(
    pieces, hidden_size: int = 32, max_tokens: int = 512, seed: int = 0
) -> TextEncoder:
    vocab = tuple(dict.fromkeys(pieces))
    if hidden_size < 1 or max_tokens < 1:
        raise EncoderError("hidden size and token window must be positive")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(hidden_size)
    layers = tuple(
        (
            rng.normal(0.0, scale, (hidden_size, hidden_size)),
            rng.normal(0.0, scale, (hidden_size, hidden_size)),
            np.zeros(hidden_size),
        )
        for _ in range(N_FEATURE_LAYERS)
    )
    return TextEncoder(
        vocab=vocab,
        embeddings=rng.normal(0.0, 1.0, (len(vocab), hidden_size)),
        positions=rng.normal(0.0, 0.1, (max_tokens + 1, hidden_size)),
        cls_vector=rng.normal(0.0, 1.0, (hidden_size,)),
        layers=layers,
    )


def derive_image_encoder(
    width: int = 64, input_size: int = 32, seed: int = 0
) -> ImageEncoder:
    if width < 1 or input_size < 1:
        raise EncoderError("width and input size must be positive")
    rng = np.random.default_rng(seed)
    flat = input_size * input_size * 3
    return ImageEncoder(
        input_size=input_size,
        weights=rng.normal(0.0, 1.0 / np.sqrt(flat), (flat, width)),
        bias=np.zeros(width),
    )


def save_text_encoder(path: str | Path, encoder: TextEncoder) -> None:
    arrays = {
        "kind": np.array("text"),
        "version": np.array(CHECKPOINT_VERSION),
        "vocab": np.array(encoder.vocab),
        "embeddings": encoder.embeddings,
        "positions": encoder.positions,
        "cls_vector": encoder.cls_vector,
        "n_layers": np.array(len(encoder.layers)),
    }
    for i, (w, u, b) in enumerate(encoder.layers):
        arrays[f"w{i}"] = w
        arrays[f"u{i}"] = u
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def save_image_encoder(path: str | Path, encoder: ImageEncoder) -> None:
    np.savez(
        path,
        kind=np.array("image"),
        version=np.array(CHECKPOINT_VERSION),
        input_size=np.array(encoder.input_size),
        weights=encoder.weights,
        bias=encoder.bias,
    )


def _open_checkpoint(path: str | Path, expect_kind: str):
    path = Path(path)
    try:
        data = np.load(path)
    except ValueError as exc:
        raise EncoderError(f"{path}: not a readable encoder checkpoint ({exc})") from exc
    try:
        kind = str(data["kind"])
        version = int(data["version"])
    except KeyError as exc:
        data.close()
        raise EncoderError(f"{path}: not an encoder checkpoint (missing {exc})") from exc
    if version != CHECKPOINT_VERSION:
        data.close()
        raise EncoderError(f"{path}: unsupported checkpoint version {version}")
    if kind != expect_kind:
        data.close()
        raise EncoderError(f"{path}: holds a {kind!r} encoder, expected {expect_kind!r}")
    return data


def load_text_encoder(path: str | Path) -> TextEncoder:
    with _open_checkpoint(path, "text") as data:
        try:
            layers = tuple(
                (data[f"w{i}"], data[f"u{i}"], data[f"b{i}"])
                for i in range(int(data["n_layers"]))
            )
            return TextEncoder(
                vocab=tuple(str(p) for p in data["vocab"]),
                embeddings=data["embeddings"],
                positions=data["positions"],
                cls_vector=data["cls_vector"],
                layers=layers,
            )
        except KeyError as exc:
            raise EncoderError(f"{path}: not a text encoder checkpoint (missing {exc})") from exc


def load_image_encoder(path: str | Path) -> ImageEncoder:
    with _open_checkpoint(path, "image") as data:
        try:
            return ImageEncoder(
                input_size=int(data["input_size"]),
                weights=data["weights"],
                bias=data["bias"],
            )
        except KeyError as exc:
            raise EncoderError(f"{path}: not an image encoder checkpoint (missing {exc})") from exc

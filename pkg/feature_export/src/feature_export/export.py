"""Run a frozen encoder over a corpus or image manifest and write
feature files the pipeline consumes unmodified.

Row alignment is the whole contract: token rows follow corpus token
order, image rows follow manifest order, regardless of how inference is
batched. The token exporter cross-checks the encoder's own tokenizer
against the corpus loader's segmentation and aborts on the first
divergent sentence rather than ever writing misaligned rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .formats import read_manifest, read_sentences, write_feature_file
from .wordpiece import Wordpiece


class ExportError(ValueError):
    pass


class TokenizationMismatchError(ExportError):
    pass


@dataclass(frozen=True)
class TokenExportReport:
    sentences: int
    tokens: int
    dim: int


@dataclass(frozen=True)
class ImageExportReport:
    images: int
    dim: int


def default_cls_path(out_path: str | Path) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.stem + "_cls" + out_path.suffix)


def export_token_features(
    corpus_path: str | Path,
    out_path: str | Path,
    encoder,
    cls_path: str | Path | None = None,
) -> TokenExportReport:
    """Write one role=token_hidden row per corpus token to ``out_path``
    and one role=sentence_cls row per sentence next to it.

    Over-long sentences abort: the corpus loader would split them into
    several sentences, which would break the one-row-per-sentence
    contract of the cls file.
    """
    out_path = Path(out_path)
    cls_path = Path(cls_path) if cls_path is not None else default_cls_path(out_path)
    sentences = read_sentences(corpus_path)
    loader = Wordpiece(encoder.vocabulary())

    token_blocks: list[np.ndarray] = []
    cls_rows: list[np.ndarray] = []
    for idx, raw in enumerate(sentences):
        expected = loader.texts(raw)
        produced = list(encoder.tokenize(raw))
        if produced != expected:
            raise TokenizationMismatchError(
                f"sentence {idx}: encoder tokenization diverges from the corpus "
                f"loader: encoder {produced!r} vs loader {expected!r}"
            )
        if len(expected) > encoder.max_tokens:
            raise ExportError(
                f"sentence {idx}: {len(expected)} tokens exceed the "
                f"{encoder.max_tokens}-token encoder window"
            )
        rows, cls_row = encoder.encode(raw)
        if rows.shape[0] != len(expected):
            raise ExportError(
                f"sentence {idx}: encoder returned {rows.shape[0]} rows "
                f"for {len(expected)} tokens"
            )
        token_blocks.append(rows)
        cls_rows.append(cls_row)

    dim = encoder.feature_dim
    tokens = np.vstack(token_blocks) if token_blocks else np.zeros((0, dim), np.float32)
    cls = np.stack(cls_rows) if cls_rows else np.zeros((0, dim), np.float32)
    write_feature_file(out_path, tokens, "token_hidden")
    write_feature_file(cls_path, cls, "sentence_cls")
    return TokenExportReport(sentences=len(sentences), tokens=tokens.shape[0], dim=dim)


def _resolve_image(uri: str) -> Path:
    return Path(uri.removeprefix("file://"))


def export_image_features(
    manifest_path: str | Path,
    out_path: str | Path,
    encoder,
    batch_size: int = 32,
) -> ImageExportReport:
    """Write one role=image_embedding row per manifest entry, in
    manifest order."""
    if batch_size < 1:
        raise ExportError("batch size must be at least 1")
    entries = read_manifest(manifest_path)
    paths: list[Path] = []
    for voken_id, (image_id, uri) in enumerate(entries):
        path = _resolve_image(uri)
        if not path.is_file():
            raise ExportError(
                f"voken {voken_id} (image {image_id}): image file not found: {path}"
            )
        paths.append(path)

    blocks: list[np.ndarray] = []
    for start in range(0, len(paths), batch_size):
        chunk = paths[start : start + batch_size]
        pixels = []
        for offset, path in enumerate(chunk):
            try:
                pixels.append(encoder.prepare(path))
            except OSError as exc:
                image_id = entries[start + offset][0]
                raise ExportError(
                    f"voken {start + offset} (image {image_id}): cannot load {path}: {exc}"
                ) from exc
        blocks.append(encoder.embed_pixels(np.stack(pixels)))

    values = np.vstack(blocks) if blocks else np.zeros((0, encoder.width), np.float32)
    write_feature_file(out_path, values, "image_embedding")
    return ImageExportReport(images=len(entries), dim=encoder.width)

"""The pipeline's file formats, reimplemented from their documented layout.

This adapter talks to the pipeline exclusively through files, so the
formats live here rather than being imported from it.

Feature file (version 1), 21-byte header then payload::

    magic   4 bytes  b"VKFT"
    version u32
    rows    u64
    dim     u32
    role    u8       0 token_hidden, 1 image_embedding, 2 sentence_cls, 3 probability
    payload rows*dim float32, row-major, little-endian

Text side: corpora are UTF-8, one sentence per line, blank lines being
document separators; image manifests are TSV ``voken_id<TAB>image_id<TAB>uri``
with voken ids dense from 0.
"""

from __future__ import annotations

import os
import struct
import unicodedata
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"VKFT"
FEATURE_VERSION = 1

_FEATURE_HEADER = struct.Struct("<4sIQIB")

# Roles this adapter emits; probability files are downstream-only.
WRITE_ROLE_CODES = {
    "token_hidden": 0,
    "image_embedding": 1,
    "sentence_cls": 2,
}
CODE_ROLES = {0: "token_hidden", 1: "image_embedding", 2: "sentence_cls", 3: "probability"}


def write_feature_file(path: str | Path, values: np.ndarray, role: str) -> None:
    if role not in WRITE_ROLE_CODES:
        raise ValueError(f"unknown feature role {role!r}")
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError(f"feature payload must be 2-D, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("feature payload contains non-finite entries")
    rows, dim = values.shape
    header = _FEATURE_HEADER.pack(
        FEATURE_MAGIC, FEATURE_VERSION, rows, dim, WRITE_ROLE_CODES[role]
    )
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + values.tobytes())
    os.replace(tmp, path)


def read_feature_header(path: str | Path) -> tuple[int, int, str]:
    """(rows, dim, role); also checks the payload length against the header."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_FEATURE_HEADER.size)
    if len(header) != _FEATURE_HEADER.size:
        raise ValueError(f"{path}: truncated feature header ({len(header)} bytes)")
    magic, version, rows, dim, role_code = _FEATURE_HEADER.unpack(header)
    if magic != FEATURE_MAGIC:
        raise ValueError(f"{path}: expected magic {FEATURE_MAGIC!r}, found {magic!r}")
    if version != FEATURE_VERSION:
        raise ValueError(f"{path}: unsupported feature file version {version}")
    if role_code not in CODE_ROLES:
        raise ValueError(f"{path}: unknown feature role code {role_code}")
    expected = _FEATURE_HEADER.size + rows * dim * 4
    actual = path.stat().st_size
    if actual != expected:
        raise ValueError(
            f"{path}: file holds {actual} bytes, header declares {expected}"
        )
    return rows, dim, CODE_ROLES[role_code]


def read_sentences(path: str | Path) -> list[str]:
    """Non-blank lines of a UTF-8 corpus file, NFC normalized, CR stripped."""
    path = Path(path)
    sentences: list[str] = []
    raw_bytes = path.read_bytes()
    for lineno, line_bytes in enumerate(raw_bytes.split(b"\n"), start=1):
        try:
            line = line_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: malformed UTF-8 line ({exc})") from exc
        line = unicodedata.normalize("NFC", line.rstrip("\r"))
        if line.strip():
            sentences.append(line)
    return sentences


def read_manifest(path: str | Path) -> list[tuple[str, str]]:
    """(image_id, uri) per entry; the line index is the voken id."""
    path = Path(path)
    entries: list[tuple[str, str]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno + 1}: manifest line needs 3 tab-separated fields")
        voken_id, image_id, uri = parts
        if int(voken_id) != len(entries):
            raise ValueError(
                f"{path}:{lineno + 1}: voken ids must be dense from 0, got {voken_id}"
            )
        entries.append((image_id, uri))
    return entries

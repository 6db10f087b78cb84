"""Binary and text formats tying the pipeline together.

All binary formats are little-endian, magic-tagged, and versioned;
readers reject unknown magics and versions instead of guessing.

Feature file (version 1), 21-byte header then payload::

    magic   4 bytes  b"VKFT"
    version u32
    rows    u64
    dim     u32
    role    u8       0 token_hidden, 1 image_embedding, 2 sentence_cls, 3 probability
    payload rows*dim float32, row-major

Voken corpus file (version 1)::

    magic        4 bytes  b"VKVK"
    version      u32
    vocab_size   u32
    strategy_len u32, then strategy_len bytes UTF-8
    n_records    u64
    records      sentence_id u64, n_tokens u32, n_tokens * i32 voken ids
                 (-1 is the "no voken" sentinel)

Checkpoint file (version 1)::

    magic   4 bytes  b"VKCP"
    version u32
    mode    u8       0 token_level, 1 sentence_level
    margin  f64
    then per MLP (token side first): dim_in u32, hidden u32, out u32,
    followed by w1, b1, w2, b2 as float64, row-major

Text side: corpora are UTF-8, one sentence per line, blank lines being
document separators; image manifests are TSV ``voken_id<TAB>image_id<TAB>uri``;
caption pairs are TSV ``sentence_id<TAB>image_id``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpus import CaptionPair
from .features import CODE_ROLES, ROLE_CODES, FeatureMatrix
from .matcher import SENTENCE_LEVEL, TOKEN_LEVEL, MatcherModel, MlpParams

FEATURE_MAGIC = b"VKFT"
VOKEN_MAGIC = b"VKVK"
CHECKPOINT_MAGIC = b"VKCP"
FORMAT_VERSION = 1

_FEATURE_HEADER = struct.Struct("<4sIQIB")
_VOKEN_RECORD_HEAD = struct.Struct("<QI")

SENTINEL_VOKEN = -1


class StorageError(Exception):
    pass


class BadMagicError(StorageError):
    pass


class UnsupportedVersionError(StorageError):
    pass


class TruncatedFileError(StorageError):
    pass


class SizeMismatchError(StorageError):
    pass


@dataclass(frozen=True)
class VokenCorpusRecord:
    sentence_id: int
    voken_ids: tuple[int, ...]


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"truncated file while reading {what}: "
                                 f"wanted {n} bytes, got {len(data)}")
    return data


# ---------------------------------------------------------------------------
# Feature files


def write_features(path: str | Path, matrix: FeatureMatrix) -> None:
    path = Path(path)
    header = _FEATURE_HEADER.pack(
        FEATURE_MAGIC, FORMAT_VERSION, matrix.rows, matrix.dim, ROLE_CODES[matrix.role]
    )
    payload = np.ascontiguousarray(matrix.values, dtype="<f4").tobytes()
    _atomic_write(path, header + payload)


def _read_feature_header(fh, path: Path):
    header = _read_exact(fh, _FEATURE_HEADER.size, "feature header")
    magic, version, rows, dim, role_code = _FEATURE_HEADER.unpack(header)
    if magic != FEATURE_MAGIC:
        raise BadMagicError(f"{path}: expected magic {FEATURE_MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported feature file version {version}")
    if role_code not in CODE_ROLES:
        raise StorageError(f"{path}: unknown feature role code {role_code}")
    return rows, dim, CODE_ROLES[role_code]


def read_features(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    with open(path, "rb") as fh:
        rows, dim, role = _read_feature_header(fh, path)
        expected = rows * dim * 4
        payload = fh.read(expected)
        if len(payload) < expected:
            raise TruncatedFileError(
                f"{path}: payload holds {len(payload)} bytes, header declares {expected}"
            )
        if fh.read(1):
            raise SizeMismatchError(
                f"{path}: trailing bytes after the declared {rows}x{dim} payload"
            )
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    return FeatureMatrix(values=values.copy(), role=role)


def iter_feature_rows(
    path: str | Path, block_rows: int = 4096
) -> Iterator[np.ndarray]:
    """Stream a feature file as [<=block_rows x dim] float32 blocks.

    Lets corpora larger than memory flow through the pipeline; the file
    length is still validated against the header.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        rows, dim, _role = _read_feature_header(fh, path)
        row_bytes = dim * 4
        remaining = rows
        while remaining > 0:
            take = min(block_rows, remaining)
            data = fh.read(take * row_bytes)
            if len(data) < take * row_bytes:
                raise TruncatedFileError(
                    f"{path}: payload ended {remaining} rows before the declared {rows}"
                )
            yield np.frombuffer(data, dtype="<f4").reshape(take, dim)
            remaining -= take
        if fh.read(1):
            raise SizeMismatchError(f"{path}: trailing bytes after the declared payload")


def read_feature_meta(path: str | Path) -> tuple[int, int, str]:
    """(rows, dim, role) from the header without touching the payload."""
    path = Path(path)
    with open(path, "rb") as fh:
        return _read_feature_header(fh, path)


# ---------------------------------------------------------------------------
# Voken corpus files


def write_vokens(
    path: str | Path,
    records: Iterable[VokenCorpusRecord],
    vocab_size: int,
    strategy: str = "vokenize",
) -> None:
    path = Path(path)
    records = list(records)
    strategy_bytes = strategy.encode("utf-8")
    parts = [
        VOKEN_MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", vocab_size),
        struct.pack("<I", len(strategy_bytes)),
        strategy_bytes,
        struct.pack("<Q", len(records)),
    ]
    for rec in records:
        for vid in rec.voken_ids:
            if vid >= vocab_size or vid < SENTINEL_VOKEN:
                raise StorageError(
                    f"sentence {rec.sentence_id}: voken id {vid} outside "
                    f"[-1, {vocab_size})"
                )
        parts.append(_VOKEN_RECORD_HEAD.pack(rec.sentence_id, len(rec.voken_ids)))
        parts.append(np.asarray(rec.voken_ids, dtype="<i4").tobytes())
    _atomic_write(path, b"".join(parts))


def _read_voken_header(fh, path: Path) -> tuple[int, str, int]:
    magic = _read_exact(fh, 4, "voken magic")
    if magic != VOKEN_MAGIC:
        raise BadMagicError(f"{path}: expected magic {VOKEN_MAGIC!r}, found {magic!r}")
    (version,) = struct.unpack("<I", _read_exact(fh, 4, "voken version"))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported voken file version {version}")
    (vocab_size,) = struct.unpack("<I", _read_exact(fh, 4, "vocab size"))
    (strategy_len,) = struct.unpack("<I", _read_exact(fh, 4, "strategy length"))
    strategy = _read_exact(fh, strategy_len, "strategy name").decode("utf-8")
    (n_records,) = struct.unpack("<Q", _read_exact(fh, 8, "record count"))
    return vocab_size, strategy, n_records


def iter_vokens(path: str | Path) -> Iterator[VokenCorpusRecord]:
    """Stream records without materializing the whole file."""
    path = Path(path)
    with open(path, "rb") as fh:
        vocab_size, _strategy, n_records = _read_voken_header(fh, path)
        for _ in range(n_records):
            head = _read_exact(fh, _VOKEN_RECORD_HEAD.size, "voken record header")
            sentence_id, n_tokens = _VOKEN_RECORD_HEAD.unpack(head)
            ids = np.frombuffer(
                _read_exact(fh, n_tokens * 4, "voken ids"), dtype="<i4"
            )
            if ids.size and int(ids.max()) >= vocab_size:
                raise StorageError(
                    f"{path}: sentence {sentence_id} has voken id {int(ids.max())} "
                    f">= declared vocab size {vocab_size}"
                )
            yield VokenCorpusRecord(sentence_id=sentence_id, voken_ids=tuple(int(v) for v in ids))
        if fh.read(1):
            raise SizeMismatchError(f"{path}: trailing bytes after {n_records} records")


def read_vokens(path: str | Path) -> tuple[list[VokenCorpusRecord], int, str]:
    path = Path(path)
    with open(path, "rb") as fh:
        vocab_size, strategy, _ = _read_voken_header(fh, path)
    return list(iter_vokens(path)), vocab_size, strategy


# ---------------------------------------------------------------------------
# Matcher checkpoints

_MODE_CODES = {TOKEN_LEVEL: 0, SENTENCE_LEVEL: 1}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}


def _pack_mlp(params: MlpParams) -> bytes:
    head = struct.pack("<III", params.dim_in, params.hidden_dim, params.out_dim)
    body = b"".join(
        np.ascontiguousarray(t, dtype="<f8").tobytes()
        for t in (params.w1, params.b1, params.w2, params.b2)
    )
    return head + body


def _unpack_mlp(fh, path: Path) -> MlpParams:
    dim_in, hidden, out = struct.unpack("<III", _read_exact(fh, 12, "MLP dims"))

    def tensor(shape):
        n = int(np.prod(shape))
        data = _read_exact(fh, n * 8, "MLP tensor")
        return np.frombuffer(data, dtype="<f8").reshape(shape).copy()

    return MlpParams(
        w1=tensor((dim_in, hidden)),
        b1=tensor((hidden,)),
        w2=tensor((hidden, out)),
        b2=tensor((out,)),
    )


def write_checkpoint(path: str | Path, model: MatcherModel) -> None:
    path = Path(path)
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<B", _MODE_CODES[model.mode]),
        struct.pack("<d", model.margin),
        _pack_mlp(model.w_mlp),
        _pack_mlp(model.x_mlp),
    ]
    _atomic_write(path, b"".join(parts))


def read_checkpoint(path: str | Path) -> MatcherModel:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "checkpoint magic")
        if magic != CHECKPOINT_MAGIC:
            raise BadMagicError(f"{path}: expected magic {CHECKPOINT_MAGIC!r}, found {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "checkpoint version"))
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"{path}: unsupported checkpoint version {version}")
        (mode_code,) = struct.unpack("<B", _read_exact(fh, 1, "mode"))
        if mode_code not in _CODE_MODES:
            raise StorageError(f"{path}: unknown matcher mode code {mode_code}")
        (margin,) = struct.unpack("<d", _read_exact(fh, 8, "margin"))
        w_mlp = _unpack_mlp(fh, path)
        x_mlp = _unpack_mlp(fh, path)
        if fh.read(1):
            raise SizeMismatchError(f"{path}: trailing bytes after checkpoint payload")
    return MatcherModel(w_mlp=w_mlp, x_mlp=x_mlp, margin=margin, mode=_CODE_MODES[mode_code])


# ---------------------------------------------------------------------------
# Text sidecars


def write_manifest(path: str | Path, entries: Sequence[tuple[str, str]]) -> None:
    """Entries are (image_id, uri); the line index is the voken id."""
    lines = [f"{i}\t{image_id}\t{uri}\n" for i, (image_id, uri) in enumerate(entries)]
    _atomic_write(Path(path), "".join(lines).encode("utf-8"))


def read_manifest(path: str | Path) -> list[tuple[str, str]]:
    path = Path(path)
    entries: list[tuple[str, str]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise StorageError(f"{path}:{lineno + 1}: manifest line needs 3 tab-separated fields")
        voken_id, image_id, uri = parts
        if int(voken_id) != len(entries):
            raise StorageError(
                f"{path}:{lineno + 1}: voken ids must be dense from 0, got {voken_id}"
            )
        entries.append((image_id, uri))
    return entries


def write_caption_pairs(path: str | Path, pairs: Sequence[CaptionPair]) -> None:
    lines = [f"{p.sentence_id}\t{p.image_id}\n" for p in pairs]
    _atomic_write(Path(path), "".join(lines).encode("utf-8"))


def read_caption_pairs(path: str | Path) -> list[CaptionPair]:
    path = Path(path)
    pairs: list[CaptionPair] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise StorageError(f"{path}:{lineno + 1}: caption pair line needs 2 fields")
        pairs.append(CaptionPair(sentence_id=int(parts[0]), image_id=parts[1]))
    return pairs

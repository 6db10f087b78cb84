"""Dense feature tables shared by the matcher, the index, and storage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROLE_TOKEN_HIDDEN = "token_hidden"
ROLE_IMAGE_EMBEDDING = "image_embedding"
ROLE_SENTENCE_CLS = "sentence_cls"
ROLE_PROBABILITY = "probability"

ROLE_CODES = {
    ROLE_TOKEN_HIDDEN: 0,
    ROLE_IMAGE_EMBEDDING: 1,
    ROLE_SENTENCE_CLS: 2,
    ROLE_PROBABILITY: 3,
}
CODE_ROLES = {code: role for role, code in ROLE_CODES.items()}


@dataclass
class FeatureMatrix:
    """Row-major table of real-valued feature rows.

    Rows hold token hidden states, image embeddings, per-sentence
    embeddings, or probability vectors depending on ``role``. Stored as
    float32 (the on-disk width); training arithmetic upcasts to float64.
    """

    values: np.ndarray
    role: str = ROLE_TOKEN_HIDDEN

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {arr.shape}")
        if self.role not in ROLE_CODES:
            raise ValueError(f"unknown feature role {self.role!r}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature matrix contains non-finite entries")
        self.values = arr

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def as_float64(self) -> np.ndarray:
        return self.values.astype(np.float64)

"""Contextual token-image matcher.

Two small MLPs (one per modality) project frozen backbone features to a
shared 64-dim space; projections are L2-normalized so the relevance
score is a unit-vector inner product in [-1, 1]. Training ranks each
token's paired image above a sampled negative by a hinge margin.
All arithmetic is float64; gradients are analytic (hand-derived) so
they can be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .corpus import CaptionPair

HIDDEN_DIM = 256
OUT_DIM = 64

TOKEN_LEVEL = "token_level"
SENTENCE_LEVEL = "sentence_level"


class MatcherError(ValueError):
    pass


class DegenerateProjectionError(MatcherError):
    """The MLP output collapsed to the zero vector and cannot be normalized."""


class TrainingError(MatcherError):
    pass


@dataclass
class MlpParams:
    """Weights of one two-layer ReLU MLP: dim_in -> hidden -> out."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise MatcherError("weight matrices must be 2-D")
        hidden = self.w1.shape[1]
        if self.b1.shape != (hidden,) or self.w2.shape[0] != hidden:
            raise MatcherError("hidden dimensions of w1/b1/w2 disagree")
        if self.b2.shape != (self.w2.shape[1],):
            raise MatcherError("output dimensions of w2/b2 disagree")
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise MatcherError("MLP tensors must be finite")

    @property
    def dim_in(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


@dataclass
class MatcherModel:
    w_mlp: MlpParams
    x_mlp: MlpParams
    margin: float = 0.5
    mode: str = TOKEN_LEVEL

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise MatcherError(f"margin must be positive, got {self.margin}")
        if self.mode not in (TOKEN_LEVEL, SENTENCE_LEVEL):
            raise MatcherError(f"unknown matcher mode {self.mode!r}")
        if self.w_mlp.out_dim != self.x_mlp.out_dim:
            raise MatcherError("token and image projections must share the output dim")

    def copy(self) -> "MatcherModel":
        return replace(self, w_mlp=self.w_mlp.copy(), x_mlp=self.x_mlp.copy())


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.05
    seed: int = 0
    margin: float = 0.5

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size <= 0:
            raise MatcherError("epochs must be >= 0 and batch_size positive")
        if self.margin <= 0:
            raise MatcherError("margin must be positive")


def init_mlp(dim_in: int, rng: np.random.Generator,
             hidden_dim: int = HIDDEN_DIM, out_dim: int = OUT_DIM) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    s1 = 1.0 / np.sqrt(dim_in)
    s2 = 1.0 / np.sqrt(hidden_dim)
    return MlpParams(
        w1=rng.uniform(-s1, s1, size=(dim_in, hidden_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.uniform(-s2, s2, size=(hidden_dim, out_dim)),
        b2=np.zeros(out_dim),
    )


def new_model(token_dim: int, image_dim: int, margin: float = 0.5,
              mode: str = TOKEN_LEVEL, seed: int = 0,
              hidden_dim: int = HIDDEN_DIM, out_dim: int = OUT_DIM) -> MatcherModel:
    rng = np.random.default_rng(seed)
    return MatcherModel(
        w_mlp=init_mlp(token_dim, rng, hidden_dim, out_dim),
        x_mlp=init_mlp(image_dim, rng, hidden_dim, out_dim),
        margin=margin,
        mode=mode,
    )


def _forward(params: MlpParams, x: np.ndarray):
    """Project rows of x to unit vectors; returns (f, cache) for backprop."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != params.dim_in:
        raise MatcherError(f"feature dim {x.shape[1]} != MLP input dim {params.dim_in}")
    z1 = x @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0)
    u = a1 @ params.w2 + params.b2
    norms = np.linalg.norm(u, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateProjectionError(
            "MLP output is the zero vector for at least one row; cannot normalize"
        )
    f = u / norms[:, None]
    return f, (x, z1, a1, norms, f)


def _backward(params: MlpParams, cache, df: np.ndarray) -> MlpParams:
    """Gradients of a scalar loss given its gradient w.r.t. the unit output."""
    x, z1, a1, norms, f = cache
    # Through normalization: du = (df - f (f . df)) / ||u||.
    row_dot = np.sum(f * df, axis=1, keepdims=True)
    du = (df - f * row_dot) / norms[:, None]
    dw2 = a1.T @ du
    db2 = du.sum(axis=0)
    da1 = du @ params.w2.T
    dz1 = da1 * (z1 > 0.0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return MlpParams(w1=dw1, b1=db1, w2=dw2, b2=db2)


def project_tokens(model: MatcherModel, feats: np.ndarray) -> np.ndarray:
    """Unit-norm 64-dim projections for a [n x dim] block of token features."""
    f, _ = _forward(model.w_mlp, np.atleast_2d(np.asarray(feats, dtype=np.float64)))
    return f


def project_images(model: MatcherModel, feats: np.ndarray) -> np.ndarray:
    f, _ = _forward(model.x_mlp, np.atleast_2d(np.asarray(feats, dtype=np.float64)))
    return f


def project_token(model: MatcherModel, h: np.ndarray) -> np.ndarray:
    return project_tokens(model, h)[0]


def project_image(model: MatcherModel, e: np.ndarray) -> np.ndarray:
    return project_images(model, e)[0]


def relevance(model: MatcherModel, h: np.ndarray, e: np.ndarray) -> float:
    """Inner product of the two unit projections; always in [-1, 1]."""
    return float(project_token(model, h) @ project_image(model, e))


def sentence_relevance(model: MatcherModel, cls_feature: np.ndarray, e: np.ndarray) -> float:
    """Sentence-image score: the token-side MLP applied to the sentence embedding."""
    if model.mode != SENTENCE_LEVEL:
        raise MatcherError(f"sentence_relevance requires a {SENTENCE_LEVEL!r} model")
    return float(project_token(model, cls_feature) @ project_image(model, e))


Triple = tuple[np.ndarray, np.ndarray, np.ndarray]


def _stack_triples(triples: Sequence[Triple]):
    if len(triples) == 0:
        raise MatcherError("hinge loss needs at least one (h, e_pos, e_neg) triple")
    h = np.stack([np.asarray(t[0], dtype=np.float64) for t in triples])
    e_pos = np.stack([np.asarray(t[1], dtype=np.float64) for t in triples])
    e_neg = np.stack([np.asarray(t[2], dtype=np.float64) for t in triples])
    for i in range(len(triples)):
        if np.array_equal(e_pos[i], e_neg[i]):
            raise MatcherError(f"triple {i}: negative image equals the positive image")
    return h, e_pos, e_neg


def hinge_loss(model: MatcherModel, triples: Sequence[Triple]) -> float:
    """Sum over triples of max(0, margin - pos_score + neg_score)."""
    h, e_pos, e_neg = _stack_triples(triples)
    n = h.shape[0]
    f, _ = _forward(model.w_mlp, h)
    g, _ = _forward(model.x_mlp, np.vstack([e_pos, e_neg]))
    pos = np.sum(f * g[:n], axis=1)
    neg = np.sum(f * g[n:], axis=1)
    slack = model.margin - pos + neg
    active = slack > 0.0
    return float(slack[active].sum()) if np.any(active) else 0.0


def hinge_loss_and_grads(
    model: MatcherModel, triples: Sequence[Triple]
) -> tuple[float, MlpParams, MlpParams]:
    """Hinge loss plus analytic gradients for both MLPs.

    The subgradient at the hinge kink (score difference exactly equal to
    the margin) is taken as 0.
    """
    h, e_pos, e_neg = _stack_triples(triples)
    n = h.shape[0]
    f, cache_w = _forward(model.w_mlp, h)
    g, cache_x = _forward(model.x_mlp, np.vstack([e_pos, e_neg]))
    g_pos, g_neg = g[:n], g[n:]
    pos = np.sum(f * g_pos, axis=1)
    neg = np.sum(f * g_neg, axis=1)
    slack = model.margin - pos + neg
    active = slack > 0.0
    loss = float(slack[active].sum()) if np.any(active) else 0.0

    act = active[:, None]
    df = np.where(act, g_neg - g_pos, 0.0)
    dg = np.vstack([np.where(act, -f, 0.0), np.where(act, f, 0.0)])
    grads_w = _backward(model.w_mlp, cache_w, df)
    grads_x = _backward(model.x_mlp, cache_x, dg)
    return loss, grads_w, grads_x


def _sgd_step(params: MlpParams, grads: MlpParams, scale: float) -> None:
    params.w1 -= scale * grads.w1
    params.b1 -= scale * grads.b1
    params.w2 -= scale * grads.w2
    params.b2 -= scale * grads.b2


def train(
    model: MatcherModel,
    caption_pairs: Sequence[CaptionPair],
    token_feats: Mapping[int, np.ndarray],
    image_feats: Mapping[str, np.ndarray],
    config: TrainConfig,
    return_history: bool = False,
):
    """Mini-batch SGD on the hinge loss; only the two MLPs change.

    Every feature row of ``token_feats[pair.sentence_id]`` is paired with
    the pair's image; the negative is drawn uniformly from the other
    images in ``caption_pairs``, resampled per pair per step. For a
    sentence-level model pass one row (the sentence embedding) per
    sentence. Bitwise deterministic for a fixed seed.
    """
    if not caption_pairs:
        raise TrainingError("no caption pairs to train on")
    image_ids = sorted({p.image_id for p in caption_pairs})
    if len(image_ids) < 2:
        raise TrainingError("need at least two distinct images to sample negatives")
    for pair in caption_pairs:
        if pair.sentence_id not in token_feats:
            raise TrainingError(f"missing token features for sentence {pair.sentence_id}")
        if pair.image_id not in image_feats:
            raise TrainingError(f"missing image features for image {pair.image_id!r}")

    model = replace(model.copy(), margin=config.margin)
    rng = np.random.default_rng(config.seed)
    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(caption_pairs))
        epoch_loss = 0.0
        epoch_triples = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            triples: list[Triple] = []
            for k in batch:
                pair = caption_pairs[int(k)]
                neg_id = pair.image_id
                while neg_id == pair.image_id:
                    neg_id = image_ids[int(rng.integers(len(image_ids)))]
                pos_feat = image_feats[pair.image_id]
                neg_feat = image_feats[neg_id]
                for row in np.atleast_2d(token_feats[pair.sentence_id]):
                    triples.append((row, pos_feat, neg_feat))
            try:
                loss, grads_w, grads_x = hinge_loss_and_grads(model, triples)
            except MatcherError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}") from exc
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}")
            scale = config.learning_rate / len(batch)
            _sgd_step(model.w_mlp, grads_w, scale)
            _sgd_step(model.x_mlp, grads_x, scale)
            epoch_loss += loss
            epoch_triples += len(triples)
        history.append(epoch_loss / max(epoch_triples, 1))
    if len(history) >= 2 and history[-1] > history[0]:
        raise TrainingError(
            f"training diverged: final epoch loss {history[-1]:.6f} exceeds "
            f"first epoch loss {history[0]:.6f}; lower the learning rate"
        )
    if return_history:
        return model, history
    return model

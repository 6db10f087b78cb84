"""Adapters over full pretrained backbones.

Same protocol as the checkpoint-backed encoders, so the export
operations treat them interchangeably. Everything here loads published
weights and runs in inference mode only; no gradient state is ever
created or serialized. torch (and transformers / torchvision) are
imported lazily so the rest of the package works without them.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .encoders import N_FEATURE_LAYERS

_IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class BertTextEncoder:
    """Uncased transformer encoder; token features are the last four
    hidden layers concatenated, the sentence row is the first-token
    output. The wrapped tokenizer's pieces are compared against the
    corpus loader during export, so any divergence (accent stripping,
    unknown-character collapsing) aborts instead of misaligning rows.
    """

    def __init__(self, name_or_path: str) -> None:
        import torch
        from transformers import AutoModel, AutoTokenizer

        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        self._model = AutoModel.from_pretrained(name_or_path, output_hidden_states=True)
        self._model.eval()
        for param in self._model.parameters():
            param.requires_grad_(False)

    @property
    def hidden_size(self) -> int:
        return int(self._model.config.hidden_size)

    @property
    def feature_dim(self) -> int:
        return N_FEATURE_LAYERS * self.hidden_size

    @property
    def max_tokens(self) -> int:
        # Two position slots go to the wrapping special tokens.
        return int(self._model.config.max_position_embeddings) - 2

    def vocabulary(self) -> tuple[str, ...]:
        vocab = self._tokenizer.get_vocab()
        return tuple(piece for piece, _id in sorted(vocab.items(), key=lambda kv: kv[1]))

    def tokenize(self, raw: str) -> list[str]:
        return self._tokenizer.tokenize(raw)

    def encode(self, raw: str) -> tuple[np.ndarray, np.ndarray]:
        torch = self._torch
        inputs = self._tokenizer(raw, return_tensors="pt")
        with torch.no_grad():
            outputs = self._model(**inputs)
        stacked = torch.cat(outputs.hidden_states[-N_FEATURE_LAYERS:], dim=-1)[0]
        features = stacked.cpu().numpy().astype(np.float32)
        # Strip the leading and trailing special-token rows.
        return features[1:-1], features[0]


def bert_text_encoder(name_or_path: str) -> BertTextEncoder:
    return BertTextEncoder(name_or_path)


class ResNextImageEncoder:
    """Grouped-convolution residual backbone; the embedding is the mean
    pool over the final feature maps, via the network's global average
    pooling. Preprocessing is the backbone's published evaluation
    transform: shorter side to 256, center crop 224, per-channel
    normalization.
    """

    input_size = 224

    def __init__(self, weights_path: str | Path | None = None) -> None:
        import torch
        import torchvision

        self._torch = torch
        if weights_path is None:
            model = torchvision.models.resnext101_32x8d(
                weights=torchvision.models.ResNeXt101_32X8D_Weights.IMAGENET1K_V1
            )
        else:
            model = torchvision.models.resnext101_32x8d(weights=None)
            state = torch.load(weights_path, map_location="cpu")
            model.load_state_dict(state)
        self._width = int(model.fc.in_features)
        model.fc = torch.nn.Identity()
        model.eval()
        for param in model.parameters():
            param.requires_grad_(False)
        self._model = model

    @property
    def width(self) -> int:
        return self._width

    def prepare(self, path: str | Path) -> np.ndarray:
        size = self.input_size
        with Image.open(path) as im:
            im = im.convert("RGB")
            w, h = im.size
            scale = 256 / min(w, h)
            im = im.resize((round(w * scale), round(h * scale)), Image.BILINEAR)
            left = (im.width - size) // 2
            top = (im.height - size) // 2
            im = im.crop((left, top, left + size, top + size))
            return np.asarray(im, dtype=np.float32) / 255.0

    def embed_pixels(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        normalized = (np.asarray(batch, dtype=np.float32) - _IMAGENET_MEAN) / _IMAGENET_STD
        tensor = torch.from_numpy(normalized).permute(0, 3, 1, 2).contiguous()
        with torch.no_grad():
            pooled = self._model(tensor)
        return pooled.cpu().numpy().astype(np.float32)


def resnext_image_encoder(weights_path: str | Path | None = None) -> ResNextImageEncoder:
    return ResNextImageEncoder(weights_path)

"""Encoders turning images and prompt texts into fixed-width vectors.

The visual side is a ViT-B/16 producing one 197 x 768 token matrix per
image with the class token at row 0. Without a checkpoint the model runs
with seeded random weights, which keeps exports deterministic and the
pipeline exercisable offline; pass a state-dict file for real features.

The text side is a seeded hashed bag-of-words featurizer: deterministic,
dependency-free, and shaped like the real thing (one L2-normalized vector
of width 768 per text). Any object with `encode(text) -> vector` and a
`d_t` attribute can replace it.
"""
from __future__ import annotations

import hashlib
import re

import numpy as np
import torch
from PIL import Image
from torchvision.models import vit_b_16
from torchvision.transforms import functional as tvf

VISUAL_N_S = 197
VISUAL_D_V = 768
TEXT_D_T = 768
IMAGE_SIZE = 224

_WORD = re.compile(r"[a-z0-9]+")


class AdapterError(RuntimeError):
    """Encoder construction or input handling failed."""


class VisualEncoder:
    """Token-matrix extractor around a ViT-B/16 backbone."""

    n_s = VISUAL_N_S
    d_v = VISUAL_D_V

    def __init__(self, checkpoint: str | None = None, seed: int = 0):
        torch.manual_seed(seed)
        self.model = vit_b_16(weights=None)
        self.weights_name = f"seeded-{seed}"
        if checkpoint is not None:
            try:
                state = torch.load(checkpoint, map_location="cpu", weights_only=True)
                self.model.load_state_dict(state)
            except (OSError, RuntimeError, ValueError) as exc:
                raise AdapterError(f"cannot load encoder checkpoint {checkpoint}: {exc}") from exc
            self.weights_name = checkpoint
        self.model.eval()

    def encode_image(self, image: Image.Image) -> np.ndarray:
        """Full token matrix (n_s, d_v) for one image, class token at row 0."""
        rgb = image.convert("RGB")
        t = tvf.resize(tvf.to_tensor(rgb), [IMAGE_SIZE, IMAGE_SIZE], antialias=True)
        t = tvf.normalize(t, mean=[0.5, 0.5, 0.5], std=[0.5, 0.5, 0.5]).unsqueeze(0)
        with torch.no_grad():
            patches = self.model._process_input(t)
            cls = self.model.class_token.expand(patches.shape[0], -1, -1)
            tokens = self.model.encoder(torch.cat([cls, patches], dim=1))
        return tokens[0].numpy().astype(np.float64)

    def encode_path(self, path: str) -> np.ndarray:
        try:
            with Image.open(path) as img:
                return self.encode_image(img)
        except (OSError, ValueError) as exc:
            raise AdapterError(f"cannot read image {path}: {exc}") from exc


class HashedTextEncoder:
    """Deterministic bag-of-words featurizer with hashed dimensions."""

    def __init__(self, d_t: int = TEXT_D_T):
        if d_t < 2:
            raise ValueError(f"d_t must be >= 2, got {d_t}")
        self.d_t = d_t

    def encode(self, text: str) -> np.ndarray:
        words = _WORD.findall(text.lower())
        if not words:
            raise AdapterError(f"cannot encode empty text {text!r}")
        vec = np.zeros(self.d_t)
        for word in words:
            digest = hashlib.sha256(word.encode()).digest()
            index = int.from_bytes(digest[:8], "little") % self.d_t
            sign = 1.0 if digest[8] & 1 else -1.0
            vec[index] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # opposite-sign collisions cancelled everything; fall back to a
            # single deterministic slot so the vector stays usable
            vec[len(words) % self.d_t] = 1.0
            norm = 1.0
        return vec / norm

    def encode_pooled(self, sentences: list[str]) -> np.ndarray:
        """Mean of the per-sentence vectors."""
        if not sentences:
            raise AdapterError("cannot pool an empty sentence list")
        return np.mean([self.encode(s) for s in sentences], axis=0)


class SharedSpaceProjector:
    """Fixed seeded linear map from visual width to text width.

    Stands in for the image half of a shared vision-language space: the
    class token is projected and L2-normalized into the gating embedding.
    """

    def __init__(self, d_v: int = VISUAL_D_V, d_t: int = TEXT_D_T, seed: int = 0):
        rng = np.random.Generator(np.random.Philox(key=seed))
        self.matrix = rng.normal(size=(d_v, d_t)) / np.sqrt(d_v)

    def project(self, vec: np.ndarray) -> np.ndarray:
        out = vec @ self.matrix
        norm = np.linalg.norm(out)
        if norm == 0.0:
            raise AdapterError("projected gating embedding has zero norm")
        return out / norm

"""Fixtures: tiny seeded images, an image list CSV, and a fake visual encoder."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from embed_adapter.encoders import AdapterError
from embed_adapter.templates import sample_prompts_path


def write_images(root, count=10, size=32, seed=0):
    """`count` seeded RGB images, grades cycling 0..4; returns (csv_path, rows)."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    rows = []
    for k in range(count):
        pixels = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        path = root / f"img-{k:02d}.png"
        Image.fromarray(pixels).save(path)
        rows.append((str(path), k % 5))
    csv_path = root / "images.csv"
    csv_path.write_text(
        "path,grade\n" + "".join(f"{p},{g}\n" for p, g in rows)
    )
    return csv_path, rows


class FakeVisualEncoder:
    """Deterministic stand-in with small token matrices for fast plumbing tests."""

    n_s = 5
    d_v = 7
    weights_name = "fake"

    def encode_path(self, path: str) -> np.ndarray:
        if not Path(path).exists():
            raise AdapterError(f"cannot read image {path}: no such file")
        key = sum(ord(ch) for ch in str(path))
        rng = np.random.Generator(np.random.Philox(key=key))
        return rng.normal(size=(self.n_s, self.d_v))


@pytest.fixture
def images(tmp_path):
    return write_images(tmp_path)


@pytest.fixture
def prompts_file():
    path = sample_prompts_path()
    assert path.exists()
    return path

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from vislink.encoders import EncoderSpec, make_encoder
from vislink.kb import Entity, KnowledgeBase


def write_png(path: Path, pixels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels.astype(np.uint8)).save(path)


def random_image(rng: np.random.Generator, w: int = 32, h: int = 24) -> np.ndarray:
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def stub_encoder():
    return make_encoder(EncoderSpec(kind="stub", output_dim=64, seed=9))


@pytest.fixture
def tiny_kb(tmp_path, rng) -> KnowledgeBase:
    entities = []
    for i in range(3):
        img = tmp_path / f"e{i}.png"
        write_png(img, random_image(rng, 16, 8))
        entities.append(
            Entity(f"Q{i}", f"Name {i}", f"description of entity {i}", str(img))
        )
    return KnowledgeBase(entities)

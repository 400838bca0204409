"""Embedding interfaces for mentions and entities, plus the stub encoder.

Real pretrained backbones are plugged in behind the same interface via
`register_plugin`; nothing here downloads weights. The stub encoder used for
tests and synthetic runs is a seeded pseudo-random linear projection of the
raw input bytes (crop pixel bytes for images, UTF-8 bytes for text), so it is
fully deterministic and encoder-level invariants can be exercised offline.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image

from .container import EmbeddingMatrix
from .errors import ConfigError, DataContractError, MissingModalityError
from .kb import Entity, KnowledgeBase, MentionDataset, VisualMention

MODE_CROP = "crop"
MODE_WHOLE = "whole-image"
TEXT_MODES = ("name", "name_desc")


@dataclass(frozen=True)
class EncoderSpec:
    """Configuration for one encoder instance.

    `image_size` and `text_max_tokens` mirror common pretrained-model input
    contracts (224 px, 77 tokens); the stub ignores `image_size` and
    truncates text at `text_max_tokens` whitespace-separated words.
    `channel` selects which pixel plane the stub reads, so two stub encoders
    can attend to independent features of the same image.
    """

    kind: str = "stub"
    output_dim: int = 512
    image_size: int = 224
    text_max_tokens: int = 77
    seed: int = 0
    channel: int = 0

    def __post_init__(self) -> None:
        if self.output_dim <= 0:
            raise ConfigError("output_dim must be positive")
        if self.image_size <= 0:
            raise ConfigError("image_size must be positive")
        if self.text_max_tokens <= 0:
            raise ConfigError("text_max_tokens must be positive")
        if not 0 <= self.channel <= 2:
            raise ConfigError("channel must be 0, 1, or 2")


def truncate_words(text: str, max_words: int) -> str:
    words = text.split()
    return " ".join(words[:max_words])


def bytes_to_features(raw: bytes | np.ndarray, dim: int) -> np.ndarray:
    """Fold a byte string into a centered float64 feature vector of length dim.

    Bytes are mapped to [-1, 1], cyclically padded to a multiple of dim,
    averaged per slot, and mean-centered. Centering removes the shared
    offset of narrow byte alphabets (e.g. printable ASCII) so that distinct
    inputs spread over the sphere instead of clustering.
    """
    arr = np.frombuffer(raw, dtype=np.uint8) if isinstance(raw, bytes) else np.asarray(raw)
    arr = arr.reshape(-1).astype(np.float64)
    if arr.size == 0:
        raise DataContractError("cannot featurize empty input bytes")
    vals = arr / 127.5 - 1.0
    reps = -(-vals.size // dim)  # ceil division
    if vals.size != reps * dim:
        vals = np.resize(vals, reps * dim)  # cyclic tiling
    feats = vals.reshape(reps, dim).mean(axis=0)
    return feats - feats.mean()


def _orthogonal_projection(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (q * np.sign(np.diag(r))).astype(np.float64)


class Encoder:
    """Common encoder surface; subclasses implement one or both modalities."""

    spec: EncoderSpec

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        raise MissingModalityError(f"{self.spec.kind} encoder has no image side")

    def embed_text(self, text: str) -> np.ndarray:
        raise MissingModalityError(f"{self.spec.kind} encoder has no text side")


class StubEncoder(Encoder):
    """Deterministic byte-projection encoder for tests and synthetic runs.

    Images: the configured channel of the (cropped) pixel array is read
    row-major as bytes. Text: the UTF-8 bytes of the word-truncated string.
    Either way the bytes are folded to `output_dim` features and passed
    through a seeded orthogonal projection, so the embedding is a rigid
    rotation of the byte features and identical inputs give bit-identical
    vectors across runs.
    """

    def __init__(self, spec: EncoderSpec):
        self.spec = spec
        self._projection = _orthogonal_projection(spec.output_dim, spec.seed)

    def _project(self, feats: np.ndarray) -> np.ndarray:
        return (feats @ self._projection).astype(np.float32)

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        if pixels.ndim == 2:
            plane = pixels
        else:
            plane = pixels[:, :, min(self.spec.channel, pixels.shape[2] - 1)]
        feats = bytes_to_features(plane.astype(np.uint8).reshape(-1), self.spec.output_dim)
        return self._project(feats)

    def embed_text(self, text: str) -> np.ndarray:
        clipped = truncate_words(text, self.spec.text_max_tokens)
        feats = bytes_to_features(clipped.encode("utf-8"), self.spec.output_dim)
        return self._project(feats)


_PLUGINS: dict[str, Callable[[EncoderSpec], Encoder]] = {}


def register_plugin(plugin_id: str, factory: Callable[[EncoderSpec], Encoder]) -> None:
    _PLUGINS[plugin_id] = factory


def make_encoder(spec: EncoderSpec) -> Encoder:
    if spec.kind == "stub":
        return StubEncoder(spec)
    if spec.kind.startswith("plugin:"):
        plugin_id = spec.kind.split(":", 1)[1]
        if plugin_id not in _PLUGINS:
            raise ConfigError(f"unknown encoder plugin {plugin_id!r}")
        return _PLUGINS[plugin_id](spec)
    raise ConfigError(f"unknown encoder kind {spec.kind!r}")


def load_pixels(image_ref: str | Path) -> np.ndarray:
    path = Path(image_ref)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def crop_pixels(pixels: np.ndarray, bbox: tuple[int, int, int, int]) -> np.ndarray:
    x, y, w, h = bbox
    if x + w > pixels.shape[1] or y + h > pixels.shape[0]:
        raise DataContractError(f"bbox {bbox} outside image of shape {pixels.shape[:2]}")
    return pixels[y : y + h, x : x + w]


def _check_dim(vec: np.ndarray, spec: EncoderSpec) -> np.ndarray:
    if vec.shape != (spec.output_dim,):
        raise ConfigError(
            f"encoder produced shape {vec.shape}, spec requires ({spec.output_dim},)"
        )
    return vec


def encode_mention(mention: VisualMention, encoder: Encoder, mode: str = MODE_CROP) -> np.ndarray:
    """Raw mention embedding from the bbox crop or the whole image."""
    if mode not in (MODE_CROP, MODE_WHOLE):
        raise ConfigError(f"unknown mention mode {mode!r}")
    pixels = load_pixels(mention.image_ref)
    if mode == MODE_CROP:
        pixels = crop_pixels(pixels, mention.bbox)
    return _check_dim(encoder.embed_image(pixels), encoder.spec)


def entity_text(entity: Entity, text_mode: str) -> str:
    if text_mode not in TEXT_MODES:
        raise ConfigError(f"unknown text mode {text_mode!r}")
    if text_mode == "name_desc" and entity.description:
        return f"{entity.name}. {entity.description}"
    return entity.name


def encode_entity(
    entity: Entity,
    encoder: Encoder,
    modality: str,
    text_mode: str = "name",
) -> np.ndarray:
    """Raw entity embedding from its image or its textual description."""
    if modality == "visual":
        if entity.image_ref is None:
            raise MissingModalityError(f"entity {entity.entity_id} has no image")
        return _check_dim(encoder.embed_image(load_pixels(entity.image_ref)), encoder.spec)
    if modality == "textual":
        return _check_dim(encoder.embed_text(entity_text(entity, text_mode)), encoder.spec)
    raise ConfigError(f"unknown modality {modality!r}")


def embed_mentions(
    dataset: MentionDataset, encoder: Encoder, mode: str = MODE_CROP
) -> EmbeddingMatrix:
    """Encode every mention; rows are keyed by mention_id in dataset order."""
    rows = [encode_mention(m, encoder, mode) for m in dataset]
    keys = tuple(m.mention_id for m in dataset)
    data = (
        np.stack(rows).astype(np.float32)
        if rows
        else np.zeros((0, encoder.spec.output_dim), dtype=np.float32)
    )
    return EmbeddingMatrix(data, keys)


def embed_entities(
    kb: KnowledgeBase,
    encoder: Encoder,
    modality: str,
    text_mode: str = "name",
) -> tuple[EmbeddingMatrix, tuple[str, ...]]:
    """Encode every entity that carries the modality.

    Returns the matrix (rows sorted by entity_id, inherited from KB order)
    plus the ids of entities excluded for lacking the modality.
    """
    rows: list[np.ndarray] = []
    keys: list[str] = []
    excluded: list[str] = []
    for entity in kb:
        try:
            rows.append(encode_entity(entity, encoder, modality, text_mode))
        except MissingModalityError:
            excluded.append(entity.entity_id)
            continue
        keys.append(entity.entity_id)
    data = (
        np.stack(rows).astype(np.float32)
        if rows
        else np.zeros((0, encoder.spec.output_dim), dtype=np.float32)
    )
    return EmbeddingMatrix(data, tuple(keys)), tuple(excluded)

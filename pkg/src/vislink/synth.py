"""Synthetic KB + mention generator for desk-scale experiments.

Entity images and mention crops carry pixel payloads that round-trip
through the stub encoder's byte featurization, so the generator controls
the geometry of the resulting embedding space exactly:

  * separability s is the probability that a mention's payload points at
    its gold entity; s=1.0 gives zero-shot R@1 = 1.0 by construction and
    s=0.0 leaves only chance accuracy,
  * corrupted mentions point at a uniformly drawn confuser entity but keep
    a damped gold component (the gold stays high in the ranking, food for
    recall-then-rerank cascades),
  * every mention also carries a fixed rotation of its gold payload, a
    systematic distortion that zero-shot scoring cannot exploit but a
    trained adapter head can learn to invert.

Channel 0 of a crop holds the visual payload, channel 1 the cross-modal
payload, so the visual and textual sub-tasks see independent signals and
can be made complementary (disjoint corruption sets).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .encoders import bytes_to_features, entity_text, truncate_words
from .errors import ConfigError
from .kb import Entity, KnowledgeBase, MentionDataset, VisualMention, save_kb, save_mentions

PAYLOAD_ROWS = 8
TEXT_MAX_TOKENS = 77

SYS_CLEAN = 0.6
NOISE_CLEAN = 0.3
GOLD_CORRUPT = 0.85
SYS_CORRUPT = 0.7
NOISE_CORRUPT = 0.2
VISUAL_SCALE = 0.25  # entity payload sigma, keeps 4-sigma values inside [-1, 1]


@dataclass(frozen=True)
class SynthInfo:
    """Paired stub-encoder parameters for data made by generate_synthetic."""

    dim: int
    visual_seed: int
    cross_seed: int
    visual_channel: int
    cross_channel: int
    mode: str
    text_mode: str
    text_max_tokens: int
    separability_visual: float
    separability_textual: float

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "visual_seed": self.visual_seed,
            "cross_seed": self.cross_seed,
            "visual_channel": self.visual_channel,
            "cross_channel": self.cross_channel,
            "mode": self.mode,
            "text_mode": self.text_mode,
            "text_max_tokens": self.text_max_tokens,
            "separability_visual": self.separability_visual,
            "separability_textual": self.separability_textual,
        }


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.clip(np.round((values + 1.0) * 127.5), 0, 255).astype(np.uint8)


def _dequantize(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 127.5 - 1.0


def _rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _random_words(rng: np.random.Generator, count: int, length: int = 6) -> str:
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    return " ".join(
        "".join(rng.choice(letters, size=length)) for _ in range(count)
    )


def _assign_golds(
    rng: np.random.Generator, n_entities: int, n_mentions: int
) -> np.ndarray:
    """Cover every entity once when possible, then draw a long-tailed rest."""
    if n_mentions <= n_entities:
        return rng.permutation(n_entities)[:n_mentions]
    head = rng.permutation(n_entities)
    ranks = rng.permutation(n_entities)
    weights = 1.0 / (ranks + 1.0) ** 1.1
    weights /= weights.sum()
    tail = rng.choice(n_entities, size=n_mentions - n_entities, p=weights)
    golds = np.concatenate([head, tail])
    return golds[rng.permutation(n_mentions)]


def _mention_payload(
    rng: np.random.Generator,
    gold_payload: np.ndarray,
    confuser_payload: np.ndarray,
    rotation: np.ndarray,
    corrupt: bool,
    separability: float,
    noise_scale: float,
) -> np.ndarray:
    noise = rng.standard_normal(gold_payload.size) * noise_scale
    spun = rotation @ gold_payload
    if corrupt:
        return (
            GOLD_CORRUPT * separability * gold_payload
            + confuser_payload
            + SYS_CORRUPT * spun
            + NOISE_CORRUPT * noise
        )
    slack = 1.0 - separability
    return gold_payload + slack * (SYS_CLEAN * spun + NOISE_CLEAN * noise)


def _corruption_flags(
    rng: np.random.Generator,
    n_mentions: int,
    sep_v: float,
    sep_t: float,
    complementary: bool,
) -> tuple[np.ndarray, np.ndarray]:
    if not complementary:
        return (
            rng.random(n_mentions) >= sep_v,
            rng.random(n_mentions) >= sep_t,
        )
    n_v = int(round((1.0 - sep_v) * n_mentions))
    n_t = int(round((1.0 - sep_t) * n_mentions))
    if n_v + n_t > n_mentions:
        raise ConfigError("complementary corruption sets do not fit; raise separability")
    order = rng.permutation(n_mentions)
    corrupt_v = np.zeros(n_mentions, dtype=bool)
    corrupt_t = np.zeros(n_mentions, dtype=bool)
    corrupt_v[order[:n_v]] = True
    corrupt_t[order[n_v : n_v + n_t]] = True
    return corrupt_v, corrupt_t


def generate_synthetic(
    out_dir: str | Path,
    n_entities: int,
    n_images: int,
    dim: int = 64,
    seed: int = 0,
    separability: float = 1.0,
    separability_visual: float | None = None,
    separability_textual: float | None = None,
    complementary: bool = False,
    mentions_per_image: float = 1.0,
    with_images: bool = True,
) -> tuple[KnowledgeBase, MentionDataset, SynthInfo]:
    """Write a synthetic KB and mention manifest under out_dir.

    Deterministic for a fixed seed: two runs produce byte-identical files.
    Returns the loaded-equivalent in-memory objects plus the stub-encoder
    pairing info (also persisted as synth_config.json).
    """
    if n_entities < 2:
        raise ConfigError("need at least 2 entities")
    if dim % PAYLOAD_ROWS != 0 or dim < PAYLOAD_ROWS:
        raise ConfigError(f"dim must be a positive multiple of {PAYLOAD_ROWS}")
    sep_v = separability if separability_visual is None else separability_visual
    sep_t = separability if separability_textual is None else separability_textual
    for s in (sep_v, sep_t):
        if not 0.0 <= s <= 1.0:
            raise ConfigError("separability must be in [0, 1]")
    n_mentions = int(round(n_images * mentions_per_image)) if n_images else 0
    if n_mentions > 2 * n_images:
        raise ConfigError("mentions_per_image must be <= 2")
    if n_images and n_mentions < n_images:
        raise ConfigError("mentions_per_image must be >= 1")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    img_dir = out / "images"
    if with_images or n_images:
        img_dir.mkdir(exist_ok=True)

    rng = np.random.default_rng(seed)
    visual_seed = int(rng.integers(2**31 - 1))
    cross_seed = int(rng.integers(2**31 - 1))
    rot_v = _rotation(dim, rng)
    rot_t = _rotation(dim, rng)

    pw, ph = dim // PAYLOAD_ROWS, PAYLOAD_ROWS

    # entities: payload image (channel 0) + random-word description
    entities: list[Entity] = []
    visual_payloads = np.zeros((n_entities, dim))
    n_desc_words = max(12, dim // 6)
    for i in range(n_entities):
        entity_id = f"E{i:05d}"
        name = f"Person {i:04d}"
        description = _random_words(rng, n_desc_words)
        image_name = None
        if with_images:
            z = rng.standard_normal(dim) * VISUAL_SCALE
            pixels = np.full((ph, pw, 3), 128, dtype=np.uint8)
            pixels[:, :, 0] = _quantize(z).reshape(ph, pw)
            image_name = f"images/e_{entity_id}.png"
            Image.fromarray(pixels).save(out / image_name)
            visual_payloads[i] = _dequantize(pixels[:, :, 0].reshape(-1))
        else:
            rng.standard_normal(dim)  # keep the stream aligned either way
        entities.append(
            Entity(
                entity_id,
                name,
                description,
                os.path.abspath(out / image_name) if image_name else None,
            )
        )

    text_payloads = np.stack(
        [
            bytes_to_features(
                truncate_words(entity_text(e, "name_desc"), TEXT_MAX_TOKENS).encode("utf-8"),
                dim,
            )
            for e in entities
        ]
    )
    text_scale = float(np.mean(np.std(text_payloads, axis=1))) if n_entities else 0.0

    golds = _assign_golds(rng, n_entities, n_mentions)
    corrupt_v, corrupt_t = _corruption_flags(rng, n_mentions, sep_v, sep_t, complementary)
    confusers_v = rng.integers(0, n_entities, size=n_mentions)
    confusers_t = rng.integers(0, n_entities, size=n_mentions)

    # distribute one mention per image, extras become second bboxes
    extra_images = set()
    n_extra = n_mentions - n_images
    if n_extra > 0:
        extra_images = set(int(i) for i in rng.choice(n_images, size=n_extra, replace=False))

    canvas_w, canvas_h = 2 * pw + 12, ph + 8
    slots = ((4, 4), (pw + 8, 4))

    mentions: list[VisualMention] = []
    mention_idx = 0
    for img_i in range(n_images):
        pixels = rng.integers(0, 256, size=(canvas_h, canvas_w, 3), dtype=np.uint8).astype(
            np.uint8
        )
        image_name = f"images/m_{img_i:05d}.png"
        count = 2 if img_i in extra_images else 1
        for slot in range(count):
            g = int(golds[mention_idx])
            payload_v = _mention_payload(
                rng,
                visual_payloads[g],
                visual_payloads[int(confusers_v[mention_idx])],
                rot_v,
                bool(corrupt_v[mention_idx]),
                sep_v,
                VISUAL_SCALE,
            )
            payload_t = _mention_payload(
                rng,
                text_payloads[g],
                text_payloads[int(confusers_t[mention_idx])],
                rot_t,
                bool(corrupt_t[mention_idx]),
                sep_t,
                text_scale,
            )
            x, y = slots[slot]
            pixels[y : y + ph, x : x + pw, 0] = _quantize(payload_v).reshape(ph, pw)
            pixels[y : y + ph, x : x + pw, 1] = _quantize(payload_t).reshape(ph, pw)
            mentions.append(
                VisualMention(
                    mention_id=f"m{mention_idx:05d}",
                    image_ref=os.path.abspath(out / image_name),
                    bbox=(x, y, pw, ph),
                    gold_entity_id=entities[g].entity_id,
                )
            )
            mention_idx += 1
        Image.fromarray(pixels).save(out / image_name)

    kb = KnowledgeBase(entities)
    dataset = MentionDataset(tuple(mentions))
    info = SynthInfo(
        dim=dim,
        visual_seed=visual_seed,
        cross_seed=cross_seed,
        visual_channel=0,
        cross_channel=1,
        mode="crop",
        text_mode="name_desc",
        text_max_tokens=TEXT_MAX_TOKENS,
        separability_visual=sep_v,
        separability_textual=sep_t,
    )
    save_kb(kb, out / "kb.jsonl")
    save_mentions(dataset, out / "mentions.jsonl")
    (out / "synth_config.json").write_text(
        json.dumps(info.to_dict(), sort_keys=True) + "\n", encoding="utf-8"
    )
    return kb, dataset, info

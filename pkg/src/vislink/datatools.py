"""Dataset splitting and the automated construction filters.

The split is image-level (all mentions of an image stay together) and can
enforce that no gold entity appears twice in the test set. The construction
filter keeps image+caption records whose caption names at least one person,
whose image shows 1-3 detected faces, and whose image content is unseen;
detectors are injected behind small contracts so real models can replace
the stubs.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image

from .errors import ConfigError, DataContractError
from .kb import MentionDataset

REJECT_REASONS = ("no-person-caption", "face-count", "duplicate", "io-error")


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    test_unique_entities: bool = True

    def __post_init__(self) -> None:
        if any(r <= 0 for r in self.ratios):
            raise ConfigError("split ratios must be positive")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {sum(self.ratios)}")


def split(
    dataset: MentionDataset, spec: SplitSpec
) -> tuple[MentionDataset, MentionDataset, MentionDataset]:
    """Partition a labeled dataset into train/dev/test by image.

    Test images are chosen greedily from a seeded shuffle so that no two
    test mentions share a gold entity; the remainder is ratio-split between
    dev and train. Deterministic for a fixed seed.
    """
    groups = dataset.by_image()
    images = sorted(groups)
    n = len(images)
    if n < 3:
        raise DataContractError("need at least 3 images to split")
    for ms in groups.values():
        for m in ms:
            if m.gold_entity_id is None:
                raise DataContractError(f"mention {m.mention_id} is unlabeled")

    n_test = round(spec.ratios[2] * n)
    n_dev = round(spec.ratios[1] * n)
    rng = np.random.default_rng(spec.seed)
    order = [images[i] for i in rng.permutation(n)]

    test_images: list[str] = []
    rest: list[str] = []
    if spec.test_unique_entities:
        used: set[str] = set()
        for img in order:
            golds = [m.gold_entity_id for m in groups[img]]
            fresh = (
                len(test_images) < n_test
                and len(set(golds)) == len(golds)
                and not used.intersection(golds)
            )
            if fresh:
                test_images.append(img)
                used.update(golds)
            else:
                rest.append(img)
        if len(test_images) < n_test:
            raise DataContractError(
                f"test-set entity uniqueness unsatisfiable at size {n_test}; "
                f"maximum feasible test size is {len(test_images)}"
            )
    else:
        test_images = order[:n_test]
        rest = order[n_test:]

    dev_images = set(rest[:n_dev])
    test_set = set(test_images)

    def collect(pred) -> tuple:
        return tuple(m for img in images for m in groups[img] if pred(img))

    train = MentionDataset(
        collect(lambda i: i not in test_set and i not in dev_images), split_tag="train"
    )
    dev = MentionDataset(collect(lambda i: i in dev_images), split_tag="dev")
    test = MentionDataset(collect(lambda i: i in test_set), split_tag="test")
    return train, dev, test


def save_split(
    splits: tuple[MentionDataset, MentionDataset, MentionDataset],
    spec: SplitSpec,
    out_dir: str | Path,
) -> None:
    from .kb import save_mentions

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for ds, name in zip(splits, ("train", "dev", "test")):
        save_mentions(ds, out / f"{name}.jsonl")
    sidecar = {
        "seed": spec.seed,
        "ratios": list(spec.ratios),
        "test_unique": spec.test_unique_entities,
    }
    (out / "split_meta.json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8"
    )


class FaceDetector(Protocol):
    def detect(self, pixels: np.ndarray) -> list[tuple[int, int, int, int]]:
        """Face bounding boxes (x, y, w, h) found in an RGB pixel array."""


class PersonNER(Protocol):
    def persons(self, text: str) -> list[str]:
        """PERSON spans found in a caption."""


@dataclass(frozen=True)
class Detectors:
    face: FaceDetector
    ner: PersonNER


class StubFaceDetector:
    """Counts solid 8x8 marker tiles (channel 0 == 255) as faces.

    Pure function of the pixels; test images draw one marker per pretend
    face.
    """

    tile = 8

    def detect(self, pixels: np.ndarray) -> list[tuple[int, int, int, int]]:
        plane = pixels if pixels.ndim == 2 else pixels[:, :, 0]
        boxes = []
        t = self.tile
        for y in range(0, plane.shape[0] - t + 1, t):
            for x in range(0, plane.shape[1] - t + 1, t):
                if np.all(plane[y : y + t, x : x + t] == 255):
                    boxes.append((x, y, t, t))
        return boxes


class StubPersonNER:
    """Capitalized-bigram matcher standing in for a real NER model."""

    pattern = re.compile(r"\b[A-Z][a-z]+(?:\s+[A-Z][a-z]+)+\b")

    def persons(self, text: str) -> list[str]:
        return self.pattern.findall(text)


@dataclass(frozen=True)
class CandidateRecord:
    """One raw image+caption pair considered for dataset construction."""

    image: str
    caption: str


def load_candidates(path: str | Path) -> list[CandidateRecord]:
    path = Path(path)
    root = path.parent
    records = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            records.append(
                CandidateRecord(image=str(root / rec["image"]), caption=rec.get("caption", ""))
            )
    return records


def construction_filter(
    records: list[CandidateRecord], detectors: Detectors
) -> tuple[list[CandidateRecord], list[dict[str, str]]]:
    """Apply the person-caption, face-count, and dedup rules in that order.

    Keeps records whose caption names at least one PERSON, whose face count
    is in [1, 3], and whose image bytes are unseen. Every rejection is
    logged as {"image", "reason"} with reason in REJECT_REASONS; blur is
    deliberately not a rejection reason (no defensible criterion).
    """
    kept: list[CandidateRecord] = []
    rejections: list[dict[str, str]] = []
    seen_hashes: set[str] = set()
    for rec in records:
        if not detectors.ner.persons(rec.caption):
            rejections.append({"image": rec.image, "reason": "no-person-caption"})
            continue
        try:
            raw = Path(rec.image).read_bytes()
            with Image.open(rec.image) as im:
                pixels = np.asarray(im.convert("RGB"))
        except (OSError, ValueError):
            rejections.append({"image": rec.image, "reason": "io-error"})
            continue
        n_faces = len(detectors.face.detect(pixels))
        if not 1 <= n_faces <= 3:
            rejections.append({"image": rec.image, "reason": "face-count"})
            continue
        digest = hashlib.sha256(raw).hexdigest()
        if digest in seen_hashes:
            rejections.append({"image": rec.image, "reason": "duplicate"})
            continue
        seen_hashes.add(digest)
        kept.append(rec)
    return kept, rejections


def write_rejections(rejections: list[dict[str, str]], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rej in rejections:
            fh.write(json.dumps(rej, sort_keys=True) + "\n")

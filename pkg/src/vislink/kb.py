"""Domain types for entities, mentions, and ranked linking results.

Knowledge bases and mention datasets are loaded from JSONL manifests:

    KB record:      {"entity_id": str, "name": str, "description": str, "image": str-or-null}
    Mention record: {"image": str, "mentions": [{"mention_id": str, "bbox": [x, y, w, h],
                                                 "entity_id": str-or-null}]}

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .errors import DataContractError

SPLIT_TAGS = ("train", "dev", "test", "unsplit")


@dataclass(frozen=True)
class Entity:
    """One knowledge-base record: an id, a name, and up to two descriptions."""

    entity_id: str
    name: str
    description: str = ""
    image_ref: str | None = None

    def __post_init__(self) -> None:
        if not self.entity_id:
            raise DataContractError("entity with empty entity_id")
        if self.image_ref is None and not self.description:
            raise DataContractError(
                f"entity {self.entity_id} has neither an image nor a description"
            )

    @property
    def has_image(self) -> bool:
        return self.image_ref is not None


class KnowledgeBase:
    """Immutable collection of entities, iterated in entity_id order."""

    def __init__(self, entities: list[Entity] | tuple[Entity, ...]):
        ordered = sorted(entities, key=lambda e: e.entity_id)
        seen: set[str] = set()
        for ent in ordered:
            if ent.entity_id in seen:
                raise DataContractError(f"duplicate entity {ent.entity_id}")
            seen.add(ent.entity_id)
        self._entities = tuple(ordered)
        self._by_id = {e.entity_id: e for e in ordered}

    def __len__(self) -> int:
        return len(self._entities)

    def __iter__(self):
        return iter(self._entities)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._by_id

    def __getitem__(self, entity_id: str) -> Entity:
        return self._by_id[entity_id]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, KnowledgeBase) and self._entities == other._entities

    @property
    def entities(self) -> tuple[Entity, ...]:
        return self._entities

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.entity_id for e in self._entities)


@dataclass(frozen=True)
class VisualMention:
    """A region of one image to be linked; the full image is its context."""

    mention_id: str
    image_ref: str
    bbox: tuple[int, int, int, int]  # (x, y, w, h) in pixels
    gold_entity_id: str | None = None

    def __post_init__(self) -> None:
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise DataContractError(f"mention {self.mention_id}: bbox w/h must be positive")
        if x < 0 or y < 0:
            raise DataContractError(f"mention {self.mention_id}: bbox origin must be non-negative")


@dataclass(frozen=True)
class MentionDataset:
    """Mentions grouped by image, tagged with their split."""

    mentions: tuple[VisualMention, ...]
    split_tag: str = "unsplit"

    def __post_init__(self) -> None:
        if self.split_tag not in SPLIT_TAGS:
            raise DataContractError(f"unknown split tag {self.split_tag!r}")
        seen: set[str] = set()
        for m in self.mentions:
            if m.mention_id in seen:
                raise DataContractError(f"duplicate mention_id {m.mention_id}")
            seen.add(m.mention_id)

    def __len__(self) -> int:
        return len(self.mentions)

    def __iter__(self):
        return iter(self.mentions)

    def by_image(self) -> dict[str, tuple[VisualMention, ...]]:
        groups: dict[str, list[VisualMention]] = {}
        for m in self.mentions:
            groups.setdefault(m.image_ref, []).append(m)
        return {img: tuple(ms) for img, ms in groups.items()}

    def gold_map(self) -> dict[str, str]:
        """mention_id -> gold entity id, for labeled mentions only."""
        return {m.mention_id: m.gold_entity_id for m in self.mentions if m.gold_entity_id}

    def with_tag(self, tag: str) -> "MentionDataset":
        return MentionDataset(self.mentions, split_tag=tag)


@dataclass(frozen=True)
class RankedCandidates:
    """Descending-score candidate list for one mention.

    Ties are broken by ascending entity_id so results are reproducible even
    with exactly-equal float scores.
    """

    mention_id: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        prev: tuple[str, float] | None = None
        for eid, score in self.entries:
            if eid in seen:
                raise DataContractError(
                    f"candidates for {self.mention_id}: duplicate entity {eid}"
                )
            seen.add(eid)
            if prev is not None:
                if score > prev[1] or (score == prev[1] and eid < prev[0]):
                    raise DataContractError(
                        f"candidates for {self.mention_id}: entries out of order at {eid}"
                    )
            prev = (eid, score)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def top(self) -> str:
        return self.entries[0][0]

    def entity_ids(self, k: int | None = None) -> tuple[str, ...]:
        sel = self.entries if k is None else self.entries[: k]
        return tuple(eid for eid, _ in sel)


def _image_size(path: Path) -> tuple[int, int]:
    with Image.open(path) as im:
        return im.size  # (width, height); header read only


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load a knowledge base from a JSONL file, resolving image paths.

    Raises DataContractError for duplicate ids or entities lacking both an
    image and a description; the offending entity_id is named.
    """
    path = Path(path)
    root = path.parent
    entities: list[Entity] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataContractError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            image = rec.get("image")
            entities.append(
                Entity(
                    entity_id=rec["entity_id"],
                    name=rec.get("name", ""),
                    description=rec.get("description", "") or "",
                    image_ref=os.path.abspath(root / image) if image else None,
                )
            )
    return KnowledgeBase(entities)


def _portable_ref(ref: str, root: Path) -> str:
    """Relativize an image ref to the manifest directory when possible."""
    try:
        return Path(os.path.abspath(ref)).relative_to(root).as_posix()
    except ValueError:
        return ref


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    path = Path(path)
    root = Path(os.path.abspath(path.parent))
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for e in kb:
            rec = {
                "entity_id": e.entity_id,
                "name": e.name,
                "description": e.description,
                "image": _portable_ref(e.image_ref, root) if e.image_ref else None,
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_mentions(
    path: str | Path,
    kb: KnowledgeBase | None = None,
    split_tag: str = "unsplit",
    check_images: bool = True,
) -> MentionDataset:
    """Load a mention manifest, validating bboxes against actual image sizes.

    When a KnowledgeBase is supplied, every gold entity id must resolve in it.
    """
    path = Path(path)
    root = path.parent
    mentions: list[VisualMention] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataContractError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            image_ref = os.path.abspath(root / rec["image"])
            size = None
            if check_images:
                if not Path(image_ref).is_file():
                    raise DataContractError(f"{path}:{lineno}: missing image {rec['image']}")
                size = _image_size(Path(image_ref))
            for m in rec.get("mentions", []):
                bbox = tuple(int(v) for v in m["bbox"])
                mention = VisualMention(
                    mention_id=m["mention_id"],
                    image_ref=image_ref,
                    bbox=bbox,
                    gold_entity_id=m.get("entity_id"),
                )
                if size is not None:
                    x, y, w, h = bbox
                    if x + w > size[0] or y + h > size[1]:
                        raise DataContractError(
                            f"mention {mention.mention_id}: bbox {bbox} outside "
                            f"image bounds {size}"
                        )
                if kb is not None and mention.gold_entity_id is not None:
                    if mention.gold_entity_id not in kb:
                        raise DataContractError(
                            f"mention {mention.mention_id}: unknown gold entity "
                            f"{mention.gold_entity_id}"
                        )
                mentions.append(mention)
    return MentionDataset(tuple(mentions), split_tag=split_tag)


def save_mentions(dataset: MentionDataset, path: str | Path) -> None:
    """Write a mention manifest, one image per line, preserving image order."""
    path = Path(path)
    root = Path(os.path.abspath(path.parent))
    groups = dataset.by_image()
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for image_ref, ms in groups.items():
            rec = {
                "image": _portable_ref(image_ref, root),
                "mentions": [
                    {
                        "mention_id": m.mention_id,
                        "bbox": list(m.bbox),
                        "entity_id": m.gold_entity_id,
                    }
                    for m in ms
                ],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

"""The three sub-task linkers and the recall-then-rerank cascade.

A mention can be linked against visual entity descriptions (link_v2v),
textual descriptions (link_v2t), or both via a two-stage cascade
(link_v2vt): one model recalls a top-K pool, the other fully re-scores that
pool and the final order is the rerank model's alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapter import AdapterHead, adapt, normalize
from .encoders import Encoder, MODE_CROP, encode_mention
from .errors import ConfigError, DataContractError
from .index import EntityIndex, search
from .kb import MentionDataset, RankedCandidates, VisualMention

DEFAULT_RERANK_LENGTH = 600


@dataclass(frozen=True)
class CascadeConfig:
    """Which linker recalls, which one re-ranks, and the pool size K."""

    recall_model: str
    rerank_model: str
    rerank_length: int = DEFAULT_RERANK_LENGTH

    def __post_init__(self) -> None:
        if self.rerank_length < 1:
            raise ConfigError("rerank_length must be >= 1")


@dataclass
class MentionEmbedder:
    """Everything needed to turn a mention into a unit query vector."""

    encoder: Encoder
    head: AdapterHead | None = None
    mode: str = MODE_CROP

    def embed(self, mention: VisualMention) -> np.ndarray:
        raw = encode_mention(mention, self.encoder, self.mode)
        if self.head is not None:
            raw = adapt(raw.astype(np.float64), self.head)
        return normalize(np.asarray(raw))


def link_v2v(
    mention: VisualMention, embedder: MentionEmbedder, index: EntityIndex, k: int
) -> RankedCandidates:
    """Link against visual entity descriptions (face/object matching)."""
    if index.modality != "visual":
        raise ConfigError(f"v2v linking needs a visual index, got {index.modality}")
    return search(index, embedder.embed(mention), k, query_id=mention.mention_id)


def link_v2t(
    mention: VisualMention, embedder: MentionEmbedder, index: EntityIndex, k: int
) -> RankedCandidates:
    """Link against textual entity descriptions (cross-modal matching)."""
    if index.modality != "textual":
        raise ConfigError(f"v2t linking needs a textual index, got {index.modality}")
    return search(index, embedder.embed(mention), k, query_id=mention.mention_id)


def _rerank_pool(
    pool: list[tuple[str, float]],
    query: np.ndarray,
    rerank_index: EntityIndex,
) -> list[tuple[str, float]]:
    """Re-score a recall pool with the rerank model.

    Pool entries absent from the rerank index (missing modality) are
    appended after every reranked entry: their recall score in [-1, 1] is
    mapped into an interval strictly below the minimum rerank score, which
    preserves their recall order without letting them outrank anything the
    rerank model actually scored.
    """
    # one full matrix product, same as standalone search, so scores agree
    # bit-for-bit with the rerank model used alone
    all_scores = rerank_index.embeddings.data @ query.astype(np.float32)
    scored: list[tuple[str, float]] = []
    missing: list[tuple[str, float]] = []
    for entity_id, recall_score in pool:
        if entity_id in rerank_index.embeddings:
            scored.append((entity_id, float(all_scores[rerank_index.embeddings.key_index(entity_id)])))
        else:
            missing.append((entity_id, recall_score))
    scored.sort(key=lambda e: (-e[1], e[0]))
    floor = min((s for _, s in scored), default=0.0)
    shifted = [(eid, floor - 2.0 + (rs + 1.0) / 2.0) for eid, rs in missing]
    shifted.sort(key=lambda e: (-e[1], e[0]))
    return scored + shifted


def link_v2vt(
    mention: VisualMention,
    cascade: CascadeConfig,
    embedders: dict[str, MentionEmbedder],
    indices: dict[str, EntityIndex],
    k: int,
) -> RankedCandidates:
    """Recall top-K with one model, re-rank exactly those K with the other."""
    for model in (cascade.recall_model, cascade.rerank_model):
        if model not in embedders or model not in indices:
            raise ConfigError(f"cascade model {model!r} has no embedder/index")
    recall_index = indices[cascade.recall_model]
    rerank_index = indices[cascade.rerank_model]
    big_k = cascade.rerank_length
    if big_k < k:
        raise DataContractError(
            f"rerank length {big_k} cannot supply k={k} results"
        )
    if big_k > recall_index.size:
        raise DataContractError(
            f"rerank length {big_k} exceeds index size {recall_index.size}"
        )
    recall_q = embedders[cascade.recall_model].embed(mention)
    pool = list(search(recall_index, recall_q, big_k, query_id=mention.mention_id).entries)
    rerank_q = embedders[cascade.rerank_model].embed(mention)
    reranked = _rerank_pool(pool, rerank_q, rerank_index)
    return RankedCandidates(mention.mention_id, tuple(reranked[:k]))


def link_dataset(
    dataset: MentionDataset,
    subtask: str,
    embedders: dict[str, MentionEmbedder],
    indices: dict[str, EntityIndex],
    k: int,
    cascade: CascadeConfig | None = None,
) -> list[RankedCandidates]:
    """Run one linker over every mention of a dataset."""
    results = []
    for mention in dataset:
        if subtask == "v2v":
            results.append(link_v2v(mention, embedders["v2v"], indices["v2v"], k))
        elif subtask == "v2t":
            results.append(link_v2t(mention, embedders["v2t"], indices["v2t"], k))
        elif subtask == "v2vt":
            if cascade is None:
                raise ConfigError("v2vt linking requires a cascade config")
            results.append(link_v2vt(mention, cascade, embedders, indices, k))
        else:
            raise ConfigError(f"unknown sub-task {subtask!r}")
    return results


def write_results(results: list[RankedCandidates], path: str | Path) -> None:
    """JSONL results; repr-based floats give shortest round-trip decimals."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for r in results:
            rec = {
                "mention_id": r.mention_id,
                "candidates": [{"entity_id": eid, "score": s} for eid, s in r.entries],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_results(path: str | Path) -> list[RankedCandidates]:
    path = Path(path)
    results = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entries = tuple((c["entity_id"], float(c["score"])) for c in rec["candidates"])
            results.append(RankedCandidates(rec["mention_id"], entries))
    return results

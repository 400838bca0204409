"""Retrieval metrics, cascade analyses, and dataset statistics.

Recall@K is the fraction of queries whose gold entity appears in the top-K;
MRR@K is the mean reciprocal rank of the gold entity, zero when it is
outside the top-K. MRR sums use math.fsum, so both metrics are exactly
invariant under permutation of the query order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataContractError
from .index import EntityIndex
from .kb import KnowledgeBase, MentionDataset, RankedCandidates
from .linking import CascadeConfig, MentionEmbedder, link_v2vt

RECALL_KS = (1, 3, 5, 10)
MRR_KS = (3, 5, 10)


def rank_of_gold(candidates: RankedCandidates, gold_id: str) -> int | None:
    """1-based rank of the gold entity, or None if it was not returned."""
    for pos, (eid, _) in enumerate(candidates.entries, start=1):
        if eid == gold_id:
            return pos
    return None


def _ranks(results: list[RankedCandidates], gold: dict[str, str]) -> list[int | None]:
    ranks: list[int | None] = []
    for r in results:
        if r.mention_id not in gold:
            raise DataContractError(f"mention {r.mention_id} has no gold label")
        ranks.append(rank_of_gold(r, gold[r.mention_id]))
    return ranks


def recall_at_k(results: list[RankedCandidates], gold: dict[str, str], k: int) -> float:
    if k < 1:
        raise DataContractError("k must be >= 1")
    if not results:
        raise DataContractError("cannot evaluate an empty result set")
    hits = sum(1 for rank in _ranks(results, gold) if rank is not None and rank <= k)
    return hits / len(results)


def mrr_at_k(results: list[RankedCandidates], gold: dict[str, str], k: int) -> float:
    if k < 1:
        raise DataContractError("k must be >= 1")
    if not results:
        raise DataContractError("cannot evaluate an empty result set")
    recips = [
        1.0 / rank if rank is not None and rank <= k else 0.0
        for rank in _ranks(results, gold)
    ]
    return math.fsum(recips) / len(recips)


@dataclass(frozen=True)
class EvalReport:
    """Recall@K / MRR@K aggregates plus the per-query gold ranks."""

    recall_at: dict[int, float]
    mrr_at: dict[int, float]
    query_count: int
    ranks: dict[str, int | None] = field(compare=False)
    excluded_gold: int = 0

    def to_json(self) -> str:
        doc = {
            "recall": {str(k): v for k, v in sorted(self.recall_at.items())},
            "mrr": {str(k): v for k, v in sorted(self.mrr_at.items())},
            "q": self.query_count,
            "excluded_gold": self.excluded_gold,
        }
        return json.dumps(doc, sort_keys=True)


def evaluate(
    results: list[RankedCandidates],
    gold: dict[str, str],
    excluded_entities: tuple[str, ...] = (),
    recall_ks: tuple[int, ...] = RECALL_KS,
    mrr_ks: tuple[int, ...] = MRR_KS,
) -> EvalReport:
    """Full report over one result set.

    Queries whose gold entity was excluded from the index (missing modality)
    can never rank and count as misses; their number is reported separately.
    """
    ranks = dict(zip((r.mention_id for r in results), _ranks(results, gold)))
    excluded_set = set(excluded_entities)
    excluded_gold = sum(1 for r in results if gold[r.mention_id] in excluded_set)
    return EvalReport(
        recall_at={k: recall_at_k(results, gold, k) for k in recall_ks},
        mrr_at={k: mrr_at_k(results, gold, k) for k in mrr_ks},
        query_count=len(results),
        ranks=ranks,
        excluded_gold=excluded_gold,
    )


def overlap_at_k(
    results_a: list[RankedCandidates], results_b: list[RankedCandidates], k: int
) -> float:
    """Mean per-query |top-k(a) intersect top-k(b)| / k."""
    if k < 1:
        raise DataContractError("k must be >= 1")
    by_id_a = {r.mention_id: r for r in results_a}
    by_id_b = {r.mention_id: r for r in results_b}
    if set(by_id_a) != set(by_id_b):
        raise DataContractError("overlap requires identical query sets")
    if not by_id_a:
        raise DataContractError("cannot compute overlap of empty result sets")
    fractions = [
        len(set(by_id_a[mid].entity_ids(k)) & set(by_id_b[mid].entity_ids(k))) / k
        for mid in by_id_a
    ]
    return math.fsum(fractions) / len(fractions)


def rerank_sweep(
    dataset: MentionDataset,
    cascade_template: CascadeConfig,
    embedders: dict[str, MentionEmbedder],
    indices: dict[str, EntityIndex],
    k_values: list[int],
    gold: dict[str, str] | None = None,
) -> list[tuple[int, float]]:
    """Recall@1 of the cascade at each rerank length K.

    At K = index size the cascade degenerates to the rerank model alone, so
    the curve's right endpoint reproduces that model's standalone R@1.
    """
    size = indices[cascade_template.recall_model].size
    if sorted(k_values) != list(k_values):
        raise DataContractError("K values must be sorted ascending")
    if any(k > size for k in k_values):
        raise DataContractError(f"rerank length exceeds index size {size}")
    if gold is None:
        gold = dataset.gold_map()
    curve = []
    for big_k in k_values:
        cascade = CascadeConfig(
            cascade_template.recall_model, cascade_template.rerank_model, big_k
        )
        results = [
            link_v2vt(m, cascade, embedders, indices, k=1) for m in dataset
        ]
        curve.append((big_k, recall_at_k(results, gold, 1)))
    return curve


@dataclass(frozen=True)
class DatasetStats:
    image_count: int
    mention_count: int
    covered_entities: int
    mentions_per_image: float
    popularity: dict[str, int]  # log-binned gold-entity frequency histogram

    def to_json(self) -> str:
        doc = {
            "image_count": self.image_count,
            "mention_count": self.mention_count,
            "covered_entities": self.covered_entities,
            "mentions_per_image": self.mentions_per_image,
            "popularity": self.popularity,
        }
        return json.dumps(doc, sort_keys=True)


def dataset_stats(dataset: MentionDataset, kb: KnowledgeBase | None = None) -> DatasetStats:
    """Image/mention counts, entity coverage, and the popularity histogram.

    Histogram bins are powers of two over per-entity mention frequency
    ("1", "2-3", "4-7", ...), the usual view of a long-tailed distribution.
    """
    if len(dataset) == 0:
        raise DataContractError("empty dataset")
    freq: dict[str, int] = {}
    for m in dataset:
        if m.gold_entity_id is None:
            raise DataContractError(f"mention {m.mention_id} is unlabeled")
        if kb is not None and m.gold_entity_id not in kb:
            raise DataContractError(f"unknown gold entity {m.gold_entity_id}")
        freq[m.gold_entity_id] = freq.get(m.gold_entity_id, 0) + 1
    image_count = len(dataset.by_image())
    hist: dict[str, int] = {}
    for count in freq.values():
        lo = 1 << (count.bit_length() - 1)
        hi = lo * 2 - 1
        label = str(lo) if lo == hi else f"{lo}-{hi}"
        hist[label] = hist.get(label, 0) + 1
    ordered = dict(sorted(hist.items(), key=lambda kv: int(kv[0].split("-")[0])))
    return DatasetStats(
        image_count=image_count,
        mention_count=len(dataset),
        covered_entities=len(freq),
        mentions_per_image=len(dataset) / image_count,
        popularity=ordered,
    )


def write_curve(rows: list[tuple[int, float]], path: str | Path) -> None:
    """CSV with header "k,value", the exchange format for analysis curves."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "value"])
        for k, value in rows:
            writer.writerow([k, repr(value)])

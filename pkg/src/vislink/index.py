"""Entity-side vector index: exact top-k search plus a clustering backend.

The exact backend is a full dot-product scan; the approximate backend is a
simple inverted-file index over k-means cells whose recall against the exact
backend is measured, never assumed. Both break score ties by ascending
entity_id so rankings are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adapter import AdapterHead, adapt_matrix, load_head, save_head
from .container import EmbeddingMatrix, read_embeddings, write_embeddings
from .encoders import Encoder, embed_entities
from .errors import ConfigError, DataContractError, EmptyIndexError
from .kb import KnowledgeBase, RankedCandidates

BACKENDS = ("exact", "approx")


@dataclass
class EntityIndex:
    """Immutable searchable matrix of normalized entity embeddings."""

    embeddings: EmbeddingMatrix
    backend: str = "exact"
    modality: str = "visual"
    text_mode: str = "name"
    excluded: tuple[str, ...] = ()
    centroids: np.ndarray | None = field(default=None, repr=False)
    assignments: np.ndarray | None = field(default=None, repr=False)
    nprobe: int = 4

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown index backend {self.backend!r}")
        if not self.embeddings.normalized:
            raise DataContractError("index embeddings must be normalized")
        if self.embeddings.row_count == 0:
            raise EmptyIndexError("no entity carries the requested modality")
        if list(self.embeddings.row_keys) != sorted(self.embeddings.row_keys):
            raise DataContractError("index rows must be sorted by entity_id")
        if self.backend == "approx" and self.centroids is None:
            raise ConfigError("approximate backend requires cluster state")

    @property
    def size(self) -> int:
        return self.embeddings.row_count

    @property
    def dim(self) -> int:
        return self.embeddings.dim


def _kmeans(data: np.ndarray, n_clusters: int, seed: int, iters: int = 25) -> tuple[np.ndarray, np.ndarray]:
    """Plain Lloyd's iterations, deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    n = data.shape[0]
    centroids = data[rng.choice(n, size=min(n_clusters, n), replace=False)].astype(np.float64)
    assign = np.full(n, -1, dtype=np.int64)
    x = data.astype(np.float64)
    for _step in range(iters):
        sims = x @ centroids.T
        new_assign = np.argmax(sims, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(centroids.shape[0]):
            members = x[assign == c]
            if len(members):
                centroid = members.mean(axis=0)
                norm = np.linalg.norm(centroid)
                if norm > 1e-12:
                    centroids[c] = centroid / norm
    return centroids.astype(np.float32), assign.astype(np.int32)


def build_index_from_embeddings(
    embeddings: EmbeddingMatrix,
    backend: str = "exact",
    modality: str = "visual",
    text_mode: str = "name",
    excluded: tuple[str, ...] = (),
    head: AdapterHead | None = None,
    n_clusters: int | None = None,
    nprobe: int = 4,
    seed: int = 0,
) -> EntityIndex:
    """Adapt/normalize raw entity embeddings and wrap them in an index."""
    matrix = adapt_matrix(embeddings.sorted_by_key(), head)
    centroids = assignments = None
    if backend == "approx":
        if n_clusters is None:
            n_clusters = max(1, int(np.sqrt(matrix.row_count)))
        centroids, assignments = _kmeans(matrix.data, n_clusters, seed)
    return EntityIndex(
        embeddings=matrix,
        backend=backend,
        modality=modality,
        text_mode=text_mode,
        excluded=tuple(excluded),
        centroids=centroids,
        assignments=assignments,
        nprobe=nprobe,
    )


def build_index(
    kb: KnowledgeBase,
    encoder: Encoder,
    modality: str,
    text_mode: str = "name",
    head: AdapterHead | None = None,
    backend: str = "exact",
    n_clusters: int | None = None,
    nprobe: int = 4,
    seed: int = 0,
) -> EntityIndex:
    """Encode one row per entity possessing the modality and index them.

    Entities lacking the modality land on the exclusion list rather than
    being silently dropped.
    """
    if len(kb) == 0:
        raise DataContractError("cannot index an empty knowledge base")
    raw, excluded = embed_entities(kb, encoder, modality, text_mode)
    if raw.row_count == 0:
        raise EmptyIndexError(f"every entity lacks the {modality} modality")
    return build_index_from_embeddings(
        raw,
        backend=backend,
        modality=modality,
        text_mode=text_mode,
        excluded=excluded,
        head=head,
        n_clusters=n_clusters,
        nprobe=nprobe,
        seed=seed,
    )


def _rank_rows(keys: tuple[str, ...], scores: np.ndarray, k: int) -> list[tuple[str, float]]:
    # stable sort on -score keeps the (already id-sorted) key order for ties
    order = np.argsort(-scores, kind="stable")[:k]
    return [(keys[i], float(scores[i])) for i in order]


def search(index: EntityIndex, query: np.ndarray, k: int, query_id: str = "query") -> RankedCandidates:
    """Top-k entities by dot product, descending, ties by ascending id."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    q = np.asarray(query, dtype=np.float32)
    if q.shape != (index.dim,):
        raise DataContractError(f"query dim {q.shape} != index dim ({index.dim},)")
    keys = index.embeddings.row_keys
    if index.backend == "exact":
        scores = index.embeddings.data @ q
        entries = _rank_rows(keys, scores, k)
    else:
        sims = index.centroids @ q
        probe = np.argsort(-sims, kind="stable")[: index.nprobe]
        mask = np.isin(index.assignments, probe)
        candidates = np.nonzero(mask)[0]
        if candidates.size == 0:
            candidates = np.arange(index.size)
        scores = index.embeddings.data[candidates] @ q
        sub_keys = tuple(keys[i] for i in candidates)
        entries = _rank_rows(sub_keys, scores, k)
    return RankedCandidates(query_id, tuple(entries))


def search_batch(
    index: EntityIndex, queries: EmbeddingMatrix, k: int
) -> list[RankedCandidates]:
    if not queries.normalized:
        raise DataContractError("queries must be normalized")
    return [
        search(index, queries.data[i], k, query_id=queries.row_keys[i])
        for i in range(queries.row_count)
    ]


def ann_recall(index: EntityIndex, queries: np.ndarray, k: int) -> float:
    """Measured recall of this index against exact search on the same rows."""
    exact = EntityIndex(
        embeddings=index.embeddings,
        backend="exact",
        modality=index.modality,
        text_mode=index.text_mode,
        excluded=index.excluded,
    )
    hits = 0
    total = 0
    for q in np.atleast_2d(queries):
        truth = set(search(exact, q, k).entity_ids())
        got = set(search(index, q, k).entity_ids())
        hits += len(truth & got)
        total += len(truth)
    return hits / total if total else 1.0


def save_index(index: EntityIndex, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings(index.embeddings, out / "embeddings.vnel")
    meta = {
        "backend": index.backend,
        "modality": index.modality,
        "text_mode": index.text_mode,
        "excluded": list(index.excluded),
        "nprobe": index.nprobe,
        "dim": index.dim,
        "size": index.size,
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    if index.backend == "approx":
        np.save(out / "centroids.npy", index.centroids)
        np.save(out / "assignments.npy", index.assignments)


def load_index(out_dir: str | Path) -> EntityIndex:
    out = Path(out_dir)
    meta = json.loads((out / "meta.json").read_text(encoding="utf-8"))
    embeddings = read_embeddings(out / "embeddings.vnel")
    centroids = assignments = None
    if meta["backend"] == "approx":
        centroids = np.load(out / "centroids.npy")
        assignments = np.load(out / "assignments.npy")
    return EntityIndex(
        embeddings=embeddings,
        backend=meta["backend"],
        modality=meta["modality"],
        text_mode=meta["text_mode"],
        excluded=tuple(meta["excluded"]),
        centroids=centroids,
        assignments=assignments,
        nprobe=int(meta["nprobe"]),
    )

from __future__ import annotations

import numpy as np
import pytest

from conftest import random_image, write_png
from oracles import oracle_full_ranking
from vislink.adapter import normalize_rows
from vislink.container import EmbeddingMatrix
from vislink.encoders import EncoderSpec, make_encoder
from vislink.errors import ConfigError, DataContractError, EmptyIndexError
from vislink.index import (
    ann_recall,
    build_index,
    build_index_from_embeddings,
    load_index,
    save_index,
    search,
)
from vislink.kb import Entity, KnowledgeBase


def unit_matrix(rng, rows, dim, keys=None):
    data = normalize_rows(rng.standard_normal((rows, dim)).astype(np.float32))
    keys = keys or tuple(f"E{i:04d}" for i in range(rows))
    return EmbeddingMatrix(data, keys, normalized=True)


class TestBuild:
    def test_textual_index_over_tiny_kb(self, tiny_kb):
        enc = make_encoder(EncoderSpec(output_dim=16, seed=2))
        index = build_index(tiny_kb, enc, "textual", "name_desc")
        assert index.size == 3
        assert index.excluded == ()

    def test_missing_image_goes_to_exclusion_list(self, tmp_path, rng):
        img = tmp_path / "e.png"
        write_png(img, random_image(rng, 16, 8))
        kb = KnowledgeBase(
            [
                Entity("Q1", "a", "text", None),
                Entity("Q2", "b", "text", str(img)),
                Entity("Q3", "c", "text", str(img)),
            ]
        )
        enc = make_encoder(EncoderSpec(output_dim=16, seed=2))
        index = build_index(kb, enc, "visual")
        assert index.size == 2
        assert index.excluded == ("Q1",)

    def test_all_missing_is_empty_index_error(self):
        kb = KnowledgeBase([Entity("Q1", "a", "text", None)])
        enc = make_encoder(EncoderSpec(output_dim=16, seed=2))
        with pytest.raises(EmptyIndexError):
            build_index(kb, enc, "visual")

    def test_rows_sorted_by_entity_id(self, rng):
        data = rng.standard_normal((3, 4)).astype(np.float32)
        raw = EmbeddingMatrix(data, ("Q9", "Q1", "Q5"))
        index = build_index_from_embeddings(raw)
        assert index.embeddings.row_keys == ("Q1", "Q5", "Q9")


class TestSearch:
    def test_query_equal_to_row_scores_one(self, rng):
        index = build_index_from_embeddings(unit_matrix(rng, 20, 8))
        q = index.embeddings.data[7]
        result = search(index, q, 3)
        assert result.entries[0][0] == index.embeddings.row_keys[7]
        assert result.entries[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_k_larger_than_index_returns_permutation(self, rng):
        index = build_index_from_embeddings(unit_matrix(rng, 10, 8))
        q = normalize_rows(rng.standard_normal((1, 8)).astype(np.float32))[0]
        result = search(index, q, 50)
        assert sorted(result.entity_ids()) == sorted(index.embeddings.row_keys)

    def test_matches_brute_force_oracle(self, rng):
        index = build_index_from_embeddings(unit_matrix(rng, 100, 16))
        for _ in range(20):
            q = normalize_rows(rng.standard_normal((1, 16)).astype(np.float32))[0]
            got = search(index, q, 10)
            want = oracle_full_ranking(
                index.embeddings.row_keys, index.embeddings.data.astype(np.float64), q, 10
            )
            assert list(got.entity_ids()) == [eid for eid, _ in want]

    def test_exact_ties_ordered_by_id(self, rng):
        row = normalize_rows(rng.standard_normal((1, 8)).astype(np.float32))[0]
        data = np.stack([row, row, -row]).astype(np.float32)
        matrix = EmbeddingMatrix(data, ("Qb", "Qa", "Qc"), normalized=True)
        index = build_index_from_embeddings(matrix)
        result = search(index, row, 3)
        assert result.entity_ids() == ("Qa", "Qb", "Qc")
        assert result.entries[0][1] == result.entries[1][1]

    def test_dim_mismatch(self, rng):
        index = build_index_from_embeddings(unit_matrix(rng, 5, 8))
        with pytest.raises(DataContractError):
            search(index, np.zeros(9, dtype=np.float32), 1)

    def test_k_must_be_positive(self, rng):
        index = build_index_from_embeddings(unit_matrix(rng, 5, 8))
        with pytest.raises(ConfigError):
            search(index, index.embeddings.data[0], 0)


class TestApproximate:
    def test_recall_is_measured_not_assumed(self, rng):
        matrix = unit_matrix(rng, 400, 16)
        approx = build_index_from_embeddings(matrix, backend="approx", n_clusters=8, nprobe=2)
        queries = normalize_rows(rng.standard_normal((25, 16)).astype(np.float32))
        recall = ann_recall(approx, queries, 10)
        assert 0.0 <= recall <= 1.0
        full_probe = build_index_from_embeddings(
            matrix, backend="approx", n_clusters=8, nprobe=8
        )
        assert ann_recall(full_probe, queries, 10) == pytest.approx(1.0)

    def test_deterministic_build(self, rng):
        matrix = unit_matrix(rng, 100, 8)
        a = build_index_from_embeddings(matrix, backend="approx", n_clusters=4, seed=1)
        b = build_index_from_embeddings(matrix, backend="approx", n_clusters=4, seed=1)
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.assignments, b.assignments)


class TestPersistence:
    def test_exact_round_trip(self, tmp_path, rng):
        index = build_index_from_embeddings(unit_matrix(rng, 12, 8), excluded=("Qx",))
        save_index(index, tmp_path / "idx")
        again = load_index(tmp_path / "idx")
        assert again.embeddings.equals(index.embeddings)
        assert again.excluded == ("Qx",)
        assert again.backend == "exact"

    def test_approx_round_trip_searches_identically(self, tmp_path, rng):
        matrix = unit_matrix(rng, 60, 8)
        index = build_index_from_embeddings(matrix, backend="approx", n_clusters=5, nprobe=2)
        save_index(index, tmp_path / "idx")
        again = load_index(tmp_path / "idx")
        q = matrix.data[31]
        assert search(again, q, 5).entries == search(index, q, 5).entries

from __future__ import annotations

import filecmp
from pathlib import Path

import numpy as np
import pytest

from vislink.adapter import adapt_matrix
from vislink.encoders import EncoderSpec, embed_entities, embed_mentions, make_encoder
from vislink.errors import ConfigError
from vislink.index import build_index_from_embeddings, search_batch
from vislink.kb import load_kb, load_mentions
from vislink.metrics import dataset_stats, recall_at_k
from vislink.synth import generate_synthetic


def zero_shot_r1(out, n_entities, n_mentions, dim, seed, separability, subtask="v2v"):
    kb, ds, info = generate_synthetic(
        out, n_entities, n_mentions, dim=dim, seed=seed, separability=separability
    )
    if subtask == "v2v":
        enc = make_encoder(EncoderSpec(output_dim=dim, seed=info.visual_seed, channel=0))
        ent, _ = embed_entities(kb, enc, "visual")
    else:
        enc = make_encoder(EncoderSpec(output_dim=dim, seed=info.cross_seed, channel=1))
        ent, _ = embed_entities(kb, enc, "textual", "name_desc")
    index = build_index_from_embeddings(ent)
    queries = adapt_matrix(embed_mentions(ds, enc, "crop"), None)
    return recall_at_k(search_batch(index, queries, 10), ds.gold_map(), 1)


class TestSeparabilityContract:
    def test_full_separability_is_perfect_both_subtasks(self, tmp_path):
        assert zero_shot_r1(tmp_path / "v", 40, 40, 64, 3, 1.0, "v2v") == 1.0
        assert zero_shot_r1(tmp_path / "t", 40, 40, 64, 3, 1.0, "v2t") == 1.0

    def test_zero_separability_is_chance(self, tmp_path):
        # 100 entities: chance R@1 is 0.01; binomial band over 1000 mentions
        r1 = zero_shot_r1(tmp_path / "c", 100, 1000, 64, 7, 0.0)
        assert r1 == pytest.approx(0.01, abs=0.02)

    def test_intermediate_separability_tracks_parameter(self, tmp_path):
        r1 = zero_shot_r1(tmp_path / "m", 64, 512, 64, 11, 0.6)
        assert 0.45 <= r1 <= 0.75


class TestDeterminism:
    def test_same_seed_byte_identical_trees(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_synthetic(a, 10, 12, dim=32, seed=4, separability=0.8)
        generate_synthetic(b, 10, 12, dim=32, seed=4, separability=0.8)
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_synthetic(a, 10, 12, dim=32, seed=4)
        generate_synthetic(b, 10, 12, dim=32, seed=5)
        assert (a / "kb.jsonl").read_bytes() != (b / "kb.jsonl").read_bytes()


class TestManifests:
    def test_outputs_load_back(self, tmp_path):
        kb, ds, info = generate_synthetic(tmp_path, 12, 20, dim=32, seed=2)
        kb2 = load_kb(tmp_path / "kb.jsonl")
        ds2 = load_mentions(tmp_path / "mentions.jsonl", kb=kb2)
        assert kb2 == kb
        assert ds2 == ds

    def test_mentions_per_image_ratio(self, tmp_path):
        _, ds, _ = generate_synthetic(
            tmp_path, 30, 48, dim=32, seed=6, mentions_per_image=1.08
        )
        stats = dataset_stats(ds)
        assert stats.mention_count == 52  # round(48 * 1.08)
        assert stats.mentions_per_image == pytest.approx(52 / 48)

    def test_entity_coverage_when_mentions_exceed_entities(self, tmp_path):
        _, ds, _ = generate_synthetic(tmp_path, 16, 64, dim=32, seed=8)
        golds = {m.gold_entity_id for m in ds}
        assert len(golds) == 16

    def test_kb_only_mode(self, tmp_path):
        kb, ds, _ = generate_synthetic(
            tmp_path, 50, 0, dim=32, seed=1, with_images=False
        )
        assert len(kb) == 50
        assert len(ds) == 0
        assert all(e.image_ref is None for e in kb)
        assert all(e.description for e in kb)


class TestValidation:
    def test_too_few_entities(self, tmp_path):
        with pytest.raises(ConfigError):
            generate_synthetic(tmp_path, 1, 4)

    def test_dim_must_be_multiple_of_rows(self, tmp_path):
        with pytest.raises(ConfigError):
            generate_synthetic(tmp_path, 4, 4, dim=30)

    def test_separability_bounds(self, tmp_path):
        with pytest.raises(ConfigError):
            generate_synthetic(tmp_path, 4, 4, separability=1.5)

    def test_complementary_sets_must_fit(self, tmp_path):
        with pytest.raises(ConfigError):
            generate_synthetic(
                tmp_path, 4, 8, separability=0.2, complementary=True
            )


class TestComplementaryMode:
    def test_error_sets_are_disjoint(self, tmp_path):
        kb, ds, info = generate_synthetic(
            tmp_path, 60, 200, dim=64, seed=13,
            separability_visual=0.5, separability_textual=0.5, complementary=True,
        )
        enc_v = make_encoder(EncoderSpec(output_dim=64, seed=info.visual_seed, channel=0))
        enc_t = make_encoder(EncoderSpec(output_dim=64, seed=info.cross_seed, channel=1))
        ent_v, _ = embed_entities(kb, enc_v, "visual")
        ent_t, _ = embed_entities(kb, enc_t, "textual", "name_desc")
        gold = ds.gold_map()

        def top1_misses(enc, ent):
            index = build_index_from_embeddings(ent)
            queries = adapt_matrix(embed_mentions(ds, enc, "crop"), None)
            results = search_batch(index, queries, 1)
            return {r.mention_id for r in results if r.top != gold[r.mention_id]}

        miss_v = top1_misses(enc_v, ent_v)
        miss_t = top1_misses(enc_t, ent_t)
        # corruption sets are disjoint by construction; residual noise may
        # add a few stray misses, so demand near-disjointness
        assert len(miss_v & miss_t) <= 0.02 * len(ds)
        assert 0.35 <= len(miss_v) / len(ds) <= 0.65
        assert 0.35 <= len(miss_t) / len(ds) <= 0.65

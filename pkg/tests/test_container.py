from __future__ import annotations

import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vislink.container import EmbeddingMatrix, read_embeddings, verify_normalized, write_embeddings
from vislink.errors import ContainerFormatError, DataContractError


def random_matrix(rng, rows=5, dim=8):
    data = rng.standard_normal((rows, dim)).astype(np.float32)
    keys = tuple(f"K{i:03d}" for i in range(rows))
    return EmbeddingMatrix(data, keys)


class TestInvariants:
    def test_key_count_must_match(self, rng):
        with pytest.raises(DataContractError):
            EmbeddingMatrix(rng.standard_normal((3, 4)).astype(np.float32), ("a", "b"))

    def test_duplicate_keys_rejected(self, rng):
        with pytest.raises(DataContractError):
            EmbeddingMatrix(rng.standard_normal((2, 4)).astype(np.float32), ("a", "a"))

    def test_normalized_flag_is_verified(self, rng):
        data = rng.standard_normal((2, 4)).astype(np.float32)
        with pytest.raises(DataContractError):
            EmbeddingMatrix(data, ("a", "b"), normalized=True)

    def test_verify_normalized_measures(self, rng):
        data = rng.standard_normal((3, 8))
        unit = (data / np.linalg.norm(data, axis=1, keepdims=True)).astype(np.float32)
        assert verify_normalized(EmbeddingMatrix(unit, ("a", "b", "c"))).normalized


class TestRoundTrip:
    def test_bytes_identical(self, tmp_path, rng):
        matrix = random_matrix(rng, rows=17, dim=12)
        p1, p2 = tmp_path / "a.vnel", tmp_path / "b.vnel"
        write_embeddings(matrix, p1)
        again = read_embeddings(p1)
        assert again.equals(matrix)
        write_embeddings(again, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_matrix(self, tmp_path):
        matrix = EmbeddingMatrix(np.zeros((0, 4), dtype=np.float32), ())
        write_embeddings(matrix, tmp_path / "e.vnel")
        assert read_embeddings(tmp_path / "e.vnel").row_count == 0

    @settings(max_examples=25, deadline=None)
    @given(
        rows=st.integers(1, 6),
        dim=st.integers(1, 9),
        seed=st.integers(0, 2**16),
    )
    def test_any_shape_round_trips(self, tmp_path_factory, rows, dim, seed):
        rng = np.random.default_rng(seed)
        tmp = tmp_path_factory.mktemp("ct")
        keys = tuple(f"id-{i}-{seed}" for i in range(rows))
        matrix = EmbeddingMatrix(rng.standard_normal((rows, dim)).astype(np.float32), keys)
        write_embeddings(matrix, tmp / "m.vnel")
        assert read_embeddings(tmp / "m.vnel").equals(matrix)

    def test_unicode_keys(self, tmp_path, rng):
        matrix = EmbeddingMatrix(
            rng.standard_normal((2, 3)).astype(np.float32), ("Ä-key", "键")
        )
        write_embeddings(matrix, tmp_path / "u.vnel")
        assert read_embeddings(tmp_path / "u.vnel").row_keys == ("Ä-key", "键")


class TestCorruption:
    def test_bad_magic(self, tmp_path, rng):
        path = tmp_path / "m.vnel"
        write_embeddings(random_matrix(rng), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(ContainerFormatError, match="magic"):
            read_embeddings(path)

    def test_bad_version(self, tmp_path, rng):
        path = tmp_path / "m.vnel"
        write_embeddings(random_matrix(rng), path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(ContainerFormatError, match="version"):
            read_embeddings(path)

    def test_truncated_data(self, tmp_path, rng):
        path = tmp_path / "m.vnel"
        write_embeddings(random_matrix(rng), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(ContainerFormatError, match="truncated"):
            read_embeddings(path)


def test_large_round_trip_hash(tmp_path):
    # scale check for the file format itself: 20k x 64 in one shot
    rng = np.random.default_rng(0)
    data = rng.standard_normal((20_000, 64)).astype(np.float32)
    keys = tuple(f"E{i:06d}" for i in range(20_000))
    path = tmp_path / "big.vnel"
    write_embeddings(EmbeddingMatrix(data, keys), path)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    again = read_embeddings(path)
    write_embeddings(again, path)
    assert hashlib.sha256(path.read_bytes()).hexdigest() == digest

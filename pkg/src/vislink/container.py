"""Dense embedding matrices and their on-disk binary container.

File layout (all integers little-endian):

    magic "VNEL" | u32 version=1 | u32 row_count | u32 dim
    row_count key records: u16 byte-length + UTF-8 bytes
    row_count * dim float32 values, row-major

The layout is bit-exact across platforms; files written twice from the same
matrix are byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError, DataContractError

MAGIC = b"VNEL"
VERSION = 1

NORM_TOLERANCE = 1e-5


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-major float32 matrix with one string key per row.

    The `normalized` flag certifies that every row has unit L2 norm within
    1e-5; it is only set after verification.
    """

    data: np.ndarray
    row_keys: tuple[str, ...]
    normalized: bool = False
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise DataContractError("embedding data must be a 2-d matrix")
        if self.data.dtype != np.float32:
            raise DataContractError("embedding data must be float32")
        if self.data.shape[0] != len(self.row_keys):
            raise DataContractError(
                f"row count {self.data.shape[0]} != key count {len(self.row_keys)}"
            )
        index = {k: i for i, k in enumerate(self.row_keys)}
        if len(index) != len(self.row_keys):
            raise DataContractError("duplicate row keys in embedding matrix")
        if self.normalized and self.row_count:
            norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
                raise DataContractError("normalized flag set but rows are not unit length")
        object.__setattr__(self, "_index", index)

    @property
    def row_count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def row(self, key: str) -> np.ndarray:
        return self.data[self._index[key]]

    def key_index(self, key: str) -> int:
        return self._index[key]

    def select(self, keys: list[str] | tuple[str, ...]) -> "EmbeddingMatrix":
        idx = [self._index[k] for k in keys]
        return EmbeddingMatrix(self.data[idx].copy(), tuple(keys), normalized=self.normalized)

    def sorted_by_key(self) -> "EmbeddingMatrix":
        order = sorted(range(self.row_count), key=lambda i: self.row_keys[i])
        return EmbeddingMatrix(
            np.ascontiguousarray(self.data[order]),
            tuple(self.row_keys[i] for i in order),
            normalized=self.normalized,
        )

    def equals(self, other: "EmbeddingMatrix") -> bool:
        return (
            self.row_keys == other.row_keys
            and self.data.shape == other.data.shape
            and bool(np.all(self.data == other.data))
        )


def verify_normalized(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Return a copy with the normalized flag set according to measurement."""
    if matrix.row_count == 0:
        return replace(matrix, normalized=True)
    norms = np.linalg.norm(matrix.data.astype(np.float64), axis=1)
    flag = bool(np.all(np.abs(norms - 1.0) <= NORM_TOLERANCE))
    return replace(matrix, normalized=flag)


def write_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, matrix.row_count, matrix.dim))
        for key in matrix.row_keys:
            raw = key.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise DataContractError(f"row key too long ({len(raw)} bytes)")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ContainerFormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(12)
        if len(header) != 12:
            raise ContainerFormatError(f"{path}: truncated header")
        version, row_count, dim = struct.unpack("<III", header)
        if version != VERSION:
            raise ContainerFormatError(f"{path}: unsupported version {version}")
        keys: list[str] = []
        for _ in range(row_count):
            lenbytes = fh.read(2)
            if len(lenbytes) != 2:
                raise ContainerFormatError(f"{path}: truncated key section")
            (klen,) = struct.unpack("<H", lenbytes)
            keys.append(fh.read(klen).decode("utf-8"))
        payload = fh.read(row_count * dim * 4)
        if len(payload) != row_count * dim * 4:
            raise ContainerFormatError(f"{path}: truncated data section")
        data = np.frombuffer(payload, dtype="<f4").reshape(row_count, dim).copy()
    return verify_normalized(EmbeddingMatrix(data, tuple(keys)))

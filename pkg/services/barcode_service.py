"""
Barcode Service Module - Core data model and binarization
Holds the embedding, label and threshold types plus the bit-packed barcode matrix.

The barcode matrix keeps one contiguous packed block per feature dimension
(column-major), so re-thresholding a single dimension rewrites a single block.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# BBAR header: magic (4) + version (1) + n_samples (4) + n_dims (4)
HEADER_SIZE = 13

# bytes per stored real value
REAL_BYTES = 4


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """
    Dense n x D matrix of 32-bit embedding values.

    Args:
        values: Anything convertible to a 2-D float array. Copied on construction.

    Raises:
        ValueError: Wrong rank, empty shape, or a NaN/Inf cell (row and column reported).
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float32, copy=True)
        if values.ndim != 2:
            raise ValueError(f"Embedding matrix must be 2-D, got {values.ndim}-D input.")
        n_samples, n_dims = values.shape
        if n_samples < 1 or n_dims < 1:
            raise ValueError(f"Embedding matrix must be non-empty, got shape {values.shape}.")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            row, col = (int(v) for v in bad[0])
            raise ValueError(f"Non-finite value {values[row, col]} at row {row}, column {col}.")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def n_samples(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_dims(self) -> int:
        return int(self.values.shape[1])

    def take(self, rows: Sequence[int]) -> "EmbeddingMatrix":
        """Sub-matrix made of the given rows (in that order)."""
        return EmbeddingMatrix(self.values[np.asarray(rows, dtype=np.int64)])

    def value_range(self):
        return float(self.values.min()), float(self.values.max())


@dataclass(frozen=True, eq=False)
class LabelVector:
    """
    Per-sample class ids in 0..n_classes-1.

    Ground-truth vectors must contain every class at least once; prediction
    vectors are built with validate=False since a predictor may skip a class.
    """
    labels: np.ndarray
    n_classes: Optional[int] = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        labels = np.array(self.labels, copy=True)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("Labels must be a non-empty 1-D sequence.")
        if labels.dtype.kind == "f":
            if not np.all(np.isfinite(labels)) or not np.all(labels == np.round(labels)):
                raise ValueError("Labels must be integer class ids.")
        elif labels.dtype.kind not in "iu":
            raise ValueError(f"Labels must be integer class ids, got dtype {labels.dtype}.")
        labels = labels.astype(np.int64)
        if labels.min() < 0:
            raise ValueError(f"Class ids must be non-negative, found {int(labels.min())}.")
        n_classes = int(labels.max()) + 1 if self.n_classes is None else int(self.n_classes)
        if labels.max() >= n_classes:
            raise ValueError(f"Class id {int(labels.max())} out of range for {n_classes} classes.")
        if self.validate:
            if n_classes < 2:
                raise ValueError("At least 2 classes are required.")
            missing = np.setdiff1d(np.arange(n_classes), labels)
            if missing.size:
                raise ValueError(f"Class {int(missing[0])} has no samples.")
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "n_classes", n_classes)

    def __len__(self) -> int:
        return int(self.labels.size)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True, eq=False)
class ThresholdVector:
    """One cut-point per feature dimension (S*)."""
    cutpoints: np.ndarray

    def __post_init__(self):
        cutpoints = np.array(self.cutpoints, dtype=np.float64, copy=True).reshape(-1)
        if cutpoints.size == 0:
            raise ValueError("Threshold vector must not be empty.")
        if not np.all(np.isfinite(cutpoints)):
            raise ValueError("Threshold vector contains non-finite cut-points.")
        object.__setattr__(self, "cutpoints", _readonly(cutpoints))

    @classmethod
    def constant(cls, value: float, n_dims: int) -> "ThresholdVector":
        return cls(np.full(n_dims, float(value)))

    def __len__(self) -> int:
        return int(self.cutpoints.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ThresholdVector):
            return NotImplemented
        return np.array_equal(self.cutpoints, other.cutpoints)

    def replace(self, dim: int, value: float) -> "ThresholdVector":
        cutpoints = self.cutpoints.copy()
        cutpoints[dim] = value
        return ThresholdVector(cutpoints)

    def within(self, lower: np.ndarray, upper: np.ndarray) -> bool:
        return bool(np.all(self.cutpoints >= lower) and np.all(self.cutpoints <= upper))


@dataclass(frozen=True, eq=False)
class BinaryMatrix:
    """
    Bit-packed n x D matrix of {0,1} codes.

    blocks has shape (n_dims, ceil(n_samples / 8)); block d holds column d,
    sample r at byte r // 8, most significant bit first. Padding bits are 0.
    """
    n_samples: int
    n_dims: int
    blocks: np.ndarray

    def __post_init__(self):
        blocks = np.ascontiguousarray(self.blocks, dtype=np.uint8)
        expected = (self.n_dims, _block_bytes(self.n_samples))
        if blocks.shape != expected:
            raise ValueError(f"Packed blocks have shape {blocks.shape}, expected {expected}.")
        object.__setattr__(self, "blocks", _readonly(blocks))

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "BinaryMatrix":
        """Pack an (n_samples, n_dims) array of 0/1 values."""
        bits = np.asarray(bits)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValueError(f"Bits must be a non-empty 2-D array, got shape {bits.shape}.")
        # column-major: one packed block per dimension
        blocks = np.packbits(bits.T.astype(bool), axis=1, bitorder="big")
        return cls(int(bits.shape[0]), int(bits.shape[1]), blocks)

    def to_bits(self) -> np.ndarray:
        """Unpacked (n_samples, n_dims) uint8 array."""
        return np.unpackbits(self.blocks, axis=1, count=self.n_samples, bitorder="big").T

    def to_features(self) -> np.ndarray:
        return self.to_bits().astype(np.float64)

    def column(self, dim: int) -> np.ndarray:
        _check_dim(dim, self.n_dims)
        return np.unpackbits(self.blocks[dim], count=self.n_samples, bitorder="big")

    def row(self, index: int) -> np.ndarray:
        if not 0 <= index < self.n_samples:
            raise ValueError(f"Row {index} out of range for {self.n_samples} samples.")
        return (self.blocks[:, index >> 3] >> (7 - (index & 7))) & 1

    def bit(self, row: int, dim: int) -> int:
        _check_dim(dim, self.n_dims)
        return int(self.row(row)[dim])

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        return (self.n_samples, self.n_dims) == (other.n_samples, other.n_dims) and np.array_equal(
            self.blocks, other.blocks
        )


def _block_bytes(n_samples: int) -> int:
    return (int(n_samples) + 7) // 8


def _check_dim(dim: int, n_dims: int) -> None:
    if not 0 <= dim < n_dims:
        raise ValueError(f"Dimension {dim} out of range for {n_dims} dimensions.")


def pack_bits(bits: np.ndarray) -> BinaryMatrix:
    return BinaryMatrix.from_bits(bits)


def unpack_bits(binary: BinaryMatrix) -> np.ndarray:
    return binary.to_bits()


def binarize(matrix: EmbeddingMatrix, thresholds: ThresholdVector, strict: bool = False) -> BinaryMatrix:
    """
    Apply one cut-point per dimension.

    Args:
        matrix: Real-valued embeddings.
        thresholds: Cut-point per dimension, length must equal matrix.n_dims.
        strict: Use value > cut-point instead of the inclusive value >= cut-point.

    Returns:
        BinaryMatrix: bit(r, d) = 1 iff matrix(r, d) >= thresholds[d].
    """
    if len(thresholds) != matrix.n_dims:
        raise ValueError(
            f"Threshold length {len(thresholds)} does not match matrix dimension {matrix.n_dims}."
        )
    # compare in float64 so float32 storage never shifts a boundary case
    values = matrix.values.astype(np.float64)
    bits = values > thresholds.cutpoints if strict else values >= thresholds.cutpoints
    return BinaryMatrix.from_bits(bits)


def update_column(
    binary: BinaryMatrix,
    matrix: EmbeddingMatrix,
    dim: int,
    new_cutpoint: float,
    strict: bool = False,
) -> BinaryMatrix:
    """
    Re-threshold a single dimension and return a new BinaryMatrix.

    Every other block is copied bit for bit; the input is not modified.
    """
    _check_dim(dim, binary.n_dims)
    if (matrix.n_samples, matrix.n_dims) != (binary.n_samples, binary.n_dims):
        raise ValueError(
            f"Matrix shape {(matrix.n_samples, matrix.n_dims)} does not match "
            f"barcode shape {(binary.n_samples, binary.n_dims)}."
        )
    column = matrix.values[:, dim].astype(np.float64)
    bits = column > new_cutpoint if strict else column >= new_cutpoint
    blocks = binary.blocks.copy()
    blocks[dim] = np.packbits(bits, bitorder="big")
    return BinaryMatrix(binary.n_samples, binary.n_dims, blocks)


def packed_payload_size(n_samples: int, n_dims: int) -> int:
    """Packed payload bytes for a shape, without allocating anything."""
    return int(n_dims) * _block_bytes(n_samples)


def real_footprint(n_samples: int, n_dims: int) -> int:
    """Bytes taken by the same matrix stored as 32-bit reals."""
    return REAL_BYTES * int(n_samples) * int(n_dims)


def packed_footprint(binary: BinaryMatrix) -> int:
    """Total bytes of a barcode matrix: packed payload plus the fixed header."""
    return packed_payload_size(binary.n_samples, binary.n_dims) + HEADER_SIZE


def hamming_distance(binary: BinaryMatrix, row_a: int, row_b: int) -> int:
    """Number of dimensions where two barcodes differ."""
    return int(np.count_nonzero(binary.row(row_a) != binary.row(row_b)))

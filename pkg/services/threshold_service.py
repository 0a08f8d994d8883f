"""
Threshold Service Module - Classical global binarization baselines
Simple fixed cut-point, MinMax neighbour comparison, Otsu and hybrid (mean/median) thresholds.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from services.barcode_service import BinaryMatrix, EmbeddingMatrix, ThresholdVector, binarize

logger = logging.getLogger(__name__)

# classical heuristic cut-point for the simple method
DEFAULT_SIMPLE_THRESHOLD = 0.0

DEFAULT_BIN_COUNT = 256

# methods whose rule is value > T rather than value >= T
STRICT_METHODS = frozenset({"hybrid"})


@dataclass(frozen=True)
class GlobalThreshold:
    """A single cut-point applied to every feature, tagged with the method that produced it."""
    value: float
    method_tag: str

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"Global threshold must be finite, got {self.value}.")
        object.__setattr__(self, "value", float(self.value))

    @property
    def strict(self) -> bool:
        return self.method_tag in STRICT_METHODS

    def expand(self, n_dims: int) -> ThresholdVector:
        return ThresholdVector.constant(self.value, n_dims)

    def apply(self, matrix: EmbeddingMatrix) -> BinaryMatrix:
        return binarize(matrix, self.expand(matrix.n_dims), strict=self.strict)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Equal-width histogram over [data min, data max]."""
    edges: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_values(cls, values: np.ndarray, bin_count: int = DEFAULT_BIN_COUNT) -> "Histogram":
        values = np.asarray(values, dtype=np.float64).ravel()
        counts, edges = np.histogram(values, bins=bin_count, range=(values.min(), values.max()))
        return cls(edges=edges, counts=counts)

    @property
    def bin_count(self) -> int:
        return int(self.counts.size)


def simple_threshold(T: float = DEFAULT_SIMPLE_THRESHOLD) -> GlobalThreshold:
    """
    Fixed cut-point; bit = 1 iff value >= T.

    Raises:
        ValueError: T is NaN or infinite.
    """
    return GlobalThreshold(T, "simple")


def minmax_binarize(matrix: EmbeddingMatrix) -> BinaryMatrix:
    """
    Per-sample neighbour comparison: bit d = 1 iff value(d) > value(d-1).
    Bit 0 has no predecessor and is always 0.
    """
    values = matrix.values
    bits = np.zeros(values.shape, dtype=bool)
    bits[:, 1:] = values[:, 1:] > values[:, :-1]
    return BinaryMatrix.from_bits(bits)


def otsu_threshold(matrix: EmbeddingMatrix, bin_count: int = DEFAULT_BIN_COUNT) -> GlobalThreshold:
    """
    Otsu cut-point over the pooled entries of the matrix.

    Every interior bin edge is a candidate; the one maximising the
    between-class variance w0 * w1 * (mu0 - mu1)^2 wins (first one on ties).
    Class statistics come from the sorted data, so the result matches a
    direct scan over the edges.

    Args:
        matrix: Fitting data, all entries pooled.
        bin_count: Number of equal-width bins (>= 2).

    Returns:
        GlobalThreshold: the chosen bin's upper edge, tagged "otsu".
    """
    if bin_count < 2:
        raise ValueError(f"Otsu needs at least 2 bins, got {bin_count}.")
    values = np.sort(matrix.values.astype(np.float64).ravel())
    if values[0] == values[-1]:
        logger.warning("Degenerate distribution for Otsu: every value equals %s.", values[0])
        return GlobalThreshold(float(values[0]), "otsu")

    hist = Histogram.from_values(values, bin_count)
    candidates = hist.edges[1:-1]
    n_total = values.size

    # class 0 is everything strictly below the candidate edge
    below = np.searchsorted(values, candidates, side="left")
    prefix = np.concatenate(([0.0], np.cumsum(values)))
    sum_below = prefix[below]
    sum_above = prefix[n_total] - sum_below
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_below = sum_below / below
        mean_above = sum_above / (n_total - below)
        w_below = below / n_total
        sigma_b = w_below * (1.0 - w_below) * (mean_below - mean_above) ** 2
    sigma_b = np.where((below == 0) | (below == n_total), -np.inf, sigma_b)

    best = int(np.argmax(sigma_b))
    logger.debug("Otsu picked edge %d of %d (sigma_b=%g).", best + 1, hist.bin_count, sigma_b[best])
    return GlobalThreshold(float(candidates[best]), "otsu")


def hybrid_threshold(matrix: EmbeddingMatrix) -> GlobalThreshold:
    """
    Hybrid cut-point T = (mean + median) / 2 over the pooled entries.
    Binarizing with it uses the strict rule value > T.
    """
    pooled = matrix.values.astype(np.float64).ravel()
    return GlobalThreshold((float(pooled.mean()) + float(np.median(pooled))) / 2.0, "hybrid")

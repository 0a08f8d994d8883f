import logging

import numpy as np
import pytest

from services.barcode_service import EmbeddingMatrix
from services.threshold_service import (
    DEFAULT_BIN_COUNT,
    GlobalThreshold,
    hybrid_threshold,
    minmax_binarize,
    otsu_threshold,
    simple_threshold,
)


def exhaustive_otsu_sigma(values, bin_count):
    """Between-class variance at every interior edge, computed directly from masks."""
    values = np.asarray(values, dtype=np.float64).ravel()
    edges = np.histogram_bin_edges(values, bins=bin_count, range=(values.min(), values.max()))[1:-1]
    sigmas = []
    for edge in edges:
        below = values < edge
        if below.all() or not below.any():
            sigmas.append(-np.inf)
            continue
        w0 = below.mean()
        sigmas.append(w0 * (1 - w0) * (values[below].mean() - values[~below].mean()) ** 2)
    return edges, np.array(sigmas)


def test_simple_threshold_inclusive():
    """
    positive, T = 0 on [-0.5, 0.7, 0] gives [0, 1, 1]
    """
    threshold = simple_threshold()
    assert threshold.value == 0.0
    assert threshold.method_tag == "simple"
    assert threshold.apply(EmbeddingMatrix([[-0.5, 0.7, 0.0]])).to_bits().tolist() == [[0, 1, 1]]


def test_simple_threshold_above_range():
    """
    positive, a cut-point above every value gives all-zero bits
    """
    matrix = EmbeddingMatrix(np.random.default_rng(3).uniform(-1, 1, size=(10, 5)))
    assert simple_threshold(1.5).apply(matrix).to_bits().sum() == 0


def test_simple_threshold_rejects_non_finite():
    """
    negative, NaN and infinite cut-points are rejected
    """
    with pytest.raises(ValueError):
        simple_threshold(float("nan"))
    with pytest.raises(ValueError):
        GlobalThreshold(float("inf"), "simple")


def test_minmax_rows():
    """
    positive, neighbour comparisons with the first bit always 0 and ties going to 0
    """
    matrix = EmbeddingMatrix([[0.1, 0.5, 0.2], [3, 3, 3], [1, 2, 3]])
    assert minmax_binarize(matrix).to_bits().tolist() == [[0, 1, 0], [0, 0, 0], [0, 1, 1]]


def test_minmax_increasing_row():
    """
    positive, a strictly increasing row of length D gives 0 then D-1 ones
    """
    row = np.linspace(-1, 1, 12)[None, :]
    assert minmax_binarize(EmbeddingMatrix(row)).to_bits().tolist() == [[0] + [1] * 11]


def test_otsu_two_clusters_small():
    """
    positive, {1,1,1,9,9,9} with 8 bins cuts strictly between the clusters
    """
    threshold = otsu_threshold(EmbeddingMatrix([[1, 1, 1, 9, 9, 9]]), bin_count=8)
    assert 1 < threshold.value < 9
    assert threshold.method_tag == "otsu"
    assert threshold.apply(EmbeddingMatrix([[1, 1, 1, 9, 9, 9]])).to_bits().tolist() == [[0, 0, 0, 1, 1, 1]]


def test_otsu_gaussian_clusters():
    """
    positive, two separated seeded clusters put the cut between their means
    """
    gen = np.random.default_rng(11)
    values = np.concatenate([gen.normal(-0.5, 0.1, 500), gen.normal(0.4, 0.1, 500)])
    threshold = otsu_threshold(EmbeddingMatrix(values.reshape(100, 10)))
    assert -0.5 < threshold.value < 0.4


def test_otsu_matches_exhaustive_scan():
    """
    positive, 100 seeded inputs of length 10 to 10000 against a direct scan of every edge
    """
    gen = np.random.default_rng(2024)
    for _ in range(100):
        length = int(gen.integers(10, 10_001))
        values = gen.normal(gen.uniform(-1, 1), gen.uniform(0.05, 1), size=length)
        if gen.random() < 0.5:
            values[: length // 3] += gen.uniform(0.5, 2)
        matrix = EmbeddingMatrix(values[:, None])
        stored = matrix.values.astype(np.float64)

        threshold = otsu_threshold(matrix, DEFAULT_BIN_COUNT)
        edges, sigmas = exhaustive_otsu_sigma(stored, DEFAULT_BIN_COUNT)
        chosen = int(np.flatnonzero(edges == threshold.value)[0])
        assert sigmas[chosen] >= sigmas.max() * (1 - 1e-12)


def test_otsu_degenerate(caplog):
    """
    negative, identical values have no split: the value comes back with a warning
    """
    with caplog.at_level(logging.WARNING, logger="services.threshold_service"):
        threshold = otsu_threshold(EmbeddingMatrix([[5, 5], [5, 5]]))
    assert threshold.value == 5.0
    assert "Degenerate" in caplog.text


def test_otsu_needs_two_bins():
    """
    negative, fewer than 2 bins is rejected
    """
    with pytest.raises(ValueError):
        otsu_threshold(EmbeddingMatrix([[0.0, 1.0]]), bin_count=1)


def test_hybrid_arithmetic():
    """
    positive, [1,2,3,4,10]: mean 4, median 3, T = 3.5 and strict bits [0,0,0,1,1]
    """
    matrix = EmbeddingMatrix([[1, 2, 3, 4, 10]])
    threshold = hybrid_threshold(matrix)
    assert threshold.value == pytest.approx(3.5)
    assert threshold.strict is True
    assert threshold.apply(matrix).to_bits().tolist() == [[0, 0, 0, 1, 1]]


def test_hybrid_symmetric_and_recomputed():
    """
    positive, symmetric data gives 0 and a seeded matrix matches an independent mean/median
    """
    assert hybrid_threshold(EmbeddingMatrix([[-0.3, 0.0, 0.3]])).value == pytest.approx(0.0, abs=1e-7)

    matrix = EmbeddingMatrix(np.random.default_rng(8).normal(0.1, 0.4, size=(100, 8)))
    flat = matrix.values.astype(np.float64).ravel()
    expected = (np.mean(flat) + np.median(flat)) / 2
    assert hybrid_threshold(matrix).value == pytest.approx(expected, rel=1e-12)


def test_hybrid_strict_tie():
    """
    negative, a value equal to the hybrid cut-point stays 0 under the strict rule
    """
    matrix = EmbeddingMatrix([[0.0, 1.0, 2.0]])
    threshold = hybrid_threshold(matrix)
    assert threshold.value == 1.0
    assert threshold.apply(matrix).to_bits().tolist() == [[0, 0, 1]]


def test_otsu_ignores_entry_order(rng):
    """
    positive, shuffling every entry of the matrix (and its shape) leaves the Otsu cut-point unchanged
    """
    values = np.concatenate([rng.normal(-0.4, 0.1, size=600), rng.normal(0.5, 0.15, size=600)])
    original = otsu_threshold(EmbeddingMatrix(values.reshape(40, 30)))
    shuffled = otsu_threshold(EmbeddingMatrix(rng.permutation(values).reshape(30, 40)))
    assert shuffled.value == original.value


def test_hybrid_shifts_with_the_data(rng):
    """
    positive, adding c to every entry moves the hybrid cut-point by exactly c
    """
    # dyadic values so the shifted matrix is exact in 32-bit
    values = rng.integers(-100, 100, size=(50, 8)) / 256.0
    base = hybrid_threshold(EmbeddingMatrix(values)).value
    for shift in (0.125, -0.25, 0.5):
        moved = hybrid_threshold(EmbeddingMatrix(values + shift)).value
        assert moved == pytest.approx(base + shift, abs=1e-12)

import logging
import math

import numpy as np
import pytest
from scipy import stats

from services.stats_service import (
    NEG_LOG10_THRESHOLD,
    PairwiseMatrix,
    RunResults,
    compare_runs,
    format_kw,
    kruskal_wallis,
    neglog10_matrix,
    posthoc_pairwise,
    render_heatmap_svg,
)

DISJOINT = [[1, 2, 3], [4, 5, 6], [7, 8, 9]]


def test_kruskal_hand_computed():
    """
    positive, ranks 1..9 in three blocks: H = 7.2 with 2 degrees of freedom
    """
    result = kruskal_wallis(DISJOINT)
    assert result.h_statistic == pytest.approx(7.2)
    assert result.degrees_of_freedom == 2
    assert result.p_value == pytest.approx(math.exp(-3.6))
    assert result.significant is True
    assert "H = 7.2000" in format_kw(result)


def test_kruskal_rank_invariance():
    """
    positive, H does not change under a strictly monotone transform of every score
    """
    gen = np.random.default_rng(4)
    groups = [gen.normal(loc, 1.0, size=12) for loc in (0.0, 0.3, 0.9)]
    transformed = [np.exp(3 * g) + 7 for g in groups]
    assert kruskal_wallis(groups).h_statistic == pytest.approx(kruskal_wallis(transformed).h_statistic)


def test_kruskal_degenerate(caplog):
    """
    negative, identical pooled values report H = 0, p = 1 with a warning
    """
    with caplog.at_level(logging.WARNING, logger="services.stats_service"):
        result = kruskal_wallis([[5, 5], [5, 5]])
    assert (result.h_statistic, result.p_value, result.degenerate) == (0.0, 1.0, True)
    assert "tie correction is zero" in caplog.text
    assert "degenerate" in format_kw(result)


def test_kruskal_rejects_small_groups():
    """
    negative, fewer than 2 groups or a group with 1 score is rejected
    """
    with pytest.raises(ValueError):
        kruskal_wallis([[1, 2, 3]])
    with pytest.raises(ValueError):
        kruskal_wallis([[1, 2], [3]])


def test_kruskal_null_calibration():
    """
    positive, 1000 replications of three groups from one distribution reject at about 5%
    """
    gen = np.random.default_rng(327)
    rejections = sum(
        kruskal_wallis([gen.normal(size=15) for _ in range(3)]).p_value < 0.05 for _ in range(1000)
    )
    assert 0.03 <= rejections / 1000 <= 0.07


def test_posthoc_diagonal_and_symmetry():
    """
    positive, unit diagonal and a symmetric matrix for both post-hoc tests
    """
    gen = np.random.default_rng(9)
    groups = [gen.uniform(size=10) + shift for shift in (0.0, 0.2, 0.8)]
    for method in ("rank-sum", "dunn"):
        pairwise = posthoc_pairwise(groups, method=method, names=["a", "b", "c"])
        assert np.all(np.diag(pairwise.p_values) == 1.0)
        assert np.array_equal(pairwise.p_values, pairwise.p_values.T)
        assert list(pairwise.to_frame().columns) == ["a", "b", "c"]


def test_posthoc_complete_separation():
    """
    positive, [1..15] vs [101..115] gives p below 1e-5
    """
    pairwise = posthoc_pairwise([np.arange(1, 16), np.arange(101, 116)])
    assert pairwise.p_values[0, 1] < 1e-5
    assert pairwise.significant()[0, 1]


def test_posthoc_holm_never_lowers_p():
    """
    positive, Holm-adjusted p-values are at least the raw ones
    """
    gen = np.random.default_rng(10)
    groups = [gen.normal(loc, 1.0, size=15) for loc in (0.0, 0.5, 1.0, 1.5)]
    raw = posthoc_pairwise(groups)
    adjusted = posthoc_pairwise(groups, holm=True)
    assert adjusted.adjusted is True
    assert np.all(adjusted.p_values >= raw.p_values - 1e-15)


def test_posthoc_rejects_unknown_test():
    """
    negative, only rank-sum and dunn are offered, and names must match the groups
    """
    with pytest.raises(ValueError):
        posthoc_pairwise(DISJOINT, method="t-test")
    with pytest.raises(ValueError):
        posthoc_pairwise(DISJOINT, names=["a", "b"])


def test_neglog10_values():
    """
    positive, p = 0.05 -> 1.3010 (flagged), p = 1 -> 0, p = 1e-20 -> 20
    """
    p_values = np.array([[1.0, 0.05, 1e-20], [0.05, 1.0, 0.2], [1e-20, 0.2, 1.0]])
    heatmap = neglog10_matrix(PairwiseMatrix(("a", "b", "c"), p_values))
    assert heatmap.values[0, 1] == pytest.approx(1.3010, abs=1e-3)
    assert heatmap.flags[0, 1]
    assert heatmap.values[0, 0] == 0.0
    assert heatmap.values[0, 2] == pytest.approx(20.0)
    assert not heatmap.flags[1, 2]
    assert NEG_LOG10_THRESHOLD == 1.30


def test_neglog10_floor():
    """
    positive, p values below 1e-300 are floored so the heatmap stays finite
    """
    p_values = np.array([[1.0, 0.0], [0.0, 1.0]])
    heatmap = neglog10_matrix(PairwiseMatrix(("a", "b"), p_values))
    assert heatmap.values[0, 1] == pytest.approx(300.0)


def test_run_results_validation():
    """
    negative, scores must be in [0, 1], with 2+ runs per method and 2+ methods
    """
    with pytest.raises(ValueError):
        RunResults({"a": [0.5, 0.6], "b": [0.4, 1.2]})
    with pytest.raises(ValueError):
        RunResults({"a": [0.5], "b": [0.4, 0.3]})
    with pytest.raises(ValueError):
        RunResults({"a": [0.5, 0.6]})


def test_compare_runs_end_to_end(tmp_path):
    """
    positive, omnibus + post-hoc + heatmap for three methods, rendered to SVG
    """
    results = RunResults({
        "simple": [0.60, 0.61, 0.62, 0.59, 0.60],
        "otsu": [0.70, 0.71, 0.69, 0.72, 0.70],
        "cs-feature": [0.90, 0.91, 0.92, 0.89, 0.93],
    })
    kw, pairwise, heatmap = compare_runs(results, posthoc="dunn")
    assert kw.significant
    assert pairwise.methods == ("simple", "otsu", "cs-feature")
    assert heatmap.flags[0, 2]

    svg = tmp_path / "heatmap.svg"
    render_heatmap_svg(heatmap, str(svg))
    assert svg.read_text().lstrip().startswith("<?xml")


def test_rank_sum_uses_normal_approximation():
    """
    positive, [1,2,3] vs [4,5,6] gives the continuity-corrected normal p of about 0.081, not the exact 0.1
    """
    expected = 2 * stats.norm.sf(4 / math.sqrt(5.25))
    matrix = posthoc_pairwise([[1, 2, 3], [4, 5, 6]], method="rank-sum")
    assert matrix.p_values[0, 1] == pytest.approx(expected)
    assert matrix.p_values[0, 1] == pytest.approx(0.0809, abs=1e-4)


def test_rank_sum_holm_on_disjoint_blocks():
    """
    positive, three equal raw p-values are each multiplied by 3 under Holm
    """
    raw = 2 * stats.norm.sf(4 / math.sqrt(5.25))
    matrix = posthoc_pairwise(DISJOINT, method="rank-sum", holm=True)
    off_diagonal = matrix.p_values[~np.eye(3, dtype=bool)]
    assert off_diagonal == pytest.approx(np.full(6, min(1.0, 3 * raw)))
    assert matrix.adjusted is True


@pytest.mark.parametrize("method", ["rank-sum", "dunn"])
def test_statistics_ignore_a_common_shift(rng, method):
    """
    positive, adding one constant to every score changes neither H nor any pairwise p-value
    """
    groups = [rng.uniform(0.2, 0.5, size=7) + 0.05 * k for k in range(4)]
    shifted = [group + 0.25 for group in groups]

    assert kruskal_wallis(shifted).h_statistic == pytest.approx(kruskal_wallis(groups).h_statistic)
    assert kruskal_wallis(shifted).p_value == pytest.approx(kruskal_wallis(groups).p_value)
    np.testing.assert_allclose(
        posthoc_pairwise(shifted, method=method).p_values,
        posthoc_pairwise(groups, method=method).p_values,
    )

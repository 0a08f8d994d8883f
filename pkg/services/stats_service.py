"""
Stats Service Module - Nonparametric comparison of benchmark runs
Kruskal-Wallis omnibus test, pairwise post-hoc p-value matrices and their -log10 heatmap data.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scikit_posthocs as sp
from scipy import stats
from statsmodels.stats.multitest import multipletests

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.05

# -log10(0.05) rounded the way the heatmaps are read
NEG_LOG10_THRESHOLD = 1.30

P_FLOOR = 1e-300

POSTHOC_METHODS = ("rank-sum", "dunn")


@dataclass(frozen=True)
class RunResults:
    """Method name -> per-run scores (accuracy or macro-F1)."""
    scores: Dict[str, Tuple[float, ...]]

    def __post_init__(self):
        cleaned = {}
        for method, values in self.scores.items():
            values = tuple(float(v) for v in values)
            if len(values) < 2:
                raise ValueError(f"Method '{method}' has {len(values)} run(s); at least 2 are required.")
            if not all(np.isfinite(v) and 0.0 <= v <= 1.0 for v in values):
                raise ValueError(f"Method '{method}' has scores outside [0, 1] or non-finite.")
            cleaned[method] = values
        if len(cleaned) < 2:
            raise ValueError("At least 2 methods are required for a comparison.")
        object.__setattr__(self, "scores", cleaned)

    @property
    def methods(self) -> List[str]:
        return list(self.scores)

    def groups(self) -> List[Tuple[float, ...]]:
        return list(self.scores.values())


@dataclass(frozen=True)
class KwResult:
    h_statistic: float
    p_value: float
    degrees_of_freedom: int
    degenerate: bool = False

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL


@dataclass(frozen=True, eq=False)
class PairwiseMatrix:
    """Symmetric method x method p-values with a unit diagonal."""
    methods: Tuple[str, ...]
    p_values: np.ndarray
    test: str = "rank-sum"
    adjusted: bool = False

    def significant(self) -> np.ndarray:
        return self.p_values < SIGNIFICANCE_LEVEL

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.p_values, index=list(self.methods), columns=list(self.methods))


@dataclass(frozen=True, eq=False)
class HeatmapData:
    """-log10(p) values and the per-cell flag for crossing the 1.30 contour."""
    methods: Tuple[str, ...]
    values: np.ndarray
    flags: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.methods), columns=list(self.methods))

    def flags_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.flags.astype(int), index=list(self.methods), columns=list(self.methods))


def _check_groups(groups: Sequence[Sequence[float]]) -> List[np.ndarray]:
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(arrays) < 2:
        raise ValueError(f"At least 2 groups are required, got {len(arrays)}.")
    for index, values in enumerate(arrays):
        if values.size < 2:
            raise ValueError(f"Group {index} has {values.size} observation(s); at least 2 are required.")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"Group {index} contains non-finite scores.")
    return arrays


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> KwResult:
    """
    Tie-corrected Kruskal-Wallis H with a chi-square (k - 1 df) p-value.

    When every pooled value is identical the tie correction is zero; the
    result is reported as H = 0, p = 1 with a warning.
    """
    arrays = _check_groups(groups)
    dof = len(arrays) - 1
    pooled = np.concatenate(arrays)
    if np.all(pooled == pooled[0]):
        logger.warning("Kruskal-Wallis on identical scores: tie correction is zero, reporting H=0, p=1.")
        return KwResult(0.0, 1.0, dof, degenerate=True)
    h_statistic, p_value = stats.kruskal(*arrays)
    return KwResult(float(h_statistic), float(p_value), dof)


def _rank_sum_matrix(arrays: List[np.ndarray], holm: bool) -> np.ndarray:
    """Mann-Whitney p-value for every pair, normal approximation with tie and continuity correction."""
    pairs = list(combinations(range(len(arrays)), 2))
    raw = []
    for i, j in pairs:
        if np.all(np.concatenate([arrays[i], arrays[j]]) == arrays[i][0]):
            # all-tied pair: no evidence of a difference
            raw.append(1.0)
            continue
        result = stats.mannwhitneyu(arrays[i], arrays[j], use_continuity=True, alternative="two-sided",
                                    method="asymptotic")
        raw.append(float(result.pvalue))
    if holm:
        _, raw, _, _ = multipletests(raw, method="holm")

    p_values = np.ones((len(arrays), len(arrays)))
    for (i, j), p_value in zip(pairs, raw):
        p_values[i, j] = p_values[j, i] = p_value
    return p_values


def posthoc_pairwise(
    groups: Sequence[Sequence[float]],
    method: str = "rank-sum",
    names: Optional[Sequence[str]] = None,
    holm: bool = False,
) -> PairwiseMatrix:
    """
    Two-sided pairwise p-values between every pair of groups.

    Args:
        groups: Score lists, one per method.
        method: "rank-sum" (pairwise Mann-Whitney, normal approximation with tie
            correction) or "dunn" (pooled-rank z-test).
        names: Row/column labels; defaults to group indices.
        holm: Apply the Holm step-down adjustment.
    """
    if method not in POSTHOC_METHODS:
        raise ValueError(f"Unknown post-hoc test '{method}', expected one of {POSTHOC_METHODS}.")
    arrays = _check_groups(groups)
    names = tuple(names) if names is not None else tuple(str(i) for i in range(len(arrays)))
    if len(names) != len(arrays):
        raise ValueError(f"{len(names)} names given for {len(arrays)} groups.")

    if method == "rank-sum":
        p_values = _rank_sum_matrix(arrays, holm)
    else:
        frame = sp.posthoc_dunn([list(values) for values in arrays], p_adjust="holm" if holm else None)
        p_values = frame.to_numpy(dtype=np.float64)
    # all-tied pairs have no defined statistic: no evidence of a difference
    p_values = np.where(np.isnan(p_values), 1.0, p_values)
    p_values = np.clip(p_values, np.finfo(np.float64).tiny, 1.0)
    p_values = 0.5 * (p_values + p_values.T)
    np.fill_diagonal(p_values, 1.0)
    return PairwiseMatrix(methods=names, p_values=p_values, test=method, adjusted=holm)


def neglog10_matrix(pairwise: PairwiseMatrix) -> HeatmapData:
    """Element-wise -log10(p) with p floored at 1e-300; flag cells at or above 1.30."""
    values = -np.log10(np.clip(pairwise.p_values, P_FLOOR, 1.0)) + 0.0
    return HeatmapData(methods=pairwise.methods, values=values, flags=values >= NEG_LOG10_THRESHOLD)


def compare_runs(results: RunResults, posthoc: str = "rank-sum", holm: bool = False):
    """
    Omnibus test plus post-hoc matrices for a set of methods.

    Returns:
        tuple: (KwResult, PairwiseMatrix, HeatmapData)
    """
    groups = results.groups()
    kw = kruskal_wallis(groups)
    pairwise = posthoc_pairwise(groups, method=posthoc, names=results.methods, holm=holm)
    return kw, pairwise, neglog10_matrix(pairwise)


def format_kw(kw: KwResult) -> str:
    verdict = "significant" if kw.significant else "not significant"
    note = " (degenerate: identical scores)" if kw.degenerate else ""
    return f"Kruskal-Wallis: H = {kw.h_statistic:.4f}, df = {kw.degrees_of_freedom}, p = {kw.p_value:.4e} ({verdict}){note}"


def render_heatmap_svg(heatmap: HeatmapData, path: str) -> None:
    """Lower-triangular -log10(p) heatmap with the 1.30 significance contour, written as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    size = len(heatmap.methods)
    masked = np.ma.masked_where(np.triu(np.ones((size, size), dtype=bool)), heatmap.values)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * size, 1.0 + 0.6 * size))
    image = ax.imshow(masked, cmap="viridis")
    if size > 1 and np.ptp(heatmap.values) > 0:
        ax.contour(heatmap.values, levels=[NEG_LOG10_THRESHOLD], colors="red", linewidths=1.0)
    ax.set_xticks(range(size), labels=heatmap.methods, rotation=90)
    ax.set_yticks(range(size), labels=heatmap.methods)
    fig.colorbar(image, ax=ax, label="-log10(p)")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)

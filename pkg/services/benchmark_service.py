"""
Benchmark Service Module - Repeated, seeded comparison of thresholding methods
Runs every method over independent splits, summarises median/std scores,
feeds the score lists to the statistics stage and writes the report files.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import database
from services.barcode_service import (
    BinaryMatrix,
    EmbeddingMatrix,
    LabelVector,
    binarize,
    packed_footprint,
    real_footprint,
)
from services.fitness_service import (
    EvalMetrics,
    SplitIndices,
    ThresholdFitness,
    TrainConfig,
    evaluate_features,
    stratified_split,
)
from services.search_service import (
    AUTO,
    CsConfig,
    optimize_feature_thresholds,
    optimize_global_threshold,
    refine_scalar,
)
from services.stats_service import (
    HeatmapData,
    KwResult,
    PairwiseMatrix,
    RunResults,
    compare_runs,
    format_kw,
)
from services.threshold_service import (
    DEFAULT_BIN_COUNT,
    DEFAULT_SIMPLE_THRESHOLD,
    GlobalThreshold,
    hybrid_threshold,
    minmax_binarize,
    otsu_threshold,
    simple_threshold,
)

logger = logging.getLogger(__name__)

ALL_METHODS = (
    "simple",
    "minmax",
    "otsu",
    "hybrid",
    "optimized-simple",
    "optimized-otsu",
    "optimized-hybrid",
    "cs-global",
    "cs-feature",
    "real-valued-reference",
)

HEADLINE_METRICS = ("accuracy", "macro_f1")

REPORT_FILES = ("report.txt", "report.csv", "posthoc.csv", "heatmap.csv", "heatmap_flags.csv")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything a benchmark needs besides the data; defaults mirror 15 runs per method."""
    maxiter: int
    runs: int = 15
    max_nfe: object = AUTO
    seed: int = 0
    validation_fraction: float = 0.2
    test_fraction: float = 0.0
    simple_threshold: float = DEFAULT_SIMPLE_THRESHOLD
    bin_count: int = DEFAULT_BIN_COUNT
    bounds: object = (-1.0, 1.0)
    reset_bounds_per_run: bool = True
    tol: Optional[float] = None
    window_half_width: float = 0.5
    metric: str = "accuracy"
    posthoc: str = "rank-sum"
    holm: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.runs < 2:
            raise ValueError(f"A benchmark needs at least 2 runs, got {self.runs}.")
        if self.metric not in HEADLINE_METRICS:
            raise ValueError(f"Unknown metric '{self.metric}', expected one of {HEADLINE_METRICS}.")

    def cs_config(self, seed: int) -> CsConfig:
        return CsConfig(
            maxiter=self.maxiter,
            max_nfe=self.max_nfe,
            initial_bounds=self.bounds,
            reset_bounds_per_run=self.reset_bounds_per_run,
            seed=seed,
            tol=self.tol,
            window_half_width=self.window_half_width,
        )


@dataclass(frozen=True)
class RunRecord:
    method: str
    run_index: int
    seed: int
    ok: bool
    message: str
    accuracy: float = math.nan
    macro_f1: float = math.nan
    test_accuracy: float = math.nan
    test_macro_f1: float = math.nan
    footprint_bytes: int = 0
    eval_ms: float = math.nan


@dataclass(frozen=True)
class MethodSummary:
    method: str
    runs: int
    median_accuracy: float
    std_accuracy: float
    median_macro_f1: float
    std_macro_f1: float
    median_test_accuracy: float
    footprint_bytes: int
    median_eval_ms: float


@dataclass
class BenchmarkReport:
    dataset: str
    config: BenchmarkConfig
    records: List[RunRecord]
    summaries: List[MethodSummary]
    kruskal: Optional[KwResult] = None
    pairwise: Optional[PairwiseMatrix] = None
    heatmap: Optional[HeatmapData] = None

    def scores(self, metric: Optional[str] = None) -> Dict[str, List[float]]:
        """Per-method score lists of successful runs, in method order."""
        metric = metric or self.config.metric
        out: Dict[str, List[float]] = {}
        for record in self.records:
            if record.ok:
                out.setdefault(record.method, []).append(getattr(record, metric))
        return out


def run_seeds(master_seed: int, runs: int) -> List[int]:
    """Run r uses the first 32-bit word of SeedSequence(master_seed).spawn(runs)[r]."""
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(master_seed).spawn(runs)]


def _scalar_start(method: str, train: EmbeddingMatrix, config: BenchmarkConfig) -> GlobalThreshold:
    if method == "simple":
        return simple_threshold(config.simple_threshold)
    if method == "otsu":
        return otsu_threshold(train, config.bin_count)
    return hybrid_threshold(train)


def run_method(
    method: str,
    matrix: EmbeddingMatrix,
    labels: LabelVector,
    split: SplitIndices,
    config: BenchmarkConfig,
    seed: int,
) -> Tuple[EvalMetrics, Optional[EvalMetrics], int, float]:
    """
    Fit one method on the training rows and score it.

    Returns:
        tuple: (validation metrics, test metrics or None, footprint in bytes,
                median milliseconds per fitness evaluation)
    """
    if method not in ALL_METHODS:
        raise ValueError(f"Unknown method '{method}', expected one of {ALL_METHODS}.")
    train = matrix.take(split.train_rows)
    fitness = ThresholdFitness(matrix, labels, split, config.train)
    cs_config = config.cs_config(seed)

    if method == "real-valued-reference":
        started = time.perf_counter()
        validation, test = evaluate_features(matrix, labels, split, config.train)
        return validation, test, real_footprint(matrix.n_samples, matrix.n_dims), _ms(time.perf_counter() - started)

    if method == "minmax":
        binary: BinaryMatrix = minmax_binarize(matrix)
    elif method in ("simple", "otsu", "hybrid"):
        binary = _scalar_start(method, train, config).apply(matrix)
    elif method.startswith("optimized-"):
        start = _scalar_start(method[len("optimized-"):], train, config)
        binary = refine_scalar(start, matrix, labels, fitness, cs_config).apply(matrix)
    elif method == "cs-global":
        threshold, _ = optimize_global_threshold(matrix, labels, fitness, cs_config)
        binary = threshold.apply(matrix)
    else:
        thresholds, _ = optimize_feature_thresholds(matrix, labels, fitness, cs_config)
        binary = binarize(matrix, thresholds)

    started = time.perf_counter()
    validation, test = evaluate_features(binary, labels, split, config.train)
    elapsed = time.perf_counter() - started
    eval_ms = _ms(float(np.median(fitness.timings))) if fitness.timings else _ms(elapsed)
    return validation, test, packed_footprint(binary), eval_ms


def _ms(seconds: float) -> float:
    return 1000.0 * seconds


def _summarise(method: str, records: Sequence[RunRecord]) -> MethodSummary:
    ok = [r for r in records if r.ok]

    def median(values):
        values = [v for v in values if not math.isnan(v)]
        return float(np.median(values)) if values else math.nan

    def std(values):
        return float(np.std(values, ddof=1)) if len(values) >= 2 else math.nan

    return MethodSummary(
        method=method,
        runs=len(ok),
        median_accuracy=median([r.accuracy for r in ok]),
        std_accuracy=std([r.accuracy for r in ok]),
        median_macro_f1=median([r.macro_f1 for r in ok]),
        std_macro_f1=std([r.macro_f1 for r in ok]),
        median_test_accuracy=median([r.test_accuracy for r in ok]),
        footprint_bytes=max((r.footprint_bytes for r in ok), default=0),
        median_eval_ms=median([r.eval_ms for r in ok]),
    )


def run_benchmark(
    dataset: str,
    matrix: EmbeddingMatrix,
    labels: LabelVector,
    methods: Sequence[str] = ALL_METHODS,
    config: Optional[BenchmarkConfig] = None,
    store: bool = True,
) -> BenchmarkReport:
    """
    Run every method config.runs times on fresh stratified splits.

    All methods share the split of a given run. A failing (method, run) pair is
    recorded with its message and the suite carries on. When store is set the
    runs replace any earlier runs of the dataset in the sqlite ledger.
    """
    config = config or BenchmarkConfig(maxiter=6)
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise ValueError(f"Unknown method(s) {unknown}, expected some of {ALL_METHODS}.")
    if len(labels) != matrix.n_samples:
        raise ValueError(f"Matrix has {matrix.n_samples} rows but labels have {len(labels)}.")

    records: List[RunRecord] = []
    seeds = run_seeds(config.seed, config.runs)
    for run_index, seed in enumerate(seeds):
        split = stratified_split(labels, config.validation_fraction, seed, config.test_fraction)
        for method in methods:
            try:
                validation, test, footprint, eval_ms = run_method(method, matrix, labels, split, config, seed)
            except Exception as exc:
                logger.error("Run %d of %s failed: %s", run_index, method, exc)
                records.append(RunRecord(method, run_index, seed, False, f"{type(exc).__name__}: {exc}"))
                continue
            records.append(
                RunRecord(
                    method, run_index, seed, True, "ok",
                    accuracy=validation.accuracy,
                    macro_f1=validation.macro_f1,
                    test_accuracy=test.accuracy if test else math.nan,
                    test_macro_f1=test.macro_f1 if test else math.nan,
                    footprint_bytes=footprint,
                    eval_ms=eval_ms,
                )
            )
        logger.info("Benchmark run %d/%d done.", run_index + 1, config.runs)

    summaries = [_summarise(m, [r for r in records if r.method == m]) for m in methods]
    report = BenchmarkReport(dataset=dataset, config=config, records=records, summaries=summaries)

    comparable = {m: s for m, s in report.scores().items() if len(s) >= 2}
    if len(comparable) >= 2:
        report.kruskal, report.pairwise, report.heatmap = compare_runs(
            RunResults(comparable), posthoc=config.posthoc, holm=config.holm
        )
    else:
        logger.warning("Fewer than 2 methods with 2+ successful runs; skipping significance tests.")

    if store:
        store_report(report)
    return report


def store_report(report: BenchmarkReport) -> Tuple[bool, str]:
    """Write every run to the sqlite ledger; returns (ok, message)."""
    database.init_database()
    if not database.clear_dataset(report.dataset):
        return False, f"Could not clear earlier runs of '{report.dataset}'."
    for r in report.records:
        stored = database.insert_run_record(
            report.dataset, r.method, r.run_index, r.seed, r.ok, r.message,
            accuracy=r.accuracy, macro_f1=r.macro_f1,
            test_accuracy=r.test_accuracy, test_macro_f1=r.test_macro_f1,
            footprint_bytes=r.footprint_bytes, eval_ms=r.eval_ms,
        )
        if not stored:
            logger.error("Could not store run %d of %s.", r.run_index, r.method)
            return False, f"Database error while storing run {r.run_index} of {r.method}."
    return True, f"Stored {len(report.records)} runs of '{report.dataset}'."


def _pm(median: float, std: float, scale: float = 100.0) -> str:
    if math.isnan(median):
        return "n/a"
    return f"{scale * median:.2f} ± {scale * std:.2f}" if not math.isnan(std) else f"{scale * median:.2f}"


def summary_frame(report: BenchmarkReport) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "method": s.method,
                "runs": s.runs,
                "median_accuracy": s.median_accuracy,
                "std_accuracy": s.std_accuracy,
                "median_macro_f1": s.median_macro_f1,
                "std_macro_f1": s.std_macro_f1,
                "median_test_accuracy": s.median_test_accuracy,
                "footprint_bytes": s.footprint_bytes,
            }
            for s in report.summaries
        ]
    )


def format_report_text(report: BenchmarkReport) -> str:
    """Human-readable table: median ± std in percent, one row per method."""
    config = report.config
    split_note = "validation split" + (", test split reported separately" if config.test_fraction else "")
    lines = [
        f"Dataset: {report.dataset}",
        f"Runs per method: {config.runs} (master seed {config.seed}, maxiter {config.maxiter}, {split_note})",
        f"Significance tests on: {config.metric}",
        "",
        f"{'method':<24}{'accuracy (%)':>18}{'macro-F1 (%)':>18}{'test acc (%)':>14}{'bytes':>12}  runs",
    ]
    for s in report.summaries:
        test = "n/a" if math.isnan(s.median_test_accuracy) else f"{100 * s.median_test_accuracy:.2f}"
        lines.append(
            f"{s.method:<24}{_pm(s.median_accuracy, s.std_accuracy):>18}"
            f"{_pm(s.median_macro_f1, s.std_macro_f1):>18}{test:>14}{s.footprint_bytes:>12}  {s.runs}"
        )
    failures = [r for r in report.records if not r.ok]
    if failures:
        lines.append("")
        lines.append("Failed runs:")
        lines.extend(f"  {r.method} run {r.run_index}: {r.message}" for r in failures)
    lines.append("")
    if report.kruskal is not None:
        lines.append(format_kw(report.kruskal))
        lines.append(f"Post-hoc: {report.pairwise.test}{' (Holm adjusted)' if report.pairwise.adjusted else ''}")
        lines.append(report.pairwise.to_frame().to_string(float_format=lambda v: f"{v:.3e}"))
    else:
        lines.append("Kruskal-Wallis: skipped (not enough successful runs)")
    return "\n".join(lines) + "\n"


def write_report(report: BenchmarkReport, out_dir) -> List[Path]:
    """
    Write the deterministic report files plus timing.csv (wall-clock, varies between runs).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.txt", out / "report.csv"]
    written[0].write_text(format_report_text(report))
    summary_frame(report).to_csv(written[1], index=False, float_format="%.6f", lineterminator="\n")
    if report.pairwise is not None:
        report.pairwise.to_frame().to_csv(out / "posthoc.csv", float_format="%.6e", lineterminator="\n")
        report.heatmap.to_frame().to_csv(out / "heatmap.csv", float_format="%.6f", lineterminator="\n")
        report.heatmap.flags_frame().to_csv(out / "heatmap_flags.csv", lineterminator="\n")
        written += [out / "posthoc.csv", out / "heatmap.csv", out / "heatmap_flags.csv"]
    timing = pd.DataFrame(
        [{"method": s.method, "median_eval_ms": s.median_eval_ms} for s in report.summaries]
    )
    timing.to_csv(out / "timing.csv", index=False, float_format="%.3f", lineterminator="\n")
    written.append(out / "timing.csv")
    return written
"""
Search Service Module - Coordinate search over binarization thresholds
Per-feature interval-halving search (CS-Feature), the same search on one shared
threshold (CS-Global), and 1-D refinement of a classical scalar cut-point.
"""
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from services.barcode_service import EmbeddingMatrix, LabelVector, ThresholdVector
from services.fitness_service import TrainingError
from services.threshold_service import GlobalThreshold

logger = logging.getLogger(__name__)

AUTO = "auto"
DEFAULT_BOUNDS = (-1.0, 1.0)
DEFAULT_WINDOW_HALF_WIDTH = 0.5

# X must score strictly higher to win, so Y takes every tie
TIE_RULE = "Y"

Fitness = Callable[[ThresholdVector], float]


@dataclass(eq=False)
class BoundsState:
    """Per-dimension search interval [lower, upper]. Single owner, mutated in place by shrink()."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.array(self.lower, dtype=np.float64).reshape(-1)
        self.upper = np.array(self.upper, dtype=np.float64).reshape(-1)
        if self.lower.shape != self.upper.shape or self.lower.size == 0:
            raise ValueError("Lower and upper bounds must be non-empty and of equal length.")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("Bounds must be finite.")
        if np.any(self.lower > self.upper):
            raise ValueError("Every lower bound must not exceed its upper bound.")

    @classmethod
    def uniform(cls, n_dims: int, low: float = DEFAULT_BOUNDS[0], high: float = DEFAULT_BOUNDS[1]) -> "BoundsState":
        return cls(np.full(n_dims, float(low)), np.full(n_dims, float(high)))

    @property
    def n_dims(self) -> int:
        return int(self.lower.size)

    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def centers(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def copy(self) -> "BoundsState":
        return BoundsState(self.lower.copy(), self.upper.copy())


BoundsSpec = Union[Tuple[float, float], str, BoundsState]


@dataclass(frozen=True)
class CsConfig:
    """
    Coordinate search settings.

    Args:
        maxiter: Sweeps per run; each sweep visits every dimension once.
        max_nfe: Evaluation budget, or "auto" for n_samples * maxiter * 2.
        initial_bounds: (low, high) for every dimension, "data" for each
            dimension's observed [min, max], or an explicit BoundsState.
        reset_bounds_per_run: Restart every run from the initial bounds. Off
            reproduces the printed pseudocode, where later runs inherit shrunk bounds.
        seed: Master seed; per-run permutation seeds are spawned from it.
        tol: Stop a run early when a full sweep improves its fitness by less than tol.
        window_half_width: Search window around the start point for refine_scalar.
    """
    maxiter: int
    max_nfe: Union[int, str] = AUTO
    initial_bounds: BoundsSpec = DEFAULT_BOUNDS
    reset_bounds_per_run: bool = True
    seed: int = 0
    tol: Optional[float] = None
    window_half_width: float = DEFAULT_WINDOW_HALF_WIDTH
    tie_rule: str = TIE_RULE

    def __post_init__(self):
        if int(self.maxiter) < 1:
            raise ValueError(f"maxiter must be at least 1, got {self.maxiter}.")
        if self.max_nfe != AUTO and int(self.max_nfe) < 1:
            raise ValueError(f"max_nfe must be 'auto' or a positive count, got {self.max_nfe}.")
        if self.tie_rule != TIE_RULE:
            raise ValueError("Only the 'Y wins ties' rule is supported.")
        if self.window_half_width < 0:
            raise ValueError("window_half_width must be non-negative.")
        if isinstance(self.initial_bounds, str) and self.initial_bounds != "data":
            raise ValueError(f"Unknown bounds spec '{self.initial_bounds}'.")
        if isinstance(self.initial_bounds, tuple):
            low, high = self.initial_bounds
            if not low < high:
                raise ValueError(f"Bounds must satisfy low < high, got {self.initial_bounds}.")

    def describe(self) -> str:
        bounds = self.initial_bounds if not isinstance(self.initial_bounds, BoundsState) else "explicit"
        return (
            f"maxiter={self.maxiter} max_nfe={self.max_nfe} bounds={bounds} "
            f"reset_bounds_per_run={self.reset_bounds_per_run} tol={self.tol}"
        )


@dataclass(frozen=True)
class CandidatePair:
    x_value: float
    y_value: float
    x_fitness: float = math.nan
    y_fitness: float = math.nan


@dataclass(frozen=True)
class Decision:
    """One coordinate-search step: both candidates, their fitness, the winner and the new interval."""
    run: int
    iteration: int
    dim: int
    x_value: float
    y_value: float
    x_fitness: float
    y_fitness: float
    winner: str
    lower: float
    upper: float

    @classmethod
    def from_pair(cls, run: int, iteration: int, dim: int, pair: CandidatePair, winner: str,
                  bounds: BoundsState) -> "Decision":
        return cls(run, iteration, dim, pair.x_value, pair.y_value, pair.x_fitness, pair.y_fitness, winner,
                   float(bounds.lower[dim]), float(bounds.upper[dim]))

    def to_record(self) -> Dict:
        return {"kind": "decision", **self.__dict__}


@dataclass
class OptimizationTrace:
    """
    Audit log of a search.

    n_evaluations counts Evaluate requests (two per decision, one per completed
    run); n_fitness_calls counts those that reached the fitness function after
    memoisation. initial_fitness is the baseline evaluation of the all-zeros S*.
    """
    r_max: int
    initial_fitness: float = math.nan
    decisions: List[Decision] = field(default_factory=list)
    run_fitness: List[float] = field(default_factory=list)
    best_fitness: List[float] = field(default_factory=list)
    aborted_runs: List[Tuple[int, str]] = field(default_factory=list)
    n_evaluations: int = 0
    n_fitness_calls: int = 0

    def iter_records(self) -> Iterator[Dict]:
        yield {"kind": "start", "r_max": self.r_max, "initial_fitness": self.initial_fitness}
        for decision in self.decisions:
            yield decision.to_record()
        for run, (fitness, best) in enumerate(zip(self.run_fitness, self.best_fitness)):
            yield {"kind": "run", "run": run, "fitness": fitness, "best_fitness": best}
        for run, message in self.aborted_runs:
            yield {"kind": "aborted", "run": run, "message": message}
        yield {
            "kind": "summary",
            "n_evaluations": self.n_evaluations,
            "n_fitness_calls": self.n_fitness_calls,
        }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(record, sort_keys=True) + "\n" for record in self.iter_records())


def cs_candidates(bounds: BoundsState, dim: int) -> CandidatePair:
    """
    Centres of the two halves of [L, U]: x = L + (U-L)/4, y = U - (U-L)/4.

    Raises:
        ValueError: dim out of range or a collapsed interval (U <= L).
    """
    if not 0 <= dim < bounds.n_dims:
        raise ValueError(f"Dimension {dim} out of range for {bounds.n_dims} dimensions.")
    low, high = float(bounds.lower[dim]), float(bounds.upper[dim])
    if high <= low:
        raise ValueError(f"Collapsed interval on dimension {dim}: [{low}, {high}].")
    quarter = 0.25 * (high - low)
    return CandidatePair(x_value=low + quarter, y_value=high - quarter)


def interval_exhausted(bounds: BoundsState, dim: int) -> bool:
    """
    True once halving can no longer make progress on dim in 64-bit floats:
    the quarter points and midpoint are not strictly ordered inside (L, U).
    """
    low, high = float(bounds.lower[dim]), float(bounds.upper[dim])
    quarter = 0.25 * (high - low)
    center = 0.5 * (low + high)
    return not (low < low + quarter < center < high - quarter < high)


def shrink(bounds: BoundsState, dim: int, winner: str) -> BoundsState:
    """Keep the winning half of dimension dim: X keeps [L, C], Y keeps [C, U]."""
    if not 0 <= dim < bounds.n_dims:
        raise ValueError(f"Dimension {dim} out of range for {bounds.n_dims} dimensions.")
    center = 0.5 * (bounds.lower[dim] + bounds.upper[dim])
    if winner == "X":
        bounds.upper[dim] = center
    elif winner == "Y":
        bounds.lower[dim] = center
    else:
        raise ValueError(f"Winner must be 'X' or 'Y', got {winner!r}.")
    return bounds


def compute_rmax(n_samples: int, n_dims: int, maxiter: int, max_nfe: Union[int, str] = AUTO) -> int:
    """R_max = max(1, floor(MaxNFE / (2 * D * maxiter))), MaxNFE = n_samples * maxiter * 2 when auto."""
    if min(n_samples, n_dims, maxiter) < 1:
        raise ValueError("n_samples, n_dims and maxiter must all be at least 1.")
    budget = n_samples * maxiter * 2 if max_nfe == AUTO else int(max_nfe)
    return max(1, budget // (2 * n_dims * maxiter))


def initial_bounds_for(matrix: EmbeddingMatrix, config: CsConfig, n_dims: Optional[int] = None) -> BoundsState:
    """
    Starting BoundsState for a search over n_dims coordinates (default: one per feature).
    A single coordinate standing for every feature gets the pooled range.
    """
    n_dims = matrix.n_dims if n_dims is None else n_dims
    spec = config.initial_bounds
    if isinstance(spec, BoundsState):
        if spec.n_dims == n_dims:
            return spec.copy()
        if n_dims == 1:
            return BoundsState([spec.lower.min()], [spec.upper.max()])
        raise ValueError(f"Bounds cover {spec.n_dims} dimensions, search has {n_dims}.")
    if spec == "data":
        if n_dims == 1:
            low, high = matrix.value_range()
            return BoundsState([low], [high])
        return BoundsState(matrix.values.min(axis=0), matrix.values.max(axis=0))

    low, high = spec
    data_low, data_high = matrix.value_range()
    if data_low < low or data_high > high:
        logger.warning(
            "Data range [%g, %g] exceeds search bounds [%g, %g]; consider per-feature data bounds.",
            data_low, data_high, low, high,
        )
    return BoundsState.uniform(n_dims, low, high)


BASE_KEY = (-1, 0.0)


class _MemoFitness:
    """
    Memoises fitness within one bounds epoch and counts requests.

    Keys are (dimension, candidate value); BASE_KEY stands for the working
    vector itself. The epoch ends whenever the working vector changes, so the
    cache never holds more than one decision's worth of entries.
    """

    def __init__(self, fitness: Fitness, expand: Callable[[np.ndarray], ThresholdVector], trace: OptimizationTrace):
        self.fitness = fitness
        self.expand = expand
        self.trace = trace
        self.epoch = 0
        self.cache: Dict[Tuple[int, float], float] = {}

    def advance(self, base_fitness: Optional[float] = None) -> None:
        self.epoch += 1
        self.cache.clear()
        if base_fitness is not None:
            self.cache[BASE_KEY] = base_fitness

    def __call__(self, point: np.ndarray, key: Optional[Tuple[int, float]] = None, counted: bool = True) -> float:
        if counted:
            self.trace.n_evaluations += 1
        if key is not None and key in self.cache:
            return self.cache[key]
        value = float(self.fitness(self.expand(point)))
        if not math.isfinite(value):
            raise ValueError(f"Fitness returned a non-finite value ({value}).")
        if counted:
            self.trace.n_fitness_calls += 1
        if key is not None:
            self.cache[key] = value
        return value


def _coordinate_search(
    evaluate: _MemoFitness,
    initial: BoundsState,
    config: CsConfig,
    r_max: int,
    trace: OptimizationTrace,
) -> Tuple[np.ndarray, float]:
    n_dims = initial.n_dims
    best = np.zeros(n_dims)
    best_fitness = evaluate(best, counted=False)
    trace.initial_fitness = best_fitness

    run_seeds = np.random.SeedSequence(config.seed).spawn(r_max)
    bounds = initial.copy()
    for run in range(r_max):
        if config.reset_bounds_per_run:
            bounds = initial.copy()
        rng = np.random.default_rng(run_seeds[run])
        x = bounds.centers()
        y = x.copy()
        s = x.copy()
        evaluate.advance()
        order = rng.permutation(n_dims)
        sweep_start: Optional[float] = None
        s_fitness = math.nan
        try:
            for iteration in range(config.maxiter):
                for dim in order:
                    dim = int(dim)
                    if interval_exhausted(bounds, dim):
                        # frozen at float resolution: keep S[dim], make no decision
                        continue
                    pair = cs_candidates(bounds, dim)
                    x[dim] = pair.x_value
                    y[dim] = pair.y_value
                    fx = evaluate(x, key=(dim, pair.x_value))
                    fy = evaluate(y, key=(dim, pair.y_value))
                    pair = replace(pair, x_fitness=fx, y_fitness=fy)
                    if fx > fy:
                        s, winner, s_fitness = x.copy(), "X", fx
                    else:
                        s, winner, s_fitness = y.copy(), "Y", fy
                    shrink(bounds, dim, winner)
                    evaluate.advance(base_fitness=s_fitness)
                    trace.decisions.append(Decision.from_pair(run, iteration, dim, pair, winner, bounds))
                    logger.debug("run %d iter %d dim %d: X=%g (%g) Y=%g (%g) -> %s",
                                 run, iteration, dim, pair.x_value, fx, pair.y_value, fy, winner)
                    x = s.copy()
                    y = s.copy()
                if config.tol is not None and sweep_start is not None and s_fitness - sweep_start < config.tol:
                    logger.info("Run %d stopped after %d sweeps (improvement below %g).",
                                run, iteration + 1, config.tol)
                    break
                sweep_start = s_fitness
            run_fitness = evaluate(s, key=BASE_KEY)
        except TrainingError as exc:
            logger.error("Run %d aborted: %s", run, exc)
            trace.aborted_runs.append((run, str(exc)))
            continue

        # the first finished run replaces the untouched starting point on a tie
        if run_fitness > best_fitness or (not trace.run_fitness and run_fitness >= best_fitness):
            best, best_fitness = s.copy(), run_fitness
        trace.run_fitness.append(run_fitness)
        trace.best_fitness.append(best_fitness)
        logger.info("Run %d/%d finished: fitness %.6f, best %.6f.", run + 1, r_max, run_fitness, best_fitness)

    if len(trace.aborted_runs) == r_max:
        raise TrainingError(f"All {r_max} coordinate-search runs aborted; last error: {trace.aborted_runs[-1][1]}")
    return best, best_fitness


def _check_pairing(matrix: EmbeddingMatrix, labels: Optional[LabelVector]) -> None:
    if labels is not None and len(labels) != matrix.n_samples:
        raise ValueError(f"Matrix has {matrix.n_samples} rows but labels have {len(labels)}.")


def optimize_feature_thresholds(
    matrix: EmbeddingMatrix,
    labels: Optional[LabelVector],
    fitness: Fitness,
    config: CsConfig,
) -> Tuple[ThresholdVector, OptimizationTrace]:
    """
    CS-Feature: one optimised cut-point per embedding dimension.

    Args:
        matrix: Embeddings being binarized.
        labels: Class ids paired with matrix rows (checked for length only;
            the fitness callable owns the classifier).
        fitness: Deterministic map from a ThresholdVector to a score to maximise.
        config: Search settings.

    Returns:
        tuple: (best ThresholdVector S*, OptimizationTrace)
    """
    _check_pairing(matrix, labels)
    initial = initial_bounds_for(matrix, config)
    r_max = compute_rmax(matrix.n_samples, matrix.n_dims, config.maxiter, config.max_nfe)
    trace = OptimizationTrace(r_max=r_max)
    evaluate = _MemoFitness(fitness, ThresholdVector, trace)
    logger.info("CS-Feature: D=%d, R_max=%d, %s", matrix.n_dims, r_max, config.describe())
    best, _ = _coordinate_search(evaluate, initial, config, r_max, trace)
    return ThresholdVector(best), trace


def optimize_global_threshold(
    matrix: EmbeddingMatrix,
    labels: Optional[LabelVector],
    fitness: Fitness,
    config: CsConfig,
) -> Tuple[GlobalThreshold, OptimizationTrace]:
    """CS-Global: the same halving search on one scalar shared by every feature (D = 1 bookkeeping)."""
    _check_pairing(matrix, labels)
    initial = initial_bounds_for(matrix, config, n_dims=1)
    r_max = compute_rmax(matrix.n_samples, 1, config.maxiter, config.max_nfe)
    trace = OptimizationTrace(r_max=r_max)
    evaluate = _MemoFitness(fitness, lambda point: ThresholdVector.constant(point[0], matrix.n_dims), trace)
    logger.info("CS-Global: R_max=%d, %s", r_max, config.describe())
    best, _ = _coordinate_search(evaluate, initial, config, r_max, trace)
    return GlobalThreshold(float(best[0]), "cs-global"), trace


def refine_scalar(
    start: GlobalThreshold,
    matrix: EmbeddingMatrix,
    labels: Optional[LabelVector],
    fitness: Fitness,
    config: CsConfig,
) -> GlobalThreshold:
    """
    Fine-tune a classical cut-point with a 1-D halving search.

    The window [start - h, start + h] is clamped to the global bounds; one run
    of maxiter decisions is made and the best evaluated point wins, the start
    itself included (it wins ties), so the result is never worse than start.
    """
    _check_pairing(matrix, labels)
    global_bounds = initial_bounds_for(matrix, config, n_dims=1)
    low = max(start.value - config.window_half_width, float(global_bounds.lower[0]))
    high = min(start.value + config.window_half_width, float(global_bounds.upper[0]))
    if not high > low:
        logger.info("Empty refinement window around %g; keeping the start point.", start.value)
        return GlobalThreshold(start.value, f"optimized-{start.method_tag}")

    def score(value: float) -> float:
        result = float(fitness(ThresholdVector.constant(value, matrix.n_dims)))
        if not math.isfinite(result):
            raise ValueError(f"Fitness returned a non-finite value ({result}).")
        return result

    best_value, best_fitness = start.value, score(start.value)
    bounds = BoundsState([low], [high])
    for iteration in range(config.maxiter):
        if interval_exhausted(bounds, 0):
            logger.debug("Refinement window exhausted after %d decisions.", iteration)
            break
        pair = cs_candidates(bounds, 0)
        fx, fy = score(pair.x_value), score(pair.y_value)
        winner = "X" if fx > fy else "Y"
        shrink(bounds, 0, winner)
        for value, value_fitness in ((pair.x_value, fx), (pair.y_value, fy)):
            if value_fitness > best_fitness:
                best_value, best_fitness = value, value_fitness
    logger.info("Refined %s cut-point %g -> %g (fitness %.6f).", start.method_tag, start.value, best_value, best_fitness)
    return GlobalThreshold(best_value, f"optimized-{start.method_tag}")

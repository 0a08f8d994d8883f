"""
Fitness Service Module - Classifier-based evaluation of barcodes
Stratified splitting, a deterministic multinomial logistic regression,
accuracy / macro-F1 metrics and the threshold fitness used by coordinate search.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax
from sklearn.metrics import accuracy_score, f1_score

from services.barcode_service import (
    BinaryMatrix,
    EmbeddingMatrix,
    LabelVector,
    ThresholdVector,
    binarize,
    update_column,
)

logger = logging.getLogger(__name__)

DEFAULT_VALIDATION_FRACTION = 0.2

FITNESS_METRICS = ("macro_f1", "accuracy")

Features = Union[BinaryMatrix, EmbeddingMatrix, np.ndarray]


class TrainingError(RuntimeError):
    """Raised when classifier training cannot produce a finite model."""


@dataclass(frozen=True, eq=False)
class SplitIndices:
    train_rows: np.ndarray
    validation_rows: np.ndarray
    test_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


@dataclass(frozen=True)
class TrainConfig:
    """
    Classifier settings. Defaults give a convex, deterministic fit from a zero start.

    max_epochs bounds the number of full-batch L-BFGS iterations; tolerance is the
    gradient-norm stopping rule. seed is kept for interface symmetry; zero
    initialisation never draws from it.
    """
    l2_penalty: float = 1e-4
    max_epochs: int = 200
    tolerance: float = 1e-6
    seed: Optional[int] = None
    record_history: bool = False

    def __post_init__(self):
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative.")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1.")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive.")


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    """Softmax regression weights; the last column of weights is the bias."""
    weights: np.ndarray
    n_classes: int
    n_dims: int
    epochs: int
    final_loss: float
    converged: bool
    loss_history: Tuple[float, ...] = ()

    def scores(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights[:, :-1].T + self.weights[:, -1]


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    macro_f1: float
    per_class_f1: Tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class_f1": list(self.per_class_f1),
        }


def stratified_split(
    labels: LabelVector,
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION,
    seed: int = 0,
    test_fraction: float = 0.0,
) -> SplitIndices:
    """
    Per-class proportional split into train / validation (/ test) rows.

    Each class contributes round(fraction * class_size) rows to validation
    (and to test), clamped so that every class keeps at least one training
    row and one validation row.

    Raises:
        ValueError: fraction outside (0, 1), or a class with fewer than 2 samples.
    """
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError(f"validation_fraction must be in (0, 1), got {validation_fraction}.")
    if not 0.0 <= test_fraction < 1.0 or validation_fraction + test_fraction >= 1.0:
        raise ValueError("test_fraction must be in [0, 1) and leave room for training rows.")
    counts = labels.class_counts()
    for cls, count in enumerate(counts):
        if count < 2:
            raise ValueError(f"Class {cls} has {int(count)} sample(s); stratified split needs at least 2.")

    rng = np.random.default_rng(seed)
    train, validation, test = [], [], []
    for cls in range(labels.n_classes):
        members = rng.permutation(np.flatnonzero(labels.labels == cls))
        size = members.size
        n_val = int(np.clip(np.floor(validation_fraction * size + 0.5), 1, size - 1))
        n_test = int(np.clip(np.floor(test_fraction * size + 0.5), 0, size - 1 - n_val))
        validation.append(members[:n_val])
        test.append(members[n_val:n_val + n_test])
        train.append(members[n_val + n_test:])

    return SplitIndices(
        train_rows=np.sort(np.concatenate(train)),
        validation_rows=np.sort(np.concatenate(validation)),
        test_rows=np.sort(np.concatenate(test)).astype(np.int64),
    )


def feature_array(features: Features) -> np.ndarray:
    """Dense float64 view of barcodes ({0,1} reals), embeddings or a raw array."""
    if isinstance(features, BinaryMatrix):
        return features.to_features()
    if isinstance(features, EmbeddingMatrix):
        return features.values.astype(np.float64)
    return np.asarray(features, dtype=np.float64)


def softmax_loss_and_grad(
    params: np.ndarray, features: np.ndarray, targets: np.ndarray, n_classes: int, l2_penalty: float
) -> Tuple[float, np.ndarray]:
    """
    Mean cross-entropy plus (l2/2)||W||^2 (bias excluded) and its gradient.

    Args:
        params: Flattened (n_classes, n_dims + 1) weights, bias last.
        features: (n_rows, n_dims) float array.
        targets: (n_rows,) integer class ids.
    """
    n_rows, n_dims = features.shape
    weights = params.reshape(n_classes, n_dims + 1)
    scores = features @ weights[:, :-1].T + weights[:, -1]
    log_norm = logsumexp(scores, axis=1)
    loss = float(np.mean(log_norm - scores[np.arange(n_rows), targets]))
    loss += 0.5 * l2_penalty * float(np.sum(weights[:, :-1] ** 2))

    residual = softmax(scores, axis=1)
    residual[np.arange(n_rows), targets] -= 1.0
    residual /= n_rows
    grad = np.empty_like(weights)
    grad[:, :-1] = residual.T @ features + l2_penalty * weights[:, :-1]
    grad[:, -1] = residual.sum(axis=0)
    return loss, grad.ravel()


def train_logistic(
    features: Features,
    labels: LabelVector,
    rows: np.ndarray,
    config: TrainConfig = TrainConfig(),
) -> ClassifierModel:
    """
    Fit a multinomial logistic regression on the given rows.

    Full-batch L-BFGS from all-zero weights; no randomness is involved.

    Raises:
        ValueError: Empty rows or mismatched lengths.
        TrainingError: The loss became non-finite.
    """
    data = feature_array(features)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("Training rows must not be empty.")
    if data.shape[0] != len(labels):
        raise ValueError(f"Features have {data.shape[0]} rows but labels have {len(labels)}.")

    x, y = data[rows], labels.labels[rows]
    n_classes, n_dims = labels.n_classes, data.shape[1]

    def objective(params):
        loss, grad = softmax_loss_and_grad(params, x, y, n_classes, config.l2_penalty)
        if not np.isfinite(loss):
            raise TrainingError(f"Non-finite training loss ({loss}) on {rows.size} rows.")
        return loss, grad

    history: List[float] = []
    params0 = np.zeros(n_classes * (n_dims + 1))
    if config.record_history:
        history.append(objective(params0)[0])

    def record(params):
        history.append(objective(params)[0])

    result = minimize(
        objective,
        params0,
        jac=True,
        method="L-BFGS-B",
        callback=record if config.record_history else None,
        options={"maxiter": config.max_epochs, "gtol": config.tolerance},
    )
    final_loss, final_grad = objective(result.x)
    converged = bool(np.linalg.norm(final_grad) < config.tolerance)
    if not converged:
        logger.debug("Classifier stopped after %d epochs without converging: %s", result.nit, result.message)

    return ClassifierModel(
        weights=result.x.reshape(n_classes, n_dims + 1),
        n_classes=n_classes,
        n_dims=n_dims,
        epochs=int(result.nit),
        final_loss=final_loss,
        converged=converged,
        loss_history=tuple(history),
    )


def predict(model: ClassifierModel, features: Features) -> LabelVector:
    """Row-wise argmax of class scores; ties go to the lowest class id."""
    data = feature_array(features)
    if data.ndim != 2 or data.shape[1] != model.n_dims:
        raise ValueError(f"Feature width {data.shape[-1]} does not match model width {model.n_dims}.")
    return LabelVector(np.argmax(model.scores(data), axis=1), n_classes=model.n_classes, validate=False)


def metrics(predicted: LabelVector, truth: LabelVector, n_classes: Optional[int] = None) -> EvalMetrics:
    """
    Accuracy, per-class F1 and their unweighted mean (macro-F1).
    Undefined precision/recall count as 0, so a class absent from both sides scores 0.
    """
    if len(predicted) != len(truth):
        raise ValueError(f"Predicted length {len(predicted)} does not match truth length {len(truth)}.")
    n_classes = n_classes or max(predicted.n_classes, truth.n_classes)
    per_class = f1_score(
        truth.labels, predicted.labels, labels=np.arange(n_classes), average=None, zero_division=0
    )
    return EvalMetrics(
        accuracy=float(accuracy_score(truth.labels, predicted.labels)),
        macro_f1=float(np.mean(per_class)),
        per_class_f1=tuple(float(v) for v in per_class),
    )


def score_rows(model: ClassifierModel, features: Features, labels: LabelVector, rows: np.ndarray) -> EvalMetrics:
    data = feature_array(features)[rows]
    truth = LabelVector(labels.labels[rows], n_classes=labels.n_classes, validate=False)
    return metrics(predict(model, data), truth, labels.n_classes)


def evaluate_features(
    features: Features,
    labels: LabelVector,
    split: SplitIndices,
    config: TrainConfig = TrainConfig(),
) -> Tuple[EvalMetrics, Optional[EvalMetrics]]:
    """
    Train on split.train_rows and score validation (and test, when present).

    Returns:
        tuple: (validation metrics, test metrics or None)
    """
    data = feature_array(features)
    model = train_logistic(data, labels, split.train_rows, config)
    validation = score_rows(model, data, labels, split.validation_rows)
    test = score_rows(model, data, labels, split.test_rows) if split.test_rows.size else None
    return validation, test


def evaluate_threshold(
    matrix: EmbeddingMatrix,
    labels: LabelVector,
    thresholds: ThresholdVector,
    split: SplitIndices,
    config: TrainConfig = TrainConfig(),
) -> EvalMetrics:
    """Binarize with the thresholds, train on the train rows, score the validation rows."""
    return evaluate_features(binarize(matrix, thresholds), labels, split, config)[0]


class ThresholdFitness:
    """
    Fitness contract for coordinate search: ThresholdVector -> validation score.

    The barcode of the last evaluated vector is kept, and a new vector that
    differs in a few dimensions is rebuilt with update_column instead of a
    full binarize. Both paths give identical bits.
    """

    def __init__(
        self,
        matrix: EmbeddingMatrix,
        labels: LabelVector,
        split: SplitIndices,
        config: TrainConfig = TrainConfig(),
        metric: str = "macro_f1",
        max_incremental: int = 8,
    ):
        if metric not in FITNESS_METRICS:
            raise ValueError(f"Unknown fitness metric '{metric}', expected one of {FITNESS_METRICS}.")
        if matrix.n_samples != len(labels):
            raise ValueError(f"Matrix has {matrix.n_samples} rows but labels have {len(labels)}.")
        self.matrix = matrix
        self.labels = labels
        self.split = split
        self.config = config
        self.metric = metric
        self.max_incremental = max_incremental
        self.n_calls = 0
        self.timings: List[float] = []
        self._anchor: Optional[BinaryMatrix] = None
        self._anchor_cutpoints: Optional[np.ndarray] = None

    def barcodes(self, thresholds: ThresholdVector) -> BinaryMatrix:
        cutpoints = thresholds.cutpoints
        if self._anchor is None or self._anchor_cutpoints.size != cutpoints.size:
            binary = binarize(self.matrix, thresholds)
        else:
            changed = np.flatnonzero(cutpoints != self._anchor_cutpoints)
            if changed.size > self.max_incremental:
                binary = binarize(self.matrix, thresholds)
            else:
                binary = self._anchor
                for dim in changed:
                    binary = update_column(binary, self.matrix, int(dim), float(cutpoints[dim]))
        self._anchor = binary
        self._anchor_cutpoints = cutpoints.copy()
        return binary

    def evaluate(self, thresholds: ThresholdVector) -> EvalMetrics:
        started = time.perf_counter()
        validation, _ = evaluate_features(self.barcodes(thresholds), self.labels, self.split, self.config)
        self.timings.append(time.perf_counter() - started)
        self.n_calls += 1
        return validation

    def __call__(self, thresholds: ThresholdVector) -> float:
        return float(getattr(self.evaluate(thresholds), self.metric))

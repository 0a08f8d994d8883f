import math

import numpy as np
import pytest

from services.barcode_service import BinaryMatrix, EmbeddingMatrix, LabelVector, ThresholdVector, binarize
from services.fitness_service import (
    ClassifierModel,
    SplitIndices,
    ThresholdFitness,
    TrainConfig,
    TrainingError,
    evaluate_features,
    evaluate_threshold,
    metrics,
    predict,
    softmax_loss_and_grad,
    stratified_split,
    train_logistic,
)


def balanced_labels(per_class, n_classes):
    return LabelVector(np.repeat(np.arange(n_classes), per_class))


def test_split_one_per_class():
    """
    positive, 4+4 labels at fraction 0.25 put exactly one of each class in validation
    """
    labels = LabelVector([0, 0, 0, 0, 1, 1, 1, 1])
    split = stratified_split(labels, 0.25, seed=1)
    assert sorted(labels.labels[split.validation_rows].tolist()) == [0, 1]
    assert len(split.train_rows) == 6
    assert split.test_rows.size == 0


def test_split_deterministic():
    """
    positive, same inputs and seed give identical indices
    """
    labels = balanced_labels(30, 3)
    first = stratified_split(labels, 0.2, seed=42)
    second = stratified_split(labels, 0.2, seed=42)
    assert np.array_equal(first.train_rows, second.train_rows)
    assert np.array_equal(first.validation_rows, second.validation_rows)


def test_split_counts_per_class():
    """
    positive, 1000 balanced samples over 4 classes at 0.2 give 50 validation rows per class
    """
    labels = LabelVector(np.random.default_rng(0).permutation(np.arange(1000) % 4))
    split = stratified_split(labels, 0.2, seed=3)
    assert np.bincount(labels.labels[split.validation_rows]).tolist() == [50, 50, 50, 50]
    assert set(split.train_rows.tolist()).isdisjoint(split.validation_rows.tolist())
    assert len(split.train_rows) + len(split.validation_rows) == 1000


def test_split_with_test_rows():
    """
    positive, an optional test split is stratified and disjoint from the others
    """
    labels = balanced_labels(50, 2)
    split = stratified_split(labels, 0.2, seed=5, test_fraction=0.2)
    assert np.bincount(labels.labels[split.test_rows]).tolist() == [10, 10]
    rows = np.concatenate([split.train_rows, split.validation_rows, split.test_rows])
    assert sorted(rows.tolist()) == list(range(100))


def test_split_singleton_class():
    """
    negative, a class with a single sample cannot be split and is named
    """
    with pytest.raises(ValueError) as err:
        stratified_split(LabelVector([0, 0, 0, 1]), 0.25)
    assert "Class 1" in str(err.value)
    with pytest.raises(ValueError):
        stratified_split(balanced_labels(5, 2), 1.5)


def test_train_separable_one_feature():
    """
    positive, {0 -> class 0, 1 -> class 1} x 20 is fit perfectly on the training rows
    """
    features = np.tile([[0.0], [1.0]], (20, 1))
    labels = LabelVector(np.tile([0, 1], 20))
    rows = np.arange(40)
    model = train_logistic(features, labels, rows)
    assert np.array_equal(predict(model, features).labels, labels.labels)
    assert metrics(predict(model, features), labels).accuracy == 1.0


def test_zero_start_loss_is_ln2():
    """
    positive, the untrained model on balanced binary data has loss ln 2 per sample
    """
    features = np.random.default_rng(1).normal(size=(20, 3))
    labels = balanced_labels(10, 2)
    model = train_logistic(features, labels, np.arange(20), TrainConfig(record_history=True))
    assert model.loss_history[0] == pytest.approx(math.log(2), rel=1e-12)
    assert model.final_loss < math.log(2)


def test_gradient_matches_finite_differences():
    """
    positive, analytic gradient vs central differences at 5 random points, 40x6 and 3 classes
    """
    gen = np.random.default_rng(7)
    features = gen.normal(size=(40, 6))
    targets = gen.integers(0, 3, size=40)
    step = 1e-5
    for _ in range(5):
        params = gen.normal(scale=0.5, size=3 * 7)
        _, grad = softmax_loss_and_grad(params, features, targets, 3, 1e-3)
        numeric = np.empty_like(params)
        for i in range(params.size):
            bump = np.zeros_like(params)
            bump[i] = step
            up, _ = softmax_loss_and_grad(params + bump, features, targets, 3, 1e-3)
            down, _ = softmax_loss_and_grad(params - bump, features, targets, 3, 1e-3)
            numeric[i] = (up - down) / (2 * step)
        relative = np.abs(grad - numeric) / np.maximum(np.abs(grad) + np.abs(numeric), 1e-8)
        assert relative.max() < 1e-4


def test_training_aborts_on_non_finite_loss(mocker):
    """
    negative, a NaN loss raises TrainingError instead of returning a model
    """
    mocker.patch(
        "services.fitness_service.softmax_loss_and_grad",
        return_value=(float("nan"), np.zeros(2 * 3)),
    )
    with pytest.raises(TrainingError):
        train_logistic(np.zeros((4, 2)), LabelVector([0, 1, 0, 1]), np.arange(4))


def test_train_rejects_bad_rows():
    """
    negative, empty training rows or a label length mismatch are rejected
    """
    with pytest.raises(ValueError):
        train_logistic(np.zeros((4, 2)), LabelVector([0, 1, 0, 1]), np.array([], dtype=int))
    with pytest.raises(ValueError):
        train_logistic(np.zeros((3, 2)), LabelVector([0, 1, 0, 1]), np.arange(3))


def test_predict_zero_weights_picks_class_zero():
    """
    positive, all-zero scores tie and the lowest class id wins
    """
    model = ClassifierModel(np.zeros((3, 3)), n_classes=3, n_dims=2, epochs=0, final_loss=math.log(3), converged=False)
    assert predict(model, np.ones((5, 2))).labels.tolist() == [0] * 5


def test_predict_width_mismatch():
    """
    negative, features of the wrong width are rejected
    """
    model = ClassifierModel(np.zeros((2, 3)), n_classes=2, n_dims=2, epochs=0, final_loss=0.0, converged=False)
    with pytest.raises(ValueError):
        predict(model, np.zeros((4, 3)))


def test_packed_and_unpacked_predict_alike(rng):
    """
    positive, barcodes presented packed or as a plain 0/1 array predict the same
    """
    bits = rng.integers(0, 2, size=(60, 9))
    labels = LabelVector(bits[:, 0] ^ bits[:, 3])
    binary = BinaryMatrix.from_bits(bits)
    model = train_logistic(binary, labels, np.arange(60))
    assert np.array_equal(predict(model, binary).labels, predict(model, bits).labels)


def test_metrics_perfect():
    """
    positive, predicted == truth gives 1.0 for both headline metrics
    """
    truth = LabelVector([0, 1, 2, 1])
    result = metrics(truth, truth)
    assert (result.accuracy, result.macro_f1) == (1.0, 1.0)


def test_metrics_hand_computed():
    """
    positive, truth [0,0,1,1] vs [0,1,1,1]: F1 2/3 and 0.8, macro 0.7333, accuracy 0.75
    """
    result = metrics(LabelVector([0, 1, 1, 1]), LabelVector([0, 0, 1, 1]))
    assert result.per_class_f1 == pytest.approx((2 / 3, 0.8))
    assert result.macro_f1 == pytest.approx(0.7333333333)
    assert result.accuracy == 0.75


def test_metrics_single_class_prediction():
    """
    positive, predicting one class on balanced truth: accuracy 0.5, macro-F1 1/3
    """
    predicted = LabelVector([1, 1, 1, 1], n_classes=2, validate=False)
    result = metrics(predicted, LabelVector([0, 0, 1, 1]))
    assert result.accuracy == 0.5
    assert result.macro_f1 == pytest.approx(1 / 3)
    assert result.as_dict()["per_class_f1"] == pytest.approx([0.0, 2 / 3])


def test_metrics_length_mismatch():
    """
    negative, predicted and truth must have the same length
    """
    with pytest.raises(ValueError):
        metrics(LabelVector([0, 1]), LabelVector([0, 1, 1]))


def _one_good_feature():
    gen = np.random.default_rng(12)
    labels = np.repeat([0, 1], 50)
    values = gen.uniform(-1, 1, size=(100, 3))
    values[:, 1] = np.where(labels == 1, gen.uniform(0.2, 0.9, 100), gen.uniform(-0.9, -0.2, 100))
    return EmbeddingMatrix(values), LabelVector(labels)


def test_evaluate_threshold_perfect_feature():
    """
    positive, a cut-point separating the classes on one feature gives validation macro-F1 1.0
    """
    matrix, labels = _one_good_feature()
    split = stratified_split(labels, 0.2, seed=0)
    thresholds = ThresholdVector([2.0, 0.0, 2.0])
    result = evaluate_threshold(matrix, labels, thresholds, split)
    assert result.macro_f1 == 1.0
    assert evaluate_threshold(matrix, labels, thresholds, split) == result


def test_evaluate_threshold_above_all_data():
    """
    negative, cut-points above every value give constant features and no better than 0.5 macro-F1
    """
    matrix, labels = _one_good_feature()
    split = stratified_split(labels, 0.2, seed=0)
    result = evaluate_threshold(matrix, labels, ThresholdVector.constant(5.0, 3), split)
    assert result.macro_f1 <= 0.5


def test_evaluate_features_reports_test_split():
    """
    positive, a test split adds a second set of metrics
    """
    matrix, labels = _one_good_feature()
    split = stratified_split(labels, 0.2, seed=0, test_fraction=0.2)
    validation, test = evaluate_features(matrix, labels, split)
    assert test is not None and 0.0 <= test.accuracy <= 1.0
    assert validation.accuracy >= 0.9


def test_threshold_fitness_incremental_matches_full():
    """
    positive, barcodes rebuilt column by column equal a fresh binarize, and the score is macro-F1
    """
    matrix, labels = _one_good_feature()
    split = stratified_split(labels, 0.2, seed=0)
    fitness = ThresholdFitness(matrix, labels, split)

    first = ThresholdVector([0.0, 0.0, 0.0])
    second = first.replace(1, 0.5)
    fitness.barcodes(first)
    assert fitness.barcodes(second) == binarize(matrix, second)
    assert fitness(first) == evaluate_threshold(matrix, labels, first, split).macro_f1
    assert fitness.n_calls == 1
    assert len(fitness.timings) == 1


def test_threshold_fitness_accuracy_metric():
    """
    positive, the alternative metric scores accuracy instead of macro-F1
    """
    matrix, labels = _one_good_feature()
    split = stratified_split(labels, 0.2, seed=0)
    thresholds = ThresholdVector([0.0, -0.5, 0.0])
    fitness = ThresholdFitness(matrix, labels, split, metric="accuracy")
    assert fitness(thresholds) == evaluate_threshold(matrix, labels, thresholds, split).accuracy


def test_threshold_fitness_rejects_bad_setup():
    """
    negative, unknown metric or a label length mismatch
    """
    matrix, labels = _one_good_feature()
    split = SplitIndices(np.arange(80), np.arange(80, 100))
    with pytest.raises(ValueError):
        ThresholdFitness(matrix, labels, split, metric="recall")
    with pytest.raises(ValueError):
        ThresholdFitness(matrix.take(np.arange(10)), labels, split)


def test_training_loss_never_increases():
    """
    positive, every recorded epoch has a loss no higher than the one before
    """
    gen = np.random.default_rng(11)
    features = gen.normal(size=(90, 5))
    labels = balanced_labels(30, 3)
    features[:, 0] += labels.labels
    model = train_logistic(features, labels, np.arange(90), TrainConfig(record_history=True))
    history = np.array(model.loss_history)
    assert history.size >= 3
    assert np.all(np.diff(history) <= 1e-12)


def test_metrics_follow_class_relabeling():
    """
    positive, renaming classes on both sides keeps accuracy and macro-F1 and permutes per-class F1
    """
    gen = np.random.default_rng(12)
    truth = np.repeat(np.arange(3), 10)
    predicted = np.where(gen.random(30) < 0.7, truth, gen.integers(0, 3, size=30))
    rename = np.array([2, 0, 1])

    original = metrics(LabelVector(predicted, n_classes=3, validate=False), LabelVector(truth))
    renamed = metrics(LabelVector(rename[predicted], n_classes=3, validate=False), LabelVector(rename[truth]))
    assert renamed.accuracy == original.accuracy
    assert renamed.macro_f1 == pytest.approx(original.macro_f1)
    for old_class, new_class in enumerate(rename):
        assert renamed.per_class_f1[new_class] == pytest.approx(original.per_class_f1[old_class])

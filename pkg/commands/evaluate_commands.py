"""
Evaluate Commands - Classifier metrics for embeddings or barcodes
"""
import click

from commands.options import (
    format_option,
    labels_option,
    reports_errors,
    resolve_labels,
    seed_option,
    val_fraction_option,
)
from services.barcode_service import binarize
from services.fitness_service import evaluate_features, stratified_split
from services.io_service import BARCODE_MAGIC, load_barcodes, load_embeddings, load_thresholds


def _is_barcode_file(path: str) -> bool:
    with open(path, "rb") as handle:
        return handle.read(4) == BARCODE_MAGIC


def _echo_metrics(name: str, metrics) -> None:
    click.echo(f"{name}_accuracy: {metrics.accuracy:.6f}")
    click.echo(f"{name}_macro_f1: {metrics.macro_f1:.6f}")
    per_class = ", ".join(f"{value:.6f}" for value in metrics.per_class_f1)
    click.echo(f"{name}_per_class_f1: [{per_class}]")


@click.command("evaluate")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@labels_option
@click.option("--thresholds", "thresholds_path", type=click.Path(exists=True, dir_okay=False),
              help="Binarize embeddings with these cut-points before training.")
@click.option("--test-fraction", type=click.FloatRange(0.0, 1.0, max_open=True), default=0.0, show_default=True,
              help="Also hold out a stratified test split.")
@seed_option
@val_fraction_option
@format_option
@reports_errors
def evaluate(source, labels_path, thresholds_path, test_fraction, seed, val_fraction, fmt):
    """Train the classifier on SOURCE (embeddings or a BBAR barcode file) and print metrics."""
    if _is_barcode_file(source):
        if thresholds_path:
            raise click.UsageError("--thresholds applies to embedding files, not barcode files.")
        features, file_labels, kind = load_barcodes(source), None, "barcodes"
    else:
        matrix, file_labels = load_embeddings(source, fmt)
        if thresholds_path:
            features, kind = binarize(matrix, load_thresholds(thresholds_path)), "barcodes"
        else:
            features, kind = matrix, "real-valued"
    labels = resolve_labels(file_labels, labels_path)
    if len(labels) != features.n_samples:
        raise click.ClickException(f"{source} has {features.n_samples} rows but labels have {len(labels)}.")

    split = stratified_split(labels, val_fraction, seed, test_fraction)
    validation, test = evaluate_features(features, labels, split)
    click.echo(f"features: {kind} ({features.n_samples} x {features.n_dims})")
    _echo_metrics("validation", validation)
    if test is not None:
        _echo_metrics("test", test)

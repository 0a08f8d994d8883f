"""
Binarize Commands - Embeddings to packed barcode files
"""
import logging

import click

from commands.options import format_option, reports_errors
from services.barcode_service import binarize, packed_footprint, real_footprint
from services.io_service import load_embeddings, load_thresholds, save_barcodes
from services.threshold_service import (
    DEFAULT_BIN_COUNT,
    DEFAULT_SIMPLE_THRESHOLD,
    hybrid_threshold,
    minmax_binarize,
    otsu_threshold,
    simple_threshold,
)

logger = logging.getLogger(__name__)

BASELINES = ("simple", "minmax", "otsu", "hybrid")


@click.command("binarize")
@click.argument("embeddings", type=click.Path(exists=True, dir_okay=False))
@click.option("--thresholds", "thresholds_path", type=click.Path(exists=True, dir_okay=False),
              help="Per-feature cut-point file (as written by 'optimize').")
@click.option("--method", type=click.Choice(BASELINES), help="Classical global method instead of a threshold file.")
@click.option("--threshold", "simple_value", type=float, default=DEFAULT_SIMPLE_THRESHOLD, show_default=True,
              help="Cut-point for --method simple.")
@click.option("--bins", type=click.IntRange(min=2), default=DEFAULT_BIN_COUNT, show_default=True,
              help="Histogram bins for --method otsu.")
@format_option
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
@reports_errors
def binarize_command(embeddings, thresholds_path, method, simple_value, bins, fmt, output):
    """Binarize EMBEDDINGS into a BBAR barcode file."""
    if bool(thresholds_path) == bool(method):
        raise click.UsageError("Pass exactly one of --thresholds or --method.")
    matrix, _ = load_embeddings(embeddings, fmt)

    if thresholds_path:
        binary = binarize(matrix, load_thresholds(thresholds_path))
        source = thresholds_path
    elif method == "minmax":
        binary = minmax_binarize(matrix)
        source = "minmax"
    else:
        if method == "simple":
            threshold = simple_threshold(simple_value)
        elif method == "otsu":
            threshold = otsu_threshold(matrix, bins)
        else:
            threshold = hybrid_threshold(matrix)
        binary = threshold.apply(matrix)
        source = f"{method} (T = {threshold.value:.6g})"

    save_barcodes(binary, output)
    logger.info("Binarized %s with %s.", embeddings, source)
    click.echo(
        f"Wrote {binary.n_samples} x {binary.n_dims} barcodes to {output} "
        f"({packed_footprint(binary)} bytes packed vs {real_footprint(binary.n_samples, binary.n_dims)} bytes real)"
    )

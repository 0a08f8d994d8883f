"""
Optimize Commands - Coordinate search for cut-points
Writes a threshold file (one cut-point per feature) and, for the CS methods,
an optional line-delimited trace of every decision.
"""
import logging

import click

from commands.options import (
    bounds_option,
    format_option,
    labels_option,
    max_nfe_option,
    maxiter_option,
    reports_errors,
    resolve_labels,
    seed_option,
    val_fraction_option,
)
from services.fitness_service import FITNESS_METRICS, ThresholdFitness, stratified_split
from services.io_service import load_embeddings, save_thresholds, write_records
from services.search_service import (
    DEFAULT_WINDOW_HALF_WIDTH,
    CsConfig,
    optimize_feature_thresholds,
    optimize_global_threshold,
    refine_scalar,
)
from services.threshold_service import DEFAULT_BIN_COUNT, hybrid_threshold, otsu_threshold, simple_threshold

logger = logging.getLogger(__name__)

SEARCH_METHODS = ("cs-feature", "cs-global", "optimized-simple", "optimized-otsu", "optimized-hybrid")


@click.command("optimize")
@click.argument("embeddings", type=click.Path(exists=True, dir_okay=False))
@labels_option
@click.option("--method", type=click.Choice(SEARCH_METHODS), default="cs-feature", show_default=True)
@maxiter_option
@max_nfe_option
@bounds_option
@click.option("--reset-bounds/--no-reset-bounds", default=True, show_default=True,
              help="Restart every run from the initial bounds.")
@click.option("--tol", type=float, default=None, help="Stop a run when a sweep improves fitness by less than this.")
@click.option("--metric", type=click.Choice(FITNESS_METRICS), default="macro_f1", show_default=True)
@click.option("--window", type=float, default=DEFAULT_WINDOW_HALF_WIDTH, show_default=True,
              help="Half-width of the refinement window for optimized-* methods.")
@seed_option
@val_fraction_option
@format_option
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True, help="Threshold file to write.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), help="JSONL decision trace (cs-* methods).")
@reports_errors
def optimize(embeddings, labels_path, method, maxiter, max_nfe, bounds, reset_bounds, tol, metric, window,
             seed, val_fraction, fmt, output, trace_path):
    """Search cut-points for EMBEDDINGS that maximise validation score."""
    matrix, file_labels = load_embeddings(embeddings, fmt)
    labels = resolve_labels(file_labels, labels_path)
    if len(labels) != matrix.n_samples:
        raise click.ClickException(f"{embeddings} has {matrix.n_samples} rows but labels have {len(labels)}.")

    config = CsConfig(
        maxiter=maxiter,
        max_nfe=max_nfe,
        initial_bounds=bounds,
        reset_bounds_per_run=reset_bounds,
        seed=seed,
        tol=tol,
        window_half_width=window,
    )
    split = stratified_split(labels, val_fraction, seed)
    fitness = ThresholdFitness(matrix, labels, split, metric=metric)
    header = {"method": method, "seed": seed, "metric": metric, "config": config.describe()}

    trace = None
    if method == "cs-feature":
        thresholds, trace = optimize_feature_thresholds(matrix, labels, fitness, config)
    elif method == "cs-global":
        threshold, trace = optimize_global_threshold(matrix, labels, fitness, config)
        thresholds = threshold.expand(matrix.n_dims)
    else:
        train = matrix.take(split.train_rows)
        base = method[len("optimized-"):]
        if base == "simple":
            start = simple_threshold()
        elif base == "otsu":
            start = otsu_threshold(train, DEFAULT_BIN_COUNT)
        else:
            start = hybrid_threshold(train)
        refined = refine_scalar(start, matrix, labels, fitness, config)
        header["start"] = f"{start.value:.17g}"
        thresholds = refined.expand(matrix.n_dims)

    if trace is not None:
        header.update(r_max=trace.r_max, n_evaluations=trace.n_evaluations, best_fitness=trace.best_fitness[-1])
        if trace_path:
            write_records(trace.iter_records(), trace_path)
    elif trace_path:
        logger.warning("--trace is only written for cs-feature and cs-global.")

    save_thresholds(thresholds, output, header)
    click.echo(f"Wrote {len(thresholds)} cut-points to {output} ({method}, {fitness.n_calls} fitness calls)")

"""
Benchmark Commands - Seeded repeated comparison of every thresholding method
"""
from pathlib import Path

import click

import database
from commands.options import (
    bounds_option,
    format_option,
    labels_option,
    max_nfe_option,
    maxiter_option,
    posthoc_option,
    reports_errors,
    resolve_labels,
    seed_option,
    val_fraction_option,
)
from services.benchmark_service import (
    ALL_METHODS,
    HEADLINE_METRICS,
    BenchmarkConfig,
    format_report_text,
    run_benchmark,
    write_report,
)
from services.io_service import load_embeddings


def _parse_methods(value: str):
    methods = [m.strip() for m in value.split(",") if m.strip()]
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown or not methods:
        raise click.BadParameter(f"unknown method(s) {unknown}; choose from {', '.join(ALL_METHODS)}.")
    return methods


@click.command("benchmark")
@click.argument("embeddings", type=click.Path(exists=True, dir_okay=False))
@labels_option
@click.option("--methods", default=",".join(ALL_METHODS), show_default=True,
              help="Comma-separated methods to compare.")
@click.option("--runs", type=click.IntRange(min=2), default=15, show_default=True)
@maxiter_option
@max_nfe_option
@bounds_option
@click.option("--reset-bounds/--no-reset-bounds", default=True, show_default=True)
@click.option("--tol", type=float, default=None)
@seed_option
@val_fraction_option
@click.option("--test-fraction", type=click.FloatRange(0.0, 1.0, max_open=True), default=0.0, show_default=True)
@click.option("--metric", type=click.Choice(HEADLINE_METRICS), default="accuracy", show_default=True,
              help="Score fed to the significance tests.")
@posthoc_option
@click.option("--holm", is_flag=True, help="Holm-adjust the pairwise p-values.")
@format_option
@click.option("-o", "--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--dataset", help="Name stored with the runs (default: the file stem).")
@click.option("--db", "db_path", type=click.Path(dir_okay=False), help="sqlite run ledger to write.")
@click.option("--no-store", is_flag=True, help="Do not record runs in the ledger.")
@reports_errors
def benchmark(embeddings, labels_path, methods, runs, maxiter, max_nfe, bounds, reset_bounds, tol, seed,
              val_fraction, test_fraction, metric, posthoc, holm, fmt, out_dir, dataset, db_path, no_store):
    """Run every method RUNS times on EMBEDDINGS and write report files to OUT_DIR."""
    method_list = _parse_methods(methods)
    matrix, file_labels = load_embeddings(embeddings, fmt)
    labels = resolve_labels(file_labels, labels_path)
    if db_path:
        database.DATABASE = db_path

    config = BenchmarkConfig(
        maxiter=maxiter,
        runs=runs,
        max_nfe=max_nfe,
        seed=seed,
        validation_fraction=val_fraction,
        test_fraction=test_fraction,
        bounds=bounds,
        reset_bounds_per_run=reset_bounds,
        tol=tol,
        metric=metric,
        posthoc=posthoc,
        holm=holm,
    )
    report = run_benchmark(dataset or Path(embeddings).stem, matrix, labels, method_list, config, store=not no_store)
    written = write_report(report, out_dir)
    click.echo(format_report_text(report), nl=False)
    click.echo(f"Wrote {', '.join(p.name for p in written)} to {out_dir}")

"""
Stats Commands - Kruskal-Wallis and post-hoc matrices for stored or supplied scores
"""
from pathlib import Path

import click
import pandas as pd

import database
from commands.options import posthoc_option, reports_errors
from services.stats_service import (
    format_kw,
    kruskal_wallis,
    neglog10_matrix,
    posthoc_pairwise,
    render_heatmap_svg,
)


def _scores_from_csv(path: str):
    frame = pd.read_csv(path)
    missing = {"method", "score"} - set(frame.columns)
    if missing:
        raise click.ClickException(f"{path}: missing column(s) {sorted(missing)}; expected 'method,score'.")
    return {str(method): group["score"].astype(float).tolist() for method, group in frame.groupby("method", sort=False)}


@click.command("stats")
@click.option("--scores", "scores_path", type=click.Path(exists=True, dir_okay=False),
              help="CSV with columns method,score (one row per run).")
@click.option("--from-db", "dataset", help="Read the score lists of a benchmarked dataset from the ledger.")
@click.option("--db", "db_path", type=click.Path(dir_okay=False), help="sqlite run ledger to read.")
@click.option("--metric", type=click.Choice(database.SCORE_COLUMNS), default="accuracy", show_default=True)
@posthoc_option
@click.option("--holm", is_flag=True, help="Holm-adjust the pairwise p-values.")
@click.option("-o", "--out-dir", type=click.Path(file_okay=False), help="Write posthoc/heatmap CSV files here.")
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), help="Render the -log10(p) heatmap as SVG.")
@reports_errors
def stats(scores_path, dataset, db_path, metric, posthoc, holm, out_dir, svg_path):
    """Compare per-run score lists of several methods."""
    if bool(scores_path) == bool(dataset):
        raise click.UsageError("Pass exactly one of --scores or --from-db.")
    if scores_path:
        scores = _scores_from_csv(scores_path)
    else:
        if db_path:
            database.DATABASE = db_path
        database.init_database()
        scores = database.get_method_scores(dataset, metric)
        if not scores:
            raise click.ClickException(f"No stored runs for dataset '{dataset}'.")

    names = list(scores)
    groups = [scores[name] for name in names]
    kw = kruskal_wallis(groups)
    pairwise = posthoc_pairwise(groups, method=posthoc, names=names, holm=holm)
    heatmap = neglog10_matrix(pairwise)

    click.echo(format_kw(kw))
    click.echo(f"Post-hoc: {pairwise.test}{' (Holm adjusted)' if pairwise.adjusted else ''}")
    click.echo(pairwise.to_frame().to_string(float_format=lambda v: f"{v:.3e}"))
    click.echo("-log10(p):")
    click.echo(heatmap.to_frame().to_string(float_format=lambda v: f"{v:.4f}"))

    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        pairwise.to_frame().to_csv(out / "posthoc.csv", float_format="%.6e", lineterminator="\n")
        heatmap.to_frame().to_csv(out / "heatmap.csv", float_format="%.6f", lineterminator="\n")
        heatmap.flags_frame().to_csv(out / "heatmap_flags.csv", lineterminator="\n")
    if svg_path:
        render_heatmap_svg(heatmap, svg_path)

"""
Shared Options - Flags honoured the same way by every subcommand
"""
import functools
from typing import Optional

import click

from services.barcode_service import LabelVector
from services.fitness_service import DEFAULT_VALIDATION_FRACTION, TrainingError
from services.io_service import FORMATS, load_labels
from services.search_service import AUTO
from services.stats_service import POSTHOC_METHODS


class BoundsType(click.ParamType):
    """'L,U' for uniform bounds or 'data' for per-dimension observed ranges."""
    name = "bounds"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple) or value == "data":
            return value
        try:
            low, high = (float(part) for part in str(value).split(","))
        except ValueError:
            self.fail(f"'{value}' is not 'L,U' or 'data'.", param, ctx)
        if not low < high:
            self.fail(f"lower bound {low:g} must be below upper bound {high:g}.", param, ctx)
        return low, high


class MaxNfeType(click.ParamType):
    name = "max-nfe"

    def convert(self, value, param, ctx):
        if value == AUTO or isinstance(value, int):
            return value
        try:
            count = int(value)
        except ValueError:
            self.fail(f"'{value}' is not 'auto' or a positive integer.", param, ctx)
        if count < 1:
            self.fail("must be positive.", param, ctx)
        return count


def seed_option(func):
    return click.option("--seed", type=int, default=0, show_default=True, help="Master RNG seed.")(func)


def maxiter_option(func):
    return click.option(
        "--maxiter", type=click.IntRange(min=1), required=True, help="Halving sweeps per coordinate-search run."
    )(func)


def max_nfe_option(func):
    return click.option(
        "--max-nfe", type=MaxNfeType(), default=AUTO, show_default=True,
        help="Fitness-evaluation budget; 'auto' is n_samples * maxiter * 2.",
    )(func)


def bounds_option(func):
    return click.option(
        "--bounds", type=BoundsType(), default="-1,1", show_default=True,
        help="Initial search bounds 'L,U', or 'data' for each dimension's [min, max].",
    )(func)


def val_fraction_option(func):
    return click.option(
        "--val-fraction", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True),
        default=DEFAULT_VALIDATION_FRACTION, show_default=True, help="Stratified validation share.",
    )(func)


def posthoc_option(func):
    return click.option(
        "--posthoc", type=click.Choice(POSTHOC_METHODS), default="rank-sum", show_default=True,
        help="Pairwise post-hoc test.",
    )(func)


def format_option(func):
    return click.option(
        "--format", "fmt", type=click.Choice(FORMATS), default="auto", show_default=True,
        help="Embedding file format.",
    )(func)


def labels_option(func):
    return click.option(
        "--labels", "labels_path", type=click.Path(exists=True, dir_okay=False),
        help="Label file, one class id per line (overrides a label column).",
    )(func)


def resolve_labels(file_labels: Optional[LabelVector], labels_path: Optional[str]) -> LabelVector:
    if labels_path:
        return load_labels(labels_path)
    if file_labels is None:
        raise click.ClickException("No labels: pass --labels or use a text file with a 'label' column.")
    return file_labels


def reports_errors(func):
    """Turn service errors into a one-line diagnostic and exit status 1."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ValueError, TrainingError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc
    return wrapper

"""
Commands Package - Initialize all CLI subcommands
"""

from .synth_commands import synth
from .binarize_commands import binarize_command
from .optimize_commands import optimize
from .evaluate_commands import evaluate
from .benchmark_commands import benchmark
from .stats_commands import stats


def register_commands(cli):
    """Register all subcommands with the click group."""
    cli.add_command(synth)
    cli.add_command(binarize_command)
    cli.add_command(optimize)
    cli.add_command(evaluate)
    cli.add_command(benchmark)
    cli.add_command(stats)

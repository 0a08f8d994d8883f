"""
Main entry point for the barcode embedding toolkit.

This module provides the CLI factory that builds the click command group.
Subcommands are organized in separate modules in the commands package.
"""
import logging
import sys
from typing import Optional, Sequence

import click

from commands import register_commands

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"


def create_cli() -> click.Group:
    """
    CLI factory function to create and configure the command group.

    Returns:
        click.Group: Group with every subcommand registered
    """

    @click.group(context_settings={"help_option_names": ["-h", "--help"]})
    @click.option("-v", "--verbose", count=True, help="-v for INFO, -vv for DEBUG logging on stderr.")
    def cli(verbose):
        """Binarize embeddings into packed barcodes and benchmark thresholding methods."""
        level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
        logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)

    register_commands(cli)
    return cli


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and return an exit status instead of exiting.

    Returns:
        int: 0 on success, 2 on usage errors, 1 on any other failure
    """
    cli = create_cli()
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name="barcode", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    return result if isinstance(result, int) else 0


if __name__ == '__main__':
    sys.exit(cli_dispatch())

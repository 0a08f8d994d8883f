"""
Synth Commands - Seeded synthetic embedding files
"""
import click

from commands.options import reports_errors, seed_option
from services.io_service import save_embeddings, save_labels
from services.synth_service import SynthSpec, generate_synthetic


@click.command("synth")
@click.option("--n-samples", type=int, required=True)
@click.option("--n-dims", type=int, required=True)
@click.option("--n-classes", type=int, default=2, show_default=True)
@click.option("--separation", type=float, default=0.5, show_default=True)
@click.option("--noise", type=float, default=0.1, show_default=True)
@click.option("--informative-fraction", type=float, default=0.25, show_default=True)
@click.option("--cutpoint-spread", type=float, default=0.4, show_default=True)
@seed_option
@click.option("--format", "fmt", type=click.Choice(["text", "binary"]), default="text", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
@click.option("--labels-out", type=click.Path(dir_okay=False), help="Also write labels to their own file.")
@reports_errors
def synth(n_samples, n_dims, n_classes, separation, noise, informative_fraction, cutpoint_spread,
          seed, fmt, output, labels_out):
    """Generate Gaussian class clusters inside [-1, 1]."""
    if fmt == "binary" and not labels_out:
        raise click.UsageError("Binary embedding files carry no labels; pass --labels-out.")
    spec = SynthSpec(
        n_samples=n_samples,
        n_dims=n_dims,
        n_classes=n_classes,
        separation=separation,
        noise=noise,
        informative_fraction=informative_fraction,
        cutpoint_spread=cutpoint_spread,
        seed=seed,
    )
    matrix, labels = generate_synthetic(spec)
    save_embeddings(matrix, output, fmt=fmt, labels=labels if fmt == "text" else None)
    if labels_out:
        save_labels(labels, labels_out)
    click.echo(f"Wrote {matrix.n_samples} x {matrix.n_dims} embeddings ({n_classes} classes) to {output}")

"""
Synth Service Module - Seeded stand-in embeddings
Gaussian class clusters on a few informative dimensions, pure noise elsewhere,
everything inside [-1, 1] so the default search bounds apply.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from services.barcode_service import EmbeddingMatrix, LabelVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthSpec:
    """
    Args:
        n_samples, n_dims, n_classes: Shape of the generated data.
        separation: Distance between consecutive class means on informative dimensions.
        noise: Per-dimension Gaussian noise scale.
        informative_fraction: Share of dimensions carrying class signal, in (0, 1].
        cutpoint_spread: Informative dimensions are centred at points drawn from
            [-spread, spread], so their best cut-points differ.
        seed: RNG seed.
    """
    n_samples: int
    n_dims: int
    n_classes: int = 2
    separation: float = 0.5
    noise: float = 0.1
    informative_fraction: float = 0.25
    cutpoint_spread: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.n_dims < 1 or self.n_classes < 2:
            raise ValueError("Need at least 1 dimension and 2 classes.")
        if self.n_samples < 2 * self.n_classes:
            raise ValueError(f"Need at least {2 * self.n_classes} samples for {self.n_classes} classes.")
        if not 0.0 < self.informative_fraction <= 1.0:
            raise ValueError("informative_fraction must be in (0, 1].")
        if self.noise < 0 or self.separation < 0 or self.cutpoint_spread < 0:
            raise ValueError("noise, separation and cutpoint_spread must be non-negative.")
        # outermost class mean must stay inside [-1, 1]
        reach = self.cutpoint_spread + 0.5 * self.separation * (self.n_classes - 1)
        if reach > 1.0:
            raise ValueError(
                f"Infeasible spec: class means reach {reach:g}, outside [-1, 1]; "
                "lower separation or cutpoint_spread."
            )

    @property
    def n_informative(self) -> int:
        return max(1, int(round(self.informative_fraction * self.n_dims)))


@dataclass(frozen=True, eq=False)
class SynthLayout:
    """Which dimensions are informative and where each one is centred."""
    informative: np.ndarray
    centres: np.ndarray


def synthetic_layout(spec: SynthSpec) -> SynthLayout:
    layout_seed, _ = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(layout_seed)
    informative = np.sort(rng.choice(spec.n_dims, size=spec.n_informative, replace=False))
    centres = rng.uniform(-spec.cutpoint_spread, spec.cutpoint_spread, size=informative.size)
    return SynthLayout(informative=informative, centres=centres)


def generate_synthetic(spec: SynthSpec) -> Tuple[EmbeddingMatrix, LabelVector]:
    """
    Balanced, shuffled labels; informative dimension j gets mean
    centre_j + (class - (K - 1) / 2) * separation. Values are clipped to [-1, 1].
    """
    layout = synthetic_layout(spec)
    _, sample_seed = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(sample_seed)

    labels = rng.permutation(np.arange(spec.n_samples) % spec.n_classes)
    values = rng.normal(0.0, spec.noise, size=(spec.n_samples, spec.n_dims))
    offsets = (labels - 0.5 * (spec.n_classes - 1)) * spec.separation
    values[:, layout.informative] += layout.centres + offsets[:, None]

    clipped = np.count_nonzero(np.abs(values) > 1.0)
    if clipped:
        logger.debug("Clipped %d synthetic values into [-1, 1].", clipped)
    logger.info(
        "Generated %d x %d synthetic embeddings, %d classes, informative dims %s.",
        spec.n_samples, spec.n_dims, spec.n_classes, layout.informative.tolist(),
    )
    return EmbeddingMatrix(np.clip(values, -1.0, 1.0)), LabelVector(labels, n_classes=spec.n_classes)

"""Seeded synthetic benchmark instances at a prescribed coupling strength."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MrfInstance, coupling_strength, symmetrize_and_validate


@dataclass(frozen=True)
class GenSpec:
    n: int
    k: int
    target_cs: float
    seed: int
    edge_prob: float | None = None  # None means a complete graph

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need n >= 2 to define a coupling strength")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.target_cs < 0:
            raise ValueError("coupling strength must be nonnegative")
        if self.edge_prob is not None and not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError("edge probability must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def graph(self) -> str:
        return "complete" if self.edge_prob is None else f"er:{self.edge_prob:g}"


def parse_graph(text: str) -> float | None:
    """'complete' -> None, 'er:<p>' -> p."""
    if text == "complete":
        return None
    if text.startswith("er:"):
        return float(text[3:])
    raise ValueError(f"unknown graph type {text!r}; use 'complete' or 'er:<p>'")


def generate(spec: GenSpec) -> MrfInstance:
    """Sample an instance; bit-identical for identical specs.

    The stream comes from numpy's PCG64 seeded with ``spec.seed`` and is
    consumed in a fixed order: for ER graphs, one uniform per upper-triangular
    pair (row-major) deciding inclusion; then one U[-1, 1] weight per pair
    (row-major); then the n x k biases U[-1, 1] (row-major). The sampled
    couplings are rescaled so the coupling strength equals the target exactly.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    iu, ju = np.triu_indices(n, k=1)
    if spec.edge_prob is None:
        keep = np.ones(len(iu), dtype=bool)
    else:
        keep = rng.random(len(iu)) < spec.edge_prob
    weights = rng.uniform(-1.0, 1.0, size=len(iu)) * keep
    H = rng.uniform(-1.0, 1.0, size=(n, spec.k))

    A = np.zeros((n, n))
    A[iu, ju] = weights
    A = A + A.T
    cs = coupling_strength(A)
    if spec.target_cs == 0:
        A[:] = 0.0
    elif cs == 0:
        raise ValueError(
            f"seed {spec.seed} sampled no edges; cannot rescale to coupling strength "
            f"{spec.target_cs}, choose another seed"
        )
    else:
        A *= spec.target_cs / cs
    return symmetrize_and_validate(A, H, spec.k)

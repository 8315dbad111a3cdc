"""Randomized rounding of unit vectors to labels, one random direction per class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import round_two_pass
from .core import MrfInstance, SimplexFrame, format_config, objective


@dataclass(frozen=True)
class RoundingBatch:
    samples: np.ndarray        # (iters, n)
    values: np.ndarray         # objective of each sample
    best: np.ndarray
    best_value: float

    @property
    def unique_set(self) -> np.ndarray:
        return np.unique(self.samples, axis=0)

    def to_dict(self) -> dict:
        return {
            "samples": [format_config(x) for x in self.samples],
            "best": format_config(self.best),
            "best_value": self.best_value,
        }


def sphere_directions(rng: np.random.Generator, count: int, k: int, d: int) -> np.ndarray:
    """(count, k, d) directions uniform on the unit sphere.

    Drawn as one standard-normal block, so a longer draw from the same seed
    extends a shorter one.
    """
    m = rng.standard_normal((count, k, d))
    return m / np.linalg.norm(m, axis=2, keepdims=True)


def round_with_directions(v, frame: SimplexFrame, m) -> np.ndarray:
    """Both argmax passes for a batch of direction sets ``m`` (count, k, d).

    Pass one sends v_i to the closest direction; pass two sends that direction
    to the closest simplex vertex. Ties resolve to the lowest label.
    """
    v = np.ascontiguousarray(v, dtype=float)
    m = np.ascontiguousarray(m, dtype=float)
    if m.ndim != 3 or m.shape[1] != frame.k or m.shape[2] != v.shape[1] or frame.d != v.shape[1]:
        raise ValueError(f"direction shape {m.shape} does not match k={frame.k}, d={v.shape[1]}")
    out = np.empty((m.shape[0], v.shape[0]), dtype=np.int64)
    round_two_pass(v, np.ascontiguousarray(frame.r), m, out)
    return out


def round_once(v, frame: SimplexFrame, rng: np.random.Generator) -> np.ndarray:
    v = np.asarray(v)
    return round_with_directions(v, frame, sphere_directions(rng, 1, frame.k, v.shape[1]))[0]


def round_batch(v, frame: SimplexFrame, inst: MrfInstance, iters: int,
                seed: int | np.random.Generator) -> RoundingBatch:
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    v = np.asarray(v)
    x = round_with_directions(v, frame, sphere_directions(rng, iters, frame.k, v.shape[1]))
    f = np.atleast_1d(objective(inst, x))
    b = int(np.argmax(f))
    return RoundingBatch(samples=x, values=f, best=x[b].copy(), best_value=float(f[b]))

"""Pairwise k-class MRF instances and the discrete objective.

Labels are 0-based integers internally (``0 .. k-1``). Files and CLI output
use 1-based labels; conversion happens only at those boundaries.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import batch_objective

DENSE_WRITE_MAX_N = 64


@dataclass(frozen=True)
class MrfInstance:
    """Coupling matrix ``A`` (n x n, symmetric) and per-class biases ``H`` (n x k)."""

    A: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        self.A.setflags(write=False)
        self.H.setflags(write=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.H.shape[1]

    @property
    def num_configurations(self) -> int:
        return self.k ** self.n

    def objective(self, x) -> float | np.ndarray:
        return objective(self, x)


def symmetrize_and_validate(raw, H, k: int) -> MrfInstance:
    raw = np.array(raw, dtype=float)
    H = np.array(H, dtype=float)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1] or raw.shape[0] < 1:
        raise ValueError(f"coupling matrix must be square and non-empty, got shape {raw.shape}")
    n = raw.shape[0]
    if H.ndim == 0 and H == 0:
        H = np.zeros((n, k))
    if H.shape != (n, k):
        raise ValueError(f"bias matrix must have shape {(n, k)}, got {H.shape}")
    if not (np.all(np.isfinite(raw)) and np.all(np.isfinite(H))):
        raise ValueError("instance contains non-finite entries")
    return MrfInstance(A=(raw + raw.T) / 2.0, H=H)


def delta_hat(a, b):
    """+1 where labels agree, -1 otherwise (elementwise)."""
    return np.where(np.asarray(a) == np.asarray(b), 1.0, -1.0)


def one_hot(x: np.ndarray, k: int) -> np.ndarray:
    x = np.asarray(x)
    return (x[..., None] == np.arange(k)).astype(float)


def objective(inst: MrfInstance, x):
    """f(x) = sum_ij A_ij dhat(x_i, x_j) + sum_i sum_l H_il dhat(x_i, l).

    ``x`` may be a single configuration of shape (n,) or a batch (..., n).
    Uses dhat = 2[a == b] - 1, so f = 2 sum_ij A_ij [x_i = x_j] + 2 sum_i H[i, x_i]
    minus the totals of A and H; the batch loop is compiled.
    """
    x = np.asarray(x)
    if x.shape[-1] != inst.n:
        raise ValueError(f"configuration length {x.shape[-1]} != n={inst.n}")
    if x.size and (x.min() < 0 or x.max() >= inst.k):
        raise ValueError("labels out of range")
    batch = x.shape[:-1]
    flat = np.ascontiguousarray(x.reshape(-1, inst.n), dtype=np.int64)
    f = np.empty(len(flat))
    batch_objective(inst.A, inst.H, flat, f)
    f = f.reshape(batch)
    return float(f) if f.ndim == 0 else f


def binary_to_multiclass(A, h) -> MrfInstance:
    """Binary model x^T A x + h^T x over spins, as a k=2 instance.

    Class 0 is spin +1 and class 1 is spin -1; the bias is split as (h/2, -h/2).
    """
    A = np.asarray(A, dtype=float)
    h = np.asarray(h, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or h.shape != (A.shape[0],):
        raise ValueError(f"shape mismatch: A {A.shape}, h {h.shape}")
    return symmetrize_and_validate(A, np.stack([h / 2.0, -h / 2.0], axis=1), 2)


def spins_to_labels(s) -> np.ndarray:
    return np.where(np.asarray(s) > 0, 0, 1)


def coupling_strength(A) -> float:
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n < 2:
        raise ValueError("coupling strength needs n >= 2")
    off = np.abs(A).sum() - np.abs(np.diag(A)).sum()
    return float(off / (n * (n - 1)))


@dataclass(frozen=True)
class SimplexFrame:
    """k unit vectors in R^d with pairwise inner products -1/(k-1), stored as rows of ``r``."""

    r: np.ndarray

    @property
    def k(self) -> int:
        return self.r.shape[0]

    @property
    def d(self) -> int:
        return self.r.shape[1]


def _regular_simplex(k: int) -> np.ndarray:
    # Vertices in R^(k-1): the first is e_1; the remaining k-1 sit at height
    # -1/(k-1) on e_1 and form a scaled (k-1)-simplex in the orthogonal complement.
    if k == 1:
        return np.zeros((1, 0))
    if k == 2:
        return np.array([[1.0], [-1.0]])
    c = -1.0 / (k - 1)
    rest = _regular_simplex(k - 1) * math.sqrt(1.0 - c * c)
    out = np.zeros((k, k - 1))
    out[0, 0] = 1.0
    out[1:, 0] = c
    out[1:, 1:] = rest
    return out


@functools.lru_cache(maxsize=256)
def simplex_frame(k: int, d: int) -> SimplexFrame:
    if k < 2:
        raise ValueError("k must be >= 2")
    if d < k - 1:
        raise ValueError(f"embedding dimension d={d} must be >= k-1={k - 1}")
    r = np.zeros((k, d))
    r[:, : k - 1] = _regular_simplex(k)
    r.setflags(write=False)
    return SimplexFrame(r)


def bijection_check(k: int, frame: SimplexFrame, a: int, b: int) -> float:
    return (2.0 / k) * ((k - 1) * float(frame.r[a] @ frame.r[b]) + 1.0) - 1.0


def relaxed_scale(k: int) -> tuple[float, float]:
    """(slope, offset) with dhat(a, b) = slope * r_a.r_b + offset."""
    return 2.0 * (k - 1) / k, 2.0 / k - 1.0


def simplex_objective(inst: MrfInstance, x):
    """The discrete objective rewritten on simplex vertices (v_i = r_{x_i}).

    This is the scale in which the relaxed objectives live; it is an
    increasing affine function of ``objective``.
    """
    slope, offset = relaxed_scale(inst.k)
    f = np.asarray(objective(inst, x))
    out = (f - offset * (inst.A.sum() + inst.H.sum())) / slope
    return float(out) if out.ndim == 0 else out


# --- instance files ---------------------------------------------------------

def instance_to_dict(inst: MrfInstance, dense: bool | None = None) -> dict:
    if dense is None:
        dense = inst.n <= DENSE_WRITE_MAX_N
    out: dict = {"n": inst.n, "k": inst.k}
    if dense:
        out["A"] = inst.A.tolist()
    else:
        iu, ju = np.nonzero(np.triu(inst.A))
        out["edges"] = [[int(i), int(j), float(inst.A[i, j])] for i, j in zip(iu, ju)]
    out["H"] = inst.H.tolist()
    return out


def instance_from_dict(data: dict) -> MrfInstance:
    n, k = int(data["n"]), int(data["k"])
    if "A" in data:
        raw = np.array(data["A"], dtype=float)
    elif "edges" in data:
        raw = np.zeros((n, n))
        for i, j, w in data["edges"]:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
            raw[i, j] = w
            raw[j, i] = w
    else:
        raise ValueError("instance needs either 'A' or 'edges'")
    if raw.shape != (n, n):
        raise ValueError(f"'A' has shape {raw.shape}, expected {(n, n)}")
    return symmetrize_and_validate(raw, data["H"], k)


def load_instance(path) -> MrfInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def save_instance(inst: MrfInstance, path, dense: bool | None = None) -> None:
    from .io import write_json_atomic

    write_json_atomic(path, instance_to_dict(inst, dense))


def format_config(x) -> str:
    """1-based, space separated."""
    return " ".join(str(int(v) + 1) for v in np.asarray(x))


def parse_config(s: str) -> np.ndarray:
    return np.array([int(t) - 1 for t in s.split()], dtype=np.int64)

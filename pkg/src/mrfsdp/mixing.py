"""Coordinate-ascent (mixing method) solver for the low-rank unit-vector relaxation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import m4_solve
from .core import MrfInstance, SimplexFrame, simplex_frame


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 300
    rel_tol: float = 1e-8
    seed: int = 0
    d_override: int | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")


@dataclass(frozen=True)
class VectorSolution:
    v: np.ndarray               # (n, d), unit rows
    objective_value: float
    iterations_used: int
    converged: bool

    @property
    def d(self) -> int:
        return self.v.shape[1]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "objective": self.objective_value,
            "iterations": self.iterations_used,
            "converged": self.converged,
            "v": self.v.tolist(),
        }


def rank_bound(n: int, k: int) -> int:
    """Rank guaranteeing an optimal low-rank solution exists, floored at k-1."""
    return max(k - 1, math.ceil(math.sqrt(2 * (n + k * (k + 1) / 2))))


def bias_vectors(inst: MrfInstance, frame: SimplexFrame) -> np.ndarray:
    """Row i is sum_l H_il r_l."""
    if frame.k != inst.k:
        raise ValueError(f"frame has k={frame.k}, instance has k={inst.k}")
    return inst.H @ frame.r


def relaxed_objective(inst: MrfInstance, frame: SimplexFrame, v) -> float:
    v = np.asarray(v, dtype=float)
    if v.shape != (inst.n, frame.d):
        raise ValueError(f"vectors have shape {v.shape}, expected {(inst.n, frame.d)}")
    return float(np.sum(inst.A * (v @ v.T)) + np.sum(v * bias_vectors(inst, frame)))


def block_cost_matrix(inst: MrfInstance) -> np.ndarray:
    """[[0, H^T/2], [H/2, A]], the cost of the equivalent (k+n)-dimensional SDP."""
    k, n = inst.k, inst.n
    C = np.zeros((k + n, k + n))
    C[:k, k:] = inst.H.T / 2.0
    C[k:, :k] = inst.H / 2.0
    C[k:, k:] = inst.A
    return C


def lifted_gram(frame: SimplexFrame, v) -> np.ndarray:
    """Gram matrix of the columns (r_1..r_k, v_1..v_n)."""
    U = np.vstack([frame.r, np.asarray(v)]).T
    return U.T @ U


def sdp_value(inst: MrfInstance, frame: SimplexFrame, v) -> float:
    return float(np.sum(lifted_gram(frame, v) * block_cost_matrix(inst)))


def random_unit_vectors(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _python_sweeps(A2, b, v, f, cfg, on_update):
    n = v.shape[0]
    for it in range(1, cfg.max_iters + 1):
        f_start = f
        for i in range(n):
            g = A2[i] @ v + b[i]
            norm = math.sqrt(g @ g)
            if norm == 0.0:
                continue
            new = g / norm
            # the objective depends on v_i only through g.v_i (diagonal term is constant)
            f += g @ (new - v[i])
            v[i] = new
            on_update(i, v)
        if abs(f - f_start) < cfg.rel_tol * max(1.0, abs(f)):
            return it, True
    return cfg.max_iters, False


def solve_m4(inst: MrfInstance, cfg: SolverConfig = SolverConfig(),
             on_update=None) -> tuple[VectorSolution, SimplexFrame]:
    """Maximize the relaxed objective over unit vectors by exact coordinate steps.

    Each step sets v_i = g_i / |g_i| with g_i = 2 sum_{j != i} A_ij v_j + b_i,
    which maximizes the objective in v_i alone. A zero g_i leaves v_i as is.
    Stops when a full sweep changes the objective by less than
    ``rel_tol * max(1, |f|)``.

    ``on_update(i, v)``, if given, is called after every coordinate step with
    the live (n, d) array; it must not modify it.
    """
    d = cfg.d_override if cfg.d_override is not None else rank_bound(inst.n, inst.k)
    frame = simplex_frame(inst.k, d)
    rng = np.random.default_rng(cfg.seed)
    v = random_unit_vectors(rng, inst.n, d)
    b = bias_vectors(inst, frame)

    if on_update is None:
        it, converged, f = m4_solve(inst.A, b, v, cfg.max_iters, cfg.rel_tol)
    else:
        A2 = 2.0 * np.array(inst.A)
        np.fill_diagonal(A2, 0.0)
        it, converged = _python_sweeps(A2, b, v, relaxed_objective(inst, frame, v), cfg, on_update)
        f = relaxed_objective(inst, frame, v)
    v.setflags(write=False)
    return VectorSolution(v=v, objective_value=f, iterations_used=it, converged=converged), frame

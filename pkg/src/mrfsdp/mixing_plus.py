"""Constrained variant: v_i = S z_i with nonnegative block vectors z_i.

With d = m k and C = (k/(k-1)) (I_d - (1/k) (J_k kron I_m)), any z >= 0 with
|sum_b z^b| = 1 gives v = S z satisfying v_i.v_j >= -1/(k-1), so the
solution stays in the feasible set of the pairwise-constrained relaxation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import m4_plus_sweeps
from .core import MrfInstance, SimplexFrame
from .mixing import SolverConfig, rank_bound


@dataclass(frozen=True)
class BlockProjector:
    k: int
    m: int
    S: np.ndarray   # symmetric, S^T S = C

    @property
    def d(self) -> int:
        return self.k * self.m

    @property
    def scale(self) -> float:
        return self.k / (self.k - 1)

    @property
    def C(self) -> np.ndarray:
        return self.S.T @ self.S

    def frame(self) -> SimplexFrame:
        """r_l = S e at the first coordinate of block l."""
        r = self.S[:, :: self.m].T.copy()
        r.setflags(write=False)
        return SimplexFrame(r)


def projector_matrix(k: int, m: int) -> np.ndarray:
    """C = (k/(k-1)) (I - (1/k) J_k kron I_m)."""
    d = k * m
    return (k / (k - 1)) * (np.eye(d) - np.kron(np.ones((k, k)), np.eye(m)) / k)


def build_projector(k: int, m: int) -> BlockProjector:
    """S = sqrt(k/(k-1)) P with P the orthogonal projector inside C.

    C is singular, so there is no strict Cholesky factor; this square root is
    exact since P^2 = P.
    """
    if k < 2 or m < 1:
        raise ValueError(f"need k >= 2 and m >= 1, got k={k}, m={m}")
    d = k * m
    P = np.eye(d) - np.kron(np.ones((k, k)), np.eye(m)) / k
    S = math.sqrt(k / (k - 1)) * P
    S.setflags(write=False)
    return BlockProjector(k=k, m=m, S=S)


def block_update(g, k: int, m: int):
    """Exact maximizer of g.z over {z >= 0, |sum_b z^b| = 1}.

    Returns ``(z, lam)``; ``z`` is None when no within-block index has a
    positive maximum (lam == 0), in which case any feasible point is optimal
    and the caller keeps its current value.
    """
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient has non-finite entries")
    blocks = g.reshape(k, m)
    best = np.argmax(blocks, axis=0)              # lowest block index on ties
    top = np.maximum(blocks[best, np.arange(m)], 0.0)
    lam = math.sqrt(top @ top)
    if lam == 0.0:
        return None, 0.0
    z = np.zeros((k, m))
    z[best, np.arange(m)] = top / lam
    return z.reshape(-1), lam


@dataclass(frozen=True)
class BlockSolution:
    z: np.ndarray     # (n, d)
    v: np.ndarray     # (n, d), rows S z_i
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
            "z": self.z.tolist(),
            "v": self.v.tolist(),
        }


def default_m(n: int, k: int) -> int:
    return math.ceil(rank_bound(n, k) / k)


def block_objective(inst: MrfInstance, proj: BlockProjector, z) -> float:
    v = np.asarray(z) @ proj.S          # S symmetric
    r = proj.frame().r
    return float(np.sum(inst.A * (v @ v.T)) + np.sum(v * (inst.H @ r)))


def initial_blocks(rng: np.random.Generator, n: int, k: int, m: int) -> np.ndarray:
    """One random block per row, filled with a normalized nonnegative uniform vector."""
    z = np.zeros((n, k, m))
    blocks = rng.integers(0, k, size=n)
    u = rng.random((n, m))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    z[np.arange(n), blocks] = u
    return z.reshape(n, k * m)


def _python_sweeps(A2, hb, z, f, C, k, m, cfg, on_update):
    n = z.shape[0]
    for it in range(1, cfg.max_iters + 1):
        f_start = f
        for i in range(n):
            g = C @ (A2[i] @ z + hb[i])
            new, _ = block_update(g, k, m)
            if new is None:
                continue
            # |z_i| = 1 before and after, so only g.z_i changes
            f += g @ (new - z[i])
            z[i] = new
            on_update(i, z)
        if abs(f - f_start) < cfg.rel_tol * max(1.0, abs(f)):
            return it, True
    return cfg.max_iters, False


def solve_m4_plus(inst: MrfInstance, cfg: SolverConfig = SolverConfig(),
                  m: int | None = None, on_update=None) -> tuple[BlockSolution, BlockProjector]:
    """Block-coordinate ascent on the nonnegative block parameterization.

    For row i the gradient is g = C p with p = 2 sum_{j != i} A_ij z_j + sum_l H_il e_(l),
    where e_(l) is the first coordinate of block l; the row is then replaced by
    ``block_update(g)``. Stopping rule matches ``solve_m4``. ``on_update(i, z)``
    is called after every row update.
    """
    k = inst.k
    if m is None:
        m = default_m(inst.n, k)
    if m < 1:
        raise ValueError("m must be >= 1")
    proj = build_projector(k, m)
    rng = np.random.default_rng(cfg.seed)
    z = initial_blocks(rng, inst.n, k, m)

    A = np.array(inst.A)
    np.fill_diagonal(A, 0.0)
    A2 = 2.0 * A
    hb = np.zeros((inst.n, k * m))
    hb[:, ::m] = inst.H

    f = block_objective(inst, proj, z)
    if on_update is None:
        it, converged, f = m4_plus_sweeps(A2, hb, z, f, k, m, cfg.max_iters, cfg.rel_tol)
    else:
        it, converged = _python_sweeps(A2, hb, z, f, projector_matrix(k, m), k, m, cfg, on_update)
    z.setflags(write=False)
    v = z @ proj.S
    v.setflags(write=False)
    sol = BlockSolution(z=z, v=v, objective_value=block_objective(inst, proj, z),
                        iterations_used=it, converged=converged)
    return sol, proj

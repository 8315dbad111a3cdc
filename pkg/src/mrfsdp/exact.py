"""Brute-force enumeration over [k]^n for small instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import MrfInstance, objective

DEFAULT_CAP = 2**24
CHUNK = 2**15


@dataclass(frozen=True)
class ExactSummary:
    log_z: float
    mode_config: np.ndarray
    mode_value: float
    table: np.ndarray | None = None   # f values in enumeration order, if requested


def _check_cap(inst: MrfInstance, cap: int) -> int:
    total = inst.k ** inst.n
    if total > cap:
        raise ValueError(
            f"k^n = {inst.k}^{inst.n} = {total} exceeds the enumeration cap {cap}"
        )
    return total


def configs_from_indices(idx: np.ndarray, n: int, k: int) -> np.ndarray:
    """Mixed-radix decoding with x_1 as the fastest-varying digit."""
    idx = np.asarray(idx, dtype=np.int64)
    return (idx[:, None] // (k ** np.arange(n, dtype=np.int64))) % k


def config_index(x, k: int) -> int:
    return int(sum(int(v) * k**i for i, v in enumerate(np.asarray(x))))


def iter_chunks(inst: MrfInstance, cap: int = DEFAULT_CAP, chunk: int = CHUNK):
    """Yield (configs, f values) over all of [k]^n in enumeration order."""
    total = _check_cap(inst, cap)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        x = configs_from_indices(idx, inst.n, inst.k)
        yield x, np.atleast_1d(objective(inst, x))


def enumerate_exact(inst: MrfInstance, cap: int = DEFAULT_CAP,
                    keep_table: bool = False) -> ExactSummary:
    """Exact log Z and mode.

    log Z is reduced chunk by chunk (fixed chunk boundaries, so the result is
    deterministic). Among tied maximizers the lexicographically smallest label
    vector is returned.
    """
    running = -np.inf
    best_val = -np.inf
    best_x = None
    table = [] if keep_table else None
    lex_weights = inst.k ** np.arange(inst.n - 1, -1, -1, dtype=np.int64)
    for x, f in iter_chunks(inst, cap):
        running = np.logaddexp(running, logsumexp(f))
        m = f.max()
        if m >= best_val:
            tied = x[f == m]
            cand = tied[np.argmin(tied @ lex_weights)]
            if m > best_val or best_x is None or (cand @ lex_weights) < (best_x @ lex_weights):
                best_x = cand
            best_val = m
        if table is not None:
            table.append(f)
    return ExactSummary(
        log_z=float(running),
        mode_config=best_x.copy(),
        mode_value=float(best_val),
        table=np.concatenate(table) if table is not None else None,
    )


def marginals(inst: MrfInstance, cap: int = DEFAULT_CAP) -> np.ndarray:
    """(n, k) exact single-variable marginals."""
    log_z = enumerate_exact(inst, cap).log_z
    out = np.zeros((inst.n, inst.k))
    for x, f in iter_chunks(inst, cap):
        p = np.exp(f - log_z)
        for i in range(inst.n):
            out[i] += np.bincount(x[:, i], weights=p, minlength=inst.k)
    return out


def bucket_index(f, lo: float, hi: float, bucket_count: int) -> np.ndarray:
    """Equal-width bucket of each f over [lo, hi]; a degenerate range maps to the last bucket."""
    f = np.asarray(f, dtype=float)
    if hi > lo:
        return np.clip(((f - lo) / (hi - lo) * bucket_count).astype(np.int64), 0, bucket_count - 1)
    return np.full(f.shape, bucket_count - 1, dtype=np.int64)


def mass_buckets(inst: MrfInstance, bucket_count: int, cap: int = DEFAULT_CAP,
                 sampled=None):
    """Probability mass per equal-width f bucket, sorted by increasing mass.

    Returns a list of ``(lo, hi, mass)``, or ``(lo, hi, mass, sampled_mass)``
    when ``sampled`` configurations are given (duplicates counted once). When
    every configuration has the same f the range is degenerate and all mass
    lands in one bucket.
    """
    if bucket_count < 1:
        raise ValueError("bucket_count must be >= 1")
    lo, hi, log_z = np.inf, -np.inf, -np.inf
    for _, f in iter_chunks(inst, cap):
        lo, hi = min(lo, f.min()), max(hi, f.max())
        log_z = np.logaddexp(log_z, logsumexp(f))
    edges = np.linspace(lo, hi, bucket_count + 1)
    mass = np.zeros(bucket_count)
    for _, f in iter_chunks(inst, cap):
        mass += np.bincount(bucket_index(f, lo, hi, bucket_count), weights=np.exp(f - log_z),
                            minlength=bucket_count)
    order = np.argsort(mass, kind="stable")
    if sampled is None:
        return [(float(edges[b]), float(edges[b + 1]), float(mass[b])) for b in order]
    x = np.unique(np.asarray(sampled).reshape(-1, inst.n), axis=0)
    f = np.atleast_1d(objective(inst, x)) if len(x) else np.empty(0)
    got = np.bincount(bucket_index(f, lo, hi, bucket_count), weights=np.exp(f - log_z),
                      minlength=bucket_count)
    got = np.minimum(got, mass)
    return [(float(edges[b]), float(edges[b + 1]), float(mass[b]), float(got[b])) for b in order]


def mass_covered(inst: MrfInstance, samples, cap: int = DEFAULT_CAP,
                 log_z: float | None = None) -> float:
    """Total probability of a set of configurations (duplicates counted once)."""
    if log_z is None:
        log_z = enumerate_exact(inst, cap).log_z
    else:
        _check_cap(inst, cap)
    samples = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples)
    if samples.size == 0:
        return 0.0
    samples = np.unique(samples.reshape(-1, inst.n), axis=0)
    f = np.atleast_1d(objective(inst, samples))
    return float(min(1.0, np.exp(logsumexp(f) - log_z)))

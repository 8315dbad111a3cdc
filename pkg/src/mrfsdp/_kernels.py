"""Compiled inner loops.

The coordinate sweeps mirror the pure-Python loops in ``mixing`` and
``mixing_plus`` (used when a per-update hook is installed) step for step.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def relaxed_value(A, b, v):
    """sum_ij A_ij v_i.v_j + sum_i b_i.v_i."""
    n, d = v.shape
    f = 0.0
    for i in range(n):
        for c in range(d):
            f += b[i, c] * v[i, c]
        for j in range(n):
            a = A[i, j]
            if a != 0.0:
                dot = 0.0
                for c in range(d):
                    dot += v[i, c] * v[j, c]
                f += a * dot
    return f


@numba.njit(cache=True)
def m4_solve(A, b, v, max_iters, rel_tol):
    """Coordinate sweeps on v in place; returns (sweeps, converged, final objective)."""
    n, d = v.shape
    g = np.empty(d)
    f = relaxed_value(A, b, v)
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        f_start = f
        for i in range(n):
            for c in range(d):
                g[c] = b[i, c]
            for j in range(n):
                a = A[i, j]
                if a != 0.0 and j != i:
                    for c in range(d):
                        g[c] += 2.0 * a * v[j, c]
            norm = 0.0
            for c in range(d):
                norm += g[c] * g[c]
            norm = math.sqrt(norm)
            if norm == 0.0:
                continue
            delta = 0.0
            for c in range(d):
                new = g[c] / norm
                delta += g[c] * (new - v[i, c])
                v[i, c] = new
            f += delta
        if abs(f - f_start) < rel_tol * max(1.0, abs(f)):
            converged = True
            break
    return it, converged, relaxed_value(A, b, v)


@numba.njit(cache=True)
def m4_plus_sweeps(A2, hb, z, f, k, m, max_iters, rel_tol):
    n, d = z.shape
    scale = k / (k - 1.0)
    p = np.empty(d)
    g = np.empty(d)
    new = np.empty(d)
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        f_start = f
        for i in range(n):
            for c in range(d):
                p[c] = hb[i, c]
            for j in range(n):
                a = A2[i, j]
                if a != 0.0:
                    for c in range(d):
                        p[c] += a * z[j, c]
            # g = C p, C = scale * (I - (1/k) J_k kron I_m)
            for t in range(m):
                s = 0.0
                for bb in range(k):
                    s += p[bb * m + t]
                s /= k
                for bb in range(k):
                    g[bb * m + t] = scale * (p[bb * m + t] - s)
            lam = 0.0
            for c in range(d):
                new[c] = 0.0
            for t in range(m):
                best = 0
                for bb in range(1, k):
                    if g[bb * m + t] > g[best * m + t]:
                        best = bb
                top = g[best * m + t]
                if top > 0.0:
                    new[best * m + t] = top
                    lam += top * top
            lam = math.sqrt(lam)
            if lam == 0.0:
                continue
            delta = 0.0
            for c in range(d):
                new[c] /= lam
                delta += g[c] * (new[c] - z[i, c])
                z[i, c] = new[c]
            f += delta
        if abs(f - f_start) < rel_tol * max(1.0, abs(f)):
            converged = True
            break
    return it, converged, f


@numba.njit(cache=True)
def dense_crf_kernel(pos, col, w_app, a_pos, a_col, w_smooth, g_pos, radius2, floor, out):
    """Fill ``out`` with the pairwise kernel; zero diagonal, zero beyond radius2.

    Values below ``floor`` are stored as 0 so a float32 ``out`` holds no
    subnormals, which would slow every product with it by an order of magnitude.
    """
    n = pos.shape[0]
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dp = dx * dx + dy * dy
            val = 0.0
            if dp <= radius2:
                dc = 0.0
                for c in range(col.shape[1]):
                    t = col[i, c] - col[j, c]
                    dc += t * t
                val = w_app * math.exp(-dp * a_pos - dc * a_col) + w_smooth * math.exp(-dp * g_pos)
                if val < floor:
                    val = 0.0
            out[i, j] = val
            out[j, i] = val


@numba.njit(cache=True)
def batch_objective(A, H, X, out):
    """out[s] = f(X[s]) with dhat expanded as 2[a == b] - 1."""
    S, n = X.shape
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += A[i, j]
        for l in range(H.shape[1]):
            total += H[i, l]
    for s in range(S):
        acc = 0.0
        for i in range(n):
            xi = X[s, i]
            acc += H[i, xi] + A[i, i]
            for j in range(i + 1, n):
                if X[s, j] == xi:
                    acc += 2.0 * A[i, j]
        out[s] = 2.0 * acc - total


@numba.njit(cache=True)
def round_two_pass(v, r, m, out):
    """out[c, i] = argmax_l m[c, first, :].r_l where first = argmax_l m[c, l, :].v_i.

    Strict comparisons keep the lowest index on ties.
    """
    count, k, d = m.shape
    n = v.shape[0]
    remap = np.empty(k, dtype=np.int64)
    for c in range(count):
        for a in range(k):
            best, arg = -np.inf, 0
            for l in range(k):
                dot = 0.0
                for t in range(d):
                    dot += m[c, a, t] * r[l, t]
                if dot > best:
                    best, arg = dot, l
            remap[a] = arg
        for i in range(n):
            best, arg = -np.inf, 0
            for a in range(k):
                dot = 0.0
                for t in range(d):
                    dot += m[c, a, t] * v[i, t]
                if dot > best:
                    best, arg = dot, a
            out[c, i] = remap[arg]


@numba.njit(cache=True)
def gibbs_sweeps(A0, H, X, beta, u):
    """Systematic-scan Gibbs on every chain of X in place.

    ``u`` has shape (cycles, n, S): one uniform per (sweep, site, chain), used
    by inverse-CDF sampling of the site's conditional.
    """
    cycles, n, S = u.shape
    k = H.shape[1]
    logits = np.empty(k)
    cdf = np.empty(k)
    for c in range(cycles):
        for i in range(n):
            for s in range(S):
                for l in range(k):
                    logits[l] = 2.0 * H[i, l]
                for j in range(n):
                    a = A0[i, j]
                    if a != 0.0:
                        logits[X[s, j]] += 4.0 * a
                top = -np.inf
                for l in range(k):
                    logits[l] *= beta
                    if logits[l] > top:
                        top = logits[l]
                acc = 0.0
                for l in range(k):
                    acc += math.exp(logits[l] - top)
                    cdf[l] = acc
                target = u[c, i, s] * acc
                pick = 0
                for l in range(k):
                    if cdf[l] <= target:
                        pick += 1
                if pick > k - 1:
                    pick = k - 1
                X[s, i] = pick

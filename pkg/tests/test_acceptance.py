"""Acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line (also repeated in the terminal summary)
and fails when its criterion is not met.
"""

import itertools
import math
import time
from dataclasses import replace

import numpy as np
import pytest

import conftest
from mrfsdp.ais import AisConfig, ais_estimate, gibbs_sweep
from mrfsdp.core import bijection_check, delta_hat, simplex_frame, simplex_objective
from mrfsdp.exact import enumerate_exact, marginals
from mrfsdp.experiments import (
    ais_mode_trace,
    m4_mode_trace,
    mass_run,
    mode_run,
    relative_error,
    time_to_reach,
)
from mrfsdp.generate import GenSpec, generate
from mrfsdp.mixing import SolverConfig, relaxed_objective, sdp_value, solve_m4
from mrfsdp.mixing_plus import block_objective, build_projector, default_m, solve_m4_plus
from mrfsdp.partition import estimate_z, unbiasedness_harness
from mrfsdp.segmentation import (
    KernelParams,
    PixelFeatures,
    UnaryPrior,
    build_unary,
    bundled_test_image,
    kernel_matrix,
    segment,
)

pytestmark = pytest.mark.slow

# "converged" is read as numerical convergence; the default rel_tol of 1e-8 stops
# a little short of optima that coincide with f*_discrete
CONVERGED = SolverConfig(max_iters=100000, rel_tol=1e-14)
DOMINANCE_SLACK = 1e-9


def report(num, title, ok, detail):
    line = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def small_instances():
    """100 seeded instances with k in {2, 3, 5}, n <= 12, small enough to enumerate."""
    out = []
    n_for_k = {2: (4, 6, 8, 10, 12), 3: (3, 5, 7, 9, 11), 5: (2, 4, 6, 7, 8)}
    for s in range(100):
        k = (2, 3, 5)[s % 3]
        n = n_for_k[k][(s // 3) % 5]
        c = (0.5, 1.0, 1.5, 2.0, 2.5)[s % 5]
        out.append(generate(GenSpec(n, k, c, 1000 + s)))
    return out


@pytest.fixture(scope="module")
def suite():
    insts = small_instances()
    return [(inst, enumerate_exact(inst)) for inst in insts]


def test_c01_bijection():
    worst = 0.0
    for k in range(2, 11):
        fr = simplex_frame(k, k - 1)
        for a, b in itertools.product(range(k), repeat=2):
            worst = max(worst, abs(bijection_check(k, fr, a, b) - delta_hat(a, b)))
    report(1, "bijection exactness", worst <= 1e-12, f"max deviation {worst:.2e} (tol 1e-12)")


def test_c02_block_matrix_equivalence():
    rng = np.random.default_rng(2)
    worst = 0.0
    for t in range(100):
        n, k = int(rng.integers(2, 16)), int(rng.integers(2, 7))
        inst = generate(GenSpec(n, k, float(rng.uniform(0.1, 3)), t))
        sol, frame = solve_m4(inst, SolverConfig(seed=t, max_iters=int(rng.integers(1, 30))))
        worst = max(worst, abs(sdp_value(inst, frame, sol.v) - relaxed_objective(inst, frame, sol.v)))
    report(2, "block-matrix equivalence", worst <= 1e-9, f"max deviation {worst:.2e} over 100 pairs (tol 1e-9)")


def test_c03_m4_monotone_and_dominant(suite):
    worst_drop, dominated, bad, default_dom = 0.0, 0, [], 0
    for idx, (inst, ex) in enumerate(suite):
        trace = []
        holder = {}

        def hook(i, v):
            if "fr" not in holder:
                holder["fr"] = simplex_frame(inst.k, v.shape[1])
            trace.append(relaxed_objective(inst, holder["fr"], v))

        f_disc = simplex_objective(inst, ex.mode_config)
        sol, frame = solve_m4(inst, replace(CONVERGED, seed=idx), on_update=hook)
        if len(trace) > 1:
            worst_drop = max(worst_drop, float(-np.min(np.diff(trace))))
        default_dom += solve_m4(inst, SolverConfig(seed=idx))[0].objective_value >= f_disc - DOMINANCE_SLACK
        if sol.converged and sol.objective_value >= f_disc - DOMINANCE_SLACK:
            dominated += 1
        else:
            bad.append(idx)
    ok = worst_drop <= 1e-10 and dominated == len(suite)
    report(3, "M4 monotone + dominance", ok,
           f"largest step decrease {max(worst_drop, 0):.2e} (tol 1e-10); relaxed >= f*_discrete "
           f"on {dominated}/{len(suite)} at rel_tol 1e-14" + (f" (misses {bad})" if bad else "")
           + f"; {default_dom}/{len(suite)} at the default rel_tol 1e-8")


def test_c04_m4plus_feasible_and_dominant(suite):
    worst = {"neg": 0.0, "norm": 0.0, "gram": 0.0}
    dominated, default_dom = 0, 0
    for idx, (inst, ex) in enumerate(suite):
        k = inst.k
        f_disc = simplex_objective(inst, ex.mode_config)
        proj = build_projector(k, default_m(inst.n, k))

        def check(z):
            worst["neg"] = max(worst["neg"], float(-z.min()))
            sums = z.reshape(len(z), k, -1).sum(axis=1)
            worst["norm"] = max(worst["norm"], float(np.max(np.abs(np.linalg.norm(sums, axis=1) - 1))))
            G = (z @ proj.S) @ (z @ proj.S).T
            low = -1 / (k - 1) - float(G.min())
            high = float(G.max()) - 1
            worst["gram"] = max(worst["gram"], low, high)

        # feasibility after every row update covers every sweep boundary
        sol, _ = solve_m4_plus(inst, replace(CONVERGED, seed=idx), on_update=lambda i, z: check(z))
        check(sol.z)
        if sol.converged and block_objective(inst, proj, sol.z) >= f_disc - DOMINANCE_SLACK:
            dominated += 1
        default_dom += solve_m4_plus(inst, SolverConfig(seed=idx))[0].objective_value >= f_disc - DOMINANCE_SLACK
    feasible = worst["neg"] <= 0 and worst["norm"] <= 1e-9 and worst["gram"] <= 1e-9
    report(4, "M4+ feasibility + dominance", feasible and dominated >= 99,
           f"min z {-worst['neg']:.1e}, max |norm-1| {worst['norm']:.1e}, max gram violation "
           f"{worst['gram']:.1e} (tol 1e-9); f(V) >= f*_discrete on {dominated}/100 at rel_tol 1e-14 "
           f"(need 99), {default_dom}/100 at the default rel_tol 1e-8")


def test_c05_mode_quality():
    means = {}
    for c in (0.5, 1.0, 1.5, 2.0, 2.5):
        errs = []
        for s in range(100):
            inst = generate(GenSpec(7, 5, c, s))
            run = mode_run(inst, "m4", rounding_iters=1000, seed=s)
            errs.append(relative_error(enumerate_exact(inst).mode_value, run["result"]["best_value"]))
        means[c] = float(np.mean(errs))
    ok = all(m <= 0.02 for m in means.values())
    report(5, "M4 mode quality", ok,
           "mean relative error " + ", ".join(f"c={c}: {m:.4f}" for c, m in means.items()) + " (tol 0.02)")


def test_c06_mass_coverage():
    cov = [mass_run(generate(GenSpec(7, 5, 2.5, s)), 1000, 20, s)["result"]["mass_covered"]
           for s in range(100)]
    m = float(np.mean(cov))
    report(6, "mass coverage", m >= 0.90,
           f"mean covered mass {m:.4f} (need 0.90); min {min(cov):.3f}, max {max(cov):.3f}")


def test_c07_unbiasedness():
    passed, zs = 0, []
    for s in range(20):
        inst = generate(GenSpec(10, 2, 2.5, s))
        sol, frame = solve_m4(inst, SolverConfig(seed=s))
        rep = unbiasedness_harness(inst, sol.v, frame, 1000, 200, seed=s,
                                   exact_log_z=enumerate_exact(inst).log_z)
        zs.append(rep.z_score)
        passed += abs(rep.z_score) <= 3
    report(7, "estimator unbiasedness", passed >= 18,
           f"|z| <= 3 on {passed}/20 (need 18); z range [{min(zs):.2f}, {max(zs):.2f}]")


def test_c08_full_coverage_exact():
    worst, forced = 0.0, 0
    cases = [(n, k) for n in (1, 2, 3, 4) for k in (2, 3)] + [(2, 5), (3, 4)]
    for t, (n, k) in enumerate(cases):
        if n == 1:
            inst = generate(GenSpec(2, k, 1.5, t))
            inst = type(inst)(inst.A[:1, :1].copy(), inst.H[:1].copy())
        else:
            inst = generate(GenSpec(n, k, 1.5, t))
        # rows orthogonal to each other and to the vertex span reach every labeling
        d = k - 1 + n
        v = np.eye(d)[k - 1:]
        est = estimate_z(inst, v, simplex_frame(k, d), 1, t, rounding_iters=20000)
        if est.cluster_size == k**n:
            forced += 1
            worst = max(worst, abs(est.log_z_hat - enumerate_exact(inst).log_z))
    report(8, "degenerate exactness", forced == len(cases) and worst <= 1e-10,
           f"full coverage on {forced}/{len(cases)} instances; max |log Z-hat - log Z| {worst:.2e} (tol 1e-10)")


def test_c09_ais_trend():
    insts = [generate(GenSpec(10, 2, 2.5, s)) for s in range(100)]
    exact = [enumerate_exact(i).log_z for i in insts]
    means = {}
    for K in (3, 9, 25):
        errs = [abs(lz - ais_estimate(inst, AisConfig(K, 1, 100, s)).log_z_hat)
                for s, (inst, lz) in enumerate(zip(insts, exact))]
        means[K] = float(np.mean(errs))
    ok = means[3] >= means[9] >= means[25]
    report(9, "AIS error trend", ok, "mean |log Z error| " + ", ".join(f"K={K}: {m:.4f}" for K, m in means.items()))


def test_c10_speed_accuracy():
    warm = generate(GenSpec(7, 5, 2.5, 0))
    m4_mode_trace(warm, 0)
    ais_mode_trace(warm, AisConfig(3, 1, 100, 0))
    wins, m4_miss, ais_miss = 0, 0, 0
    for s in range(100):
        inst = generate(GenSpec(7, 5, 2.5, s))
        f_star = enumerate_exact(inst).mode_value
        thr = f_star - 0.02 * abs(f_star)
        # best of three runs for each method to damp timer noise
        t_m4 = min(time_to_reach(*m4_mode_trace(inst, s, 1000, 10), thr) for _ in range(3))
        t_ais = min(time_to_reach(*ais_mode_trace(inst, AisConfig(3, 1, 100, s)), thr) for _ in range(3))
        m4_miss += math.isinf(t_m4)
        ais_miss += math.isinf(t_ais)
        wins += t_m4 < t_ais
    report(10, "speed vs AIS", wins >= 80,
           f"M4 reaches the 2% band first on {wins}/100 (need 80); never reached: M4 {m4_miss}, AIS {ais_miss}")


def test_c11_gibbs_stationarity():
    # 3^6 = 729 <= 2^12; at stronger coupling this seed has label-locked basins that
    # a single chain leaves too rarely to sample in a test's time budget
    inst = generate(GenSpec(6, 3, 0.5, 11))
    truth = marginals(inst)
    rng = np.random.default_rng(11)
    x = gibbs_sweep(inst, np.zeros(6, dtype=np.int64), 1.0, 500, rng)   # burn-in
    N, thin = 20000, 100
    counts = np.zeros_like(truth)
    for _ in range(N):
        x = gibbs_sweep(inst, x, 1.0, thin, rng)
        counts[np.arange(6), x] += 1
    emp = counts / N
    sigma = np.sqrt(truth * (1 - truth) / N)
    worst = float(np.max(np.abs(emp - truth) / sigma))
    report(11, "Gibbs stationarity", worst <= 3,
           f"max |empirical - exact| = {worst:.2f} sigma over {truth.size} marginals ({N} samples, thin {thin})")


def test_c12_segmentation():
    img, ann = bundled_test_image()
    feats = PixelFeatures.from_image(img)
    prior = UnaryPrior(build_unary(ann, 3, 0.95))
    params = KernelParams()
    t0 = time.perf_counter()
    K = kernel_matrix(feats, params)
    first = segment(feats, prior, params, seed=0, kernel=K)
    elapsed = time.perf_counter() - t0
    second = segment(feats, prior, params, seed=0, kernel=K)
    marked = ann > 0
    agree = float(np.mean(first.labels[marked] == ann[marked] - 1))
    same = first.labels.tobytes() == second.labels.tobytes()
    report(12, "segmentation regression", agree >= 0.99 and same and elapsed < 60,
           f"seed agreement {agree:.4f} (need 0.99), rerun byte-identical {same}, "
           f"one run {elapsed:.1f}s (limit 60s)")

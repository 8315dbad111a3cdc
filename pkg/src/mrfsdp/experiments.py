"""Experiment plumbing: per-instance method runs, progress traces and sweeps.

Every run returns a JSON-ready payload whose timing lives under the
``wall_time`` and ``timing`` keys only, so two runs with the same seeds agree
byte for byte once those keys are dropped.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ais import AisConfig, ais_estimate
from .core import MrfInstance, format_config, objective, relaxed_scale
from .exact import DEFAULT_CAP, enumerate_exact, mass_buckets, mass_covered
from .generate import GenSpec, generate, parse_graph
from .io import dumps_json, write_csv_atomic, write_json_atomic
from .mixing import SolverConfig, solve_m4
from .mixing_plus import solve_m4_plus
from .partition import estimate_z
from .rounding import round_batch, round_with_directions, sphere_directions

TIMING_KEYS = ("wall_time", "timing")
# rounding draws use their own stream so they never repeat the solver's init draws
ROUNDING_STREAM = 1


def rounding_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, ROUNDING_STREAM])


def relative_error(f_star: float, f_hat: float) -> float:
    """(f* - f_hat) / |f*|; 0 when both are 0."""
    if f_star == 0.0:
        return 0.0 if f_hat == 0.0 else math.inf
    return (f_star - f_hat) / abs(f_star)


def strip_timing(payload):
    if isinstance(payload, dict):
        return {k: strip_timing(v) for k, v in payload.items() if k not in TIMING_KEYS}
    if isinstance(payload, list):
        return [strip_timing(v) for v in payload]
    return payload


def relax(inst: MrfInstance, method: str, cfg: SolverConfig, m: int | None = None):
    """Solve a relaxation; returns (vectors, frame, info)."""
    if method == "m4":
        sol, frame = solve_m4(inst, cfg)
    elif method == "m4plus":
        sol, proj = solve_m4_plus(inst, cfg, m=m)
        frame = proj.frame()
    else:
        raise ValueError(f"unknown relaxation {method!r}; use m4 or m4plus")
    slope, offset = relaxed_scale(inst.k)
    info = {"relaxed_objective": sol.objective_value,
            # the same value on the scale of f, where it bounds f* at a global optimum
            "relaxed_objective_f_scale": slope * sol.objective_value
            + offset * float(inst.A.sum() + inst.H.sum()),
            "iterations": sol.iterations_used, "converged": sol.converged, "d": sol.d}
    return sol.v, frame, info


def mode_run(inst: MrfInstance, method: str, rounding_iters: int = 1000, seed: int = 0,
             solver: SolverConfig | None = None, m: int | None = None,
             ais: AisConfig | None = None) -> dict:
    """Best configuration found by one method; the clock covers solve plus rounding."""
    if method == "ais":
        cfg = ais or AisConfig(seed=seed)
        res = ais_estimate(inst, cfg)
        return {"method": "ais", "config": asdict(cfg),
                "result": {"best_config": format_config(res.best_config),
                           "best_value": res.best_value},
                "wall_time": res.wall_time}
    solver = solver or SolverConfig(seed=seed)
    t0 = time.perf_counter()
    v, frame, info = relax(inst, method, solver, m)
    rb = round_batch(v, frame, inst, rounding_iters, rounding_rng(seed))
    wall = time.perf_counter() - t0
    config = {"rounding_iters": rounding_iters, "seed": seed, "m": m, **asdict(solver)}
    return {"method": method, "config": config,
            "result": {"best_config": format_config(rb.best), "best_value": rb.best_value, **info},
            "wall_time": wall}


def m4_mode_trace(inst: MrfInstance, seed: int = 0, rounding_iters: int = 1000,
                  chunk: int = 10, solver: SolverConfig | None = None) -> tuple[list, list]:
    """(times, best values) after the solve and after every chunk of roundings.

    The first entry is the solve alone (best value -inf). Directions come from
    one stream in chunk order, so the final best equals a single batch of
    ``rounding_iters`` roundings.
    """
    solver = solver or SolverConfig(seed=seed)
    rng = rounding_rng(seed)
    t0 = time.perf_counter()
    sol, frame = solve_m4(inst, solver)
    times, best = [time.perf_counter() - t0], [-math.inf]
    done, b = 0, -math.inf
    while done < rounding_iters:
        c = min(chunk, rounding_iters - done)
        x = round_with_directions(sol.v, frame, sphere_directions(rng, c, inst.k, sol.d))
        b = max(b, float(np.max(objective(inst, x))))
        done += c
        times.append(time.perf_counter() - t0)
        best.append(b)
    return times, best


def ais_mode_trace(inst: MrfInstance, cfg: AisConfig) -> tuple[list, list]:
    res = ais_estimate(inst, cfg)
    return [c.time for c in res.checkpoints], [c.best_f for c in res.checkpoints]


def time_to_reach(times, values, threshold: float) -> float:
    for t, v in zip(times, values):
        if v >= threshold:
            return t
    return math.inf


def partition_run(inst: MrfInstance, R: int, seed: int = 0, method: str = "m4",
                  solver: SolverConfig | None = None, m: int | None = None) -> dict:
    solver = solver or SolverConfig(seed=seed)
    t0 = time.perf_counter()
    v, frame, info = relax(inst, method, solver, m)
    est = estimate_z(inst, v, frame, R, rounding_rng(seed))
    wall = time.perf_counter() - t0
    return {"method": method, "config": {"R": R, "seed": seed, "m": m, **asdict(solver)},
            "result": {"log_z_hat": est.log_z_hat, "cluster_size": est.cluster_size,
                       "cluster_log_mass": est.cluster_log_mass,
                       "uniform_phase_log_mass": est.uniform_phase_log_mass,
                       "q_log": est.q_log, **info},
            "wall_time": wall}


def ais_partition_run(inst: MrfInstance, cfg: AisConfig) -> dict:
    return ais_payload(ais_estimate(inst, cfg), cfg)


def ais_payload(res, cfg: AisConfig) -> dict:
    return {"method": "ais", "config": asdict(cfg),
            "result": {"log_z_hat": res.log_z_hat, "best_config": format_config(res.best_config),
                       "best_value": res.best_value},
            "wall_time": res.wall_time}


def mass_run(inst: MrfInstance, rounding_iters: int = 1000, buckets: int = 20, seed: int = 0,
             method: str = "m4", solver: SolverConfig | None = None, m: int | None = None,
             cap: int = DEFAULT_CAP) -> dict:
    """Fraction of the probability mass held by the unique rounded configurations."""
    solver = solver or SolverConfig(seed=seed)
    t0 = time.perf_counter()
    v, frame, info = relax(inst, method, solver, m)
    rb = round_batch(v, frame, inst, rounding_iters, rounding_rng(seed))
    wall = time.perf_counter() - t0
    exact = enumerate_exact(inst, cap)
    uniq = rb.unique_set
    covered = mass_covered(inst, uniq, cap, log_z=exact.log_z)
    table = mass_buckets(inst, buckets, cap, sampled=uniq)
    return {"method": method,
            "config": {"rounding_iters": rounding_iters, "buckets": buckets, "seed": seed, "m": m,
                       **asdict(solver)},
            "result": {"mass_covered": covered, "unique_samples": len(uniq),
                       "buckets": [{"lo": lo, "hi": hi, "mass": ms, "sampled_mass": got}
                                   for lo, hi, ms, got in table],
                       **info},
            "wall_time": wall}


# --- sweeps ---------------------------------------------------------------

@dataclass(frozen=True)
class Job:
    """One (instance, method) unit of work; the instance is regenerated from its spec."""

    gen: GenSpec
    task: str               # mode | partition | mass
    method: str             # m4 | m4plus | ais
    params: dict = field(default_factory=dict)


def run_job(job: Job) -> dict:
    inst = generate(job.gen)
    p = dict(job.params)
    seed = p.pop("seed", job.gen.seed)
    exact = enumerate_exact(inst, p.pop("cap", DEFAULT_CAP))
    if job.task == "mode":
        if job.method == "ais":
            out = mode_run(inst, "ais", ais=AisConfig(seed=seed, **p))
        else:
            out = mode_run(inst, job.method, seed=seed, **p)
        out["result"]["exact_mode_value"] = exact.mode_value
        out["result"]["metric"] = relative_error(exact.mode_value, out["result"]["best_value"])
    elif job.task == "partition":
        if job.method == "ais":
            out = ais_partition_run(inst, AisConfig(seed=seed, **p))
        else:
            out = partition_run(inst, seed=seed, method=job.method, **p)
        out["result"]["exact_log_z"] = exact.log_z
        out["result"]["metric"] = abs(exact.log_z - out["result"]["log_z_hat"])
    elif job.task == "mass":
        out = mass_run(inst, seed=seed, method=job.method, **p)
        out["result"]["metric"] = out["result"]["mass_covered"]
    else:
        raise ValueError(f"unknown task {job.task!r}")
    out["instance"] = {"n": job.gen.n, "k": job.gen.k, "graph": job.gen.graph,
                       "coupling_strength": job.gen.target_cs, "seed": job.gen.seed}
    out["task"] = job.task
    return out


def aggregate(payloads) -> list:
    """Rows (method, coupling_strength, count, mean_metric, std, mean_wall_time).

    std is the population standard deviation (ddof = 0).
    """
    groups: dict = {}
    for p in payloads:
        key = (p["method_label"] if "method_label" in p else p["method"],
               p["instance"]["coupling_strength"])
        groups.setdefault(key, []).append(p)
    rows = []
    for (label, c), items in sorted(groups.items()):
        metric = np.array([it["result"]["metric"] for it in items], dtype=float)
        wall = np.array([it["wall_time"] for it in items], dtype=float)
        rows.append([label, c, len(items), float(metric.mean()), float(metric.std()),
                     float(wall.mean())])
    return rows


CSV_HEADER = ["method", "coupling_strength", "count", "mean_metric", "std", "mean_wall_time"]


@dataclass(frozen=True)
class Sweep:
    name: str
    task: str
    n: int
    k: int
    graph: str
    strengths: tuple
    seeds: int
    methods: tuple          # (label, method, params)
    seed0: int = 0


PRESETS = {
    # mode error against time: final errors per method, plus progress traces
    "fig3a": Sweep("fig3a", "mode", 7, 5, "complete", (2.5,), 100, (
        ("m4(10)", "m4", {"rounding_iters": 10}),
        ("m4(100)", "m4", {"rounding_iters": 100}),
        ("m4(1000)", "m4", {"rounding_iters": 1000}),
        ("m4plus(1000)", "m4plus", {"rounding_iters": 1000}),
        ("ais(3,1,100)", "ais", {"K": 3, "num_cycles": 1, "num_samples": 100}),
        ("ais(25,1,100)", "ais", {"K": 25, "num_cycles": 1, "num_samples": 100}),
    )),
    # mode error across coupling strengths
    "fig3b": Sweep("fig3b", "mode", 7, 5, "complete", (0.5, 1.0, 1.5, 2.0, 2.5), 100, (
        ("m4", "m4", {"rounding_iters": 1000}),
        ("m4plus", "m4plus", {"rounding_iters": 1000}),
    )),
    # mass held by 1000 roundings
    "fig3c": Sweep("fig3c", "mass", 7, 5, "complete", (2.5,), 100, (
        ("m4", "m4", {"rounding_iters": 1000, "buckets": 20}),
    )),
    # log Z error across coupling strengths, binary complete graphs
    "fig4": Sweep("fig4", "partition", 20, 2, "complete", (0.5, 1.0, 1.5, 2.0, 2.5), 100, (
        ("m4(500)", "m4", {"R": 500}),
        ("ais(25,1,100)", "ais", {"K": 25, "num_cycles": 1, "num_samples": 100}),
    )),
}


def sweep_jobs(sweep: Sweep) -> list:
    p = parse_graph(sweep.graph)
    jobs = []
    for c in sweep.strengths:
        for s in range(sweep.seeds):
            gen = GenSpec(sweep.n, sweep.k, c, sweep.seed0 + s, p)
            for label, method, params in sweep.methods:
                jobs.append((label, Job(gen, sweep.task, method, dict(params))))
    return jobs


def _run_labeled(item):
    label, job = item
    out = run_job(job)
    out["method_label"] = label
    return out


def run_sweep(sweep: Sweep, out_dir, workers: int = 1) -> list:
    """Run every job, write one JSON per (instance, method) and the aggregate CSV."""
    out_dir = Path(out_dir)
    items = sweep_jobs(sweep)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            payloads = list(pool.map(_run_labeled, items, chunksize=4))
    else:
        payloads = [_run_labeled(it) for it in items]
    for p in payloads:
        inst = p["instance"]
        name = (f"{sweep.name}_c{inst['coupling_strength']:g}_s{inst['seed']}_"
                f"{_safe(p['method_label'])}.json")
        write_json_atomic(out_dir / name, p)
    rows = aggregate(payloads)
    write_csv_atomic(out_dir / f"{sweep.name}.csv", CSV_HEADER, rows)
    return rows


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in label).strip("_")


def payload_bytes(payload) -> bytes:
    return dumps_json(strip_timing(payload)).encode()

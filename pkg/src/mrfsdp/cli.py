"""Command-line front end: ``mrfsdp <subcommand> ...``.

Labels in every file written here are 1-based; results are JSON (atomic
writes) with wall time kept under ``wall_time``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .ais import AisConfig, ais_estimate
from .core import coupling_strength, format_config, load_instance, save_instance
from .exact import DEFAULT_CAP, configs_from_indices, enumerate_exact
from .generate import GenSpec, generate, parse_graph
from .io import read_pgm, read_ppm, write_csv_atomic, write_json_atomic, write_pgm, write_ppm
from .mixing import SolverConfig


def _solver(args) -> SolverConfig:
    return SolverConfig(max_iters=args.max_iters, rel_tol=args.rel_tol, seed=args.seed,
                        d_override=args.d)


def _add_solver_flags(p):
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--d", type=int, default=None, help="vector dimension for m4 (default: rank bound)")
    p.add_argument("--m", type=int, default=None, help="block width for m4plus (default: rank bound / k)")


def _add_ais_flags(p, K=25):
    p.add_argument("--K", type=int, default=K, help="number of annealing temperatures"
                   + (" (default 25 for k=2, else 3)" if K is None else ""))
    p.add_argument("--cycles", type=int, default=1, help="Gibbs sweeps per temperature")
    p.add_argument("--samples", type=int, default=100, help="number of AIS chains")


def _load(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"instance file not found: {path}")
    return load_instance(path)


def _exact_reference(inst, cap):
    return enumerate_exact(inst, cap)


def cmd_gen(args):
    p = parse_graph(args.graph)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s in range(args.seeds):
        spec = GenSpec(args.n, args.k, args.cs, args.seed0 + s, p)
        inst = generate(spec)
        name = f"inst_n{spec.n}_k{spec.k}_{spec.graph.replace(':', '')}_c{args.cs:g}_s{spec.seed}.json"
        save_instance(inst, out / name)
        print(f"{out / name}  CS={coupling_strength(inst.A):.12g}")
    return 0


def cmd_mode(args):
    inst = _load(args.instance)
    if args.method == "ais":
        K = args.K if args.K is not None else (25 if inst.k == 2 else 3)
        payload = ex.mode_run(inst, "ais", ais=AisConfig(K, args.cycles, args.samples, args.seed))
    else:
        payload = ex.mode_run(inst, args.method, args.rounding_iters, args.seed,
                              solver=_solver(args), m=args.m)
    if args.exact:
        ref = _exact_reference(inst, args.cap)
        payload["result"]["exact_mode_value"] = ref.mode_value
        payload["result"]["relative_error"] = ex.relative_error(ref.mode_value,
                                                                 payload["result"]["best_value"])
    payload["instance"] = str(args.instance)
    write_json_atomic(args.out, payload)
    print(f"best f = {payload['result']['best_value']:.10g}  x = {payload['result']['best_config']}")
    return 0


def cmd_partition(args):
    inst = _load(args.instance)
    payload = ex.partition_run(inst, args.rounding_iters, args.seed, args.method,
                               solver=_solver(args), m=args.m)
    if args.exact:
        ref = _exact_reference(inst, args.cap)
        payload["result"]["exact_log_z"] = ref.log_z
        payload["result"]["abs_log_error"] = abs(ref.log_z - payload["result"]["log_z_hat"])
    payload["instance"] = str(args.instance)
    write_json_atomic(args.out, payload)
    print(f"log Z-hat = {payload['result']['log_z_hat']:.10g}")
    return 0


def cmd_ais(args):
    inst = _load(args.instance)
    res = ais_estimate(inst, AisConfig(args.K, args.cycles, args.samples, args.seed))
    payload = ex.ais_payload(res, AisConfig(args.K, args.cycles, args.samples, args.seed))
    if args.checkpoints:
        write_csv_atomic(args.checkpoints, ["time", "best_f", "log_z_partial"],
                         [[c.time, c.best_f, c.log_z_partial] for c in res.checkpoints])
    if args.exact:
        ref = _exact_reference(inst, args.cap)
        payload["result"]["exact_log_z"] = ref.log_z
        payload["result"]["abs_log_error"] = abs(ref.log_z - payload["result"]["log_z_hat"])
    payload["instance"] = str(args.instance)
    write_json_atomic(args.out, payload)
    print(f"log Z-hat = {payload['result']['log_z_hat']:.10g}")
    return 0


def cmd_exact(args):
    inst = _load(args.instance)
    t0 = time.perf_counter()
    ref = enumerate_exact(inst, args.cap, keep_table=args.full_table)
    payload = {"instance": str(args.instance),
               "result": {"log_z": ref.log_z, "mode_config": format_config(ref.mode_config),
                          "mode_value": ref.mode_value},
               "wall_time": time.perf_counter() - t0}
    write_json_atomic(args.out, payload)
    if args.full_table:
        x = configs_from_indices(np.arange(inst.num_configurations), inst.n, inst.k)
        table = Path(args.out).with_suffix(".table.csv")
        write_csv_atomic(table, ["configuration", "f"],
                         [[format_config(row), repr(float(f))] for row, f in zip(x, ref.table)])
    print(f"log Z = {ref.log_z:.12g}  mode f = {ref.mode_value:.12g}")
    return 0


def cmd_mass(args):
    inst = _load(args.instance)
    payload = ex.mass_run(inst, args.rounding_iters, args.buckets, args.seed, args.method,
                          solver=_solver(args), m=args.m, cap=args.cap)
    payload["instance"] = str(args.instance)
    write_json_atomic(args.out, payload)
    print(f"mass covered = {payload['result']['mass_covered']:.6f}")
    return 0


PALETTE = np.array([[230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
                    [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
                    [210, 245, 60], [250, 190, 212]], dtype=np.uint8)


def cmd_segment(args):
    from .segmentation import KernelParams, PixelFeatures, UnaryPrior, build_unary, segment

    img = read_ppm(args.image)
    ann = read_pgm(args.annotation)
    if ann.shape != img.shape[:2]:
        raise ValueError(f"annotation is {ann.shape}, image is {img.shape[:2]}")
    params = KernelParams(args.w_app, args.theta_alpha, args.theta_beta, args.w_smooth,
                          args.theta_gamma, truncate=not args.no_truncate)
    prior = UnaryPrior(build_unary(ann, args.k, args.confidence), theta=args.theta)
    res = segment(PixelFeatures.from_image(img), prior, params, d=args.d, alpha=args.alpha,
                  max_iters=args.max_iters, seed=args.seed, rounding_iters=args.rounding_iters)
    labels = (res.labels + 1).astype(np.uint8)
    write_pgm(args.out, labels)
    if args.overlay:
        colors = PALETTE[res.labels % len(PALETTE)].astype(float)
        write_ppm(args.overlay, np.rint(0.5 * img + 0.5 * colors).astype(np.uint8))
    marked = ann > 0
    agree = float(np.mean(labels[marked] == ann[marked])) if marked.any() else math.nan
    print(f"iterations={res.iterations} converged={res.converged} seed agreement={agree:.4f}")
    return 0


def cmd_bench(args):
    sweep = ex.PRESETS[args.preset]
    if args.seeds is not None:
        sweep = replace(sweep, seeds=args.seeds)
    if args.seed0 is not None:
        sweep = replace(sweep, seed0=args.seed0)
    rows = ex.run_sweep(sweep, args.out, workers=args.workers)
    print(",".join(ex.CSV_HEADER))
    for r in rows:
        print(",".join(str(v) for v in r))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mrfsdp", description="Potts-model mode and partition "
                                 "function estimation through low-rank unit-vector relaxations.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate seeded random instances")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--graph", default="complete", help="complete or er:<p>")
    p.add_argument("--cs", type=float, required=True, help="target coupling strength")
    p.add_argument("--seeds", type=int, default=1, help="number of instances")
    p.add_argument("--seed0", type=int, default=0, help="first seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("mode", help="estimate the mode")
    p.add_argument("--method", choices=["m4", "m4plus", "ais"], default="m4")
    p.add_argument("--instance", required=True)
    p.add_argument("--rounding-iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    _add_solver_flags(p)
    _add_ais_flags(p, K=None)
    p.add_argument("--exact", action="store_true", help="add the relative error against enumeration")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mode)

    p = sub.add_parser("partition", help="estimate log Z from a relaxation")
    p.add_argument("--method", choices=["m4", "m4plus"], default="m4")
    p.add_argument("--instance", required=True)
    p.add_argument("--rounding-iters", type=int, default=1000,
                   help="roundings, and also the number of uniform draws (R)")
    p.add_argument("--seed", type=int, default=0)
    _add_solver_flags(p)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("ais", help="annealed importance sampling estimate of log Z")
    p.add_argument("--instance", required=True)
    _add_ais_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--checkpoints", default=None, help="CSV of (time, best_f, log_z_partial)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ais)

    p = sub.add_parser("exact", help="exact log Z and mode by enumeration")
    p.add_argument("--instance", required=True)
    p.add_argument("--full-table", action="store_true",
                   help="also write <out>.table.csv with f for every configuration")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("mass", help="probability mass held by rounded samples")
    p.add_argument("--method", choices=["m4", "m4plus"], default="m4")
    p.add_argument("--instance", required=True)
    p.add_argument("--rounding-iters", type=int, default=1000)
    p.add_argument("--buckets", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    _add_solver_flags(p)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mass)

    p = sub.add_parser("segment", help="dense-CRF segmentation of a small image")
    p.add_argument("--image", required=True, help="binary PPM (P6)")
    p.add_argument("--annotation", required=True, help="binary PGM, 0 = unannotated, 1..k labels")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--theta", type=float, default=1.0, help="unary weight")
    p.add_argument("--w-app", type=float, default=1.0)
    p.add_argument("--theta-alpha", type=float, default=40.0)
    p.add_argument("--theta-beta", type=float, default=13.0)
    p.add_argument("--w-smooth", type=float, default=1.0)
    p.add_argument("--theta-gamma", type=float, default=3.0)
    p.add_argument("--no-truncate", action="store_true", help="keep kernel values beyond 6 bandwidths")
    p.add_argument("--d", type=int, default=None, help="vector dimension (default k)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--rounding-iters", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--overlay", default=None, help="optional colorized PPM")
    p.add_argument("--out", required=True, help="label map PGM")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("bench", help="run a preset sweep")
    p.add_argument("--preset", choices=sorted(ex.PRESETS), required=True)
    p.add_argument("--seeds", type=int, default=None, help="override the number of seeds")
    p.add_argument("--seed0", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, RuntimeError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

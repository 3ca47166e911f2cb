"""Batch experiment driver.

Subcommands:
  validate  check a config file, print per-format peak throughput and the
            tile-time constraint verdict
  predict   the same analytics as machine-readable JSON
  dse       size the scratchpad for a utilization target
  sweep     run a configs x workloads grid, one CSV row per run
  trace     simulate one workload and emit its timeline CSV

All commands are deterministic functions of (spec, seed).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from .archconfig import (ArchConfig, ConfigError, MemoryModel, SizingError,
                         constraint_holds, load_config, peak_throughput,
                         size_scratchpad, sized_config, tile_times,
                         utilization_bound, utilization_bound_for_extent)
from .engine import emit_trace, simulate_op
from .formats import DTYPES, dtype_spec
from .kernels import execute_plan, fill_operands, plan_gemm
from .memimage import MemoryImage
from .vector import VectorOp

SWEEP_SCHEMA = ("config_id,workload_id,dtype,M,N,K,mode,cycles,utilization,"
                "analytic_bound,bytes_read,bytes_written")
SWEEP_SCHEMA_VERSION = 1


def _effective_bound(cfg: ArchConfig, mem: MemoryModel, dtype, m: int,
                     n: int) -> float:
    """Analytic bound evaluated at the reuse the workload can realize."""
    return utilization_bound_for_extent(cfg, mem, dtype, m, n)


# --- validate / predict -----------------------------------------------------


def _analytics(cfg: ArchConfig, mem: MemoryModel) -> dict:
    out = {"throughput_ops_per_s": {}, "tile_times_s": {}, "constraint": {},
           "utilization_bound": {}}
    for kind in DTYPES:
        dt = dtype_spec(kind)
        try:
            out["throughput_ops_per_s"][kind] = peak_throughput(cfg, dt)
            compute_s, memory_s = tile_times(cfg, mem, dt)
            out["tile_times_s"][kind] = {"compute": compute_s,
                                         "memory": memory_s}
            out["constraint"][kind] = constraint_holds(cfg, mem, dt)
            out["utilization_bound"][kind] = utilization_bound(cfg, mem, dt)
        except Exception as exc:  # e.g. reduce width too narrow for TF32
            out["throughput_ops_per_s"][kind] = None
            out["constraint"][kind] = f"error: {exc}"
    return out


def cmd_validate(args) -> int:
    try:
        cfg, mem = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    info = _analytics(cfg, mem)
    print(f"config {args.config}: valid")
    for kind, tput in info["throughput_ops_per_s"].items():
        if tput is None:
            print(f"  {kind:5s}  unsupported at k_pe_bits={cfg.k_pe_bits}")
            continue
        times = info["tile_times_s"][kind]
        verdict = "satisfied" if info["constraint"][kind] else "violated"
        print(f"  {kind:5s}  {tput / 1e12:.3f} TOPS  "
              f"compute {times['compute']:.4e} s vs memory "
              f"{times['memory']:.4e} s  constraint {verdict}  "
              f"bound {info['utilization_bound'][kind]:.4f}")
    return 0


def cmd_predict(args) -> int:
    try:
        cfg, mem = load_config(args.config)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_analytics(cfg, mem), indent=2, sort_keys=True))
    return 0


# --- dse ---------------------------------------------------------------------


def cmd_dse(args) -> int:
    try:
        cfg, mem = load_config(args.config)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.bandwidth_gbs is not None:
        mem = MemoryModel(args.bandwidth_gbs * 1e9, mem.latency_cycles,
                          mem.stride_penalty)
    dt = dtype_spec(args.dtype)
    try:
        m_scp, n_scp = size_scratchpad(cfg, mem, dt, args.target,
                                       max_residency=args.cap)
    except SizingError as exc:
        print(f"sizing error: {exc}", file=sys.stderr)
        return 1
    sized = sized_config(cfg, m_scp, n_scp)
    bound = utilization_bound(sized, mem, dt)
    footprint = 2 * (m_scp * sized.k_scp_bytes + n_scp * sized.k_scp_bytes
                     + m_scp * n_scp * dt.accumulator_bytes)
    print(f"residency {m_scp} x {n_scp}  (k_scp {sized.k_scp_bytes} bytes)")
    print(f"utilization bound {bound:.4f} at "
          f"{mem.bandwidth_bytes_per_s / 1e9:g} GB/s")
    print(f"scratchpad footprint {footprint} bytes (double-buffered)")
    return 0


# --- sweep -------------------------------------------------------------------


def _load_spec(path: str) -> dict:
    with open(path) as fh:
        spec = yaml.safe_load(fh)
    if not isinstance(spec, dict) or "configs" not in spec \
            or "workloads" not in spec:
        raise ConfigError("spec must define 'configs' and 'workloads'")
    return spec


def _spec_config(entry: dict) -> tuple[str, ArchConfig, MemoryModel]:
    if "path" in entry:
        cfg, mem = load_config(entry["path"])
        return entry.get("id", entry["path"]), cfg, mem
    from .archconfig import _coerce
    cfg = ArchConfig(**_coerce("arch", entry.get("arch", {})))
    mem = MemoryModel(**_coerce("memory", entry.get("memory", {})))
    cfg.check()
    mem.check()
    return str(entry["id"]), cfg, mem


def _row_seed(base_seed: int, ci: int, wi: int) -> int:
    return int(np.random.SeedSequence([base_seed, ci, wi]).generate_state(1)[0])


def _run_row(job) -> dict:
    (config_id, cfg, mem, workload, seed) = job
    dtype = workload.get("dtype", "INT8")
    mode = workload.get("mode", "fused")
    epilogue = tuple(VectorOp(**op) if isinstance(op, dict) else VectorOp(op)
                     for op in workload.get("epilogue", []))
    m, n, k = workload["M"], workload["N"], workload["K"]
    row = {"config_id": config_id, "workload_id": str(workload["id"]),
           "dtype": dtype, "M": m, "N": n, "K": k, "mode": mode}
    try:
        plan = plan_gemm(m, n, k, cfg, dtype=dtype,
                         epilogue=epilogue or None, mode=mode)
        report, _, _, _ = execute_plan(plan, cfg, mem, seed=seed)
        bound = _effective_bound(cfg, mem, dtype_spec(dtype), m, n)
        row.update(cycles=report.total_cycles,
                   utilization=f"{report.utilization:.6f}",
                   analytic_bound=f"{bound:.6f}",
                   bytes_read=report.bytes_read,
                   bytes_written=report.bytes_written)
        return {"ok": True, "row": row}
    except Exception as exc:
        return {"ok": False, "row": row, "error": str(exc)}


def cmd_sweep(args) -> int:
    try:
        spec = _load_spec(args.spec)
        configs = [_spec_config(entry) for entry in spec["configs"]]
    except (FileNotFoundError, ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    workers = args.workers or int(os.environ.get("MXSIM_WORKERS", "1"))
    os.makedirs(args.out, exist_ok=True)

    jobs = []
    for ci, (config_id, cfg, mem) in enumerate(configs):
        for wi, workload in enumerate(spec["workloads"]):
            jobs.append((config_id, cfg, mem, workload,
                         _row_seed(seed, ci, wi)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_row, jobs))
    else:
        results = [_run_row(job) for job in jobs]

    out_path = os.path.join(args.out, "sweep.csv")
    err_path = os.path.join(args.out, "errors.csv")
    failures = 0
    with open(out_path, "w") as fh:
        fh.write(f"# schema_version={SWEEP_SCHEMA_VERSION}\n")
        fh.write(SWEEP_SCHEMA + "\n")
        for res in results:
            if not res["ok"]:
                failures += 1
                continue
            r = res["row"]
            fh.write(",".join(str(r[c]) for c in SWEEP_SCHEMA.split(",")) + "\n")
    with open(err_path, "w") as fh:
        fh.write("config_id,workload_id,error\n")
        for res in results:
            if not res["ok"]:
                r = res["row"]
                err = res["error"].replace(",", ";").replace("\n", " ")
                fh.write(f"{r['config_id']},{r['workload_id']},{err}\n")
    print(f"wrote {out_path} ({len(results) - failures} rows, "
          f"{failures} failures)")
    return 0


# --- trace -------------------------------------------------------------------


def _parse_workload(text: str) -> dict:
    out = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        out[key.strip()] = value.strip()
    return out


def cmd_trace(args) -> int:
    try:
        cfg, mem = load_config(args.config)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    wl = _parse_workload(args.workload)
    m, n, k = int(wl["M"]), int(wl["N"]), int(wl["K"])
    dtype = wl.get("dtype", "INT8")
    plan = plan_gemm(m, n, k, cfg, dtype=dtype, mode="unfused")
    report, _, _, events = execute_plan(plan, cfg, mem, seed=args.seed,
                                        collect_events=True)
    os.makedirs(args.out, exist_ok=True)
    trace_path = os.path.join(args.out, "trace.csv")
    with open(trace_path, "w") as fh:
        emit_trace(events, fh)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    print(f"wrote {trace_path} ({len(events)} events), report.json")
    return 0


# --- entry point --------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mxsim", description="matrix-extension simulator harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("predict", help="analytic model as JSON")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("dse", help="size the scratchpad for a target")
    p.add_argument("--config", required=True)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--dtype", default="INT8")
    p.add_argument("--bandwidth-gbs", type=float, default=None)
    p.add_argument("--cap", type=int, default=4096)
    p.set_defaults(func=cmd_dse)

    p = sub.add_parser("sweep", help="run a configs x workloads grid")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("trace", help="simulate one workload, emit trace CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--workload", required=True,
                   help="e.g. 'M=512,N=512,K=1024,dtype=INT8'")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_trace)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance suite: one test per top-level criterion, each printing a
single PASS line with the measured values (visible with pytest -s / -v)."""

import math
import time

import numpy as np
import pytest

from conftest import build_gemm, read_result
from mxsim import (ArchConfig, Check, Issue, MatrixUnit, MemoryModel,
                   SizingError, VectorConfig, VectorOp, constraint_holds,
                   execute_plan, matmul_functional, peak_throughput, plan_gemm,
                   run_program, simulate_op, size_scratchpad, sized_config,
                   tile_times, utilization_bound, utilization_bound_for_extent)
from mxsim.cli import main as cli_main
from mxsim.formats import decode, dtype_spec, encode
from mxsim.numerics import oracle_dot, pe_dot
from reference_blockfp import block_dot_reference, matmul_reference

CASE = ArchConfig()
MEM = MemoryModel()
INT8 = dtype_spec("INT8")


def test_criterion_1_peak_throughput():
    tput = peak_throughput(CASE, INT8)
    assert tput == 4.096e12
    print(f"\ncriterion 1 PASS: peak INT8 throughput {tput:.4g} ops/s "
          "(4.096 TOPS, exact)")


def test_criterion_2_tile_times_and_bound():
    compute_s, memory_s = tile_times(CASE, MEM, INT8)
    assert compute_s == pytest.approx(1.28e-7, abs=1e-16)
    assert memory_s == pytest.approx(1.7066666666666666e-7, abs=1e-16)
    assert constraint_holds(CASE, MEM, INT8)
    bound = utilization_bound(CASE, MEM, INT8)
    assert bound == pytest.approx(0.75, abs=1e-9)
    print(f"\ncriterion 2 PASS: tile compute {compute_s:.6e} s, memory "
          f"{memory_s:.6e} s, constraint holds, bound {bound:.9f}")


def test_criterion_3_compute_bound_utilization():
    # 2 TOPS configuration: 4x4 PEs, 256-bit reduce, scratchpad sized for
    # a utilization target of 1.0 at 48 GB/s
    pe = ArchConfig(m_pe=4, n_pe=4, k_pe_bits=256, m_scp=4, n_scp=4,
                    k_scp_bytes=64)
    m_scp, n_scp = size_scratchpad(pe, MEM, INT8, 1.0)
    cfg = sized_config(pe, m_scp, n_scp)
    assert peak_throughput(cfg, INT8) == 2.048e12
    utils = {}
    for k in (1024, 2048, 4096, 8192):
        t0 = time.time()
        plan = plan_gemm(512, 512, k, cfg)
        report, _, _, _ = execute_plan(plan, cfg, MEM, seed=1)
        elapsed = time.time() - t0
        assert elapsed <= 30.0
        assert report.utilization >= 0.90, (k, report.utilization)
        utils[k] = report.utilization
    summary = ", ".join(f"K={k}: {u:.4f}" for k, u in utils.items())
    print(f"\ncriterion 3 PASS: residency {m_scp}x{n_scp}, M=N=512 "
          f"utilization {summary} (all >= 0.90)")


def test_criterion_4_scaling_grid():
    t0 = time.time()
    worst = 0.0
    sized = 0
    infeasible = []
    for pe_dim in (2, 4, 8, 16):
        for k_bits in (256, 512):
            for bw in (8, 16, 32, 48, 64):
                pe = ArchConfig(m_pe=pe_dim, n_pe=pe_dim, k_pe_bits=k_bits,
                                m_scp=pe_dim, n_scp=pe_dim,
                                k_scp_bytes=k_bits // 8 * 2)
                mem = MemoryModel(bandwidth_bytes_per_s=bw * 1e9)
                try:
                    m, n = size_scratchpad(pe, mem, INT8, 0.80)
                except SizingError:
                    # residency above the 4096 cap is a legitimate outcome
                    infeasible.append(f"{pe_dim}x{pe_dim}/{k_bits}b/{bw}GBs")
                    continue
                cfg = sized_config(pe, m, n)
                bound = utilization_bound_for_extent(cfg, mem, INT8, 512, 512)
                plan = plan_gemm(512, 512, 8192, cfg)
                report, _, _, _ = execute_plan(plan, cfg, mem, seed=3)
                diff = abs(report.utilization - bound)
                assert diff <= 0.10, (pe_dim, k_bits, bw, report.utilization,
                                      bound)
                worst = max(worst, diff)
                sized += 1
    elapsed = time.time() - t0
    assert elapsed <= 600.0
    print(f"\ncriterion 4 PASS: {sized} sized configs within +/-0.10 of the "
          f"analytic bound (worst |diff| {worst:.3f}); infeasible at cap: "
          f"{infeasible or 'none'}; grid time {elapsed:.0f}s")


def _naive_triple_loop(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = [[0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            s = 0
            for kk in range(k):
                s += int(a[i][kk]) * int(b[kk][j])
            out[i][j] = s
    return np.array(out, dtype=np.int64)


def test_criterion_5_functional_correctness():
    rng = np.random.default_rng(42)
    # (a) INT8 bit-exactness over >= 10^4 randomized shapes up to
    # 128x128x512.  The bulk uses an exact int64 reduction as the
    # reference; a sample is anchored against a literal triple loop.
    trials = 10_000
    for t in range(trials):
        m = int(np.exp(rng.uniform(0, math.log(128))))
        n = int(np.exp(rng.uniform(0, math.log(128))))
        k = int(np.exp(rng.uniform(0, math.log(512))))
        a = rng.integers(-128, 128, (m, k), dtype=np.int64)
        b = rng.integers(-128, 128, (k, n), dtype=np.int64)
        ref = np.einsum("ik,kj->ij", a, b)
        desc, image, _, _, _ = build_gemm(m, n, k, rng=rng)
        image.write_matrix(_operand(desc.base_a, m, k, desc.stride_a),
                           a.astype(np.int8).view(np.uint8))
        image.write_matrix(_operand(desc.base_b, k, n, desc.stride_b),
                           b.astype(np.int8).view(np.uint8))
        got = matmul_functional(desc, image, 64)
        assert np.array_equal(got, ref), (m, n, k)
        if t % 500 == 0:  # anchor the reference and exercise the engine
            assert np.array_equal(ref, _naive_triple_loop(a, b))
            desc2, image2, _, _, _ = build_gemm(m, n, k, rng=rng)
            image2.write_matrix(_operand(desc2.base_a, m, k, desc2.stride_a),
                                a.astype(np.int8).view(np.uint8))
            image2.write_matrix(_operand(desc2.base_b, k, n, desc2.stride_b),
                                b.astype(np.int8).view(np.uint8))
            simulate_op(desc2, CASE, MEM, image2, collect_events=False)
            assert np.array_equal(read_result(desc2, image2), ref)

    # (b) float formats: within the truncation bound vs the exact oracle,
    # and bit-exact vs the standalone block-FP model
    checked = 0
    for kind in ("FP8", "FP16", "BF16", "TF32"):
        dt = dtype_spec(kind)
        for _ in range(150):
            k = int(rng.integers(1, 65))
            a = encode(rng.uniform(-3, 3, k), dt)
            b = encode(rng.uniform(-3, 3, k), dt)
            got = pe_dot(a, b, dt).value
            ref = block_dot_reference([int(x) for x in a],
                                      [int(x) for x in b], kind)
            assert np.float32(got).tobytes() == ref.tobytes(), kind
            exact = oracle_dot(a, b, dt)
            prods = decode(a, dt) * decode(b, dt)
            if np.any(prods != 0):
                emax = int(np.max(np.frexp(prods[prods != 0])[1]))
                bound = k * 2.0 ** (emax - 31) + abs(exact) * 2.0 ** -23
                assert abs(got - exact) <= bound
            checked += 1
        # chunked matmul against the scalar reference model
        desc, image, av, bv, _ = build_gemm(3, 5, 70, dtype=kind, rng=rng)
        got_c = matmul_functional(desc, image, CASE.k_pe_elems(dt))
        ref_c = matmul_reference(encode(av, dt).tolist(),
                                 encode(bv, dt).tolist(), kind,
                                 CASE.k_pe_elems(dt))
        assert got_c.astype(np.float32).tobytes() == ref_c.tobytes(), kind
    print(f"\ncriterion 5 PASS: INT8 bit-exact on {trials} random shapes "
          f"(<=128x128x512) incl. triple-loop anchors and simulate_op; "
          f"{checked} float dots bit-exact vs the standalone block-FP model "
          "and within the truncation bound")


def test_criterion_6_overlap_benefit():
    # 16-tile plan (256x256 outputs over a 64x64 residency)
    m = n = 256
    k = 512
    bare = plan_gemm(m, n, k, CASE, mode="unfused")
    t_matrix = execute_plan(bare, CASE, MEM, seed=5)[0].total_cycles
    per_tile = t_matrix / 16
    # calibrate the epilogue to the per-tile matmul cost: a copy pass over
    # 64x64 FP32 elements is 256 beats at 512-bit lanes
    beats = math.ceil(64 * 64 / (512 // 32))
    vcfg = VectorConfig(op_cost={"copy": max(1, round(per_tile / beats))})
    epi = (VectorOp("copy"),)
    fused = plan_gemm(m, n, k, CASE, epilogue=epi, mode="fused")
    unfused = plan_gemm(m, n, k, CASE, epilogue=epi, mode="unfused")
    t_fused = execute_plan(fused, CASE, MEM, vcfg=vcfg, seed=5)[0].total_cycles
    t_unfused = execute_plan(unfused, CASE, MEM, vcfg=vcfg,
                             seed=5)[0].total_cycles
    speedup = t_unfused / t_fused
    n_tiles = 16
    expected = (n_tiles + 1) / (2 * n_tiles) * t_unfused
    assert speedup >= 1.7, speedup
    assert abs(t_fused - expected) <= 0.10 * expected, (t_fused, expected)
    print(f"\ncriterion 6 PASS: 16-tile fused {t_fused} vs unfused "
          f"{t_unfused} cycles, speedup {speedup:.2f}x (>= 1.7), fused "
          f"within {abs(t_fused - expected) / expected:.1%} of (n+1)/2n "
          "pipeline algebra")


def test_criterion_7_isa_schedule_invariance():
    rng = np.random.default_rng(77)
    programs = 1000
    for p in range(programs):
        depth = int(rng.integers(2, 5))
        cfg = ArchConfig(m_scp=8, n_scp=8, k_scp_bytes=64, queue_depth=depth)
        n_ops = int(rng.integers(2, 6))
        descs, image_a = _small_ops(n_ops, rng)
        # schedule A: random interleaving of issues and checks
        unit_a = _run_schedule(descs, image_a, cfg, rng, random_checks=True)
        # schedule B: issue/check strictly alternating
        _, image_b = _small_ops(n_ops, rng, seed_from=image_a)
        unit_b = _run_schedule(descs, image_b, cfg, rng, random_checks=False)
        # in-order retirement and bounded pending were asserted inline;
        # value-equality: both schedules leave identical memory
        assert image_a.data.tobytes() == image_b.data.tobytes(), p
    print(f"\ncriterion 7 PASS: {programs} random issue/check programs kept "
          "in-order retirement, pending <= queue_depth, and byte-identical "
          "results across schedules")


def test_criterion_8_determinism(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text("arch:\n  m_pe: 4\n  n_pe: 4\n  m_scp: 64\n"
                        "  n_scp: 64\nmemory:\n"
                        "  bandwidth_bytes_per_s: 48.0e+9\n")
    spec_path = tmp_path / "sweep.yaml"
    spec_path.write_text(
        "seed: 11\nconfigs:\n  - id: c0\n    arch: {m_scp: 64, n_scp: 64}\n"
        "workloads:\n  - {id: w0, M: 128, N: 96, K: 256}\n"
        "  - {id: w1, M: 64, N: 64, K: 128, dtype: BF16}\n")
    blobs = []
    for run in ("r1", "r2"):
        sweep_dir = tmp_path / f"sweep-{run}"
        trace_dir = tmp_path / f"trace-{run}"
        assert cli_main(["sweep", "--spec", str(spec_path),
                         "--out", str(sweep_dir)]) == 0
        assert cli_main(["trace", "--config", str(cfg_path),
                         "--workload", "M=128,N=128,K=256",
                         "--out", str(trace_dir)]) == 0
        blobs.append(tuple(
            (sweep_dir / "sweep.csv").read_bytes() for _ in (0,)) + (
            (sweep_dir / "errors.csv").read_bytes(),
            (trace_dir / "trace.csv").read_bytes(),
            (trace_dir / "report.json").read_bytes()))
    capsys.readouterr()
    assert blobs[0] == blobs[1]
    print("\ncriterion 8 PASS: sweep CSV, errors CSV, trace CSV and report "
          "JSON are byte-identical across re-runs")


# --- helpers for criteria 5 and 7 ------------------------------------------------


def _operand(base, rows, cols, stride):
    from mxsim import TensorBuffer
    return TensorBuffer(base, rows, cols, stride, 1, "INT8")


def _small_ops(n_ops, rng, seed_from=None):
    """n_ops small descriptors with disjoint C regions in one image."""
    from mxsim import MemoryImage, MatMulDescriptor
    m = n = 8
    k = 16
    a_bytes, b_bytes, c_bytes = m * k, k * n, m * n * 4
    base_c0 = a_bytes + b_bytes
    image = MemoryImage(base_c0 + n_ops * c_bytes)
    if seed_from is not None:
        image.data[:base_c0] = seed_from.data[:base_c0]
    else:
        image.data[:base_c0] = rng.integers(0, 256, base_c0, dtype=np.uint8)
    descs = [MatMulDescriptor(m=m, n=n, k=k, base_a=0, base_b=a_bytes,
                              base_c=base_c0 + i * c_bytes, stride_a=k,
                              stride_b=n, stride_c=n * 4)
             for i in range(n_ops)]
    return descs, image


def _run_schedule(descs, image, cfg, rng, random_checks):
    """Issue all descs with interleaved checks; assert ISA invariants."""
    from mxsim.engine import OpScheduler
    sched = OpScheduler(cfg, MEM, image)
    unit = MatrixUnit(cfg.queue_depth, sched.schedule, image)
    issued = checked = 0
    while issued < len(descs) or checked < issued:
        if random_checks:
            do_issue = issued < len(descs) and (checked == issued
                                                or rng.integers(0, 2) == 0)
        else:
            do_issue = issued < len(descs) and issued == checked
        if do_issue:
            unit.async_matmul(descs[issued])
            issued += 1
            in_flight = sum(1 for c in unit.completions if c > unit.cpu_cycle)
            assert in_flight <= cfg.queue_depth
        else:
            h = unit.check_matmul()
            assert h is not None and h.id == checked  # in-order retirement
            assert unit.cpu_cycle >= unit.completions[h.id]
            checked += 1
    assert unit.completions == sorted(unit.completions)
    return unit

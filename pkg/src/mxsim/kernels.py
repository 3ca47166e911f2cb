"""Programming-model layer: tiled GEMM plans and fused epilogue pipelines.

A plan covers the output grid with scratchpad-resident tiles, one async
matrix op per tile.  Fused mode emits the software pipeline: issue tile
i, check tile i-1, run tile i-1's epilogue, so the vector unit works on
the previous tile while the matrix unit computes the next one.  Unfused
mode issues and checks every tile, then runs all epilogues serially.
The functional output is identical in both modes; only cycles differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .archconfig import ArchConfig, MemoryModel
from .engine import Check, Issue, ScriptItem, SimReport, VecRun, run_program
from .formats import DataTypeSpec, dtype_spec, encode
from .isa import MatMulDescriptor
from .memimage import MemoryImage, TensorBuffer, accumulator_buffer
from .vector import VectorConfig, VectorTask


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class TileTask:
    """One output tile: its matrix descriptor plus optional vector epilogue."""

    mi: int
    ni: int
    desc: MatMulDescriptor
    epilogue: Optional[VectorTask]
    c_buf: TensorBuffer  # tile accumulator region (epilogue input)
    out_buf: Optional[TensorBuffer]  # epilogue output, separate region


@dataclass(frozen=True)
class KernelPlan:
    m: int
    n: int
    k: int
    tile_m: int
    tile_n: int
    mode: str  # fused | unfused
    dtype: str
    tiles: tuple[TileTask, ...]
    mem_size: int
    base_a: int
    base_b: int

    def script(self) -> list[ScriptItem]:
        items: list[ScriptItem] = []
        if self.mode == "fused":
            items.append(Issue(self.tiles[0].desc))
            for i in range(1, len(self.tiles)):
                items.append(Issue(self.tiles[i].desc))
                items.append(Check())
                items.extend(_epilogue_items(self.tiles[i - 1]))
            items.append(Check())
            items.extend(_epilogue_items(self.tiles[-1]))
        else:
            for tile in self.tiles:
                items.append(Issue(tile.desc))
                items.append(Check())
            for tile in self.tiles:
                items.extend(_epilogue_items(tile))
        return items


def _epilogue_items(tile: TileTask) -> list[ScriptItem]:
    if tile.epilogue is None:
        return []
    return [VecRun(tile.epilogue, tile.c_buf, tile.out_buf)]


def plan_gemm(m: int, n: int, k: int, cfg: ArchConfig, dtype: str = "INT8",
              epilogue: Optional[tuple] = None, mode: str = "fused",
              tile_m: Optional[int] = None,
              tile_n: Optional[int] = None) -> KernelPlan:
    """Lay out A, B, bias-free C and epilogue regions; build the tile grid.

    Tile sizes default to the scratchpad residency (the shared storage
    capacity bounds the tile).  `epilogue` is a tuple of VectorOp applied
    per tile in FP32.
    """
    if min(m, n, k) < 1:
        raise PlanError("dimensions must be >= 1")
    cfg.check()
    dt = dtype_spec(dtype)
    tile_m = tile_m or min(cfg.m_scp, m)
    tile_n = tile_n or min(cfg.n_scp, n)
    if tile_m > cfg.m_scp or tile_n > cfg.n_scp:
        raise PlanError(
            f"tile {tile_m}x{tile_n} exceeds scratchpad residency "
            f"{cfg.m_scp}x{cfg.n_scp}")
    eb = dt.storage_bytes
    base_a = 0
    base_b = _align(base_a + m * k * eb)
    base_c = _align(base_b + k * n * eb)
    base_out = _align(base_c + m * n * 4)
    mem_size = base_out + (m * n * 4 if epilogue else 0)

    tiles = []
    for mi in range(math.ceil(m / tile_m)):
        mt = min(tile_m, m - mi * tile_m)
        for ni in range(math.ceil(n / tile_n)):
            nt = min(tile_n, n - ni * tile_n)
            c_off = base_c + (mi * tile_m * n + ni * tile_n) * 4
            desc = MatMulDescriptor(
                m=mt, n=nt, k=k,
                base_a=base_a + mi * tile_m * k * eb,
                base_b=base_b + ni * tile_n * eb,
                base_c=c_off,
                stride_a=k * eb, stride_b=n * eb, stride_c=n * 4,
                dtype=dtype)
            c_buf = accumulator_buffer(c_off, mt, nt, n * 4, dt)
            out_buf = None
            task = None
            if epilogue:
                out_off = base_out + (mi * tile_m * n + ni * tile_n) * 4
                out_buf = TensorBuffer(out_off, mt, nt, n * 4, 4, "FP32")
                task = VectorTask(ops=tuple(epilogue), elements=mt * nt,
                                  rows=mt, in_bits=32, out_bits=32)
            tiles.append(TileTask(mi, ni, desc, task, c_buf, out_buf))
    return KernelPlan(m=m, n=n, k=k, tile_m=tile_m, tile_n=tile_n, mode=mode,
                      dtype=dtype, tiles=tuple(tiles), mem_size=mem_size,
                      base_a=base_a, base_b=base_b)


def _align(addr: int, to: int = 64) -> int:
    return (addr + to - 1) // to * to


def fill_operands(plan: KernelPlan, image: MemoryImage,
                  seed: int) -> None:
    """Deterministic random operand data for A and B."""
    dt = dtype_spec(plan.dtype)
    rng = np.random.default_rng(seed)
    if dt.is_integer:
        a = rng.integers(-128, 128, size=(plan.m, plan.k)).astype(np.int8)
        b = rng.integers(-128, 128, size=(plan.k, plan.n)).astype(np.int8)
        a_bits, b_bits = a.view(np.uint8), b.view(np.uint8)
    else:
        a = rng.uniform(-2.0, 2.0, size=(plan.m, plan.k))
        b = rng.uniform(-2.0, 2.0, size=(plan.k, plan.n))
        a_bits, b_bits = encode(a, dt), encode(b, dt)
    eb = dt.storage_bytes
    image.write_matrix(
        TensorBuffer(plan.base_a, plan.m, plan.k, plan.k * eb, eb, dt.kind),
        a_bits)
    image.write_matrix(
        TensorBuffer(plan.base_b, plan.k, plan.n, plan.n * eb, eb, dt.kind),
        b_bits)


def execute_plan(plan: KernelPlan, cfg: ArchConfig, mem: MemoryModel,
                 vcfg: Optional[VectorConfig] = None, seed: int = 0,
                 image: Optional[MemoryImage] = None,
                 collect_events: bool = False):
    """Drive the ISA, engine, and vector unit under one clock.

    Returns (SimReport, C result array, epilogue output array or None,
    events).  The functional output is independent of the plan mode.
    """
    if image is None:
        image = MemoryImage(plan.mem_size)
        fill_operands(plan, image, seed)
    report, events, _unit = run_program(
        plan.script(), cfg, mem, image, vcfg, collect_events=collect_events)
    dt = dtype_spec(plan.dtype)
    c_buf = accumulator_buffer(
        plan.tiles[0].c_buf.base, plan.m, plan.n, plan.n * 4, dt)
    raw = image.read_matrix(c_buf)
    c = raw.view(np.int32) if dt.accumulator == "INT32" else raw.view(np.float32)
    out = None
    if plan.tiles[0].out_buf is not None:
        out_base = plan.tiles[0].out_buf.base
        out_raw = image.read_matrix(
            TensorBuffer(out_base, plan.m, plan.n, plan.n * 4, 4, "FP32"))
        out = out_raw.view(np.float32)
    return report, c.copy(), (out.copy() if out is not None else None), events


def gemm_sweep(m_fix: int, n_fix: int, k_list, cfg: ArchConfig,
               mem: MemoryModel, dtype: str = "INT8",
               seed: int = 0) -> list[tuple[int, int, float]]:
    """(K, cycles, utilization) rows for a GEMM sweep without epilogue."""
    rows = []
    for k in k_list:
        plan = plan_gemm(m_fix, n_fix, k, cfg, dtype=dtype, mode="fused")
        report, _, _, _ = execute_plan(plan, cfg, mem, seed=seed)
        rows.append((k, report.total_cycles, report.utilization))
    return rows

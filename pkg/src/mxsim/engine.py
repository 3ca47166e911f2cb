"""Event-driven cycle-approximate timing of the matrix unit.

One operation walks an output-stationary tile loop: for each output tile
the loader streams A/B chunks from memory into scratchpad banks, the PE
array consumes them, accumulators stay resident across all K chunks, and
the tile is written back once.  With two or more banks the load of chunk
c+1 overlaps the compute of chunk c, and the next tile's first chunks
prefetch while the current tile drains.  Bandwidth is a per-cycle byte
budget; a single fixed latency is charged at the start of each
operation's dependency chain.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .archconfig import ArchConfig, MemoryModel
from .isa import MatMulDescriptor, MatrixUnit, validate
from .memimage import MemoryImage, TensorBuffer
from .numerics import matmul_functional
from .vector import VectorConfig, VectorTask, vec_cost, vec_execute


@dataclass(frozen=True)
class TimelineEvent:
    cycle: int
    resource: str  # loader | scratchpad_bank_i | controller_{A,B,C} | pe_array | writeback | vector
    kind: str  # start | stop | stall
    tag: str  # op id + tile coords


@dataclass
class SimReport:
    """Cycle and traffic summary for one simulated run."""

    total_cycles: int
    pe_busy_cycles: int
    bytes_read: int
    bytes_written: int
    mac_count: int
    utilization: float  # mac_count / (total_cycles * peak MACs/cycle)
    resource_busy: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


class OpScheduler:
    """Schedules matrix ops onto the unit's loader/PE/writeback resources.

    Clocks persist across operations, so a queued op's loads can begin
    while the previous op drains (the unit never idles with queued work
    and free banks).  Functional results are produced in the same pass.
    """

    def __init__(self, cfg: ArchConfig, mem: MemoryModel, image: MemoryImage,
                 collect_events: bool = False):
        cfg.check()
        mem.check()
        self.cfg = cfg
        self.mem = mem
        self.image = image
        self.collect_events = collect_events
        self.events: list[TimelineEvent] = []
        self.mem_free = 0
        self.pe_free = 0
        # write channel of the (full-duplex) memory port; reads and
        # writebacks do not contend for the same per-cycle byte budget
        self.wb_free = 0
        # compute-end times of chunks still occupying a scratchpad bank
        self.inflight: deque[int] = deque()
        self.pe_busy_cycles = 0
        self.loader_busy_cycles = 0
        self.writeback_busy_cycles = 0
        self.bytes_read = 0
        self.bytes_written = 0
        self.mac_count = 0
        self.op_count = 0

    def _emit(self, cycle: int, resource: str, kind: str, tag: str) -> None:
        if self.collect_events:
            self.events.append(TimelineEvent(cycle, resource, kind, tag))

    def _penalty(self, stride: int, row_bytes: int) -> float:
        return self.mem.stride_penalty if stride != row_bytes else 1.0

    def _writeback(self, ready: int, cycles: int, tag: str) -> int:
        """Queue one tile writeback on the write channel; returns its end."""
        wb_start = max(self.wb_free, ready)
        wb_end = wb_start + cycles
        self.wb_free = wb_end
        self.writeback_busy_cycles += cycles
        self._emit(wb_start, "writeback", "start", tag)
        self._emit(wb_end, "writeback", "stop", tag)
        self._emit(wb_start, "controller_C", "start", tag)
        self._emit(wb_end, "controller_C", "stop", tag)
        return wb_end

    def schedule(self, desc: MatMulDescriptor, earliest_start: int) -> int:
        """Time one op starting no earlier than earliest_start; returns completion."""
        cfg, mem = self.cfg, self.mem
        dtype = desc.dtype_spec
        eb = dtype.storage_bytes
        k_pe = cfg.k_pe_elems(dtype)
        k_scp = max(1, cfg.k_scp_elems(dtype))
        bpc = mem.bandwidth_bytes_per_s / cfg.freq_hz  # bytes per cycle
        pen_a = self._penalty(desc.stride_a, desc.k * eb)
        pen_b = self._penalty(desc.stride_b, desc.n * eb)
        c_row_bytes = (desc.m if desc.transpose else desc.n) * 4
        pen_c = self._penalty(desc.stride_c, c_row_bytes)

        op_id = self.op_count
        self.op_count += 1
        matmul_functional(desc, self.image, k_pe)

        start = earliest_start
        first_of_op = True
        completion = start
        chunk_index = 0
        for mi in range(math.ceil(desc.m / cfg.m_scp)):
            m_tile = min(cfg.m_scp, desc.m - mi * cfg.m_scp)
            for ni in range(math.ceil(desc.n / cfg.n_scp)):
                n_tile = min(cfg.n_scp, desc.n - ni * cfg.n_scp)
                tag = f"op{op_id}:t{mi},{ni}"
                first_of_tile = True
                comp_end = self.pe_free
                for k0 in range(0, desc.k, k_scp):
                    kc = min(k_scp, desc.k - k0)
                    bias_bytes = 0
                    if first_of_tile:
                        if desc.bias_type == "RowRepeat":
                            bias_bytes = n_tile * 4
                        elif desc.bias_type == "Full":
                            bias_bytes = m_tile * n_tile * 4
                    weighted = (m_tile * kc * eb / pen_a
                                + n_tile * kc * eb / pen_b + bias_bytes)
                    transfer = math.ceil(weighted / bpc)
                    load_ready = start
                    if len(self.inflight) >= cfg.scratchpad_banks:
                        load_ready = max(load_ready, self.inflight.popleft())
                    load_start = max(self.mem_free, load_ready)
                    load_end = load_start + transfer
                    self.mem_free = load_end
                    self.loader_busy_cycles += transfer
                    data_ready = load_end
                    if first_of_op:
                        data_ready += mem.latency_cycles
                        first_of_op = False
                    comp_cycles = (math.ceil(m_tile / cfg.m_pe)
                                   * math.ceil(n_tile / cfg.n_pe)
                                   * math.ceil(kc / k_pe))
                    if first_of_tile:
                        comp_cycles += cfg.pipeline_depth  # pipeline fill
                        first_of_tile = False
                    comp_start = max(self.pe_free, data_ready)
                    comp_end = comp_start + comp_cycles
                    self.pe_free = comp_end
                    self.pe_busy_cycles += comp_cycles
                    self.inflight.append(comp_end)
                    self.bytes_read += m_tile * kc * eb + n_tile * kc * eb \
                        + bias_bytes
                    ctag = f"{tag}:k{chunk_index}"
                    self._emit(load_start, "loader", "start", ctag)
                    self._emit(load_end, "loader", "stop", ctag)
                    self._emit(load_start, "controller_A", "start", ctag)
                    self._emit(load_end, "controller_A", "stop", ctag)
                    self._emit(load_start, "controller_B", "start", ctag)
                    self._emit(load_end, "controller_B", "stop", ctag)
                    bank = f"scratchpad_bank_{chunk_index % cfg.scratchpad_banks}"
                    self._emit(load_start, bank, "start", ctag)
                    self._emit(comp_end, bank, "stop", ctag)
                    self._emit(comp_start, "pe_array", "start", ctag)
                    self._emit(comp_end, "pe_array", "stop", ctag)
                    chunk_index += 1
                # output-stationary: one writeback per tile, after its
                # accumulators drain; next-tile loads prefetch meanwhile
                wb_bytes = m_tile * n_tile * 4
                wb_cycles = math.ceil(wb_bytes / (bpc * pen_c))
                wb_end = self._writeback(comp_end, wb_cycles, tag)
                self.bytes_written += wb_bytes
                completion = max(completion, wb_end)
        completion = max(completion, self.pe_free)
        self.mac_count += desc.m * desc.n * desc.k
        return completion

    def report(self, total_cycles: int,
               peak_macs_per_cycle: int) -> SimReport:
        total = max(total_cycles, 1)
        return SimReport(
            total_cycles=total_cycles,
            pe_busy_cycles=self.pe_busy_cycles,
            bytes_read=self.bytes_read,
            bytes_written=self.bytes_written,
            mac_count=self.mac_count,
            utilization=self.mac_count / (total * peak_macs_per_cycle),
            resource_busy={
                "loader": self.loader_busy_cycles / total,
                "pe_array": self.pe_busy_cycles / total,
                "writeback": self.writeback_busy_cycles / total,
            },
        )


def simulate_op(desc: MatMulDescriptor, cfg: ArchConfig, mem: MemoryModel,
                image: MemoryImage, collect_events: bool = True,
                ) -> tuple[SimReport, list[TimelineEvent], int]:
    """Time one operation in isolation, starting at cycle 0."""
    errors = validate(desc, image)
    if errors:
        raise ValueError("; ".join(errors))
    sched = OpScheduler(cfg, mem, image, collect_events=collect_events)
    completion = sched.schedule(desc, 0)
    report = sched.report(completion, cfg.macs_per_cycle(desc.dtype_spec))
    return report, sched.events, completion


# --- programs: interleaved issue / check / vector scripts ------------------


@dataclass(frozen=True)
class Issue:
    desc: MatMulDescriptor


@dataclass(frozen=True)
class Check:
    pass


@dataclass(frozen=True)
class VecRun:
    """A vector task over a source region, written to a destination region."""

    task: VectorTask
    src: TensorBuffer
    dst: TensorBuffer


ScriptItem = Union[Issue, Check, VecRun]


class DeadlockError(RuntimeError):
    pass


def run_program(script: Iterable[ScriptItem], cfg: ArchConfig,
                mem: MemoryModel, image: MemoryImage,
                vcfg: Optional[VectorConfig] = None,
                collect_events: bool = False,
                ) -> tuple[SimReport, list[TimelineEvent], MatrixUnit]:
    """Advance one global clock over a CPU/vector/matrix-unit script.

    Matrix ops run asynchronously in issue order; checks block only the
    CPU lane; vector tasks occupy the CPU lane (they are ordinary
    instructions, which is what makes async offload overlap profitable).
    """
    vcfg = vcfg or VectorConfig()
    sched = OpScheduler(cfg, mem, image, collect_events=collect_events)
    unit = MatrixUnit(cfg.queue_depth, sched.schedule, image)
    dtype_peak = None
    for item in script:
        if isinstance(item, Issue):
            unit.async_matmul(item.desc)
            dtype_peak = cfg.macs_per_cycle(item.desc.dtype_spec)
        elif isinstance(item, Check):
            unit.check_matmul()  # no-op when nothing is outstanding
        elif isinstance(item, VecRun):
            start = unit.cpu_cycle
            vec_execute(item.task, image, item.src, item.dst)
            cycles = vec_cost(item.task, vcfg)
            unit.advance(cycles)
            if collect_events:
                tag = f"vec@{item.src.base:#x}"
                sched.events.append(TimelineEvent(start, "vector", "start", tag))
                sched.events.append(
                    TimelineEvent(unit.cpu_cycle, "vector", "stop", tag))
        else:
            raise TypeError(f"unknown script item {item!r}")
    # total time covers all issued work even if the script never checks it
    total = max(unit.cpu_cycle, unit.last_completion, sched.mem_free)
    if dtype_peak is None:
        from .formats import dtype_spec
        dtype_peak = cfg.macs_per_cycle(dtype_spec("INT8"))
    report = sched.report(total, dtype_peak)
    return report, sched.events, unit


def emit_trace(events: Iterable[TimelineEvent], sink) -> None:
    """Serialize events as CSV, ordered by (cycle, resource, kind, tag)."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["cycle", "resource", "kind", "tag"])
    for ev in sorted(events, key=lambda e: (e.cycle, e.resource, e.kind, e.tag)):
        writer.writerow([ev.cycle, ev.resource, ev.kind, ev.tag])

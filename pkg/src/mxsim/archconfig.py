"""Configurable architectural parameters and the analytic throughput model.

Holds the microarchitectural knobs of the matrix unit (PE array shape,
reduce width, scratchpad residency, clock), the parametric memory model,
the peak-throughput and tile-time formulas, the compute/memory constraint
check, and the scratchpad-sizing design-space explorer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import yaml

from .formats import DataTypeSpec, dtype_spec


class ConfigError(ValueError):
    """An ArchConfig or MemoryModel invariant is violated."""


class SizingError(ValueError):
    """No scratchpad residency within the cap meets the utilization target."""


@dataclass(frozen=True)
class ArchConfig:
    """Matrix-unit configuration.

    Scratchpad residency (m_scp, n_scp, k_scp_bytes) bounds the tile held
    locally and therefore the data reuse per byte of memory traffic.
    """

    freq_hz: float = 2.0e9
    m_pe: int = 4  # PE array rows
    n_pe: int = 4  # PE array columns
    k_pe_bits: int = 512  # PE reduce width
    m_scp: int = 64  # max resident M rows
    n_scp: int = 64  # max resident N columns
    k_scp_bytes: int = 64  # max resident K depth
    pipeline_depth: int = 6
    queue_depth: int = 2  # max outstanding async matrix ops
    scratchpad_banks: int = 2

    def validate(self) -> list[str]:
        errors = []
        for name in ("freq_hz", "m_pe", "n_pe", "k_pe_bits", "m_scp", "n_scp",
                     "k_scp_bytes", "pipeline_depth", "queue_depth",
                     "scratchpad_banks"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be strictly positive")
        if self.m_pe > 0 and self.m_scp % self.m_pe != 0:
            errors.append("m_pe must divide m_scp")
        if self.n_pe > 0 and self.n_scp % self.n_pe != 0:
            errors.append("n_pe must divide n_scp")
        if self.k_pe_bits % 8 != 0:
            errors.append("k_pe_bits must be a multiple of 8")
        elif (self.k_scp_bytes * 8) % self.k_pe_bits != 0:
            errors.append("k_scp_bytes * 8 must be a multiple of k_pe_bits")
        if self.queue_depth < 2:
            errors.append("queue_depth must be >= 2")
        return errors

    def check(self) -> None:
        errors = self.validate()
        if errors:
            raise ConfigError("; ".join(errors))

    def k_pe_elems(self, dtype: DataTypeSpec) -> int:
        """Elements consumed per PE per cycle for one data type."""
        return dtype.elements_per_reduce(self.k_pe_bits)

    def k_scp_elems(self, dtype: DataTypeSpec) -> int:
        """Resident K depth in elements of the active data type."""
        return self.k_scp_bytes // dtype.storage_bytes

    def macs_per_cycle(self, dtype: DataTypeSpec) -> int:
        return self.m_pe * self.n_pe * self.k_pe_elems(dtype)


@dataclass(frozen=True)
class MemoryModel:
    """Parametric bandwidth/latency model of the lower memory hierarchy."""

    bandwidth_bytes_per_s: float = 48.0e9
    latency_cycles: int = 100  # fixed request latency per dependency chain
    stride_penalty: float = 1.0  # throughput factor when stride != row length

    def validate(self) -> list[str]:
        errors = []
        if self.bandwidth_bytes_per_s <= 0:
            errors.append("bandwidth_bytes_per_s must be positive")
        if not (0.0 < self.stride_penalty <= 1.0):
            errors.append("stride_penalty must be in (0, 1]")
        if self.latency_cycles < 0:
            errors.append("latency_cycles must be non-negative")
        return errors

    def check(self) -> None:
        errors = self.validate()
        if errors:
            raise ConfigError("; ".join(errors))


def peak_throughput(cfg: ArchConfig, dtype: DataTypeSpec) -> float:
    """Theoretical throughput in ops/s (multiply and add counted separately)."""
    cfg.check()
    return cfg.freq_hz * cfg.m_pe * cfg.n_pe * cfg.k_pe_elems(dtype) * 2


def tile_times(cfg: ArchConfig, mem: MemoryModel,
               dtype: DataTypeSpec) -> tuple[float, float]:
    """(compute_s, memory_s) for one fully-resident scratchpad tile.

    The memory term counts A and B chunk traffic only; accumulators stay
    resident, so bias/C traffic is charged by the timing engine instead.
    """
    cfg.check()
    mem.check()
    k_elems = cfg.k_scp_elems(dtype)
    compute_s = (cfg.m_scp * cfg.n_scp * k_elems) / (
        cfg.freq_hz * cfg.macs_per_cycle(dtype))
    memory_s = ((cfg.m_scp + cfg.n_scp) * k_elems * dtype.storage_bytes
                / mem.bandwidth_bytes_per_s)
    return compute_s, memory_s


def constraint_holds(cfg: ArchConfig, mem: MemoryModel,
                     dtype: DataTypeSpec) -> bool:
    """True when tile compute time does not exceed tile memory-access time."""
    compute_s, memory_s = tile_times(cfg, mem, dtype)
    return compute_s <= memory_s


def utilization_bound(cfg: ArchConfig, mem: MemoryModel,
                      dtype: DataTypeSpec) -> float:
    """Steady-state PE utilization upper bound under full compute/memory overlap."""
    compute_s, memory_s = tile_times(cfg, mem, dtype)
    return min(1.0, compute_s / memory_s)


def utilization_bound_for_extent(cfg: ArchConfig, mem: MemoryModel,
                                 dtype: DataTypeSpec, m: int,
                                 n: int) -> float:
    """Utilization bound realized on a finite M x N workload.

    A tile is capped by the workload, and a dimension that does not divide
    evenly into the residency is covered by ceil(M/m_scp) tiles whose mean
    extent (the reuse that actually materializes) is M over that count.
    """
    cfg.check()
    mem.check()
    m_eff = m / math.ceil(m / min(cfg.m_scp, m))
    n_eff = n / math.ceil(n / min(cfg.n_scp, n))
    reuse = (m_eff * n_eff) / (m_eff + n_eff)
    mac_rate = cfg.freq_hz * cfg.macs_per_cycle(dtype)
    ratio = reuse * mem.bandwidth_bytes_per_s / (dtype.storage_bytes * mac_rate)
    return min(1.0, ratio)


def size_scratchpad(pe: ArchConfig, mem: MemoryModel, dtype: DataTypeSpec,
                    target_util: float,
                    max_residency: int = 4096) -> tuple[int, int]:
    """Smallest square residency m = n reaching the utilization target.

    The result is rounded up to a common multiple of the PE array rows and
    columns; pe's scratchpad fields are ignored.  k_scp defaults to one
    reduce width per bank (k_pe_bits/8 * scratchpad_banks bytes).
    """
    if not (0.0 < target_util <= 1.0):
        raise ConfigError("target_util must be in (0, 1]")
    mem.check()
    step = math.lcm(pe.m_pe, pe.n_pe)
    k_scp_bytes = (pe.k_pe_bits // 8) * pe.scratchpad_banks

    def bound_at(m: int) -> float:
        cfg = sized_config(pe, m, m, k_scp_bytes)
        return utilization_bound(cfg, mem, dtype)

    # bound(m) = (m/2) * BW / (bytes * MAC rate): solve then round up
    mac_rate = pe.freq_hz * pe.m_pe * pe.n_pe * pe.k_pe_elems(dtype)
    m_real = 2.0 * target_util * dtype.storage_bytes * mac_rate \
        / mem.bandwidth_bytes_per_s
    m = max(step, step * math.ceil(m_real / step))
    while bound_at(m) < target_util:  # guard against float rounding
        m += step
    if m > max_residency:
        raise SizingError(
            f"target {target_util} needs residency {m} > cap {max_residency}; "
            f"limiting ratio bandwidth/mac_rate = "
            f"{mem.bandwidth_bytes_per_s / mac_rate:.4g} bytes/MAC")
    return m, m


def sized_config(pe: ArchConfig, m_scp: int, n_scp: int,
                 k_scp_bytes: int | None = None) -> ArchConfig:
    """Copy of pe with the given scratchpad residency."""
    if k_scp_bytes is None:
        k_scp_bytes = (pe.k_pe_bits // 8) * pe.scratchpad_banks
    return ArchConfig(
        freq_hz=pe.freq_hz, m_pe=pe.m_pe, n_pe=pe.n_pe, k_pe_bits=pe.k_pe_bits,
        m_scp=m_scp, n_scp=n_scp, k_scp_bytes=k_scp_bytes,
        pipeline_depth=pe.pipeline_depth, queue_depth=pe.queue_depth,
        scratchpad_banks=pe.scratchpad_banks)


# --- structured config file (YAML, units explicit in key names) -----------

_ARCH_KEYS = {"freq_hz", "m_pe", "n_pe", "k_pe_bits", "m_scp", "n_scp",
              "k_scp_bytes", "pipeline_depth", "queue_depth",
              "scratchpad_banks"}
_MEM_KEYS = {"bandwidth_bytes_per_s", "latency_cycles", "stride_penalty"}
_FLOAT_KEYS = {"freq_hz", "bandwidth_bytes_per_s", "stride_penalty"}


def _coerce(section: str, doc: dict) -> dict:
    """Numeric coercion; YAML 1.1 reads '2.0e9' (no sign) as a string."""
    out = {}
    for key, value in doc.items():
        try:
            out[key] = float(value) if key in _FLOAT_KEYS else int(value)
        except (TypeError, ValueError):
            raise ConfigError(
                f"{section}.{key} must be a number, got {value!r}") from None
    return out


def load_config(path: str) -> tuple[ArchConfig, MemoryModel]:
    """Load arch/memory sections from a YAML config file."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    arch_doc = doc.get("arch", {})
    mem_doc = doc.get("memory", {})
    for section, keys, got in (("arch", _ARCH_KEYS, arch_doc),
                               ("memory", _MEM_KEYS, mem_doc)):
        if not isinstance(got, dict):
            raise ConfigError(f"{section} section must be a mapping")
        unknown = set(got) - keys
        if unknown:
            raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
    cfg = ArchConfig(**_coerce("arch", arch_doc))
    mem = MemoryModel(**_coerce("memory", mem_doc))
    cfg.check()
    mem.check()
    return cfg, mem

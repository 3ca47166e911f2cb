"""Asynchronous matrix-multiplication instruction interface.

A descriptor bundle describes one task; the unit accepts tasks into a
bounded queue, executes them in order, and retires them in order.  The
issue primitive stalls the simulated CPU while the queue is full; the
check primitive blocks the CPU until the oldest unchecked task completes.
Retirement is in-order completion: the status register's retired counter
advances as the hardware finishes tasks, and the check cursor consumes
them one at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .formats import DataTypeSpec, dtype_spec
from .memimage import MemoryImage, accumulator_buffer, operand_buffer

BIAS_TYPES = ("Zero", "RowRepeat", "Full")


@dataclass(frozen=True)
class MatMulDescriptor:
    """Interface-register bundle for one asynchronous matrix multiplication."""

    m: int
    n: int
    k: int
    base_a: int
    base_b: int
    base_c: int
    stride_a: int
    stride_b: int
    stride_c: int
    dtype: str = "INT8"
    base_bias: int = 0
    stride_bias: int = 0
    bias_type: str = "Zero"
    transpose: bool = False

    @property
    def dtype_spec(self) -> DataTypeSpec:
        return dtype_spec(self.dtype)


def validate(desc: MatMulDescriptor,
             image: Optional[MemoryImage] = None) -> list[str]:
    """All violated descriptor invariants, by field name; empty when ok."""
    errors = []
    for name in ("m", "n", "k"):
        if getattr(desc, name) < 1:
            errors.append(f"{name} must be >= 1")
    if desc.bias_type not in BIAS_TYPES:
        errors.append(f"bias_type must be one of {BIAS_TYPES}")
    try:
        dt = desc.dtype_spec
    except Exception as exc:
        errors.append(f"dtype: {exc}")
        return errors
    if errors:
        return errors

    c_rows, c_cols = (desc.n, desc.m) if desc.transpose else (desc.m, desc.n)
    regions = [
        ("a", operand_buffer(desc.base_a, desc.m, desc.k, desc.stride_a, dt)),
        ("b", operand_buffer(desc.base_b, desc.k, desc.n, desc.stride_b, dt)),
        ("c", accumulator_buffer(desc.base_c, c_rows, c_cols, desc.stride_c, dt)),
    ]
    if desc.bias_type == "Full":
        regions.append(("bias", accumulator_buffer(
            desc.base_bias, desc.m, desc.n, desc.stride_bias, dt)))
    elif desc.bias_type == "RowRepeat":
        regions.append(("bias", accumulator_buffer(
            desc.base_bias, 1, desc.n, desc.n * 4, dt)))
    for name, buf in regions:
        size = image.size if image is not None else None
        for err in buf.check(size if size is not None else buf.end):
            errors.append(f"{name}: {err} (stride_{name}={buf.stride_bytes}, "
                          f"base_{name}={buf.base:#x})")
    return errors


@dataclass(frozen=True)
class OpHandle:
    """Monotonically increasing operation id; ids retire in issue order."""

    id: int


@dataclass
class StatusRegister:
    issued: int = 0
    retired: int = 0  # completed, in order
    error_code: str | None = None

    @property
    def pending(self) -> int:
        return self.issued - self.retired


class DescriptorError(ValueError):
    """async_matmul was handed an invalid descriptor."""


class MatrixUnit:
    """ISA state machine for one matrix unit.

    The scheduler callback maps (descriptor, earliest start cycle) to the
    op's completion cycle; the timing engine supplies it.  The unit owns
    the simulated-CPU clock so that issue stalls and check waits land on
    the CPU timeline, never on the matrix unit's.
    """

    def __init__(self, queue_depth: int,
                 scheduler: Callable[[MatMulDescriptor, int], int],
                 image: Optional[MemoryImage] = None,
                 issue_cycles: int = 1):
        if queue_depth < 2:
            raise ValueError("queue_depth must be >= 2")
        self.queue_depth = queue_depth
        self.scheduler = scheduler
        self.image = image
        self.issue_cycles = issue_cycles
        self.cpu_cycle = 0
        self.completions: list[int] = []  # completion cycle per issued op
        self.descriptors: list[MatMulDescriptor] = []
        self.wait_cursor = 0  # next op a check will wait on
        self.error_code: str | None = None

    # -- interface-register primitives ---------------------------------------

    def async_matmul(self, desc: MatMulDescriptor) -> OpHandle:
        errors = validate(desc, self.image)
        if errors:
            self.error_code = errors[0]
            raise DescriptorError("; ".join(errors))
        issued = len(self.completions)
        if issued >= self.queue_depth:
            # queue full: CPU stalls until the oldest in-flight op completes
            oldest = self.completions[issued - self.queue_depth]
            self.cpu_cycle = max(self.cpu_cycle, oldest)
        self.cpu_cycle += self.issue_cycles
        completion = self.scheduler(desc, self.cpu_cycle)
        self.completions.append(completion)
        self.descriptors.append(desc)
        return OpHandle(issued)

    def check_matmul(self) -> OpHandle | None:
        """Block the CPU until the oldest unchecked op completes; None if idle."""
        if self.wait_cursor >= len(self.completions):
            return None
        completion = self.completions[self.wait_cursor]
        self.cpu_cycle = max(self.cpu_cycle, completion)
        handle = OpHandle(self.wait_cursor)
        self.wait_cursor += 1
        return handle

    def read_status(self) -> StatusRegister:
        """Non-blocking snapshot at the current CPU cycle."""
        return self.status_at(self.cpu_cycle)

    def status_at(self, cycle: int) -> StatusRegister:
        retired = sum(1 for c in self.completions if c <= cycle)
        return StatusRegister(issued=len(self.completions), retired=retired,
                              error_code=self.error_code)

    # -- helpers for the engine and tests ----------------------------------

    def advance(self, cycles: int) -> None:
        """Charge CPU-side work (vector tasks, scalar code) to the CPU clock."""
        self.cpu_cycle += cycles

    @property
    def last_completion(self) -> int:
        return max(self.completions, default=0)

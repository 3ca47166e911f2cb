"""Functional and timing co-model of the data-parallel vector unit.

Element-wise prologue/epilogue operators run in FP32 intermediate
precision.  Costs are charged per vector beat (ceil(elements / lanes))
except division, which is element-wise.  The overlap experiments depend
on cost ratios only; absolute per-op cycle counts are configuration
knobs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .memimage import MemoryImage, TensorBuffer

OP_CLASSES = ("copy", "bias_add", "relu", "silu", "quantize", "dequantize",
              "row_softmax", "elementwise_div")

DEFAULT_OP_COST = {
    "copy": 1,
    "bias_add": 1,
    "relu": 1,
    "quantize": 2,
    "dequantize": 2,
    "silu": 2,  # excluding the division, charged separately
    "row_softmax": 4,  # passes over the row
}


class VectorError(ValueError):
    pass


@dataclass(frozen=True)
class VectorConfig:
    vlen_bits: int = 512
    op_cost: dict = field(default_factory=lambda: dict(DEFAULT_OP_COST))
    div_cost_per_element: int = 8

    def __post_init__(self):
        if self.vlen_bits % 64 != 0:
            raise VectorError("vlen_bits must be a multiple of 64")
        if self.div_cost_per_element < 1 or any(
                c < 1 for c in self.op_cost.values()):
            raise VectorError("all costs must be >= 1")

    def lanes(self, element_bits: int) -> int:
        return self.vlen_bits // element_bits


@dataclass(frozen=True)
class VectorOp:
    kind: str
    scale: float = 1.0  # quantize/dequantize per-tensor scale
    bias: Optional[tuple] = None  # bias_add row, broadcast per row
    divisor: float = 1.0  # elementwise_div


@dataclass(frozen=True)
class VectorTask:
    """An ordered element-wise op chain over one tile's elements."""

    ops: tuple[VectorOp, ...]
    elements: int
    rows: int = 1  # row length for row_softmax is elements / rows
    in_bits: int = 32
    out_bits: int = 32

    def __post_init__(self):
        for op in self.ops:
            if op.kind not in OP_CLASSES:
                raise VectorError(f"unknown op class {op.kind!r}")
        if self.rows >= 1 and self.elements % self.rows != 0:
            raise VectorError("elements must divide evenly into rows")


def _apply(op: VectorOp, x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float32)
    if op.kind == "copy":
        return x
    if op.kind == "bias_add":
        bias = np.asarray(op.bias, dtype=np.float32)
        return x + bias
    if op.kind == "relu":
        return np.maximum(x, np.float32(0))
    if op.kind == "silu":
        with np.errstate(over="ignore"):
            return x / (np.float32(1) + np.exp(-x, dtype=np.float32))
    if op.kind == "quantize":
        q = np.clip(np.rint(x / np.float32(op.scale)), -128, 127)
        return q.astype(np.float32)
    if op.kind == "dequantize":
        return x * np.float32(op.scale)
    if op.kind == "row_softmax":
        shifted = x - np.max(x, axis=-1, keepdims=True)
        e = np.exp(shifted, dtype=np.float32)
        return e / np.sum(e, axis=-1, keepdims=True)
    if op.kind == "elementwise_div":
        with np.errstate(divide="ignore"):
            return x / np.float32(op.divisor)  # divide-by-zero yields Inf
    raise VectorError(f"unknown op class {op.kind!r}")


def vec_apply(task: VectorTask, values: np.ndarray) -> np.ndarray:
    """Apply the chain to an array shaped (rows, elements/rows) or flat."""
    x = np.asarray(values, dtype=np.float32)
    if task.elements != x.size:
        raise VectorError(f"task expects {task.elements} elements, got {x.size}")
    x = x.reshape(task.rows, task.elements // task.rows)
    for op in task.ops:
        x = _apply(op, x)
    return x


def vec_execute(task: VectorTask, image: MemoryImage, src: TensorBuffer,
                dst: TensorBuffer) -> np.ndarray:
    """Run the chain over a memory region; returns the written FP32 values."""
    raw = image.read_matrix(src)
    if src.kind == "INT32":
        vals = raw.view(np.int32).astype(np.float32)
    elif src.kind == "FP32":
        vals = raw.view(np.float32)
    else:
        raise VectorError(f"unsupported source kind {src.kind}")
    out = vec_apply(task, vals).reshape(dst.rows, dst.cols)
    if dst.kind == "INT8":
        image.write_matrix(dst, out.astype(np.int8).view(np.uint8))
    else:
        image.write_matrix(dst, out.astype(np.float32).view(np.uint32))
    return out


def vec_cost(task: VectorTask, cfg: VectorConfig) -> int:
    """Cycle cost: beats per op class, element-wise for division."""
    if task.elements == 0:
        return 0
    total = 0
    for op in task.ops:
        if op.kind == "elementwise_div":
            total += cfg.div_cost_per_element * task.elements
            continue
        bits = task.in_bits if op.kind != "quantize" else task.out_bits
        lanes = cfg.lanes(bits)
        beats = math.ceil(task.elements / lanes)
        cost = cfg.op_cost.get(op.kind)
        if cost is None:
            raise VectorError(f"no cost for op class {op.kind!r}")
        if op.kind == "silu":
            total += beats * cost + cfg.div_cost_per_element * task.elements
        else:
            total += beats * cost
    return total

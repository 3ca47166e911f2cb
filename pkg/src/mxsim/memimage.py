"""Simulated flat address space and strided matrix views into it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .formats import DataTypeSpec


class SimMemoryError(Exception):
    """Access outside the simulated address space or with a bad stride."""


_UINT = {1: np.uint8, 2: np.uint16, 4: np.uint32}


@dataclass(frozen=True)
class TensorBuffer:
    """Strided row-major matrix region in simulated memory.

    elem_bytes is the storage width of one element; the element type is
    carried separately (operand DataTypeSpec kind or an accumulator kind).
    """

    base: int  # byte address
    rows: int
    cols: int
    stride_bytes: int  # byte distance between row starts
    elem_bytes: int
    kind: str  # e.g. "INT8", "BF16", "INT32", "FP32"

    @property
    def row_bytes(self) -> int:
        return self.cols * self.elem_bytes

    @property
    def end(self) -> int:
        return self.base + (self.rows - 1) * self.stride_bytes + self.row_bytes

    def check(self, mem_size: int) -> list[str]:
        errors = []
        if self.rows < 1 or self.cols < 1:
            errors.append("rows and cols must be >= 1")
        if self.stride_bytes < self.row_bytes:
            errors.append("stride smaller than row length")
        if self.base % self.elem_bytes != 0:
            errors.append(f"base {self.base:#x} not aligned to {self.elem_bytes}")
        if errors:
            return errors
        if self.base < 0 or self.end > mem_size:
            errors.append("region outside simulated memory")
        return errors


class MemoryImage:
    """Byte-addressed simulated memory backing all operands."""

    def __init__(self, size: int):
        self.size = size
        self.data = np.zeros(size, dtype=np.uint8)

    def _check(self, buf: TensorBuffer) -> None:
        errors = buf.check(self.size)
        if errors:
            raise SimMemoryError("; ".join(errors))

    def read_matrix(self, buf: TensorBuffer) -> np.ndarray:
        """Raw encodings as a (rows, cols) unsigned array."""
        self._check(buf)
        window = self.data[buf.base:buf.base + (buf.rows - 1) * buf.stride_bytes
                           + buf.row_bytes]
        strided = np.lib.stride_tricks.as_strided(
            window, shape=(buf.rows, buf.row_bytes),
            strides=(buf.stride_bytes, 1))
        rows = np.ascontiguousarray(strided)
        return rows.view(_UINT[buf.elem_bytes]).reshape(buf.rows, buf.cols)

    def write_matrix(self, buf: TensorBuffer, values: np.ndarray) -> None:
        """Write a (rows, cols) array of raw encodings."""
        self._check(buf)
        values = np.ascontiguousarray(values, dtype=_UINT[buf.elem_bytes])
        if values.shape != (buf.rows, buf.cols):
            raise SimMemoryError(
                f"shape {values.shape} does not match ({buf.rows}, {buf.cols})")
        raw = values.view(np.uint8).reshape(buf.rows, buf.row_bytes)
        for i in range(buf.rows):
            start = buf.base + i * buf.stride_bytes
            self.data[start:start + buf.row_bytes] = raw[i]


def operand_buffer(base: int, rows: int, cols: int, stride_bytes: int,
                   dtype: DataTypeSpec) -> TensorBuffer:
    return TensorBuffer(base, rows, cols, stride_bytes,
                        dtype.storage_bytes, dtype.kind)


def accumulator_buffer(base: int, rows: int, cols: int, stride_bytes: int,
                       dtype: DataTypeSpec) -> TensorBuffer:
    return TensorBuffer(base, rows, cols, stride_bytes, 4, dtype.accumulator)

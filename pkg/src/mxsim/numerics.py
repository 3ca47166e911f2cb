"""Bit-faithful PE inner-product arithmetic.

Integer dot products are exact in INT32.  Float formats use block
accumulation: every product is computed exactly (the formats carry at
most 11 significant bits, so float64 products are exact), the product
significands are right-shift aligned to the maximum product exponent
inside a fixed-width window, shifted-out bits are truncated toward zero,
the aligned integers are summed, and the sum is renormalized to FP32.
Cross-chunk accumulation is plain FP32 round-to-nearest-even.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .formats import DataTypeSpec, FormatError, decode
from .memimage import MemoryImage, accumulator_buffer, operand_buffer


@dataclass(frozen=True)
class PeArithParams:
    """PE-internal alignment window; rounding is truncate-toward-zero."""

    align_width_bits: int = 32

    def check(self, mantissa_bits: int, k: int) -> None:
        # need both exact product significands and log2(k) guard bits
        needed = 2 * (mantissa_bits + 1) + max(1, math.ceil(math.log2(max(k, 2))))
        if self.align_width_bits < needed:
            raise ValueError(
                f"align_width_bits {self.align_width_bits} < required {needed}")


DEFAULT_PE_PARAMS = PeArithParams()


@dataclass(frozen=True)
class Accumulator:
    """One PE accumulation result."""

    kind: str  # INT32 or FP32
    value: float  # int for INT32, float32-valued for FP32
    special: bool = False  # NaN/Inf propagated from the inputs


def block_dot(a_vals: np.ndarray, b_vals: np.ndarray,
              align_width_bits: int = 32) -> np.ndarray:
    """Block-aligned dot product along the last axis, returned as float32.

    Inputs are exact float64 decodings; the elementwise products must be
    exact in float64 (true for all supported formats).
    """
    prods = a_vals * b_vals
    _, exp = np.frexp(prods)
    nonzero = prods != 0.0
    # max product exponent per dot product; all-zero rows get a dummy 0
    emax = np.max(np.where(nonzero, exp, np.iinfo(np.int32).min), axis=-1)
    emax = np.where(np.any(nonzero, axis=-1), emax, 0)
    scale = np.ldexp(1.0, (align_width_bits - 1 - emax))
    q = np.trunc(prods * scale[..., None])  # truncate toward zero
    total = np.sum(q, axis=-1)
    with np.errstate(over="ignore"):
        return np.ldexp(total, emax - (align_width_bits - 1)).astype(np.float32)


def pe_dot(a_bits: np.ndarray, b_bits: np.ndarray, dtype: DataTypeSpec,
           params: PeArithParams = DEFAULT_PE_PARAMS) -> Accumulator:
    """Inner product of two encoded operand vectors with PE semantics."""
    a_bits = np.atleast_1d(np.asarray(a_bits))
    b_bits = np.atleast_1d(np.asarray(b_bits))
    if a_bits.shape != b_bits.shape:
        raise FormatError(f"operand shapes differ: {a_bits.shape} vs {b_bits.shape}")
    a = decode(a_bits, dtype)
    b = decode(b_bits, dtype)
    if dtype.is_integer:
        return Accumulator("INT32", int(np.sum(a * b)))
    params.check(dtype.mantissa_bits, a.size)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        value = np.float32(np.dot(a, b))  # quiet NaN/Inf flows through
        return Accumulator("FP32", float(value), special=True)
    value = block_dot(a, b, params.align_width_bits)
    return Accumulator("FP32", float(value))


def oracle_dot(a_bits: np.ndarray, b_bits: np.ndarray,
               dtype: DataTypeSpec) -> float:
    """Exact reference dot product (error-free summation); test use only."""
    a = decode(np.atleast_1d(np.asarray(a_bits)), dtype)
    b = decode(np.atleast_1d(np.asarray(b_bits)), dtype)
    if dtype.is_integer:
        return int(sum(int(x) * int(y) for x, y in zip(a, b)))
    return math.fsum(float(x) * float(y) for x, y in zip(a, b))


def _bias_values(desc, image: MemoryImage, dtype: DataTypeSpec,
                 acc_np) -> np.ndarray:
    """Decoded bias as an (m, n) array in accumulator precision."""
    if desc.bias_type == "Zero":
        return np.zeros((desc.m, desc.n), dtype=acc_np)
    rows = 1 if desc.bias_type == "RowRepeat" else desc.m
    stride = desc.stride_bias if desc.bias_type == "Full" else desc.n * 4
    buf = accumulator_buffer(desc.base_bias, rows, desc.n, stride, dtype)
    raw = image.read_matrix(buf)
    vals = raw.view(np.int32) if dtype.accumulator == "INT32" \
        else raw.view(np.float32)
    if desc.bias_type == "RowRepeat":
        return np.broadcast_to(vals, (desc.m, desc.n)).astype(acc_np)
    return vals.astype(acc_np)


def matmul_functional(desc, image: MemoryImage, k_pe_elems: int,
                      params: PeArithParams = DEFAULT_PE_PARAMS,
                      row_block: int = 64) -> np.ndarray:
    """C = bias + A @ B with PE dot-product semantics; writes C to memory.

    K is consumed in chunks of k_pe_elems; chunk partials are accumulated
    in INT32 (exact) or FP32 (round-to-nearest-even).  Returns the logical
    (m, n) result; storage is transposed when desc.transpose is set.
    """
    from .isa import validate  # late import: isa depends on this module

    errors = validate(desc, image)
    if errors:
        raise ValueError("; ".join(errors))
    dtype = desc.dtype_spec
    a_raw = image.read_matrix(
        operand_buffer(desc.base_a, desc.m, desc.k, desc.stride_a, dtype))
    b_raw = image.read_matrix(
        operand_buffer(desc.base_b, desc.k, desc.n, desc.stride_b, dtype))
    a = decode(a_raw, dtype)
    b = decode(b_raw, dtype)

    if dtype.is_integer:
        # exact: |sum| <= 127^2 * K << 2^53, so float64 BLAS is bit-exact
        acc = _bias_values(desc, image, dtype, np.int64)
        c = (a @ b + acc).astype(np.int64)
        if np.any(c > np.iinfo(np.int32).max) or np.any(c < np.iinfo(np.int32).min):
            raise OverflowError("INT32 accumulator overflow")
        result = c.astype(np.int32)
    else:
        params.check(dtype.mantissa_bits, k_pe_elems)
        acc = _bias_values(desc, image, dtype, np.float32)
        for k0 in range(0, desc.k, k_pe_elems):
            bk = b[k0:k0 + k_pe_elems]  # (kc, n)
            ak = a[:, k0:k0 + k_pe_elems]  # (m, kc)
            for r0 in range(0, desc.m, row_block):
                ab = ak[r0:r0 + row_block, None, :] * bk.T[None, :, :]
                if np.all(np.isfinite(ab)):
                    partial = block_dot(ak[r0:r0 + row_block, None, :],
                                        bk.T[None, :, :],
                                        params.align_width_bits)
                else:
                    partial = np.sum(ab, axis=-1).astype(np.float32)
                acc[r0:r0 + row_block] = acc[r0:r0 + row_block] + partial
        result = acc

    stored = np.ascontiguousarray(result.T) if desc.transpose else result
    rows, cols = stored.shape
    buf = accumulator_buffer(desc.base_c, rows, cols, desc.stride_c, dtype)
    image.write_matrix(buf, stored.view(np.uint32))
    return result

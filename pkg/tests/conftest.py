import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # reference_blockfp import

from mxsim import MatMulDescriptor, MemoryImage, TensorBuffer
from mxsim.formats import dtype_spec, encode


def build_gemm(m, n, k, dtype="INT8", seed=0, bias_type="Zero",
               transpose=False, rng=None, pad_strides=0):
    """Random operands laid out in a fresh image; returns (desc, image, a, b, bias).

    a, b are decoded float64 value arrays; bias is int32/float32 or None.
    """
    dt = dtype_spec(dtype)
    rng = rng or np.random.default_rng(seed)
    eb = dt.storage_bytes
    if dt.is_integer:
        a = rng.integers(-128, 128, (m, k)).astype(np.float64)
        b = rng.integers(-128, 128, (k, n)).astype(np.float64)
        a_bits = a.astype(np.int8).view(np.uint8)
        b_bits = b.astype(np.int8).view(np.uint8)
    else:
        a_bits = encode(rng.uniform(-2, 2, (m, k)), dt)
        b_bits = encode(rng.uniform(-2, 2, (k, n)), dt)
        from mxsim.formats import decode
        a, b = decode(a_bits, dt), decode(b_bits, dt)

    stride_a = k * eb + pad_strides
    stride_b = n * eb + pad_strides
    c_cols = m if transpose else n
    stride_c = c_cols * 4 + pad_strides
    base_a = 0
    base_b = _align(base_a + m * stride_a)
    base_bias = _align(base_b + k * stride_b)
    bias = None
    bias_rows = {"Zero": 0, "RowRepeat": 1, "Full": m}[bias_type]
    base_c = _align(base_bias + bias_rows * n * 4)
    size = base_c + (n if transpose else m) * stride_c + 64
    image = MemoryImage(size)
    image.write_matrix(TensorBuffer(base_a, m, k, stride_a, eb, dtype), a_bits)
    image.write_matrix(TensorBuffer(base_b, k, n, stride_b, eb, dtype), b_bits)
    if bias_type != "Zero":
        if dt.accumulator == "INT32":
            bias = rng.integers(-1000, 1000, (bias_rows, n)).astype(np.int32)
            raw = bias.view(np.uint32)
        else:
            bias = rng.uniform(-4, 4, (bias_rows, n)).astype(np.float32)
            raw = bias.view(np.uint32)
        image.write_matrix(
            TensorBuffer(base_bias, bias_rows, n, n * 4, 4, dt.accumulator), raw)
    desc = MatMulDescriptor(
        m=m, n=n, k=k, base_a=base_a, base_b=base_b, base_c=base_c,
        stride_a=stride_a, stride_b=stride_b, stride_c=stride_c,
        dtype=dtype, base_bias=base_bias,
        stride_bias=n * 4 if bias_type == "Full" else 0, bias_type=bias_type,
        transpose=transpose)
    return desc, image, a, b, bias


def read_result(desc, image):
    """Decoded C as the logical (m, n) array."""
    dt = desc.dtype_spec
    rows, cols = (desc.n, desc.m) if desc.transpose else (desc.m, desc.n)
    raw = image.read_matrix(
        TensorBuffer(desc.base_c, rows, cols, desc.stride_c, 4, dt.accumulator))
    vals = raw.view(np.int32) if dt.accumulator == "INT32" \
        else raw.view(np.float32)
    return vals.T if desc.transpose else vals


def _align(addr, to=64):
    return (addr + to - 1) // to * to

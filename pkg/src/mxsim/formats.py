"""Mixed-precision element formats supported by the PE array.

Each format is described by a DataTypeSpec (storage width, exponent and
mantissa widths, accumulator kind) plus vectorized encode/decode between
raw bit patterns and exact float64 values.  All five formats have at most
11 significant bits, so a float64 holds every representable value exactly
and pairwise products of decoded values are exact in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FormatError(ValueError):
    """Unknown or mismatched element format."""


@dataclass(frozen=True)
class DataTypeSpec:
    """Static description of one element format."""

    kind: str  # INT8 | FP8 | FP16 | BF16 | TF32
    storage_bits: int  # container width in memory
    exponent_bits: int
    mantissa_bits: int  # explicit mantissa bits (excludes hidden one)
    accumulator: str  # INT32 or FP32

    @property
    def storage_bytes(self) -> int:
        return self.storage_bits // 8

    @property
    def accumulator_bytes(self) -> int:
        return 4

    @property
    def is_integer(self) -> bool:
        return self.kind == "INT8"

    def elements_per_reduce(self, k_pe_bits: int) -> int:
        """Operand elements consumed per PE per cycle for a given reduce width."""
        if k_pe_bits % self.storage_bits != 0:
            raise FormatError(
                f"reduce width {k_pe_bits} bits is not a multiple of "
                f"{self.kind} storage ({self.storage_bits} bits)"
            )
        n = k_pe_bits // self.storage_bits
        if n < 1:
            raise FormatError(f"reduce width {k_pe_bits} too narrow for {self.kind}")
        return n


DTYPES: dict[str, DataTypeSpec] = {
    "INT8": DataTypeSpec("INT8", 8, 0, 7, "INT32"),
    "FP8": DataTypeSpec("FP8", 8, 4, 3, "FP32"),  # E4M3
    "FP16": DataTypeSpec("FP16", 16, 5, 10, "FP32"),
    "BF16": DataTypeSpec("BF16", 16, 8, 7, "FP32"),
    "TF32": DataTypeSpec("TF32", 32, 8, 10, "FP32"),  # 32-bit container
}


def dtype_spec(kind: str) -> DataTypeSpec:
    try:
        return DTYPES[kind.upper()]
    except KeyError:
        raise FormatError(f"unknown data type {kind!r}") from None


def _storage_uint(spec: DataTypeSpec):
    return {8: np.uint8, 16: np.uint16, 32: np.uint32}[spec.storage_bits]


def _build_fp8_table() -> np.ndarray:
    """Decode table for FP8 E4M3 (no infinities, NaN at exp=15/mant=7)."""
    codes = np.arange(256, dtype=np.uint32)
    sign = np.where(codes >> 7, -1.0, 1.0)
    exp = (codes >> 3) & 0xF
    mant = codes & 0x7
    vals = np.where(
        exp == 0,
        (mant / 8.0) * 2.0**-6,  # subnormal
        (1.0 + mant / 8.0) * 2.0 ** (exp.astype(np.float64) - 7.0),
    )
    vals = sign * vals
    vals[(exp == 15) & (mant == 7)] = np.nan
    return vals


_FP8_DECODE = _build_fp8_table()
# positive finite codes sorted by value, for round-to-nearest encode
_FP8_POS_CODES = np.array(
    sorted((c for c in range(128) if np.isfinite(_FP8_DECODE[c])),
           key=lambda c: _FP8_DECODE[c]),
    dtype=np.uint8,
)
_FP8_POS_VALUES = _FP8_DECODE[_FP8_POS_CODES]


def decode(bits: np.ndarray, spec: DataTypeSpec) -> np.ndarray:
    """Decode raw encodings to exact float64 values (INT8 decodes to integers)."""
    bits = np.asarray(bits)
    if spec.kind == "INT8":
        return bits.astype(np.uint8).view(np.int8).astype(np.float64)
    if spec.kind == "FP8":
        return _FP8_DECODE[bits.astype(np.uint8)]
    with np.errstate(invalid="ignore"):
        if spec.kind == "FP16":
            return bits.astype(np.uint16).view(np.float16).astype(np.float64)
        if spec.kind == "BF16":
            return (bits.astype(np.uint32) << 16).view(np.float32) \
                .astype(np.float64)
        if spec.kind == "TF32":
            return bits.astype(np.uint32).view(np.float32).astype(np.float64)
    raise FormatError(f"unknown data type {spec.kind!r}")


def encode(values: np.ndarray, spec: DataTypeSpec) -> np.ndarray:
    """Encode float64 values with round-to-nearest-even; saturates at format max."""
    values = np.asarray(values, dtype=np.float64)
    if spec.kind == "INT8":
        clipped = np.clip(np.rint(values), -128, 127)
        return clipped.astype(np.int8).view(np.uint8)
    if spec.kind == "FP16":
        return values.astype(np.float16).view(np.uint16)
    if spec.kind == "BF16":
        f32 = values.astype(np.float32).view(np.uint32)
        rounded = f32 + 0x7FFF + ((f32 >> 16) & 1)
        out = (rounded >> 16).astype(np.uint16)
        nan = ~np.isfinite(values.astype(np.float32))
        return np.where(nan, (f32 >> 16).astype(np.uint16), out)
    if spec.kind == "TF32":
        f32 = values.astype(np.float32).view(np.uint32)
        rounded = f32 + 0x0FFF + ((f32 >> 13) & 1)
        out = rounded & np.uint32(0xFFFFE000)
        nan = ~np.isfinite(values.astype(np.float32))
        return np.where(nan, f32 & np.uint32(0xFFFFE000) | np.uint32(0x7FC00000), out)
    if spec.kind == "FP8":
        flat = values.ravel()
        out = np.empty(flat.shape, dtype=np.uint8)
        mags = np.abs(flat)
        neg = np.signbit(flat)
        nan = np.isnan(flat)
        mags = np.clip(mags, 0.0, _FP8_POS_VALUES[-1])
        idx = np.searchsorted(_FP8_POS_VALUES, mags)
        idx = np.clip(idx, 1, len(_FP8_POS_VALUES) - 1)
        lo, hi = _FP8_POS_VALUES[idx - 1], _FP8_POS_VALUES[idx]
        dlo, dhi = mags - lo, hi - mags
        pick_hi = (dhi < dlo) | ((dhi == dlo) & (_FP8_POS_CODES[idx] % 2 == 0))
        chosen = np.where(pick_hi, _FP8_POS_CODES[idx], _FP8_POS_CODES[idx - 1])
        chosen = np.where(mags <= _FP8_POS_VALUES[0] / 2, np.uint8(0), chosen)
        out[:] = np.where(neg, chosen | 0x80, chosen)
        out[nan] = 0x7F
        return out.reshape(values.shape)
    raise FormatError(f"unknown data type {spec.kind!r}")

"""Bit-exact scalar primitives of the datapath.

BFloat16 words are plain ``int`` (or ``uint16`` arrays). Q9.7 fixed-point
words are signed ``int`` raw values with ``value = raw / 128``. The helpers
here are the integer golden model; the vectorized kernels in
:mod:`hfa.kernels` carry the same values in binary64 and are checked against
these functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

# --- BFloat16 -----------------------------------------------------------------

BF16_BIAS = 127
BF16_MAN_BITS = 7
BF16_POS_INF = 0x7F80
BF16_NEG_INF = 0xFF80
BF16_NAN = 0x7FC0
BF16_MAX_FINITE = 0x7F7F

# --- Q9.7 ---------------------------------------------------------------------

Q97_FRAC = 7
Q97_ONE = 1 << Q97_FRAC
Q97_MIN = -(1 << 15)
Q97_MAX = (1 << 15) - 1

# --- PWL LUT --------------------------------------------------------------------

LUT_FRAC = 14
LUT_SEGMENTS = 8
LUT_WORD_MIN = -(1 << 15)
LUT_WORD_MAX = (1 << 15) - 1


def bf16_from_f64(x):
    """Round binary64 to BFloat16 (nearest-even), returning the 16-bit word(s).

    Scalars give an ``int``; arrays give a ``uint16`` array. Overflow maps to
    ±inf and NaN to the canonical quiet NaN.
    """
    scalar = np.ndim(x) == 0
    a = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        _, e = np.frexp(a)
        # quantum of the target binade; below 2^-126 the subnormal step applies
        qexp = np.maximum(e - 1, -126) - BF16_MAN_BITS
        r = np.ldexp(np.rint(np.ldexp(a, -qexp)), qexp)
        r = np.where(np.isfinite(a), r, a)
        bits = (r.astype(np.float32).view(np.uint32) >> 16).astype(np.uint16)
    bits = np.where(np.isnan(a), np.uint16(BF16_NAN), bits).astype(np.uint16)
    if scalar:
        return int(bits)
    return bits


def bf16_to_f64(bits):
    """Decode BFloat16 word(s) to binary64 (exact)."""
    scalar = np.ndim(bits) == 0
    b = np.asarray(bits, dtype=np.uint32) << 16
    out = b.astype(np.uint32).view(np.float32).astype(np.float64)
    if scalar:
        return float(out)
    return out


def round_bf16(x):
    """Round binary64 value(s) to the nearest BFloat16, returned as binary64."""
    return bf16_to_f64(bf16_from_f64(x))


def bf16_fields(bits: int) -> tuple[int, int, int]:
    """Split a BFloat16 word into ``(sign, biased_exponent, mantissa)``."""
    bits = int(bits) & 0xFFFF
    return bits >> 15, (bits >> 7) & 0xFF, bits & 0x7F


def bf16_is_normal(bits) -> np.ndarray | bool:
    exp = (np.asarray(bits, dtype=np.uint16) >> 7) & 0xFF
    return (exp != 0) & (exp != 0xFF)


# --- Q9.7 fixed point ---------------------------------------------------------


def q97_saturate(raw: int) -> int:
    return min(max(int(raw), Q97_MIN), Q97_MAX)


def q97_add(a: int, b: int) -> int:
    return q97_saturate(a + b)


def q97_sub(a: int, b: int) -> int:
    return q97_saturate(a - b)


def q97_from_float(x: float) -> int:
    """Round-half-up to the Q9.7 grid, saturating at the range ends."""
    return q97_saturate(math.floor(x * Q97_ONE + 0.5))


def q97_to_float(raw: int) -> float:
    return raw / Q97_ONE


# --- LNS values -----------------------------------------------------------------


@dataclass(frozen=True)
class LnsValue:
    """Sign plus Q9.7 base-2 log-magnitude, with an explicit zero flag.

    ``bits`` is the raw Q9.7 word. A zero value is always stored as
    ``LnsValue(0, 0, True)``.
    """

    sign: int
    bits: int
    is_zero: bool = False

    @property
    def logmag(self) -> float:
        return self.bits / Q97_ONE

    def to_float(self) -> float:
        """Exact real value ``(-1)^sign * 2^logmag`` (not the datapath output)."""
        if self.is_zero:
            return 0.0
        return (-1.0) ** self.sign * 2.0 ** self.logmag

    @classmethod
    def from_logmag(cls, sign: int, logmag: float) -> "LnsValue":
        return cls(sign, q97_from_float(logmag))


LNS_ZERO = LnsValue(0, 0, True)


def float_to_lns(v: int) -> LnsValue:
    """Read a BFloat16 word as ``E.M - bias``, the Mitchell log of its magnitude.

    Zero and subnormal inputs map to the zero sentinel.
    """
    sign, exp, man = bf16_fields(v)
    if exp == 0xFF:
        raise DomainError(f"float_to_lns: non-finite BF16 word 0x{int(v):04X}")
    if exp == 0:
        return LNS_ZERO
    # E.M as a fixed-point word, bias aligned to the integer part
    return LnsValue(sign, ((exp << BF16_MAN_BITS) | man) - (BF16_BIAS << BF16_MAN_BITS))


def lns_to_bf16(x: LnsValue) -> int:
    """Back-convert an LNS value: ``2^I * (1 + F)`` packed as a BFloat16 word."""
    if x.is_zero:
        return 0
    sign = (x.sign & 1) << 15
    integer = x.bits >> Q97_FRAC  # floor for negative raw words too
    frac = x.bits & (Q97_ONE - 1)
    exp = integer + BF16_BIAS
    if exp < 1:
        return sign
    if exp > 254:
        return sign | BF16_MAX_FINITE
    return sign | (exp << BF16_MAN_BITS) | frac


# --- PWL power-of-two unit ------------------------------------------------------


@dataclass(frozen=True)
class PwlLut:
    """Eight ``(slope, intercept)`` pairs approximating ``2^-f`` on ``[0, 1)``.

    Coefficients are 16-bit two's-complement words with 14 fractional bits;
    segment ``k`` covers ``[k/8, (k+1)/8)``.
    """

    slope_bits: tuple[int, ...]
    intercept_bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.slope_bits) != LUT_SEGMENTS or len(self.intercept_bits) != LUT_SEGMENTS:
            raise ValueError("PwlLut needs exactly 8 segments")
        for w in (*self.slope_bits, *self.intercept_bits):
            if not LUT_WORD_MIN <= w <= LUT_WORD_MAX:
                raise ValueError(f"LUT word {w} does not fit 16 bits")

    @classmethod
    def fit(cls) -> "PwlLut":
        """Least-squares line per segment over its 16 grid fractions, rounded to words."""
        slopes, icpts = [], []
        per_seg = Q97_ONE // LUT_SEGMENTS
        for k in range(LUT_SEGMENTS):
            f = np.arange(k * per_seg, (k + 1) * per_seg) / Q97_ONE
            design = np.stack([f, np.ones_like(f)], axis=1)
            (slope, icpt), *_ = np.linalg.lstsq(design, 2.0 ** -f, rcond=None)
            slopes.append(int(np.rint(slope * (1 << LUT_FRAC))))
            icpts.append(int(np.rint(icpt * (1 << LUT_FRAC))))
        return cls(tuple(slopes), tuple(icpts))

    @property
    def slopes(self) -> np.ndarray:
        return np.array(self.slope_bits, dtype=np.float64) / (1 << LUT_FRAC)

    @property
    def intercepts(self) -> np.ndarray:
        return np.array(self.intercept_bits, dtype=np.float64) / (1 << LUT_FRAC)

    def max_error(self) -> float:
        """Max |pwl(f) - 2^-f| over all 128 grid fractions."""
        return max(
            abs(pwl_pow2_frac(j, self) / (1 << LUT_FRAC) - 2.0 ** (-j / Q97_ONE))
            for j in range(Q97_ONE)
        )

    def dump(self) -> str:
        lines = []
        for k, (s, c) in enumerate(zip(self.slope_bits, self.intercept_bits)):
            lines.append(
                f"{k} {s & 0xFFFF:04X} {c & 0xFFFF:04X} "
                f"{s / (1 << LUT_FRAC):.10f} {c / (1 << LUT_FRAC):.10f}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "PwlLut":
        slopes, icpts = [], []
        for line in text.strip().splitlines():
            k, s, c, *_ = line.split()
            if int(k) != len(slopes):
                raise ValueError(f"LUT dump out of order at line {line!r}")

            def signed(h):
                w = int(h, 16)
                return w - 0x10000 if w & 0x8000 else w

            slopes.append(signed(s))
            icpts.append(signed(c))
        return cls(tuple(slopes), tuple(icpts))


@lru_cache(maxsize=None)
def default_lut() -> PwlLut:
    return PwlLut.fit()


def pwl_pow2_frac(f: int, lut: PwlLut) -> int:
    """``2^-f`` for a 7-bit fraction word ``f``; returns a word with 14 fractional bits."""
    f = int(f) & (Q97_ONE - 1)
    k = f >> (Q97_FRAC - 3)
    # slope * f has 21 fraction bits; align the intercept and round back to 14
    acc = lut.slope_bits[k] * f + (lut.intercept_bits[k] << Q97_FRAC)
    return (acc + (1 << (Q97_FRAC - 1))) >> Q97_FRAC


def shifted_pow2(a: int, lut: PwlLut) -> int:
    """``2^-a`` for a nonnegative Q9.7 word, as a Q9.7 word (right shift of the PWL)."""
    if a < 0:
        raise DomainError("shifted_pow2 expects a nonnegative difference")
    p, f = a >> Q97_FRAC, a & (Q97_ONE - 1)
    if p >= 15:
        return 0
    y = pwl_pow2_frac(f, lut)
    shift = LUT_FRAC - Q97_FRAC + p
    return (y + (1 << (shift - 1))) >> shift


def mitchell_log2_err(x: float, subtract: bool = False) -> float:
    """Absolute error of Mitchell's ``log2(1 ± x) ≈ ±x``."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"Mitchell input {x} outside [0, 1]")
    if subtract:
        if x == 1.0:
            raise DomainError("log2(1 - 1) is undefined")
        return abs(math.log2(1.0 - x) + x)
    return abs(math.log2(1.0 + x) - x)

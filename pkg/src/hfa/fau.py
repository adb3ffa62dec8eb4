"""The hybrid float/log FlashAttention Unit.

Scores and the running max stay in floating point. The extended output
``O = [ℓ, o]`` is accumulated as LNS values in Q9.7, divided by a fixed-point
subtraction and converted back to BF16 once at the end.

Two routes are provided. The scalar functions (:func:`quantize_delta`,
:func:`lns_add`, :func:`fau_step`, :func:`log_div_finalize`) work on integer
words and are the golden model. :func:`fau_run` and :func:`attn_hfa` drive the
compiled kernels and additionally support the error-source toggles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractViolation, DomainError
from .numerics import (
    BF16_BIAS,
    BF16_MAX_FINITE,
    LNS_ZERO,
    Q97_ONE,
    LnsValue,
    PwlLut,
    bf16_to_f64,
    default_lut,
    float_to_lns,
    lns_to_bf16,
    q97_add,
    q97_sub,
    round_bf16,
    shifted_pow2,
)
from .reference import AttentionProblem, scores_bf16, scores_f64

LOG2E = kernels.LOG2E
ONE_BF16 = 0x3F80
BF16_MAX = bf16_to_f64(BF16_MAX_FINITE)


@dataclass(frozen=True)
class ErrorToggleConfig:
    """Which approximations to replace by their exact counterparts.

    ``exact_quant`` keeps the scaled score differences in binary64,
    ``exact_log`` uses true ``log2(1+x)``/``2^x`` wherever Mitchell's
    approximation appears, ``exact_pow2`` evaluates ``2^-x`` in binary64
    instead of the PWL unit. ``exact_storage`` additionally keeps scores,
    log-magnitudes and outputs in binary64.
    """

    exact_quant: bool = False
    exact_log: bool = False
    exact_pow2: bool = False
    exact_storage: bool = False

    @property
    def flags(self) -> int:
        return (
            kernels.EXACT_QUANT * self.exact_quant
            | kernels.EXACT_LOG * self.exact_log
            | kernels.EXACT_POW2 * self.exact_pow2
            | kernels.EXACT_STORAGE * self.exact_storage
        )

    @classmethod
    def all_exact(cls) -> "ErrorToggleConfig":
        return cls(True, True, True, True)

    @classmethod
    def parse(cls, text: str | None) -> "ErrorToggleConfig":
        """Parse a comma list such as ``"quant,log"``; names pick the exact variant."""
        names = {"quant": "exact_quant", "log": "exact_log", "mitchell": "exact_log",
                 "pow2": "exact_pow2", "pwl": "exact_pow2", "storage": "exact_storage"}
        kw = {}
        for item in filter(None, (t.strip().lower() for t in (text or "").split(","))):
            if item == "all":
                return cls.all_exact()
            if item == "none":
                continue
            if item not in names:
                raise ValueError(f"unknown toggle {item!r}; expected one of {sorted(names)}")
            kw[names[item]] = True
        return cls(**kw)

    def as_dict(self) -> dict:
        return {"exact_quant": self.exact_quant, "exact_log": self.exact_log,
                "exact_pow2": self.exact_pow2, "exact_storage": self.exact_storage}


DEFAULT_CONFIG = ErrorToggleConfig()


@dataclass
class ExtendedState:
    """Running max plus the ``d + 1`` LNS lanes ``[ℓ, o_1..o_d]`` of one query."""

    m: float
    O: list[LnsValue] = field(default_factory=list)

    @classmethod
    def initial(cls, d: int) -> "ExtendedState":
        return cls(-math.inf, [LNS_ZERO] * (d + 1))


# --- scalar golden model -----------------------------------------------------------


def quantize_delta(delta: float) -> int:
    """Clamp a score difference to [-15, 0], scale by log2(e), floor to a Q9.7 word."""
    if not delta <= 0.0:
        raise ContractViolation(f"score difference must be <= 0, got {delta}")
    delta = max(delta, -15.0)
    return math.floor(delta * LOG2E * Q97_ONE)


def lns_add(a: LnsValue, b: LnsValue, lut: PwlLut) -> LnsValue:
    """``log2|2^A ± 2^B| ≈ max(A, B) ± 2^-|A-B|`` with the sign of the larger operand."""
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    hi = max(a.bits, b.bits)
    x = shifted_pow2(abs(a.bits - b.bits), lut)
    if a.sign == b.sign:
        return LnsValue(a.sign, q97_add(hi, x))
    if a.bits == b.bits:
        return LNS_ZERO
    sign = a.sign if a.bits > b.bits else b.sign
    return LnsValue(sign, q97_sub(hi, x))


def _scale_lns(x: LnsValue, q: int) -> LnsValue:
    if x.is_zero:
        return x
    return LnsValue(x.sign, q97_add(x.bits, q))


def fau_step(state: ExtendedState, s: float, v_row, lut: PwlLut) -> ExtendedState:
    """Consume one key: ``O_i = O_{i-1}·2^{quant(m-m')} + [1, v]·2^{quant(s-m')}``."""
    if not math.isfinite(s):
        raise ContractViolation(f"non-finite score {s}")
    if len(v_row) + 1 != len(state.O):
        raise ContractViolation("value row width does not match state")
    m_new = max(state.m, s)
    qb = quantize_delta(s - m_new)
    # the zero sentinels of the initial state absorb the rescaled term
    qa = quantize_delta(state.m - m_new) if state.m != -math.inf else 0
    lanes = [ONE_BF16, *(int(w) for w in v_row)]
    out = [
        lns_add(_scale_lns(prev, qa), _scale_lns(float_to_lns(w), qb), lut)
        for prev, w in zip(state.O, lanes)
    ]
    return ExtendedState(m_new, out)


def log_div_finalize(O: list[LnsValue]) -> list[int]:
    """Divide ``o`` by ``ℓ`` with a Q9.7 subtraction and convert each lane to BF16."""
    ell, *outs = O
    if ell.is_zero:
        raise ContractViolation("sum of exponentials is zero: no keys processed")
    res = []
    for o in outs:
        if o.is_zero:
            res.append(0)
            continue
        res.append(lns_to_bf16(LnsValue(o.sign ^ ell.sign, q97_sub(o.bits, ell.bits))))
    return res


# --- vectorized path ------------------------------------------------------------


def value_lanes(v: np.ndarray, cfg: ErrorToggleConfig = DEFAULT_CONFIG):
    """LNS form of the extended value rows ``[1, v_i]``.

    Returns ``(sign, mag, zero, mantissas)``; the last entry lists the mantissa
    fraction of every converted (non-zero) lane, i.e. the Mitchell inputs.
    """
    v = np.asarray(v, dtype=np.uint16)
    if v.ndim == 1:
        v = v[None, :]
    ext = np.concatenate([np.full((v.shape[0], 1), ONE_BF16, np.uint16), v], axis=1)
    bits = ext.astype(np.int64)
    exp = (bits >> 7) & 0xFF
    if np.any(exp == 0xFF):
        raise DomainError("value matrix contains inf/NaN")
    man = (bits & 0x7F) / Q97_ONE
    zero = exp == 0
    sign = np.where(zero, 0, bits >> 15).astype(np.int8)
    if cfg.exact_log:
        mag = (exp - BF16_BIAS) + np.log2(1.0 + man)
        mag = kernels.vec.snap(mag, cfg.flags)
    else:
        mag = (exp - BF16_BIAS) + man
    mag = np.where(zero, 0.0, mag)
    return sign, np.ascontiguousarray(mag), zero, man[~zero]


def problem_scores(p: AttentionProblem, cfg: ErrorToggleConfig = DEFAULT_CONFIG) -> np.ndarray:
    return scores_f64(p) if cfg.exact_storage else scores_bf16(p)


def finalize_arrays(sign, mag, zero, cfg: ErrorToggleConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized log-domain division plus back-conversion; lane 0 is ``ℓ``."""
    if np.any(zero[:, 0]):
        raise ContractViolation("sum of exponentials is zero: no keys processed")
    lg = kernels.vec.snap(mag[:, 1:] - mag[:, :1], cfg.flags)
    neg = (sign[:, 1:] ^ sign[:, :1]).astype(bool)
    integer = np.floor(lg)
    if cfg.exact_log:
        val = np.exp2(lg)
    else:
        val = np.exp2(integer) * (1.0 + (lg - integer))
    if not cfg.exact_storage:
        if cfg.exact_log:
            val = round_bf16(val)
        biased = integer + BF16_BIAS
        val = np.where(biased < 1, 0.0, np.where(biased > 254, BF16_MAX, val))
        val = np.minimum(val, BF16_MAX)
    val = np.where(neg, -val, val)
    return np.where(zero[:, 1:], 0.0, val)


def record_mantissas(hist: np.ndarray | None, mantissas: np.ndarray, repeat: int = 1):
    """Add float-to-log Mitchell inputs to a histogram, once per query FAU."""
    if hist is None or hist.shape[0] == 0 or mantissas.size == 0:
        return
    nb = hist.shape[0]
    idx = np.minimum((mantissas * nb).astype(np.int64), nb - 1)
    hist += np.bincount(idx, minlength=nb) * repeat


def _hist_arg(hist):
    return np.zeros(0, np.int64) if hist is None else hist


def fau_run(q, K, V, lut: PwlLut | None = None, cfg: ErrorToggleConfig = DEFAULT_CONFIG,
            scale_enabled: bool = False):
    """Run one query over a KV block; returns ``(m, O)`` with ``O`` as LnsValue list.

    Dot products use exact BF16 products with a binary64 accumulator and are
    rounded to BF16 before the max/difference logic.
    """
    K = np.asarray(K, np.uint16)
    if K.ndim != 2 or K.shape[0] == 0:
        raise ContractViolation("fau_run needs a non-empty KV block")
    p = AttentionProblem(np.asarray(q, np.uint16).reshape(1, -1), K, V, scale_enabled)
    lut = lut or default_lut()
    sign, mag, zero, _ = value_lanes(p.v, cfg)
    m, osign, omag, ozero = kernels.fau_block(
        problem_scores(p, cfg), sign, mag, zero, lut.slopes, lut.intercepts, cfg.flags,
        _hist_arg(None))
    return float(m[0]), lanes_to_lns(osign[0], omag[0], ozero[0])


def lanes_to_lns(sign, mag, zero) -> list[LnsValue]:
    """Convert one query's lane arrays to LnsValue words (default mode only)."""
    out = []
    for s, g, z in zip(sign, mag, zero):
        if z:
            out.append(LNS_ZERO)
            continue
        raw = g * Q97_ONE
        if raw != int(raw):
            raise ValueError("lane is off the Q9.7 grid; only valid in bit-accurate mode")
        out.append(LnsValue(int(s), int(raw)))
    return out


def lns_to_lanes(O: list[LnsValue]):
    sign = np.array([x.sign for x in O], np.int8)
    mag = np.array([x.logmag for x in O])
    zero = np.array([x.is_zero for x in O], bool)
    return sign, mag, zero


def attn_hfa(p: AttentionProblem, cfg: ErrorToggleConfig = DEFAULT_CONFIG,
             lut: PwlLut | None = None, hist: np.ndarray | None = None,
             backend: str | None = None) -> np.ndarray:
    """H-FA attention over the whole KV in one FAU per query.

    Returns an ``M × d`` binary64 array whose entries are BF16 values (binary64
    values when ``cfg.exact_storage`` is set).
    """
    from .blocks import attn_hfa_blocked

    return attn_hfa_blocked(p, 1, cfg, lut, hist=hist, backend=backend)

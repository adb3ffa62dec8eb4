"""KV partitioning and the log-domain ACC merge cascade."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractViolation
from .fau import (
    DEFAULT_CONFIG,
    ErrorToggleConfig,
    _hist_arg,
    _scale_lns,
    finalize_arrays,
    lns_add,
    problem_scores,
    quantize_delta,
    record_mantissas,
    value_lanes,
)
from .numerics import LNS_ZERO, LnsValue, PwlLut, default_lut
from .reference import AttentionProblem


@dataclass
class LogTriplet:
    """Partial result of one KV block: float max plus LNS lanes ``[ℓ, o]``."""

    m: float
    O: list[LnsValue] = field(default_factory=list)

    @classmethod
    def identity(cls, d: int) -> "LogTriplet":
        return cls(-math.inf, [LNS_ZERO] * (d + 1))


def partition_kv(n: int, blocks: int) -> list[range]:
    """Contiguous row ranges of size ``ceil(n / blocks)``, the last one possibly shorter."""
    if not 1 <= blocks <= n:
        raise ContractViolation(f"need 1 <= blocks <= N, got blocks={blocks}, N={n}")
    size = -(-n // blocks)
    return [range(lo, min(lo + size, n)) for lo in range(0, n, size)]


def acc_merge(a: LogTriplet, b: LogTriplet, lut: PwlLut) -> LogTriplet:
    """Scalar ACC unit: rescale both sides to the common max and add in LNS."""
    m = max(a.m, b.m)
    if m == -math.inf:
        return LogTriplet(m, list(a.O))
    qa = quantize_delta(a.m - m) if a.m != -math.inf else 0
    qb = quantize_delta(b.m - m) if b.m != -math.inf else 0
    lanes = [lns_add(_scale_lns(x, qa), _scale_lns(y, qb), lut) for x, y in zip(a.O, b.O)]
    return LogTriplet(m, lanes)


def block_triplets(p: AttentionProblem, blocks: int, cfg: ErrorToggleConfig = DEFAULT_CONFIG,
                   lut: PwlLut | None = None, hist=None, backend=None):
    """Per-block FAU outputs as ``(m, sign, mag, zero)`` array tuples."""
    lut = lut or default_lut()
    scores = problem_scores(p, cfg)
    sign, mag, zero, mant = value_lanes(p.v, cfg)
    h = _hist_arg(hist)
    out = []
    for rows in partition_kv(p.N, blocks):
        sl = slice(rows.start, rows.stop)
        out.append(kernels.fau_block(
            np.ascontiguousarray(scores[:, sl]), sign[sl], mag[sl], zero[sl],
            lut.slopes, lut.intercepts, cfg.flags, h, backend=backend))
    record_mantissas(hist, mant, repeat=p.M)
    return out


def merge_cascade(triplets, cfg: ErrorToggleConfig = DEFAULT_CONFIG, lut: PwlLut | None = None,
                  hist=None, backend=None):
    """Fold the ACC merge over block results in ascending block index."""
    lut = lut or default_lut()
    h = _hist_arg(hist)
    acc = triplets[0]
    for nxt in triplets[1:]:
        acc = kernels.merge_block(acc, nxt, lut.slopes, lut.intercepts, cfg.flags, h,
                                  backend=backend)
    return acc


def attn_hfa_blocked(p: AttentionProblem, blocks: int = 1,
                     cfg: ErrorToggleConfig = DEFAULT_CONFIG, lut: PwlLut | None = None,
                     hist: np.ndarray | None = None, backend: str | None = None) -> np.ndarray:
    """H-FA attention with the KV rows split over ``blocks`` FAUs and an ACC cascade."""
    cfg = cfg or DEFAULT_CONFIG
    triplets = block_triplets(p, blocks, cfg, lut, hist, backend)
    _, sign, mag, zero = merge_cascade(triplets, cfg, lut, hist, backend)
    return finalize_arrays(sign, mag, zero, cfg)

"""Linear-domain attention kernels used as oracles and as the FA-2 baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, TensorFormatError
from .numerics import bf16_from_f64, bf16_is_normal, bf16_to_f64, round_bf16


@dataclass
class AttentionProblem:
    """Query, key and value matrices as BFloat16 words (``uint16`` arrays)."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    scale_enabled: bool = False
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.q = np.ascontiguousarray(self.q, dtype=np.uint16)
        self.k = np.ascontiguousarray(self.k, dtype=np.uint16)
        self.v = np.ascontiguousarray(self.v, dtype=np.uint16)
        if self.q.ndim != 2 or self.k.ndim != 2 or self.v.ndim != 2:
            raise TensorFormatError("Q, K and V must be 2-D")
        if self.q.shape[1] != self.k.shape[1] or self.k.shape != self.v.shape:
            raise TensorFormatError(
                f"incompatible shapes Q{self.q.shape} K{self.k.shape} V{self.v.shape}"
            )
        if min(self.q.shape + self.k.shape) < 1:
            raise TensorFormatError("empty dimension")
        for name, a in (("Q", self.q), ("K", self.k), ("V", self.v)):
            if np.any(((a >> 7) & 0xFF) == 0xFF):
                raise ContractViolation(f"{name} contains inf/NaN")

    @classmethod
    def from_float(cls, q, k, v, scale_enabled: bool = False) -> "AttentionProblem":
        """Build a problem from real matrices, rounding every entry to BF16."""
        return cls(bf16_from_f64(np.asarray(q, np.float64)),
                   bf16_from_f64(np.asarray(k, np.float64)),
                   bf16_from_f64(np.asarray(v, np.float64)), scale_enabled)

    @classmethod
    def random(cls, m: int, n: int, d: int, seed: int, scale_enabled: bool = False):
        """Standard normal Q, K, V drawn in that order from ``PCG64(seed)``."""
        rng = np.random.Generator(np.random.PCG64(seed))
        q = rng.standard_normal((m, d))
        k = rng.standard_normal((n, d))
        v = rng.standard_normal((n, d))
        return cls.from_float(q, k, v, scale_enabled)

    @property
    def M(self) -> int:
        return self.q.shape[0]

    @property
    def N(self) -> int:
        return self.k.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[1]

    def _f64(self, name):
        if name not in self._cache:
            self._cache[name] = bf16_to_f64(getattr(self, name))
        return self._cache[name]

    @property
    def q64(self) -> np.ndarray:
        return self._f64("q")

    @property
    def k64(self) -> np.ndarray:
        return self._f64("k")

    @property
    def v64(self) -> np.ndarray:
        return self._f64("v")

    @property
    def score_scale(self) -> float:
        return 1.0 / math.sqrt(self.d) if self.scale_enabled else 1.0

    def subset(self, rows: slice) -> "AttentionProblem":
        return AttentionProblem(self.q, self.k[rows], self.v[rows], self.scale_enabled)

    def normal_v(self) -> np.ndarray:
        return bf16_is_normal(self.v)


def scores_f64(p: AttentionProblem) -> np.ndarray:
    """``Q Kᵀ`` in binary64, optionally scaled by ``1/√d``."""
    return (p.q64 @ p.k64.T) * p.score_scale


def scores_bf16(p: AttentionProblem) -> np.ndarray:
    """Hardware score path: exact BF16 products, binary64 accumulate, BF16 result."""
    return round_bf16(scores_f64(p))


def attn_exact(p: AttentionProblem) -> np.ndarray:
    """Safe-softmax attention in binary64."""
    s = scores_f64(p)
    w = np.exp(s - s.max(axis=1, keepdims=True))
    return (w / w.sum(axis=1, keepdims=True)) @ p.v64


def attn_lazy(p: AttentionProblem) -> np.ndarray:
    """Two passes: global max first, then accumulate ``o`` and ``ℓ``, divide once."""
    s = scores_f64(p)
    v = p.v64
    m = np.full(p.M, -np.inf)
    for i in range(p.N):
        m = np.maximum(m, s[:, i])
    o = np.zeros((p.M, p.d))
    ell = np.zeros(p.M)
    for i in range(p.N):
        w = np.exp(s[:, i] - m)
        o = o + w[:, None] * v[i]
        ell = ell + w
    return o / ell[:, None]


def attn_fa2(p: AttentionProblem, precision: str = "binary64") -> np.ndarray:
    """Single-pass FlashAttention-2 with delayed division.

    ``precision="bf16"`` rounds the scores and every intermediate result to
    BF16, modelling the floating-point hardware baseline.
    """
    if precision not in ("binary64", "bf16"):
        raise ValueError(f"unknown precision {precision!r}")
    if precision == "bf16":
        r = round_bf16
        s = scores_bf16(p)
    else:
        def r(x):
            return x
        s = scores_f64(p)
    v = p.v64
    m = np.full(p.M, -np.inf)
    ell = np.zeros(p.M)
    o = np.zeros((p.M, p.d))
    for i in range(p.N):
        m_new = np.maximum(m, s[:, i])
        if np.any(m_new < m):
            raise ContractViolation("running max decreased")
        alpha = r(np.exp(m - m_new))
        beta = r(np.exp(s[:, i] - m_new))
        ell = r(r(ell * alpha) + beta)
        o = r(r(o * alpha[:, None]) + r(v[i] * beta[:, None]))
        m = m_new
    return r(o / ell[:, None])


@dataclass
class LinearTriplet:
    """Running max, sum of exponentials and unnormalized output of one query."""

    m: float
    ell: float
    o: np.ndarray

    @classmethod
    def zero(cls, d: int) -> "LinearTriplet":
        return cls(-math.inf, 0.0, np.zeros(d))

    def output(self) -> np.ndarray:
        return self.o / self.ell


def fa2_triplet(scores: np.ndarray, v: np.ndarray) -> LinearTriplet:
    """Binary64 streaming state of one query after ``len(scores)`` keys."""
    t = LinearTriplet.zero(v.shape[1])
    m, ell, o = t.m, t.ell, t.o
    for s, row in zip(scores, v):
        m_new = max(m, s)
        alpha = math.exp(m - m_new)
        beta = math.exp(s - m_new)
        ell = ell * alpha + beta
        o = o * alpha + row * beta
        m = m_new
    return LinearTriplet(m, ell, o)


def merge_linear(a: LinearTriplet, b: LinearTriplet) -> LinearTriplet:
    """Combine triplets of two disjoint KV blocks of the same query."""
    if a.m == -math.inf:
        return LinearTriplet(b.m, b.ell, b.o.copy())
    if b.m == -math.inf:
        return LinearTriplet(a.m, a.ell, a.o.copy())
    m = max(a.m, b.m)
    ea = math.exp(a.m - m)
    eb = math.exp(b.m - m)
    return LinearTriplet(m, a.ell * ea + b.ell * eb, a.o * ea + b.o * eb)

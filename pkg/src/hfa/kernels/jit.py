"""numba backend: explicit per-query, per-key, per-lane loops."""

import math

import numpy as np
from numba import njit

from .common import (
    DELTA_FLOOR,
    EXACT_LOG,
    EXACT_POW2,
    EXACT_QUANT,
    EXACT_STORAGE,
    LOG2E,
    LUT_SCALE,
    Q_MAX,
    Q_MIN,
    Q_RAW_MAX,
    Q_RAW_MIN,
    Q_SCALE,
    SHIFT_LIMIT,
)


@njit(cache=True)
def quant_delta(delta, flags):
    if flags & EXACT_QUANT:
        return delta * LOG2E
    if delta < DELTA_FLOOR:
        delta = DELTA_FLOOR
    return math.floor(delta * LOG2E * Q_SCALE) / Q_SCALE


@njit(cache=True)
def saturate(x, flags):
    if flags & EXACT_STORAGE:
        return x
    return min(max(x, Q_MIN), Q_MAX)


@njit(cache=True)
def snap(x, flags):
    if flags & EXACT_STORAGE:
        return x
    r = math.floor(x * Q_SCALE + 0.5)
    return min(max(r, Q_RAW_MIN), Q_RAW_MAX) / Q_SCALE


@njit(cache=True)
def pow2_neg(a, slopes, icpts, flags):
    if flags & EXACT_POW2:
        y = 2.0 ** (-a)
    else:
        p = math.floor(a)
        if p >= SHIFT_LIMIT:
            return 0.0
        f = a - p
        k = int(f * 8.0)
        y = math.floor((slopes[k] * f + icpts[k]) * LUT_SCALE + 0.5) / LUT_SCALE
        y = y / 2.0 ** p
    if not flags & EXACT_STORAGE:
        y = math.floor(y * Q_SCALE + 0.5) / Q_SCALE
    return y


@njit(cache=True)
def lns_add(sa, a, za, sb, b, zb, slopes, icpts, flags, hist):
    if za:
        return sb, b, zb
    if zb:
        return sa, a, za
    same = sa == sb
    if not same and a == b:
        return 0, 0.0, True
    x = pow2_neg(abs(a - b), slopes, icpts, flags)
    nb = hist.shape[0]
    if nb > 0:
        hist[min(int(x * nb), nb - 1)] += 1
    if same:
        t = math.log2(1.0 + x) if flags & EXACT_LOG else x
        sign = sa
    else:
        if x >= 1.0:
            return 0, 0.0, True
        t = math.log2(1.0 - x) if flags & EXACT_LOG else -x
        sign = sa if a > b else sb
    return sign, snap(max(a, b) + t, flags), False


@njit(cache=True)
def fau_block(scores, vsign, vmag, vzero, slopes, icpts, flags, hist):
    n_q, n_k = scores.shape
    n_l = vmag.shape[1]
    m = np.full(n_q, -np.inf)
    osign = np.zeros((n_q, n_l), dtype=np.int8)
    omag = np.zeros((n_q, n_l))
    ozero = np.ones((n_q, n_l), dtype=np.bool_)
    for q in range(n_q):
        mq = -np.inf
        for i in range(n_k):
            s = scores[q, i]
            mn = max(mq, s)
            qa = quant_delta(mq - mn, flags) if mq != -np.inf else 0.0
            qb = quant_delta(s - mn, flags)
            for ln in range(n_l):
                za = ozero[q, ln]
                a = saturate(omag[q, ln] + qa, flags) if not za else 0.0
                zb = vzero[i, ln]
                b = saturate(vmag[i, ln] + qb, flags) if not zb else 0.0
                sg, mg, zr = lns_add(osign[q, ln], a, za, vsign[i, ln], b, zb,
                                     slopes, icpts, flags, hist)
                osign[q, ln] = sg
                omag[q, ln] = mg
                ozero[q, ln] = zr
            mq = mn
        m[q] = mq
    return m, osign, omag, ozero


@njit(cache=True)
def merge_block(ma, sa, mga, za, mb, sb, mgb, zb, slopes, icpts, flags, hist):
    n_q, n_l = mga.shape
    m = np.full(n_q, -np.inf)
    osign = np.zeros((n_q, n_l), dtype=np.int8)
    omag = np.zeros((n_q, n_l))
    ozero = np.ones((n_q, n_l), dtype=np.bool_)
    for q in range(n_q):
        mn = max(ma[q], mb[q])
        m[q] = mn
        if mn == -np.inf:
            continue
        qa = quant_delta(ma[q] - mn, flags) if ma[q] != -np.inf else 0.0
        qb = quant_delta(mb[q] - mn, flags) if mb[q] != -np.inf else 0.0
        for ln in range(n_l):
            a = saturate(mga[q, ln] + qa, flags) if not za[q, ln] else 0.0
            b = saturate(mgb[q, ln] + qb, flags) if not zb[q, ln] else 0.0
            sg, mg, zr = lns_add(sa[q, ln], a, za[q, ln], sb[q, ln], b, zb[q, ln],
                                 slopes, icpts, flags, hist)
            osign[q, ln] = sg
            omag[q, ln] = mg
            ozero[q, ln] = zr
    return m, osign, omag, ozero

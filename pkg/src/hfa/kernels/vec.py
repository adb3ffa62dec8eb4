"""numpy backend: loop over keys, vectorize over queries and lanes."""

import numpy as np

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


def quant_delta(delta, flags):
    delta = np.asarray(delta, dtype=np.float64)
    if flags & EXACT_QUANT:
        return delta * LOG2E
    return np.floor(np.maximum(delta, DELTA_FLOOR) * LOG2E * Q_SCALE) / Q_SCALE


def saturate(x, flags):
    if flags & EXACT_STORAGE:
        return x
    return np.clip(x, Q_MIN, Q_MAX)


def snap(x, flags):
    if flags & EXACT_STORAGE:
        return x
    return np.clip(np.floor(x * Q_SCALE + 0.5), Q_RAW_MIN, Q_RAW_MAX) / Q_SCALE


def pow2_neg(a, slopes, icpts, flags):
    if flags & EXACT_POW2:
        y = np.power(2.0, -a)
    else:
        p = np.floor(a)
        f = a - p
        k = np.minimum((f * 8.0).astype(np.int64), 7)
        y = np.floor((slopes[k] * f + icpts[k]) * LUT_SCALE + 0.5) / LUT_SCALE
        y = np.where(p >= SHIFT_LIMIT, 0.0, y / np.power(2.0, np.minimum(p, SHIFT_LIMIT)))
    if not flags & EXACT_STORAGE:
        y = np.floor(y * Q_SCALE + 0.5) / Q_SCALE
    return y


def lns_add(sa, a, za, sb, b, zb, slopes, icpts, flags, hist):
    """Elementwise LNS addition; zero sentinels absorb, exact cancellation gives zero."""
    same = sa == sb
    both = ~za & ~zb
    diff = np.where(both, np.abs(a - b), 0.0)
    x = pow2_neg(diff, slopes, icpts, flags)
    cancel = both & ~same & ((a == b) | (x >= 1.0))
    live = both & ~cancel
    nb = hist.shape[0]
    if nb > 0:
        idx = np.minimum((x[live] * nb).astype(np.int64), nb - 1)
        hist += np.bincount(idx, minlength=nb)
    with np.errstate(divide="ignore", invalid="ignore"):
        if flags & EXACT_LOG:
            t = np.where(same, np.log2(1.0 + x), np.log2(np.maximum(1.0 - x, 0.0)))
        else:
            t = np.where(same, x, -x)
        mag = snap(np.maximum(a, b) + t, flags)
    sign = np.where(same | (a > b), sa, sb)

    out_sign = np.where(za, sb, np.where(zb, sa, np.where(cancel, 0, sign))).astype(np.int8)
    out_mag = np.where(za, b, np.where(zb, a, np.where(cancel, 0.0, mag)))
    out_zero = np.where(za, zb, np.where(zb, za, cancel))
    return out_sign, out_mag, out_zero


def fau_block(scores, vsign, vmag, vzero, slopes, icpts, flags, hist):
    n_q, n_k = scores.shape
    n_l = vmag.shape[1]
    mq = np.full(n_q, -np.inf)
    osign = np.zeros((n_q, n_l), dtype=np.int8)
    omag = np.zeros((n_q, n_l))
    ozero = np.ones((n_q, n_l), dtype=bool)
    for i in range(n_k):
        s = scores[:, i]
        mn = np.maximum(mq, s)
        started = mq != -np.inf
        with np.errstate(invalid="ignore"):
            qa = np.where(started, quant_delta(np.where(started, mq - mn, 0.0), flags), 0.0)
        qb = quant_delta(s - mn, flags)
        a = np.where(ozero, 0.0, saturate(omag + qa[:, None], flags))
        zb = np.broadcast_to(vzero[i], (n_q, n_l))
        b = np.where(zb, 0.0, saturate(vmag[i][None, :] + qb[:, None], flags))
        sb = np.broadcast_to(vsign[i], (n_q, n_l))
        osign, omag, ozero = lns_add(osign, a, ozero, sb, b, zb, slopes, icpts, flags, hist)
        mq = mn
    return mq, osign, omag, ozero


def merge_block(ma, sa, mga, za, mb, sb, mgb, zb, slopes, icpts, flags, hist):
    mn = np.maximum(ma, mb)
    a_on = ma != -np.inf
    b_on = mb != -np.inf
    # mn is finite wherever either side is live
    qa = np.where(a_on, quant_delta(np.where(a_on, ma - mn, 0.0), flags), 0.0)
    qb = np.where(b_on, quant_delta(np.where(b_on, mb - mn, 0.0), flags), 0.0)
    a = np.where(za, 0.0, saturate(mga + qa[:, None], flags))
    b = np.where(zb, 0.0, saturate(mgb + qb[:, None], flags))
    osign, omag, ozero = lns_add(sa, a, za, sb, b, zb, slopes, icpts, flags, hist)
    return mn, osign, omag, ozero

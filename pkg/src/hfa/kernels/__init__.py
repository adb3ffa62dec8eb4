"""Hot loops of the log-domain accumulator, with a numba and a numpy backend.

The backend is chosen once at import time: numba when it imports and the
environment variable ``HFA_DISABLE_NUMBA`` is unset (or ``0``), numpy
otherwise. Both backends produce bit-identical results in the default
(bit-accurate) mode.

Log-magnitudes travel as binary64 values. Every Q9.7 word is exactly
representable, and sums of Q9.7 words stay exact, so in the default mode the
binary64 values are the fixed-point words divided by 128.
"""

from __future__ import annotations

import os

from .common import (  # noqa: F401
    EXACT_LOG,
    EXACT_POW2,
    EXACT_QUANT,
    EXACT_STORAGE,
    LOG2E,
)
from . import vec

BACKEND = "numpy"
_jit = None
if os.environ.get("HFA_DISABLE_NUMBA", "0").strip().lower() in ("", "0", "false", "no"):
    try:
        from . import jit as _jit

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _jit = None


def _impl(backend):
    backend = backend or BACKEND
    if backend == "numba":
        if _jit is None:
            raise RuntimeError("numba backend requested but unavailable")
        return _jit
    if backend == "numpy":
        return vec
    raise ValueError(f"unknown backend {backend!r}")


def fau_block(scores, vsign, vmag, vzero, slopes, icpts, flags, hist, backend=None):
    """Stream one KV block through the FAU for every query.

    ``scores`` is ``(M, n)``; the value arrays are ``(n, L)`` with ``L = d + 1``.
    Returns ``(m, sign, mag, zero)`` with shapes ``(M,)`` and ``(M, L)``.
    ``hist`` is an int64 array of bin counts updated in place (length 0 to skip).
    """
    return _impl(backend).fau_block(scores, vsign, vmag, vzero, slopes, icpts, flags, hist)


def merge_block(a, b, slopes, icpts, flags, hist, backend=None):
    """Log-domain merge of two partial-result triplets, one per query."""
    return _impl(backend).merge_block(*a, *b, slopes, icpts, flags, hist)

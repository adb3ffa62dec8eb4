"""Bit-accurate model of a hybrid floating-point / log-domain FlashAttention kernel."""

from .analysis import ErrorReport, ablate, error_stats, hist_mitchell
from .blocks import LogTriplet, acc_merge, attn_hfa_blocked, partition_kv
from .fau import (
    ErrorToggleConfig,
    ExtendedState,
    attn_hfa,
    fau_run,
    fau_step,
    lns_add,
    log_div_finalize,
    quantize_delta,
)
from .numerics import (
    LnsValue,
    PwlLut,
    bf16_from_f64,
    bf16_to_f64,
    default_lut,
    float_to_lns,
    lns_to_bf16,
    mitchell_log2_err,
    pwl_pow2_frac,
    shifted_pow2,
)
from .reference import (
    AttentionProblem,
    LinearTriplet,
    attn_exact,
    attn_fa2,
    attn_lazy,
    merge_linear,
)

__version__ = "0.1.0"

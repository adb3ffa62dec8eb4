"""Error statistics, error-source ablation and the Mitchell input histogram."""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .blocks import attn_hfa_blocked
from .fau import DEFAULT_CONFIG, ErrorToggleConfig
from .numerics import PwlLut, default_lut, mitchell_log2_err
from .reference import AttentionProblem, attn_exact

SIGN_THRESHOLD = 2.0 ** -6
# below this mean error the ablation has nothing to attribute
DEGENERATE_ERR = 1e-12
SOURCES = ("quant", "mitchell", "pwl")
_SOURCE_TOGGLE = {"quant": "exact_quant", "mitchell": "exact_log", "pwl": "exact_pow2"}


def error_stats(out: np.ndarray, exact: np.ndarray, threshold: float = SIGN_THRESHOLD) -> dict:
    """Elementwise error of ``out`` against ``exact``.

    Relative errors skip exact zeros. A sign mismatch is counted only where
    ``|exact|`` exceeds ``threshold`` times the row's largest magnitude.
    """
    out = np.asarray(out, np.float64)
    exact = np.asarray(exact, np.float64)
    abs_err = np.abs(out - exact)
    nz = exact != 0
    rel = abs_err[nz] / np.abs(exact[nz])
    row_max = np.abs(exact).max(axis=1, keepdims=True)
    big = np.abs(exact) > threshold * row_max
    mismatches = big & (np.sign(out) != np.sign(exact))
    return {
        "max_abs_err": float(abs_err.max()),
        "mean_abs_err": float(abs_err.mean()),
        "median_rel_err": float(np.median(rel)) if rel.size else 0.0,
        "sign_mismatches": int(mismatches.sum()),
    }


@dataclass
class ErrorReport:
    dims: dict
    seed: int | None
    blocks: int
    toggles: dict
    max_abs_err: float
    mean_abs_err: float
    median_rel_err: float
    sign_mismatches: int
    contributions: dict | None = None
    contributions_undefined: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("field,value\n")
        for key, val in _flatten(self.to_dict()):
            buf.write(f"{key},{val}\n")
        return buf.getvalue()


def _flatten(d, prefix=""):
    for key, val in d.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            yield from _flatten(val, name + ".")
        else:
            yield name, "" if val is None else val


def _dims(p: AttentionProblem) -> dict:
    return {"M": p.M, "N": p.N, "d": p.d, "scale": p.scale_enabled}


def evaluate(p: AttentionProblem, blocks: int = 1, cfg: ErrorToggleConfig = DEFAULT_CONFIG,
             lut: PwlLut | None = None, seed: int | None = None,
             exact: np.ndarray | None = None):
    """Run H-FA once and return ``(report, hfa_output)``."""
    exact = attn_exact(p) if exact is None else exact
    out = attn_hfa_blocked(p, blocks, cfg, lut)
    report = ErrorReport(_dims(p), seed, blocks, cfg.as_dict(), **error_stats(out, exact))
    return report, out


def contributions(e_all: float, e_without: dict) -> tuple[dict | None, bool]:
    """Leave-one-out shares in percent; negative deltas clamp to zero.

    Returns ``(None, True)`` when there is no error to attribute.
    """
    raw = {k: max(e_all - e_without[k], 0.0) for k in SOURCES}
    total = sum(raw.values())
    if e_all <= DEGENERATE_ERR or total == 0.0:
        return {k: 0.0 for k in SOURCES}, True
    return {k: 100.0 * raw[k] / total for k in SOURCES}, False


def ablate(p: AttentionProblem, blocks: int = 1, seed: int | None = None,
           lut: PwlLut | None = None, base: ErrorToggleConfig = DEFAULT_CONFIG) -> ErrorReport:
    """Remove one error source at a time and attribute the mean absolute error."""
    lut = lut or default_lut()
    exact = attn_exact(p)
    report, _ = evaluate(p, blocks, base, lut, seed, exact)
    e_without = {}
    for src in SOURCES:
        cfg = replace(base, **{_SOURCE_TOGGLE[src]: True})
        e_without[src] = evaluate(p, blocks, cfg, lut, seed, exact)[0].mean_abs_err
    report.contributions, report.contributions_undefined = contributions(
        report.mean_abs_err, e_without)
    report.extra["mean_abs_err_without"] = e_without
    return report


@dataclass
class MitchellHistogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def err_at_centers(self) -> np.ndarray:
        centers = 0.5 * (self.edges[:-1] + self.edges[1:])
        return np.array([mitchell_log2_err(float(c)) for c in centers])

    def fraction_below(self, x: float) -> float:
        """Share of samples in bins lying entirely below ``x``."""
        keep = self.edges[1:] <= x + 1e-12
        return float(self.counts[keep].sum() / max(self.total, 1))

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count,err_at_center"]
        for lo, hi, c, e in zip(self.edges[:-1], self.edges[1:], self.counts,
                                self.err_at_centers()):
            lines.append(f"{lo:.6f},{hi:.6f},{int(c)},{e:.8f}")
        return "\n".join(lines) + "\n"


def hist_mitchell(p: AttentionProblem, blocks: int = 1, bins: int = 20,
                  lut: PwlLut | None = None) -> MitchellHistogram:
    """Histogram of every value fed to Mitchell's approximation.

    Samples are the mantissa fractions read by the float-to-log conversion
    (once per query) and the ``2^-|A-B|`` terms of every log-domain addition.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    counts = np.zeros(bins, np.int64)
    attn_hfa_blocked(p, blocks, DEFAULT_CONFIG, lut, hist=counts)
    return MitchellHistogram(np.linspace(0.0, 1.0, bins + 1), counts)

"""Command-line harness: ``hfa {run,ablate,hist,lut,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .analysis import ablate, error_stats, evaluate, hist_mitchell
from .errors import ContractViolation, DomainError, TensorFormatError
from .fau import ErrorToggleConfig
from .numerics import bf16_from_f64, default_lut
from .reference import AttentionProblem, attn_exact, attn_fa2
from .tensorio import read_tensor, write_tensor

log = logging.getLogger("hfa")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONTRACT = 3


def _load_bf16(path) -> np.ndarray:
    a, code = read_tensor(path)
    if a.ndim != 2:
        raise TensorFormatError(f"{path}: expected a 2-D tensor, got shape {a.shape}")
    if code == 2:
        bits = a.astype(np.uint16)
        if np.any(((bits >> 7) & 0xFF) == 0xFF):
            raise TensorFormatError(f"{path}: contains inf/NaN")
        return bits
    if not np.all(np.isfinite(a)):
        raise TensorFormatError(f"{path}: contains inf/NaN")
    return bf16_from_f64(a.astype(np.float64))


def load_problem(args) -> AttentionProblem:
    if args.random is not None:
        m, n, d = args.random
        if min(m, n, d) < 1:
            raise TensorFormatError("--random dimensions must be positive")
        return AttentionProblem.random(m, n, d, args.seed, args.scale)
    if not (args.q and args.k and args.v):
        raise TensorFormatError("give either --random M N d or all of --q/--k/--v")
    return AttentionProblem(_load_bf16(args.q), _load_bf16(args.k), _load_bf16(args.v),
                            args.scale)


def _emit(out_dir: Path | None, name: str, text: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text)


def _report_text(report, fmt: str) -> str:
    return report.to_json() if fmt == "json" else report.to_csv()


def cmd_run(args) -> int:
    p = load_problem(args)
    cfg = ErrorToggleConfig.parse(args.toggles)
    exact = attn_exact(p)
    fa2 = attn_fa2(p, "bf16")
    report, hfa = evaluate(p, args.blocks, cfg, seed=args.seed if args.random else None,
                           exact=exact)
    report.extra["fa2_bf16"] = error_stats(fa2, exact)
    report.extra["bit_exact"] = bool(np.array_equal(hfa, exact))
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_tensor(out / "out_exact.hfat", exact, "f64")
        write_tensor(out / "out_fa2.hfat", bf16_from_f64(fa2), "bf16")
        if cfg.exact_storage:
            write_tensor(out / "out_hfa.hfat", hfa, "f64")
        else:
            write_tensor(out / "out_hfa.hfat", bf16_from_f64(hfa), "bf16")
    _emit(out, f"report.{args.format}", _report_text(report, args.format))
    return EXIT_OK


def cmd_ablate(args) -> int:
    p = load_problem(args)
    base = ErrorToggleConfig.parse(args.toggles)
    report = ablate(p, args.blocks, args.seed if args.random else None, base=base)
    _emit(Path(args.out) if args.out else None, f"ablation.{args.format}",
          _report_text(report, args.format))
    return EXIT_OK


def cmd_hist(args) -> int:
    p = load_problem(args)
    h = hist_mitchell(p, args.blocks, args.bins)
    _emit(Path(args.out) if args.out else None, "mitchell_hist.csv", h.to_csv())
    return EXIT_OK


def cmd_lut(args) -> int:
    _emit(Path(args.out) if args.out else None, "lut.txt", default_lut().dump())
    return EXIT_OK


def selftest_checks():
    """Quick end-to-end checks; yields ``(name, ok, detail)``."""
    from .blocks import attn_hfa_blocked
    from .reference import attn_lazy

    lut = default_lut()
    err = lut.max_error()
    yield "pwl_lut_max_error", err <= 4e-3, f"{err:.3e}"

    words = np.arange(1 << 16, dtype=np.uint32).astype(np.uint16)
    exp = (words >> 7) & 0xFF
    normal = words[(exp != 0) & (exp != 0xFF)]
    p = AttentionProblem(np.full((1, normal.size), 0x3F80, np.uint16),
                         np.full((1, normal.size), 0x3F80, np.uint16), normal[None, :])
    out = bf16_from_f64(attn_hfa_blocked(p, 1))
    yield "single_key_identity", bool(np.array_equal(out[0], normal)), f"{normal.size} words"

    p = AttentionProblem.random(4, 64, 32, seed=1)
    ex = attn_exact(p)
    diff = max(np.abs(attn_lazy(p) - ex).max(), np.abs(attn_fa2(p) - ex).max())
    yield "reference_agreement", diff <= 1e-10, f"{diff:.2e}"

    a = attn_hfa_blocked(p, 4, backend="numpy")
    b = attn_hfa_blocked(p, 4, backend=kernels.BACKEND)
    yield "backend_parity", bool(np.array_equal(a, b)), kernels.BACKEND


def cmd_selftest(args) -> int:
    ok = True
    for name, passed, detail in selftest_checks():
        print(f"{'PASS' if passed else 'FAIL'} {name} ({detail})")
        ok &= bool(passed)
    return EXIT_OK if ok else EXIT_CONTRACT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hfa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--q", help="query tensor (HFAT file)")
    data.add_argument("--k", help="key tensor (HFAT file)")
    data.add_argument("--v", help="value tensor (HFAT file)")
    data.add_argument("--random", nargs=3, type=int, metavar=("M", "N", "d"),
                      help="standard normal instance instead of tensor files")
    data.add_argument("--seed", type=int, default=0)
    data.add_argument("--blocks", type=int, default=1, help="number of KV sub-blocks")
    data.add_argument("--scale", action=argparse.BooleanOptionalAction, default=True,
                      help="scale scores by 1/sqrt(d) (default: on)")
    data.add_argument("--toggles", default="",
                      help="comma list of exact replacements: quant,log,pow2,storage,all")
    data.add_argument("--out", help="output directory (default: stdout)")
    data.add_argument("--format", choices=("json", "csv"), default="json")

    sub.add_parser("run", parents=[data], help="exact, FA-2 and H-FA outputs plus report")
    sub.add_parser("ablate", parents=[data], help="error-source contributions")
    h = sub.add_parser("hist", parents=[data], help="histogram of Mitchell inputs")
    h.add_argument("--bins", type=int, default=20)
    lut = sub.add_parser("lut", help="dump the PWL coefficient table")
    lut.add_argument("--out")
    sub.add_parser("selftest", help="quick consistency checks")
    return parser


COMMANDS = {"run": cmd_run, "ablate": cmd_ablate, "hist": cmd_hist, "lut": cmd_lut,
            "selftest": cmd_selftest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        return COMMANDS[args.command](args)
    except (TensorFormatError, ValueError) as exc:
        if isinstance(exc, (ContractViolation, DomainError)):
            print(f"hfa: contract violation: {exc}", file=sys.stderr)
            return EXIT_CONTRACT
        print(f"hfa: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

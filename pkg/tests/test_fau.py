import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hfa import kernels
from hfa.errors import ContractViolation
from hfa.fau import (
    ErrorToggleConfig,
    ExtendedState,
    attn_hfa,
    fau_run,
    fau_step,
    lanes_to_lns,
    lns_add,
    log_div_finalize,
    quantize_delta,
    value_lanes,
)
from hfa.numerics import (
    LNS_ZERO,
    LnsValue,
    bf16_from_f64,
    bf16_to_f64,
    default_lut,
    float_to_lns,
)
from hfa.reference import AttentionProblem, attn_exact, scores_bf16

import oracles

LUT = default_lut()
RLUT = (LUT.slope_bits, LUT.intercept_bits)


def lv(sign, logmag):
    return LnsValue.from_logmag(sign, logmag)


def to_rational(x: LnsValue):
    return oracles.ZERO if x.is_zero else (x.sign, Fraction(x.bits, 128))


# --- quantize_delta ---------------------------------------------------------------


@pytest.mark.parametrize("delta, raw", [(0.0, 0), (-1.0, -185), (-100.0, -2770),
                                        (-15.0, -2770), (-math.inf, -2770)])
def test_quantize_delta_examples(delta, raw):
    assert quantize_delta(delta) == raw
    assert quantize_delta(delta) == oracles.r_quant(max(delta, -15.0)) * 128


def test_quantize_delta_range():
    for delta in np.linspace(-20, 0, 401):
        q = quantize_delta(float(delta)) / 128
        assert -21.6406250 <= q <= 0


@pytest.mark.parametrize("delta", [1e-9, 3.0, math.nan])
def test_quantize_delta_rejects_positive(delta):
    with pytest.raises(ContractViolation):
        quantize_delta(delta)


# --- lns_add --------------------------------------------------------------------


def test_lns_add_examples():
    assert lns_add(lv(0, 3.0), lv(0, 3.0), LUT) == lv(0, 4.0)
    assert lns_add(lv(0, 3.0), lv(1, 3.0), LUT) == LNS_ZERO
    assert lns_add(lv(0, 2.0), lv(0, 0.0), LUT) == lv(0, 2.25)


def test_lns_add_zero_absorbs():
    x = lv(1, -3.5)
    assert lns_add(LNS_ZERO, x, LUT) is x
    assert lns_add(x, LNS_ZERO, LUT) is x
    assert lns_add(LNS_ZERO, LNS_ZERO, LUT) == LNS_ZERO


def test_lns_add_sign_follows_larger_operand():
    assert lns_add(lv(1, 2.0), lv(0, 1.0), LUT).sign == 1
    assert lns_add(lv(1, 1.0), lv(0, 2.0), LUT).sign == 0


words = st.integers(-32768, 32767)
lns_values = st.one_of(st.just(LNS_ZERO),
                       st.builds(LnsValue, st.integers(0, 1), words))


@settings(max_examples=500, deadline=None)
@given(lns_values, lns_values)
def test_lns_add_matches_rational_oracle(a, b):
    got = to_rational(lns_add(a, b, LUT))
    assert got == oracles.r_lns_add(to_rational(a), to_rational(b), RLUT)


@settings(max_examples=200, deadline=None)
@given(lns_values, lns_values)
def test_lns_add_kernel_matches_scalar(a, b):
    hist = np.zeros(0, np.int64)
    flags = 0
    for impl in (kernels.vec, kernels._jit or kernels.vec):
        s, m, z = impl.lns_add(
            np.int8(a.sign), np.float64(a.logmag), np.bool_(a.is_zero),
            np.int8(b.sign), np.float64(b.logmag), np.bool_(b.is_zero),
            LUT.slopes, LUT.intercepts, flags, hist)
        want = lns_add(a, b, LUT)
        assert bool(z) == want.is_zero
        if not want.is_zero:
            assert (int(s), float(m)) == (want.sign, want.logmag)


# --- fau_step / fau_run ------------------------------------------------------------


def test_fau_step_first_step():
    w = bf16_from_f64(np.array([1.5, -0.25, 3.0]))
    st0 = ExtendedState.initial(3)
    st1 = fau_step(st0, 7.25, w, LUT)
    assert st1.m == 7.25
    assert st1.O[0] == lv(0, 0.0)
    assert st1.O[1:] == [float_to_lns(int(x)) for x in w]


def test_fau_step_two_equal_steps_double():
    w = bf16_from_f64(np.array([1.5, -0.25, 3.0]))
    st = fau_step(ExtendedState.initial(3), 2.0, w, LUT)
    st = fau_step(st, 2.0, w, LUT)
    assert st.O[0] == lv(0, 1.0)
    for got, x in zip(st.O[1:], w):
        ref = float_to_lns(int(x))
        assert got == LnsValue(ref.sign, ref.bits + 128)


def test_fau_step_rejects_non_finite_score():
    with pytest.raises(ContractViolation):
        fau_step(ExtendedState.initial(1), math.inf, [0x3F80], LUT)


@pytest.mark.parametrize("seed", range(10))
def test_random_three_step_stream_matches_rational_oracle(seed):
    p = AttentionProblem.random(1, 3, 8, seed, scale_enabled=bool(seed % 2))
    s = scores_bf16(p)[0]
    st = ExtendedState.initial(8)
    for i in range(3):
        st = fau_step(st, float(s[i]), p.v[i], LUT)
    m, lanes = oracles.r_run(s, [list(map(int, r)) for r in p.v], RLUT)
    assert st.m == m
    assert [to_rational(x) for x in st.O] == lanes


def test_fau_run_single_key():
    p = AttentionProblem.random(1, 1, 6, seed=3)
    m, O = fau_run(p.q[0], p.k, p.v)
    assert m == scores_bf16(p)[0, 0]
    assert O == [lv(0, 0.0), *[float_to_lns(int(x)) for x in p.v[0]]]


def test_fau_run_zero_values():
    p = AttentionProblem.from_float(np.ones((1, 4)), np.random.default_rng(0).normal(size=(5, 4)),
                                    np.zeros((5, 4)))
    _, O = fau_run(p.q[0], p.k, p.v)
    assert O[0].sign == 0 and not O[0].is_zero
    assert all(x.is_zero for x in O[1:])


def test_fau_run_rejects_empty_block():
    with pytest.raises(ContractViolation):
        fau_run(np.zeros(4, np.uint16), np.zeros((0, 4), np.uint16), np.zeros((0, 4), np.uint16))


@pytest.mark.parametrize("seed", range(6))
def test_fau_run_equals_fold_of_fau_step(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(40, 5))
    v[rng.random(v.shape) < 0.1] = 0.0  # zero-sentinel lanes
    v[3, 2] = 1e-40  # subnormal in BF16
    p = AttentionProblem.from_float(rng.normal(size=(1, 5)), rng.normal(size=(40, 5)) * 2, v)
    s = scores_bf16(p)[0]
    st = ExtendedState.initial(5)
    for i in range(40):
        st = fau_step(st, float(s[i]), p.v[i], LUT)
    m, O = fau_run(p.q[0], p.k, p.v)
    assert m == st.m
    assert O == st.O


# --- finalize and end to end ------------------------------------------------------------


def test_log_div_finalize_examples():
    assert bf16_to_f64(log_div_finalize([lv(0, 0.0), lv(0, 1.5)])[0]) == 3.0
    assert bf16_to_f64(log_div_finalize([lv(0, 2.0), lv(1, 2.0)])[0]) == -1.0
    assert log_div_finalize([lv(0, 2.0), LNS_ZERO]) == [0]


def test_log_div_finalize_requires_ell():
    with pytest.raises(ContractViolation):
        log_div_finalize([LNS_ZERO, lv(0, 1.0)])


def test_single_key_identity_sample():
    rng = np.random.default_rng(1)
    v = bf16_from_f64(rng.normal(size=(1, 512)) * 10.0 ** rng.integers(-30, 30, 512))
    p = AttentionProblem(bf16_from_f64(rng.normal(size=(3, 512))),
                         bf16_from_f64(rng.normal(size=(1, 512))), v)
    out = attn_hfa(p)
    assert np.array_equal(bf16_from_f64(out), np.broadcast_to(v[0], (3, 512)))


def test_two_duplicate_keys_bit_exact():
    rng = np.random.default_rng(2)
    k = bf16_from_f64(rng.normal(size=(1, 16)))
    v = bf16_from_f64(rng.normal(size=(1, 16)))
    p = AttentionProblem(bf16_from_f64(rng.normal(size=(2, 16))), np.repeat(k, 2, 0),
                         np.repeat(v, 2, 0))
    assert np.array_equal(bf16_from_f64(attn_hfa(p)), np.repeat(v, 2, 0))


@pytest.mark.parametrize("seed", range(3))
def test_all_exact_toggles_match_exact_attention(seed):
    p = AttentionProblem.random(4, 128, 32, seed, scale_enabled=True)
    out = attn_hfa(p, ErrorToggleConfig.all_exact())
    assert np.abs(out - attn_exact(p)).max() <= 1e-6


def test_end_to_end_matches_rational_oracle():
    p = AttentionProblem.random(3, 40, 12, seed=21)
    s = scores_bf16(p)
    out = attn_hfa(p)
    rows = [list(map(int, r)) for r in p.v]
    for q in range(p.M):
        _, lanes = oracles.r_run(s[q], rows, RLUT)
        assert out[q].tolist() == oracles.r_finalize(lanes)


def test_ell_lane_positive_and_max_tracks_scores():
    p = AttentionProblem.random(4, 50, 8, seed=5)
    s = scores_bf16(p)
    for q in range(4):
        for n in (1, 7, 50):
            m, O = fau_run(p.q[q], p.k[:n], p.v[:n])
            assert m == s[q, :n].max()
            assert O[0].sign == 0 and not O[0].is_zero


def test_lanes_to_lns_rejects_off_grid():
    with pytest.raises(ValueError):
        lanes_to_lns([0], [0.001], [False])


def test_value_lanes_extended_row():
    v = bf16_from_f64(np.array([[2.0, -0.5, 0.0]]))
    sign, mag, zero, mant = value_lanes(v)
    assert sign.tolist() == [[0, 0, 1, 0]]
    assert mag.tolist() == [[0.0, 1.0, -1.0, 0.0]]
    assert zero.tolist() == [[False, False, False, True]]
    assert mant.tolist() == [0.0, 0.0, 0.0]


# --- backends -----------------------------------------------------------------------


CONFIGS = [ErrorToggleConfig(), ErrorToggleConfig(exact_quant=True),
           ErrorToggleConfig(exact_log=True), ErrorToggleConfig(exact_pow2=True),
           ErrorToggleConfig.all_exact()]


@pytest.mark.skipif(kernels._jit is None, reason="numba unavailable")
@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: str(c.flags))
def test_backends_agree(cfg):
    p = AttentionProblem.random(5, 96, 16, seed=cfg.flags)
    a = attn_hfa(p, cfg, backend="numpy")
    b = attn_hfa(p, cfg, backend="numba")
    if cfg.flags == 0:
        assert np.array_equal(a, b)
    else:
        assert np.allclose(a, b, rtol=1e-6, atol=1e-9)


@pytest.mark.skipif(kernels._jit is None, reason="numba unavailable")
def test_backends_same_histogram():
    p = AttentionProblem.random(3, 64, 8, seed=1)
    ha, hb = np.zeros(16, np.int64), np.zeros(16, np.int64)
    attn_hfa(p, hist=ha, backend="numpy")
    attn_hfa(p, hist=hb, backend="numba")
    assert np.array_equal(ha, hb)


def test_toggle_parse():
    assert ErrorToggleConfig.parse("") == ErrorToggleConfig()
    assert ErrorToggleConfig.parse("quant, pwl") == ErrorToggleConfig(exact_quant=True,
                                                                       exact_pow2=True)
    assert ErrorToggleConfig.parse("all") == ErrorToggleConfig.all_exact()
    with pytest.raises(ValueError):
        ErrorToggleConfig.parse("bogus")

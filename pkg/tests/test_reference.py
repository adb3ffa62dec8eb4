import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hfa.errors import TensorFormatError
from hfa.numerics import bf16_to_f64
from hfa.reference import (
    AttentionProblem,
    LinearTriplet,
    attn_exact,
    attn_fa2,
    attn_lazy,
    fa2_triplet,
    merge_linear,
    scores_f64,
)

from oracles import dense_softmax_attention


def test_single_key_returns_value_row():
    p = AttentionProblem.random(3, 1, 8, seed=2)
    for fn in (attn_exact, attn_lazy, lambda p: attn_fa2(p)):
        assert np.array_equal(fn(p), np.broadcast_to(p.v64[0], (3, 8)))


def test_fa2_bf16_single_key_bit_exact():
    p = AttentionProblem.random(3, 1, 8, seed=3)
    assert np.array_equal(attn_fa2(p, "bf16"), np.broadcast_to(p.v64[0], (3, 8)))


def test_uniform_scores_give_column_mean():
    # q is orthogonal to every key
    q = np.array([[1.0, 0.0, 0.0, 0.0]])
    k = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0], [0.0, 0.0, 0.0, -1.0]])
    v = np.array([[1.0, 2.0, 3.0, 4.0], [0.5, -2.0, 1.0, 0.0], [3.0, 0.0, -1.0, 2.0]])
    p = AttentionProblem.from_float(q, k, v)
    assert np.allclose(attn_exact(p), v.mean(axis=0, keepdims=True), atol=1e-15)


@pytest.mark.parametrize("scale", [False, True])
def test_exact_matches_dense_oracle(scale):
    p = AttentionProblem.random(5, 8, 4, seed=11, scale_enabled=scale)
    want = dense_softmax_attention(p.q64, p.k64, p.v64, p.score_scale)
    assert np.abs(attn_exact(p) - want).max() <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_lazy_and_fa2_match_exact(seed):
    p = AttentionProblem.random(4, 100 + 37 * seed, 16, seed)
    ex = attn_exact(p)
    assert np.abs(attn_lazy(p) - ex).max() <= 1e-12
    assert np.abs(attn_fa2(p) - ex).max() <= 1e-12


def test_dominant_score_gives_one_hot():
    k = np.zeros((4, 2))
    k[2] = [60.0, 0.0]
    v = np.arange(8.0).reshape(4, 2)
    p = AttentionProblem.from_float([[1.0, 0.0]], k, v)
    assert np.abs(attn_lazy(p) - v[2]).max() <= 1e-12


def test_fa2_is_order_robust():
    p = AttentionProblem.random(1, 64, 8, seed=5)
    order = np.argsort(scores_f64(p)[0])
    asc = AttentionProblem(p.q, p.k[order], p.v[order])
    desc = AttentionProblem(p.q, p.k[order[::-1]], p.v[order[::-1]])
    assert np.abs(attn_fa2(asc) - attn_fa2(desc)).max() <= 1e-10


def test_fa2_bf16_output_is_bf16_and_close():
    p = AttentionProblem.random(4, 64, 16, seed=8, scale_enabled=True)
    out = attn_fa2(p, "bf16")
    from hfa.numerics import round_bf16

    assert np.array_equal(round_bf16(out), out)
    assert np.abs(out - attn_exact(p)).max() < 0.05


def test_fa2_rejects_unknown_precision():
    p = AttentionProblem.random(1, 2, 2, seed=0)
    with pytest.raises(ValueError):
        attn_fa2(p, "fp8")


def test_problem_validation():
    with pytest.raises(TensorFormatError):
        AttentionProblem(np.zeros((2, 3), np.uint16), np.zeros((4, 2), np.uint16),
                         np.zeros((4, 2), np.uint16))
    with pytest.raises(ValueError):
        AttentionProblem.from_float([[1.0]], [[math.inf]], [[1.0]])


def test_random_problem_is_reproducible():
    a = AttentionProblem.random(2, 5, 3, seed=42)
    b = AttentionProblem.random(2, 5, 3, seed=42)
    assert np.array_equal(a.k, b.k) and np.array_equal(a.v, b.v)
    assert np.array_equal(bf16_to_f64(a.q), a.q64)


# --- streaming state and merges ----------------------------------------------------


def test_running_max_nondecreasing_and_ell_bound():
    p = AttentionProblem.random(1, 50, 4, seed=9)
    s = scores_f64(p)[0]
    t = LinearTriplet.zero(4)
    prev = -math.inf
    for i in range(1, 51):
        t = fa2_triplet(s[:i], p.v64[:i])
        assert t.m >= prev
        assert t.m == s[:i].max()
        assert t.ell >= 1.0
        prev = t.m


def test_merge_with_zero_triplet_is_identity():
    p = AttentionProblem.random(1, 6, 3, seed=1)
    x = fa2_triplet(scores_f64(p)[0], p.v64)
    for y in (merge_linear(x, LinearTriplet.zero(3)), merge_linear(LinearTriplet.zero(3), x)):
        assert y.m == x.m and y.ell == x.ell and np.array_equal(y.o, x.o)


def test_merge_is_symmetric():
    p = AttentionProblem.random(1, 10, 3, seed=4)
    s = scores_f64(p)[0]
    a = fa2_triplet(s[:4], p.v64[:4])
    b = fa2_triplet(s[4:], p.v64[4:])
    ab, ba = merge_linear(a, b), merge_linear(b, a)
    assert ab.m == ba.m
    assert abs(ab.ell - ba.ell) <= 1e-15 * ab.ell
    assert np.abs(ab.o - ba.o).max() <= 1e-15 * np.abs(ab.o).max()


def test_two_block_merge_matches_one_block():
    p = AttentionProblem.random(1, 16, 5, seed=6)
    s = scores_f64(p)[0]
    whole = fa2_triplet(s, p.v64)
    merged = merge_linear(fa2_triplet(s[:8], p.v64[:8]), fa2_triplet(s[8:], p.v64[8:]))
    assert np.abs(merged.output() - whole.output()).max() <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 40), min_size=1, max_size=8))
def test_partition_invariance(seed, sizes):
    n = sum(sizes)
    p = AttentionProblem.random(1, n, 6, seed)
    s = scores_f64(p)[0]
    acc = LinearTriplet.zero(6)
    lo = 0
    for size in sizes:
        acc = merge_linear(acc, fa2_triplet(s[lo:lo + size], p.v64[lo:lo + size]))
        lo += size
    whole = fa2_triplet(s, p.v64)
    assert acc.m == whole.m
    assert np.abs(acc.output() - whole.output()).max() <= 1e-10

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intgmres.fxp import (INT64_MAX, INT64_MIN, TABLE_IV, TABLE_VI, FxDomainError,
                          FxOverflowError, FxZeroDivisionError, OverflowMonitor,
                          QFormat, ShiftPlan, decode, decode_vector, encode,
                          encode_vector, fx_add, fx_axpy_sub, fx_div, fx_div_vector,
                          fx_dot, fx_mul, fx_norm, fx_sqrt, fx_sub, isqrt, wrap64)

import oracle

Q30 = QFormat(30)
ONE = 1 << 30


# ---------------------------------------------------------------- formats

def test_qformat_fields():
    assert Q30.int_bits == 33
    assert Q30.int_bits + Q30.frac_bits + 1 == 64
    with pytest.raises(ValueError):
        QFormat(63)
    with pytest.raises(ValueError):
        QFormat(-1)
    with pytest.raises(ValueError):
        QFormat(30, word_length=32)


def test_shift_plan_presets():
    assert TABLE_IV.validate(Q30) is TABLE_IV
    assert (TABLE_IV.dot_b1, TABLE_IV.axpy_b1, TABLE_IV.norm_b1) == (16, 16, 16)
    assert (TABLE_IV.div_b1, TABLE_IV.div_b2, TABLE_IV.givens_b2) == (16, 14, 16)
    assert TABLE_VI.validate(Q30) is TABLE_VI
    assert (TABLE_VI.div_b1, TABLE_VI.div_b2) == (30, 0)
    assert TABLE_VI.dot_b1 == TABLE_VI.axpy_b1 == TABLE_VI.norm_b1 == TABLE_VI.givens_b2 == 0


def test_shift_plan_validation():
    with pytest.raises(ValueError):
        ShiftPlan(dot_b1=-1).validate(Q30)
    with pytest.raises(ValueError):
        ShiftPlan(dot_b1=31).validate(Q30)
    with pytest.raises(ValueError):
        ShiftPlan(rot_b=1).validate(Q30)
    with pytest.raises(ValueError):
        TABLE_IV.replace(bogus=3)
    assert TABLE_IV.replace(div_b1=20).div_b1 == 20


# ---------------------------------------------------------------- encode/decode

def test_encode_examples():
    assert encode(1.0, Q30) == 2 ** 30
    assert encode(-0.5, Q30) == -(2 ** 29)
    raw = encode(0.1, Q30)
    assert raw == oracle.encode(0.1, 30)
    assert abs(decode(raw, 30) - 0.1) < 2.0 ** -30


def test_encode_truncates_toward_zero():
    q = 2.0 ** -31
    assert encode(3 * q, Q30) == 1
    assert encode(-3 * q, Q30) == -1


def test_encode_range():
    with pytest.raises(FxOverflowError):
        encode(2.0 ** 33, Q30)
    with pytest.raises(FxOverflowError):
        encode(float("nan"), Q30)
    with pytest.raises(FxOverflowError):
        encode_vector([0.0, -(2.0 ** 33)], Q30)
    assert encode(-(2.0 ** 33) + 1, Q30) < 0


def test_decode_examples():
    assert decode(2 ** 30, 30) == 1.0
    assert decode(0, 30) == 0.0


@given(st.floats(min_value=-(2.0 ** 33) + 1, max_value=2.0 ** 33 - 1, allow_nan=False))
def test_round_trip(x):
    assert abs(decode(encode(x, Q30), 30) - x) < 2.0 ** -30 * max(1.0, abs(x) * 2 ** -22)


def test_vector_round_trip():
    rng = np.random.default_rng(1)
    x = rng.uniform(-100, 100, 10_000)
    raw = encode_vector(x, Q30)
    assert raw.dtype == np.int64
    assert np.all(np.abs(decode_vector(raw, 30) - x) < 2.0 ** -30)
    assert [int(r) for r in raw[:50]] == [oracle.encode(v, 30) for v in x[:50]]


# ---------------------------------------------------------------- add/sub

def test_add_examples():
    assert fx_add(ONE, ONE) == 2 * ONE
    assert fx_sub(ONE, ONE) == 0


@given(st.integers(INT64_MIN // 2, INT64_MAX // 2), st.integers(INT64_MIN // 2, INT64_MAX // 2))
def test_add_matches_big_integers(a, b):
    assert fx_add(a, b) == a + b
    assert fx_sub(a, b) == a - b
    assert fx_add(a, 0) == a


def test_add_overflow_wraps_and_is_recorded():
    mon = OverflowMonitor()
    assert fx_add(INT64_MAX, 1, mon) == INT64_MIN
    assert len(mon.events) == 1 and mon.events[0].kernel == "add"
    unchecked = OverflowMonitor(checked=False)
    assert fx_add(INT64_MAX, 1, unchecked) == INT64_MIN
    assert not unchecked.events


def test_wrap64():
    assert wrap64(2 ** 63) == -(2 ** 63)
    assert wrap64(-(2 ** 63) - 1) == 2 ** 63 - 1
    assert wrap64(5) == 5


# ---------------------------------------------------------------- mul

def test_mul_examples():
    assert fx_mul(ONE, ONE, 16, 0, 30) == ONE
    assert fx_mul(ONE // 2, ONE // 2, 0, 0, 30) == ONE // 4
    # product kept in the wide format Q(2*d_f - b1 - b2)
    assert fx_mul(ONE, ONE, 16, 0, 30, out_frac=44) == 2 ** 44


def test_mul_negative_floor_semantics():
    # (-1 raw) >> 1 is -1 under floor semantics, not 0; the final shift floors too
    assert fx_mul(-1, ONE, 1, 0, 30) == oracle.mul(-1, ONE, 1, 0, 30) == -2


def test_mul_rejects_too_many_output_bits():
    with pytest.raises(ValueError):
        fx_mul(ONE, ONE, 16, 16, 30, out_frac=30)


mul_case = st.tuples(st.integers(-(2 ** 31), 2 ** 31), st.integers(-(2 ** 31), 2 ** 31),
                     st.integers(0, 20), st.integers(0, 10))


@given(mul_case)
def test_mul_matches_oracle(case):
    a, b, b1, b2 = case
    assert fx_mul(a, b, b1, b2, 30) == oracle.mul(a, b, b1, b2, 30)


@given(mul_case)
def test_mul_error_bound(case):
    a, b, b1, b2 = case
    d_f = 30
    got = decode(fx_mul(a, b, b1, b2, d_f), d_f)
    x, y = decode(a, d_f), decode(b, d_f)
    bound = (2.0 ** (b1 - d_f) * abs(y) + 2.0 ** (b2 - d_f) * abs(x)
             + 2.0 ** (b1 + b2 - 2 * d_f) + 2.0 ** -d_f)
    assert abs(got - x * y) <= bound * (1 + 1e-12)


def test_mul_overflow_recorded():
    mon = OverflowMonitor()
    fx_mul(2 ** 40, 2 ** 40, 0, 0, 30, mon=mon, kernel="k")
    assert [e.kernel for e in mon.events] == ["k"]


# ---------------------------------------------------------------- div

def test_div_examples():
    assert fx_div(ONE, 2 * ONE, 16, 14, 30) == ONE // 2
    x = 123456789
    assert fx_div(x, ONE, 30, 0, 30) == x


def test_div_negative_exponent_is_right_shift():
    # d_f - b1 - b2 = 30 - 20 - 14 < 0
    a, b = 3 * ONE, 2 * ONE
    assert fx_div(a, b, 20, 14, 30) == oracle.div(a, b, 20, 14, 30)
    assert fx_div(-a, b, 20, 14, 30) == oracle.div(-a, b, 20, 14, 30)


def test_div_truncates_toward_zero():
    assert fx_div(-1, 3 * ONE, 30, 0, 30) == 0
    assert fx_div(-ONE, 3 * ONE, 30, 0, 30) == -(ONE // 3)


def test_div_by_zero():
    with pytest.raises(FxZeroDivisionError):
        fx_div(ONE, 0, 0, 0, 30)
    with pytest.raises(FxZeroDivisionError):
        fx_div(ONE, 2 ** 13, 16, 14, 30)  # divisor vanishes after the shift


@given(st.integers(-(2 ** 45), 2 ** 45), st.integers(-(2 ** 45), 2 ** 45).filter(lambda v: abs(v) >= 2 ** 14),
       st.integers(0, 16), st.integers(0, 14))
def test_div_matches_oracle(a, b, b1, b2):
    assert fx_div(a, b, b1, b2, 30) == oracle.div(a, b, b1, b2, 30)


def test_div_vector_matches_scalar():
    rng = np.random.default_rng(3)
    w = rng.integers(-(2 ** 45), 2 ** 45, 500)
    for h, b1, b2 in [(3 * ONE + 7, 16, 14), (-(ONE // 3), 16, 14), (ONE + 1, 30, 0), (-5 * ONE, 30, 0)]:
        got = fx_div_vector(w if b1 < 30 else w >> 20, h, b1, b2, 30)
        src = w if b1 < 30 else w >> 20
        assert got.tolist() == [fx_div(int(x), h, b1, b2, 30) for x in src]


def test_div_vector_overflow_recorded():
    mon = OverflowMonitor()
    fx_div_vector(np.array([2 ** 40, 1], dtype=np.int64), ONE, 30, 0, 30, mon, "line11")
    assert mon.events and mon.events[0].kernel == "line11"


# ---------------------------------------------------------------- sqrt

def test_isqrt_examples():
    assert isqrt(0) == 0
    assert isqrt(1) == 1
    assert isqrt(2 ** 60) == 2 ** 30
    assert isqrt(2 ** 64 - 1) == 2 ** 32 - 1
    with pytest.raises(FxDomainError):
        isqrt(-1)


def test_isqrt_exhaustive_small():
    for v in range(0, 20_000):
        r = isqrt(v)
        assert r * r <= v < (r + 1) * (r + 1)


@given(st.integers(0, 2 ** 64 - 1))
def test_isqrt_exact(v):
    r = isqrt(v)
    assert r == oracle.isqrt(v)
    assert r * r <= v < (r + 1) * (r + 1)


def test_fx_sqrt_examples():
    assert fx_sqrt(2 ** 30, 28, 30) == 2 ** 31
    assert fx_sqrt(0, 28, 30) == 0
    with pytest.raises(FxDomainError):
        fx_sqrt(-4, 28, 30)
    with pytest.raises(ValueError):
        fx_sqrt(4, 29, 30)


@given(st.integers(0, 2 ** 63 - 1), st.sampled_from([28, 40, 60, 44]))
def test_fx_sqrt_accuracy(t, in_frac):
    got = fx_sqrt(t, in_frac, 30)
    assert got == oracle.sqrt(t, in_frac, 30)
    exact = math.sqrt(t) * 2.0 ** (-in_frac / 2)
    assert abs(decode(got, 30) - exact) <= 2.0 ** (1 - in_frac / 2) + 2.0 ** -30 + 1e-15 * exact


# ---------------------------------------------------------------- vector kernels

def test_dot_examples():
    w = np.array([5 * ONE + 12345, -ONE, 7], dtype=np.int64)
    e1 = np.array([ONE, 0, 0], dtype=np.int64)
    got = decode(fx_dot(w, e1, 16, 0, 30), 30)
    w1 = decode(int(w[0]), 30)
    assert abs(got - w1) <= 2.0 ** (16 - 30) * abs(w1) + 2.0 ** (16 - 30)
    z = np.zeros(4, dtype=np.int64)
    assert fx_dot(z, z, 16, 0, 30) == 0


def test_dot_matches_oracle_large():
    rng = np.random.default_rng(7)
    for _ in range(5):
        v = rng.integers(-(2 ** 34), 2 ** 34, 1000)
        w = rng.integers(-(2 ** 30), 2 ** 30, 1000)
        assert fx_dot(v, w, 16, 0, 30) == oracle.dot(v, w, 16, 0, 30)
        assert fx_dot(v, w, 4, 2, 30) == oracle.dot(v, w, 4, 2, 30)


def test_dot_overflow_detection():
    big = np.full(4, 2 ** 31, dtype=np.int64)
    mon = OverflowMonitor()
    fx_dot(big, big, 0, 0, 30, mon, "line7")
    assert any("accumulator" in e.detail for e in mon.events)
    mon = OverflowMonitor()
    fx_dot(np.array([2 ** 40], dtype=np.int64), np.array([2 ** 40], dtype=np.int64), 0, 0, 30, mon)
    assert any("product" in e.detail for e in mon.events)
    # products fit and the exact total fits: nothing to report even though a
    # sequential partial sum would leave the word
    mon = OverflowMonitor()
    vals = np.array([2 ** 31, 2 ** 31, -(2 ** 31), -(2 ** 31)], dtype=np.int64)
    ones = np.array([2 ** 31, 2 ** 31, 2 ** 31, 2 ** 31], dtype=np.int64)
    assert fx_dot(vals, ones, 0, 0, 30, mon) == 0
    assert not mon.events


def test_norm_examples():
    e1 = np.array([ONE, 0, 0], dtype=np.int64)
    assert fx_norm(e1, 0, 30) == ONE
    assert fx_norm(np.zeros(3, dtype=np.int64), 16, 30) == 0
    v = np.array([3 * ONE, 4 * ONE], dtype=np.int64)
    assert fx_norm(v, 16, 30) == 5 * ONE


def test_norm_random_against_fp():
    rng = np.random.default_rng(11)
    for b1 in (0, 16):
        v = rng.integers(-(2 ** 30), 2 ** 30, 100) >> 3
        got = fx_norm(v, b1, 30)
        assert got == oracle.norm(v, b1, 30)
        ref = np.linalg.norm(decode_vector(v, 30))
        # per-element truncation 2**(b1-30) plus the root truncation
        bound = math.sqrt(100) * 2.0 ** (b1 - 30) + 2.0 ** (b1 - 30 + 1)
        assert abs(decode(got, 30) - ref) <= bound


def test_axpy_examples():
    rng = np.random.default_rng(5)
    w = rng.integers(-(2 ** 40), 2 ** 40, 50)
    v = rng.integers(-ONE, ONE, 50)
    assert np.array_equal(fx_axpy_sub(w, 0, v, 16, 30), w)
    assert not fx_axpy_sub(v, ONE, v, 0, 30).any()
    h = 3 * ONE + 99
    assert fx_axpy_sub(w, h, v, 16, 30).tolist() == oracle.axpy_sub(w, h, v, 16, 30)


def test_axpy_overflow_recorded():
    mon = OverflowMonitor()
    v = np.array([ONE, 2], dtype=np.int64)
    fx_axpy_sub(np.zeros(2, dtype=np.int64), 2 ** 40, v, 0, 30, mon, "line8")
    assert mon.events and mon.events[0].kernel == "line8"


def test_trace_records_shifts():
    mon = OverflowMonitor(trace=True)
    v = np.array([ONE, 0], dtype=np.int64)
    fx_dot(v, v, 16, 0, 30, mon, "line7")
    fx_norm(v, 16, 30, mon, "line10")
    assert set(mon.shifts_seen) == {("line7", 16, 0), ("line10", 16, 16)}


@settings(max_examples=50)
@given(st.lists(st.integers(-(2 ** 33), 2 ** 33), min_size=1, max_size=40))
def test_kernels_deterministic(xs):
    v = np.array(xs, dtype=np.int64)
    assert fx_dot(v, v[::-1].copy(), 16, 0, 30) == fx_dot(v, v[::-1].copy(), 16, 0, 30)
    # integer accumulation does not depend on order
    perm = np.random.default_rng(len(xs)).permutation(len(xs))
    assert fx_dot(v, v, 8, 8, 30) == fx_dot(v[perm], v[perm], 8, 8, 30)

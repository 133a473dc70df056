"""Fixed-point arithmetic on 64-bit two's-complement words.

Scalars are plain Python ints holding the raw word; vectors are ``int64``
numpy arrays. The number of fractional bits travels alongside the value as
an explicit argument (or a :class:`QFormat`), never inside it.

All right shifts are arithmetic (floor toward -inf). Real-to-integer casts and
integer division truncate toward zero. Every kernel wraps on overflow exactly
like a 64-bit machine word; pass an :class:`OverflowMonitor` in checked mode to
have each overflow recorded as an :class:`OverflowEvent`.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, fields

import numpy as np

WORD_LENGTH = 64
INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1
_MASK = (1 << 64) - 1

# Float screening threshold: anything whose approximate magnitude stays below
# this cannot be out of range, whatever the rounding in the approximation.
_SCREEN = 2.0 ** 62

__all__ = [
    "WORD_LENGTH", "INT64_MIN", "INT64_MAX",
    "FixedPointError", "FxOverflowError", "FxDomainError", "FxZeroDivisionError",
    "QFormat", "ShiftPlan", "TABLE_IV", "TABLE_VI",
    "OverflowEvent", "OverflowMonitor",
    "wrap64", "encode", "decode", "encode_vector", "decode_vector",
    "fx_add", "fx_sub", "fx_mul", "fx_div", "isqrt", "fx_sqrt",
    "fx_dot", "fx_norm", "fx_axpy_sub", "fx_div_vector",
]


class FixedPointError(ArithmeticError):
    """Base class for fixed-point arithmetic failures."""


class FxOverflowError(FixedPointError, OverflowError):
    pass


class FxDomainError(FixedPointError, ValueError):
    pass


class FxZeroDivisionError(FixedPointError, ZeroDivisionError):
    pass


@dataclass(frozen=True)
class QFormat:
    """Q(int_bits).(frac_bits) layout of a signed 64-bit word."""

    frac_bits: int
    word_length: int = WORD_LENGTH

    def __post_init__(self):
        if self.word_length != WORD_LENGTH:
            raise ValueError("only 64-bit words are supported")
        if not 0 <= self.frac_bits <= self.word_length - 2:
            raise ValueError(f"frac_bits must lie in [0, {self.word_length - 2}]")

    @property
    def int_bits(self) -> int:
        return self.word_length - self.frac_bits - 1


@dataclass(frozen=True)
class ShiftPlan:
    """Operand shift amounts for each arithmetic site of an int-GMRES cycle.

    ``dot_b1``/``dot_b2`` apply to the Arnoldi inner product, ``axpy_b1`` to the
    orthogonalisation update, ``norm_b1`` to both norms (Arnoldi and the
    two-element Givens norm), ``div_b1``/``div_b2`` to both divisions,
    ``givens_b2`` to the stored-rotation products and ``rot_b`` to the
    residual-vector update, which is never shifted.
    """

    dot_b1: int = 0
    dot_b2: int = 0
    axpy_b1: int = 0
    norm_b1: int = 0
    div_b1: int = 0
    div_b2: int = 0
    givens_b2: int = 0
    rot_b: int = 0

    def validate(self, fmt: QFormat) -> "ShiftPlan":
        for f in fields(self):
            beta = getattr(self, f.name)
            if not isinstance(beta, int) or beta < 0:
                raise ValueError(f"{f.name} must be a non-negative int, got {beta!r}")
            if beta > fmt.frac_bits:
                raise ValueError(f"{f.name}={beta} exceeds frac_bits={fmt.frac_bits}")
        if self.rot_b != 0:
            raise ValueError("rot_b is fixed at 0")
        return self

    def replace(self, **changes) -> "ShiftPlan":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        unknown = set(changes) - set(values)
        if unknown:
            raise ValueError(f"unknown shift field(s): {sorted(unknown)}")
        values.update(changes)
        return ShiftPlan(**values)


# Shifts used for the unpreconditioned solver (d_f = 30).
TABLE_IV = ShiftPlan(dot_b1=16, dot_b2=0, axpy_b1=16, norm_b1=16,
                     div_b1=16, div_b2=14, givens_b2=16)
# Shifts used with ILU(0) preconditioning (d_f = 30).
TABLE_VI = ShiftPlan(dot_b1=0, dot_b2=0, axpy_b1=0, norm_b1=0,
                     div_b1=30, div_b2=0, givens_b2=0)


@dataclass(frozen=True)
class OverflowEvent:
    kernel: str
    restart: int
    iteration: int
    detail: str


@dataclass
class OverflowMonitor:
    """Collects overflow events and, optionally, the shifts each kernel used.

    ``restart`` and ``iteration`` are updated by the solver so that recorded
    events carry their location.
    """

    checked: bool = True
    trace: bool = False
    events: list = field(default_factory=list)
    shifts_seen: Counter = field(default_factory=Counter)
    restart: int = 0
    iteration: int = 0

    def record(self, kernel: str, detail: str) -> None:
        self.events.append(OverflowEvent(kernel, self.restart, self.iteration, detail))

    def note(self, kernel: str, b1: int, b2: int) -> None:
        if self.trace:
            self.shifts_seen[(kernel, b1, b2)] += 1


def _checking(mon):
    return mon is not None and mon.checked


def _note(mon, kernel, b1, b2):
    if mon is not None:
        mon.note(kernel, b1, b2)


def wrap64(x: int) -> int:
    """Reduce an integer to the signed 64-bit word with the same low bits."""
    return ((x + (1 << 63)) & _MASK) - (1 << 63)


def _fit(x: int, mon, kernel: str, what: str) -> int:
    if INT64_MIN <= x <= INT64_MAX:
        return x
    if _checking(mon):
        mon.record(kernel, f"{what} out of range")
    return wrap64(x)


def _tdiv(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


# ---------------------------------------------------------------- conversion

def encode(x: float, fmt: QFormat) -> int:
    if not math.isfinite(x) or abs(x) >= 2.0 ** fmt.int_bits:
        raise FxOverflowError(f"{x!r} is not representable in Q{fmt.int_bits}.{fmt.frac_bits}")
    # scaling by a power of two is exact, so a single truncation happens here
    return int(math.ldexp(x, fmt.frac_bits))


def decode(raw: int, frac_bits: int) -> float:
    """Real value of ``raw``; the int-to-double conversion is the only rounding."""
    return math.ldexp(float(raw), -frac_bits)


def encode_vector(x, fmt: QFormat) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)) or (x.size and np.max(np.abs(x)) >= 2.0 ** fmt.int_bits):
        raise FxOverflowError(f"vector not representable in Q{fmt.int_bits}.{fmt.frac_bits}")
    return np.trunc(np.ldexp(x, fmt.frac_bits)).astype(np.int64)


def decode_vector(raw: np.ndarray, frac_bits: int) -> np.ndarray:
    return np.ldexp(np.asarray(raw).astype(np.float64), -frac_bits)


# ---------------------------------------------------------------- scalar ops

def fx_add(t1: int, t2: int, mon=None, kernel="add") -> int:
    return _fit(t1 + t2, mon, kernel, "sum")


def fx_sub(t1: int, t2: int, mon=None, kernel="sub") -> int:
    return _fit(t1 - t2, mon, kernel, "difference")


def fx_mul(t1: int, t2: int, b1: int, b2: int, frac_bits: int,
           out_frac: int | None = None, mon=None, kernel="mul") -> int:
    """``((t1 >> b1) * (t2 >> b2)) >> (2*frac_bits - b1 - b2 - out_frac)``."""
    if out_frac is None:
        out_frac = frac_bits
    tail = 2 * frac_bits - b1 - b2 - out_frac
    if tail < 0:
        raise ValueError("output format has more fractional bits than the product")
    _note(mon, kernel, b1, b2)
    p = _fit((t1 >> b1) * (t2 >> b2), mon, kernel, "product")
    return p >> tail


def fx_div(t1: int, t2: int, b1: int, b2: int, frac_bits: int,
           mon=None, kernel="div") -> int:
    """Quotient of two Q.frac_bits numbers.

    The dividend is pre-multiplied by ``2**b1``, the divisor pre-divided by
    ``2**b2``, the integer quotient truncates toward zero and is finally scaled
    by ``2**(frac_bits - b1 - b2)`` (an arithmetic right shift when negative).
    """
    _note(mon, kernel, b1, b2)
    den = t2 >> b2
    if den == 0:
        raise FxZeroDivisionError(f"{kernel}: divisor is zero after >> {b2}")
    num = _fit(t1 << b1, mon, kernel, "pre-shifted dividend")
    q = _fit(_tdiv(num, den), mon, kernel, "quotient")
    e = frac_bits - b1 - b2
    if e >= 0:
        return _fit(q << e, mon, kernel, "scaled quotient")
    return q >> -e


def isqrt(v: int) -> int:
    """Floor square root by the Babylonian iteration.

    Starts from ``2**ceil(bits/2)`` (never below the root), descends
    monotonically and stops as soon as an iterate fails to decrease.
    """
    v = int(v)
    if v < 0:
        raise FxDomainError("isqrt of a negative number")
    if v >= 1 << WORD_LENGTH:
        raise ValueError("isqrt argument exceeds 64 bits")
    if v < 2:
        return v
    x = 1 << ((v.bit_length() + 1) // 2)
    for _ in range(64):
        y = (x + v // x) >> 1
        if y >= x:
            break
        x = y
    else:  # pragma: no cover - the descent from a 2**32-bounded start is short
        raise RuntimeError("isqrt failed to converge")
    while x * x > v:
        x -= 1
    while (x + 1) * (x + 1) <= v:
        x += 1
    return x


def fx_sqrt(t: int, in_frac: int, frac_bits: int, mon=None, kernel="sqrt") -> int:
    """Square root of a Q.in_frac number, returned in Q.frac_bits."""
    if t < 0:
        raise FxDomainError(f"{kernel}: square root of negative value {t}")
    if in_frac % 2:
        raise ValueError("input must have an even number of fractional bits")
    r = isqrt(t)
    e = frac_bits - in_frac // 2
    if e >= 0:
        return _fit(r << e, mon, kernel, "root")
    return r >> -e


# ---------------------------------------------------------------- vector ops

def _check_products(a, b, mon, kernel):
    """Record elementwise products a*b (int64 arrays) that leave the word."""
    approx = np.abs(a.astype(np.float64) * b.astype(np.float64))
    idx = np.flatnonzero(approx >= _SCREEN)
    if idx.size:
        bad = sum(1 for i in idx if not INT64_MIN <= int(a[i]) * int(b[i]) <= INT64_MAX)
        if bad:
            mon.record(kernel, f"{bad} product(s) out of range")


def _check_sums(a, b, sign, mon, kernel, what):
    approx = np.abs(a.astype(np.float64) + sign * b.astype(np.float64))
    idx = np.flatnonzero(approx >= _SCREEN)
    if idx.size:
        bad = sum(1 for i in idx if not INT64_MIN <= int(a[i]) + sign * int(b[i]) <= INT64_MAX)
        if bad:
            mon.record(kernel, f"{bad} {what}(s) out of range")


def _accumulate(a: np.ndarray, b: np.ndarray, mon, kernel) -> int:
    """Wrapped sum of a*b; in checked mode every product and the total must fit."""
    acc = int(np.dot(a, b))
    if _checking(mon):
        af = np.abs(a.astype(np.float64))
        bf = np.abs(b.astype(np.float64))
        if float(np.dot(af, bf)) >= _SCREEN:
            prods = [int(x) * int(y) for x, y in zip(a.tolist(), b.tolist())]
            bad = sum(1 for p in prods if not INT64_MIN <= p <= INT64_MAX)
            if bad:
                mon.record(kernel, f"{bad} product(s) out of range")
            if not INT64_MIN <= sum(prods) <= INT64_MAX:
                mon.record(kernel, "accumulator out of range")
    return acc


def fx_dot(v: np.ndarray, w: np.ndarray, b1: int, b2: int, frac_bits: int,
           mon=None, kernel="dot") -> int:
    """Inner product accumulated in Q(2*frac_bits - b1 - b2), returned in Q.frac_bits."""
    tail = frac_bits - b1 - b2
    if tail < 0:
        raise ValueError("b1 + b2 exceeds frac_bits")
    _note(mon, kernel, b1, b2)
    acc = _accumulate(v >> b1, w >> b2, mon, kernel)
    return acc >> tail


def fx_norm(v: np.ndarray, b1: int, frac_bits: int, mon=None, kernel="norm") -> int:
    """Euclidean norm: self inner product in Q(2*frac_bits - 2*b1), then fx_sqrt."""
    _note(mon, kernel, b1, b1)
    a = v >> b1
    acc = _accumulate(a, a, mon, kernel)
    return fx_sqrt(acc, 2 * frac_bits - 2 * b1, frac_bits, mon, kernel)


def fx_axpy_sub(w: np.ndarray, h: int, v: np.ndarray, b1: int, frac_bits: int,
                mon=None, kernel="axpy") -> np.ndarray:
    """``w - h*v`` elementwise, shifting only the scalar operand ``h``."""
    _note(mon, kernel, b1, 0)
    hs = np.int64(h >> b1)
    upd = (v * hs) >> (frac_bits - b1)
    out = w - upd
    if _checking(mon):
        _check_products(np.full_like(v, hs), v, mon, kernel)
        _check_sums(w, upd, -1, mon, kernel, "difference")
    return out


def fx_div_vector(w: np.ndarray, h: int, b1: int, b2: int, frac_bits: int,
                  mon=None, kernel="div") -> np.ndarray:
    """Elementwise :func:`fx_div` of a vector by one scalar."""
    _note(mon, kernel, b1, b2)
    den = h >> b2
    if den == 0:
        raise FxZeroDivisionError(f"{kernel}: divisor is zero after >> {b2}")
    if _checking(mon):
        lo, hi = INT64_MIN >> b1, INT64_MAX >> b1
        bad = int(np.count_nonzero((w < lo) | (w > hi)))
        if bad:
            mon.record(kernel, f"{bad} pre-shifted dividend(s) out of range")
    num = w << np.int64(b1)
    if _checking(mon) and den == -1 and np.any(num == INT64_MIN):
        mon.record(kernel, "quotient out of range")
    q = _trunc_div(num, den)
    e = frac_bits - b1 - b2
    if e >= 0:
        if _checking(mon) and e:
            bad = int(np.count_nonzero((q < (INT64_MIN >> e)) | (q > (INT64_MAX >> e))))
            if bad:
                mon.record(kernel, f"{bad} scaled quotient(s) out of range")
        return q << np.int64(e)
    return q >> np.int64(-e)


def _trunc_div(num: np.ndarray, den: int) -> np.ndarray:
    if den == -1:
        return -num
    d = np.int64(den)
    q = num // d
    inexact = (q * d) != num
    q += (inexact & ((num < 0) != (den < 0))).astype(np.int64)
    return q

"""Row scaling, integer splitting of the scaled matrix, and the integer SpMV.

Floating-point matrices are ``scipy.sparse.csr_matrix`` objects with float64
data; integer components are CSR matrices with int64 data and the same
sparsity pattern as the matrix they were cut from.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fxp import INT64_MAX, INT64_MIN, _checking, _note

__all__ = ["SplitMatrix", "row_scale", "build_split", "spmv", "residual_fp",
           "floor_log2", "as_csr"]

_SCREEN = 2.0 ** 62


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=np.float64)
    A.sort_indices()
    return A


def floor_log2(x: float) -> int:
    """floor(log2(x)) for x > 0, read off the binary exponent."""
    if not x > 0:
        raise ValueError("floor_log2 needs a positive argument")
    _, e = np.frexp(x)
    return int(e) - 1


def row_scale(A_hat, b_hat, alpha_a: int = 16):
    """Scale each row so that its largest magnitude becomes ``2**alpha_a``.

    Returns ``(A, b, scale_diag)`` with ``A = D^-1 A_hat`` and ``b = D^-1 b_hat``
    where ``D = diag(scale_diag)``.
    """
    A_hat = as_csr(A_hat)
    n = A_hat.shape[0]
    lengths = np.diff(A_hat.indptr)
    absdata = np.abs(A_hat.data)
    rowmax = np.zeros(n)
    nonempty = lengths > 0
    rowmax[nonempty] = np.maximum.reduceat(absdata, A_hat.indptr[:-1][nonempty])
    empty = np.flatnonzero(rowmax == 0)
    if empty.size:
        raise ValueError(f"row {int(empty[0])} has no nonzero entry; cannot scale")
    d = np.ldexp(rowmax, -alpha_a)
    A = A_hat.copy()
    A.data = A_hat.data / np.repeat(d, lengths)
    b = np.asarray(b_hat, dtype=np.float64) / d
    return A, b, d


@dataclass
class SplitMatrix:
    """``A ~ A_0 + sum_l 2**-alphas[l-1] * A_l`` with integer CSR components."""

    components: list
    alphas: list
    alpha_a: int
    scale_diag: np.ndarray | None = None
    _float_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.components[0].shape[0]

    @property
    def exponents(self) -> list:
        return [0] + list(self.alphas)

    @property
    def max_components(self) -> int:
        return len(self.alphas)

    def to_float(self, s: int = 0) -> sp.csr_matrix:
        """FP matrix of the truncated expansion using components 0..s."""
        s = min(s, self.max_components)
        if s not in self._float_cache:
            A = self.components[0].astype(np.float64)
            for comp, alpha in zip(self.components[1:s + 1], self.alphas[:s]):
                A = A + comp.astype(np.float64) * np.ldexp(1.0, -alpha)
            self._float_cache[s] = sp.csr_matrix(A)
        return self._float_cache[s]

    def spmv(self, v: np.ndarray, s: int = 0, mon=None, kernel="spmv") -> np.ndarray:
        return spmv(self, s, v, mon, kernel)


def build_split(A, alpha_a: int = 16, max_components: int = 4) -> SplitMatrix:
    """Cut a row-scaled matrix into integer components.

    Each remainder is scaled so that its largest magnitude lands in
    ``[2**alpha_a, 2**(alpha_a + 1))`` before truncation. Splitting stops after
    ``max_components`` correction terms or when the remainder is exactly zero.
    """
    if max_components < 0:
        raise ValueError("max_components must be >= 0")
    A = as_csr(A)

    def component(values):
        C = sp.csr_matrix((values.astype(np.int64), A.indices.copy(), A.indptr.copy()),
                          shape=A.shape)
        return C

    base = np.trunc(A.data)
    components = [component(base)]
    alphas = []
    # x - trunc(x) is exact in binary floating point
    rem = A.data - base
    while len(alphas) < max_components:
        peak = np.max(np.abs(rem)) if rem.size else 0.0
        if peak == 0.0:
            break
        alpha = alpha_a - floor_log2(peak)
        scaled = np.ldexp(rem, alpha)
        part = np.trunc(scaled)
        components.append(component(part))
        alphas.append(alpha)
        rem = np.ldexp(scaled - part, -alpha)
    return SplitMatrix(components, alphas, alpha_a)


def _row_exact(C: sp.csr_matrix, v: np.ndarray, rows) -> list:
    out = []
    for i in rows:
        lo, hi = C.indptr[i], C.indptr[i + 1]
        prods = [int(a) * int(v[j]) for a, j in zip(C.data[lo:hi], C.indices[lo:hi])]
        out.append((any(not INT64_MIN <= p <= INT64_MAX for p in prods), sum(prods)))
    return out


def spmv(M: SplitMatrix, s: int, v: np.ndarray, mon=None, kernel="spmv") -> np.ndarray:
    """Integer product of the truncated expansion with a Q.d_f vector.

    Row ``i`` of the result is ``sum_l (A_l @ v)_i >> alpha_l`` with
    ``alpha_0 = 0``; integer x Q.d_f products need no operand shift.
    """
    if s > M.max_components:
        raise ValueError(f"s={s} exceeds the {M.max_components} available components")
    _note(mon, kernel, 0, 0)
    v = np.asarray(v, dtype=np.int64)
    checking = _checking(mon)
    vabs = np.abs(v.astype(np.float64)) if checking else None
    out = None
    bound = None
    for C, alpha in zip(M.components[:s + 1], M.exponents[:s + 1]):
        part = (C @ v) >> alpha
        if checking:
            rb = abs(C).astype(np.float64) @ vabs
            rows = np.flatnonzero(rb >= _SCREEN)
            if rows.size:
                bad = sum(1 for over, tot in _row_exact(C, v, rows)
                          if over or not INT64_MIN <= tot <= INT64_MAX)
                if bad:
                    mon.record(kernel, f"{bad} row(s) out of range")
            rb = np.ldexp(rb, -alpha)
            bound = rb if bound is None else bound + rb
        out = part if out is None else out + part
    if checking and s > 0:
        rows = np.flatnonzero(bound >= _SCREEN)
        if rows.size:
            # recompute the per-row total of the shifted terms exactly
            totals = [0] * rows.size
            for C, alpha in zip(M.components[:s + 1], M.exponents[:s + 1]):
                for k, (_, tot) in enumerate(_row_exact(C, v, rows)):
                    totals[k] += tot >> alpha
            bad = sum(1 for t in totals if not INT64_MIN <= t <= INT64_MAX)
            if bad:
                mon.record(kernel, f"{bad} row sum(s) over components out of range")
    return out


def residual_fp(A, x, b):
    """``r = b - A x`` and ``||r|| / ||b||`` in double precision."""
    b = np.asarray(b, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        raise ValueError("right-hand side is zero")
    r = b - A @ np.asarray(x, dtype=np.float64)
    return r, float(np.linalg.norm(r) / bnorm)

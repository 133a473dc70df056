"""ILU(0) preconditioning with integer triangular factors.

The factorization runs in double precision on the scaled matrix. Its diagonal
is split symmetrically in magnitude between the two triangles, the factors are
truncated to int64, and the preconditioner is applied by integer forward and
backward substitution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .fxp import _checking, _note
from .specmat import as_csr

__all__ = ["IluFactors", "ZeroPivotError", "factorize_ilu0", "split_cast",
           "apply_inverse", "apply_inverse_fp", "FpIlu", "fp_preconditioner"]


class ZeroPivotError(ArithmeticError):
    def __init__(self, row: int, message: str = "zero pivot"):
        super().__init__(f"{message} in row {row}")
        self.row = row


@numba.njit(cache=True)
def _ilu0_kernel(n, indptr, indices, data, diag_pos):
    a = data.copy()
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        for k in range(lo, hi):
            pos[indices[k]] = k
        for k in range(lo, hi):
            col = indices[k]
            if col >= i:
                break
            piv = a[diag_pos[col]]
            if piv == 0.0:
                return a, col
            a[k] /= piv
            mult = a[k]
            for kk in range(diag_pos[col] + 1, indptr[col + 1]):
                p = pos[indices[kk]]
                if p >= 0:
                    a[p] -= mult * a[kk]
        for k in range(lo, hi):
            pos[indices[k]] = -1
        if a[diag_pos[i]] == 0.0:
            return a, i
    return a, -1


def factorize_ilu0(A):
    """ILU(0) ``A ~ L D U`` with unit-diagonal ``L`` (lower) and ``U`` (upper).

    Fill is restricted to the pattern of ``A``. Returns ``(L, d, U)`` with
    ``d`` the diagonal of ``D`` as a dense vector.
    """
    A = as_csr(A)
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    on_diag = np.flatnonzero(rows == A.indices)
    if on_diag.size != n:
        missing = np.setdiff1d(np.arange(n), rows[on_diag])
        raise ZeroPivotError(int(missing[0]), "structurally missing diagonal")
    diag_pos = np.empty(n, dtype=np.int64)
    diag_pos[rows[on_diag]] = on_diag
    lu, bad = _ilu0_kernel(n, A.indptr.astype(np.int64), A.indices.astype(np.int64),
                           A.data.astype(np.float64), diag_pos)
    if bad >= 0:
        raise ZeroPivotError(int(bad))
    d = lu[diag_pos]
    cols = A.indices
    lower = cols < rows
    upper = cols > rows
    eye = sp.identity(n, format="csr")
    L = sp.csr_matrix((lu[lower], (rows[lower], cols[lower])), shape=A.shape) + eye
    U = sp.csr_matrix((lu[upper] / d[rows[upper]], (rows[upper], cols[upper])),
                      shape=A.shape) + eye
    L.sort_indices()
    U.sort_indices()
    return L.tocsr(), d, U.tocsr()


@dataclass
class IluFactors:
    """Integer triangular factors ``L`` (lower) and ``U`` (upper), int64 CSR."""

    L: sp.csr_matrix
    U: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.L.shape[0]

    def apply(self, y, frac_bits, mon=None, kernel="precond"):
        return apply_inverse(self, y, frac_bits, mon, kernel)

    def apply_fp(self, r):
        return apply_inverse_fp(self, r)


def _split_diag(d):
    d = np.asarray(d, dtype=np.float64)
    if np.any(d == 0):
        raise ZeroPivotError(int(np.flatnonzero(d == 0)[0]), "zero diagonal")
    root = np.sqrt(np.abs(d))
    return root, np.sign(d) * root


def split_cast(L, d, U) -> IluFactors:
    """Distribute ``D`` over the triangles and truncate both to int64.

    ``L~ = L diag(|d|**.5)`` and ``U~ = diag(sgn(d) |d|**.5) U``.
    """
    dl, du = _split_diag(d)
    Lt = sp.csr_matrix(L @ sp.diags(dl))
    Ut = sp.csr_matrix(sp.diags(du) @ U)
    out = []
    for T in (Lt, Ut):
        T.sort_indices()
        Ti = sp.csr_matrix((np.trunc(T.data).astype(np.int64), T.indices.copy(),
                            T.indptr.copy()), shape=T.shape)
        diag = Ti.diagonal()
        zero = np.flatnonzero(diag == 0)
        if zero.size:
            raise ZeroPivotError(int(zero[0]),
                                 "diagonal truncated to zero (alpha_a too small?)")
        out.append(Ti)
    return IluFactors(*out)


# ---------------------------------------------------------------- substitution

@numba.njit(cache=True)
def _mul_overflows(a, b):
    """Exact test for int64 product overflow that never forms the product."""
    imax = np.iinfo(np.int64).max
    imin = np.iinfo(np.int64).min
    if a == 0 or b == 0:
        return False
    if a == imin or b == imin:
        return not (a == 1 or b == 1)
    ua, ub = abs(a), abs(b)
    if ua == 1 or ub == 1:
        return False
    if (a < 0) != (b < 0):
        # magnitude up to 2**63 is allowed for a negative product
        lim = imax // ub + (1 if imax % ub == ub - 1 else 0)
    else:
        lim = imax // ub
    return ua > lim


@numba.njit(cache=True)
def _int_tri_solve(indptr, indices, data, y, lower, checked):
    """Integer substitution; returns the solution and an overflow count.

    Off-diagonal products are integer x Q.d_f without shifts; the pivot
    division truncates toward zero.
    """
    n = y.shape[0]
    z = np.zeros(n, dtype=np.int64)
    over = 0
    imin = np.iinfo(np.int64).min
    for step in range(n):
        i = step if lower else n - 1 - step
        acc = y[i]
        piv = np.int64(0)
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j == i:
                piv = data[k]
            elif (j < i) == lower:
                p = data[k] * z[j]
                s = acc - p
                if checked:
                    if _mul_overflows(data[k], z[j]):
                        over += 1
                    if ((acc ^ p) < 0) and ((acc ^ s) < 0):
                        over += 1
                acc = s
        if piv == -1:
            if checked and acc == imin:
                over += 1
            z[i] = -acc
        else:
            q = acc // piv
            if q * piv != acc and ((acc < 0) != (piv < 0)):
                q += 1
            z[i] = q
    return z, over


@numba.njit(cache=True)
def _fp_tri_solve(indptr, indices, data, y, lower):
    n = y.shape[0]
    z = np.zeros(n)
    for step in range(n):
        i = step if lower else n - 1 - step
        acc = y[i]
        piv = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j == i:
                piv = data[k]
            elif (j < i) == lower:
                acc -= data[k] * z[j]
        z[i] = acc / piv
    return z


def _arrays(T):
    return T.indptr.astype(np.int64), T.indices.astype(np.int64)


def apply_inverse(f: IluFactors, y, frac_bits: int, mon=None, kernel="precond"):
    """``U^-1 L^-1 y`` for a Q.frac_bits vector, entirely in integers.

    The factors carry no fractional bits, so every product stays in
    Q.frac_bits and the pivot division yields Q.frac_bits directly.
    """
    _note(mon, kernel, 0, 0)
    checked = _checking(mon)
    y = np.asarray(y, dtype=np.int64)
    w, o1 = _int_tri_solve(*_arrays(f.L), f.L.data, y, True, checked)
    z, o2 = _int_tri_solve(*_arrays(f.U), f.U.data, w, False, checked)
    if checked and o1 + o2:
        mon.record(kernel, f"{o1 + o2} substitution step(s) out of range")
    return z


def apply_inverse_fp(f: IluFactors, r):
    """``(L U)^-1 r`` in double precision using the integer-valued factors."""
    r = np.asarray(r, dtype=np.float64)
    w = _fp_tri_solve(*_arrays(f.L), f.L.data.astype(np.float64), r, True)
    return _fp_tri_solve(*_arrays(f.U), f.U.data.astype(np.float64), w, False)


@dataclass
class FpIlu:
    """Unrounded ILU(0) ``L D U`` used by the double-precision baseline."""

    L: sp.csr_matrix
    d: np.ndarray
    U: sp.csr_matrix

    def apply_fp(self, r):
        r = np.asarray(r, dtype=np.float64)
        w = _fp_tri_solve(*_arrays(self.L), self.L.data, r, True) / self.d
        return _fp_tri_solve(*_arrays(self.U), self.U.data, w, False)


def fp_preconditioner(A) -> FpIlu:
    return FpIlu(*factorize_ilu0(A))

"""One restart cycle of GMRES(m) with an integer inner loop.

Only the residual bootstrap, the small triangular solve and the final solution
update run in floating point; Arnoldi, Givens rotations and the least-squares
right-hand side are all fixed-point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fxp import (TABLE_IV, FixedPointError, QFormat, ShiftPlan, _fit, _note,
                  decode, decode_vector, encode_vector, fx_axpy_sub, fx_div,
                  fx_div_vector, fx_dot, fx_mul, fx_norm, fx_sqrt)

__all__ = ["CycleConfig", "CycleDiagnostics", "SingularHessenbergError",
           "run_cycle", "apply_stored_rotations", "solve_hessenberg_fp"]


class SingularHessenbergError(np.linalg.LinAlgError):
    pass


@dataclass
class CycleConfig:
    m: int = 30
    fmt: QFormat = field(default_factory=lambda: QFormat(30))
    shifts: ShiftPlan = TABLE_IV
    s: int = 0
    precond: object = None  # IluFactors

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("restart period m must be >= 1")
        self.shifts.validate(self.fmt)


@dataclass
class CycleDiagnostics:
    """What happened inside one cycle.

    ``residual_estimates[j]`` is ``|g_(j+1)| * ||r0||`` after step ``j + 1``;
    ``rotations`` holds decoded ``(c, s)`` pairs and ``givens_norms`` the
    decoded two-element norm each pair was built from; ``basis_norms`` is the
    fixed-point norm of each new basis vector right after its normalisation
    and ``basis_norms_fp`` its exact two-norm after decoding.
    """

    iterations: int = 0
    r0_norm: float = 0.0
    residual_estimates: list = field(default_factory=list)
    rotations: list = field(default_factory=list)
    givens_norms: list = field(default_factory=list)
    basis_norms: list = field(default_factory=list)
    basis_norms_fp: list = field(default_factory=list)
    breakdown: bool = False


def _sdot(xs, ys, b1, b2, frac_bits, mon, kernel):
    """Scalar inner product with the same shift/accumulate rules as fx_dot."""
    _note(mon, kernel, b1, b2)
    acc = 0
    for x, y in zip(xs, ys):
        acc += _fit((x >> b1) * (y >> b2), mon, kernel, "product")
    acc = _fit(acc, mon, kernel, "accumulator")
    return acc >> (frac_bits - b1 - b2)


def _snorm(xs, b1, frac_bits, mon, kernel):
    _note(mon, kernel, b1, b1)
    acc = 0
    for x in xs:
        acc += _fit((x >> b1) * (x >> b1), mon, kernel, "product")
    acc = _fit(acc, mon, kernel, "accumulator")
    return fx_sqrt(acc, 2 * frac_bits - 2 * b1, frac_bits, mon, kernel)


def apply_stored_rotations(col, c, s, j, givens_b2, frac_bits, mon=None,
                           kernel="line13"):
    """Apply rotations ``0..j-1`` to a Hessenberg column, in index order.

    Each rotated pair is a two-element inner product where only the column
    entries are shifted (the cosines and sines are bounded by one).
    """
    col = list(col)
    for i in range(j):
        hi, hn = col[i], col[i + 1]
        col[i] = _sdot((c[i], s[i]), (hi, hn), 0, givens_b2, frac_bits, mon, kernel)
        col[i + 1] = _sdot((-s[i], c[i]), (hi, hn), 0, givens_b2, frac_bits, mon, kernel)
    return col


def solve_hessenberg_fp(H, g, r0_norm):
    """Back substitution for ``H y = r0_norm * g`` with H upper triangular."""
    H = np.asarray(H, dtype=np.float64)
    rhs = r0_norm * np.asarray(g, dtype=np.float64)
    k = rhs.shape[0]
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        if H[i, i] == 0:
            raise SingularHessenbergError(f"zero diagonal at position {i}")
        y[i] = (rhs[i] - H[i, i + 1:k] @ y[i + 1:k]) / H[i, i]
    return y


def _basis_norm(v, b1, d_f):
    try:
        return decode(fx_norm(v, b1, d_f), d_f)
    except FixedPointError:
        return float("nan")


def run_cycle(M, cfg: CycleConfig, b_k, x_k=None, mon=None):
    """Run one int-GMRES(m) cycle on ``A^(k) x = b_k``; returns ``(x, diag)``."""
    d_f = cfg.fmt.frac_bits
    sp_ = cfg.shifts
    n = M.n
    b_k = np.asarray(b_k, dtype=np.float64)
    x_k = np.zeros(n) if x_k is None else np.asarray(x_k, dtype=np.float64)
    diag = CycleDiagnostics()

    r0 = b_k - M.to_float(cfg.s) @ x_k
    if cfg.precond is not None:
        r0 = cfg.precond.apply_fp(r0)
    beta = float(np.linalg.norm(r0))
    diag.r0_norm = beta
    if beta == 0.0:
        diag.breakdown = True
        return x_k.copy(), diag

    m = cfg.m
    V = np.zeros((m + 1, n), dtype=np.int64)
    V[0] = encode_vector(r0 / beta, cfg.fmt)
    H = [[0] * m for _ in range(m + 1)]
    g = [0] * (m + 1)
    g[0] = 1 << d_f
    c = [0] * m
    s = [0] * m

    k = 0
    for j in range(m):
        if mon is not None:
            mon.iteration = j + 1
        w = M.spmv(V[j], cfg.s, mon, "line5")
        if cfg.precond is not None:
            w = cfg.precond.apply(w, d_f, mon, "line5p")
        for i in range(j + 1):
            h = fx_dot(w, V[i], sp_.dot_b1, sp_.dot_b2, d_f, mon, "line7")
            H[i][j] = h
            w = fx_axpy_sub(w, h, V[i], sp_.axpy_b1, d_f, mon, "line8")
        hn = fx_norm(w, sp_.norm_b1, d_f, mon, "line10")
        H[j + 1][j] = hn
        # a direction that vanishes at working precision ends the cycle
        breakdown = (hn >> sp_.div_b2) == 0
        if not breakdown:
            V[j + 1] = fx_div_vector(w, hn, sp_.div_b1, sp_.div_b2, d_f, mon, "line11")
            diag.basis_norms.append(_basis_norm(V[j + 1], sp_.norm_b1, d_f))
            diag.basis_norms_fp.append(float(np.linalg.norm(decode_vector(V[j + 1], d_f))))

        col = apply_stored_rotations([H[i][j] for i in range(j + 2)], c, s, j,
                                     sp_.givens_b2, d_f, mon)
        for i in range(j + 2):
            H[i][j] = col[i]
        t = _snorm((H[j][j], H[j + 1][j]), sp_.norm_b1, d_f, mon, "line15")
        c[j] = fx_div(H[j][j], t, sp_.div_b1, sp_.div_b2, d_f, mon, "line16")
        s[j] = fx_div(H[j + 1][j], t, sp_.div_b1, sp_.div_b2, d_f, mon, "line16")
        g_j = g[j]
        g[j] = fx_mul(c[j], g_j, 0, 0, d_f, mon=mon, kernel="line17")
        g[j + 1] = fx_mul(-s[j], g_j, 0, 0, d_f, mon=mon, kernel="line17")
        H[j][j] = t
        H[j + 1][j] = 0

        diag.rotations.append((decode(c[j], d_f), decode(s[j], d_f)))
        diag.givens_norms.append(decode(t, d_f))
        diag.residual_estimates.append(abs(decode(g[j + 1], d_f)) * beta)
        k = j + 1
        if breakdown:
            diag.breakdown = True
            break
    diag.iterations = k

    Hf = np.array([[decode(H[i][jj], d_f) for jj in range(k)] for i in range(k)])
    gf = np.array([decode(g[i], d_f) for i in range(k)])
    y = solve_hessenberg_fp(Hf, gf, beta)
    x = x_k + decode_vector(V[:k], d_f).T @ y
    return x, diag

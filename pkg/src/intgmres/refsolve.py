"""Double-precision restarted GMRES(m), the comparison baseline."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .refine import SolveReport
from .specmat import as_csr, residual_fp

__all__ = ["FpGmresConfig", "fp_cycle", "solve_fp"]


@dataclass
class FpGmresConfig:
    m: int = 30
    epsilon: float = 1e-8
    max_restarts: int = 1000

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("restart period m must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def fp_cycle(A, b, x0, m, precond=None):
    """One GMRES(m) cycle (MGS Arnoldi, Givens) with optional left preconditioner.

    Returns the updated iterate and the list of in-cycle residual estimates.
    """
    r = b - A @ x0
    if precond is not None:
        r = precond.apply_fp(r)
    beta = np.linalg.norm(r)
    if beta == 0:
        return x0.copy(), []
    n = b.shape[0]
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    c = np.zeros(m)
    s = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = r / beta
    estimates = []
    k = 0
    for j in range(m):
        w = A @ V[j]
        if precond is not None:
            w = precond.apply_fp(w)
        for i in range(j + 1):
            H[i, j] = w @ V[i]
            w -= H[i, j] * V[i]
        H[j + 1, j] = np.linalg.norm(w)
        happy = H[j + 1, j] == 0
        if not happy:
            V[j + 1] = w / H[j + 1, j]
        for i in range(j):
            hi, hn = H[i, j], H[i + 1, j]
            H[i, j] = c[i] * hi + s[i] * hn
            H[i + 1, j] = -s[i] * hi + c[i] * hn
        t = np.hypot(H[j, j], H[j + 1, j])
        c[j], s[j] = H[j, j] / t, H[j + 1, j] / t
        g[j], g[j + 1] = c[j] * g[j], -s[j] * g[j]
        H[j, j], H[j + 1, j] = t, 0.0
        estimates.append(abs(g[j + 1]))
        k = j + 1
        if happy:
            break
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - H[i, i + 1:k] @ y[i + 1:k]) / H[i, i]
    return x0 + V[:k].T @ y, estimates


def solve_fp(A, b, cfg: FpGmresConfig | None = None, precond=None):
    """Restarted GMRES(m); convergence is checked on the true residual every m steps."""
    cfg = cfg or FpGmresConfig()
    A = as_csr(A)
    b = np.asarray(b, dtype=np.float64)
    report = SolveReport(m=cfg.m)
    start = time.perf_counter()
    x = np.zeros_like(b)
    r, rel = residual_fp(A, x, b)
    report.relres_history.append(rel)
    while rel >= cfg.epsilon and report.refinements < cfg.max_restarts:
        report.gamma_history.append(float(np.max(np.abs(r))))
        x, est = fp_cycle(A, b, x, cfg.m, precond)
        report.refinements += 1
        report.inner_iterations += len(est)
        report.iterations_history.append(report.inner_iterations)
        report.overflow_history.append(0)
        r, rel = residual_fp(A, x, b)
        report.relres_history.append(rel)
        report.cycles.append(est)
    report.converged = rel < cfg.epsilon
    report.wall_time = time.perf_counter() - start
    return x, report

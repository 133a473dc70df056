"""Iterative refinement around the integer GMRES cycle.

Each refinement rescales the current FP residual to unit max-norm, solves the
scaled residual equation with one int-GMRES(m) cycle from a zero guess, and
accumulates the rescaled correction in double precision.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .fxp import TABLE_IV, FixedPointError, OverflowMonitor, QFormat, ShiftPlan
from .gmres_int import CycleConfig, SingularHessenbergError, run_cycle
from .specmat import residual_fp

__all__ = ["RefineConfig", "SolveReport", "SolveError", "gamma_scale", "solve"]

log = logging.getLogger(__name__)


@dataclass
class RefineConfig:
    epsilon: float = 1e-8
    max_refinements: int = 1000
    m: int = 30
    s_schedule: object = 0  # int, or callable k -> s(k)
    fmt: QFormat = field(default_factory=lambda: QFormat(30))
    shifts: ShiftPlan = TABLE_IV
    checked: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.m < 1:
            raise ValueError("restart period m must be >= 1")
        self.shifts.validate(self.fmt)

    def s_at(self, k: int) -> int:
        s = self.s_schedule(k) if callable(self.s_schedule) else self.s_schedule
        if s < 0:
            raise ValueError("s(k) must be non-negative")
        return int(s)


@dataclass
class SolveReport:
    m: int = 0
    converged: bool = False
    refinements: int = 0
    inner_iterations: int = 0
    relres_history: list = field(default_factory=list)
    gamma_history: list = field(default_factory=list)
    iterations_history: list = field(default_factory=list)
    overflow_events: list = field(default_factory=list)
    overflow_history: list = field(default_factory=list)
    gamma_violations: list = field(default_factory=list)
    cycles: list = field(default_factory=list)
    wall_time: float = 0.0
    failure: str | None = None

    @property
    def final_relres(self) -> float:
        return self.relres_history[-1]


class SolveError(RuntimeError):
    """Inner solver failure; ``report`` holds the history up to that point."""

    def __init__(self, message, report: SolveReport):
        super().__init__(message)
        self.report = report


def gamma_scale(b_prime):
    """Scale a residual to unit max-norm; returns ``(gamma, b_prime / gamma)``."""
    b_prime = np.asarray(b_prime, dtype=np.float64)
    gamma = float(np.max(np.abs(b_prime))) if b_prime.size else 0.0
    if gamma == 0.0:
        raise ValueError("residual is zero; nothing to refine")
    return gamma, b_prime / gamma


def solve(M, A_fp, b, cfg: RefineConfig | None = None, precond=None,
          monitor: OverflowMonitor | None = None, inner: str = "int", x0=None):
    """Refine ``x`` until ``||b - A_fp x|| / ||b|| < epsilon``.

    ``inner="fp"`` swaps the integer cycle for the double-precision one on
    ``A_fp`` (``precond`` must then offer ``apply_fp``), which isolates the
    refinement driver from fixed-point effects. ``x0`` warm-starts the
    outer iterate (default zero).
    """
    cfg = cfg or RefineConfig()
    b = np.asarray(b, dtype=np.float64)
    if monitor is None:
        monitor = OverflowMonitor(checked=cfg.checked)
    report = SolveReport(m=cfg.m)
    report.overflow_events = monitor.events
    start = time.perf_counter()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)

    r, rel = residual_fp(A_fp, x, b)
    report.relres_history.append(rel)
    k = 0
    while rel >= cfg.epsilon and k < cfg.max_refinements:
        k += 1
        monitor.restart = k
        gamma, b_k = gamma_scale(r)
        if report.gamma_history and gamma > 2.0 * report.gamma_history[-1]:
            log.warning("gamma grew from %.3e to %.3e at refinement %d",
                        report.gamma_history[-1], gamma, k)
            report.gamma_violations.append(k)
        report.gamma_history.append(gamma)
        try:
            if inner == "int":
                ccfg = CycleConfig(cfg.m, cfg.fmt, cfg.shifts, cfg.s_at(k), precond)
                x_k, diag = run_cycle(M, ccfg, b_k, None, monitor)
                iters = diag.iterations
                report.cycles.append(diag)
            elif inner == "fp":
                from .refsolve import fp_cycle
                x_k, est = fp_cycle(A_fp, b_k, np.zeros_like(b), cfg.m, precond)
                iters = len(est)
                report.cycles.append(est)
            else:
                raise ValueError(f"unknown inner solver {inner!r}")
        except (FixedPointError, SingularHessenbergError) as exc:
            report.refinements = k
            report.failure = f"refinement {k}: {exc}"
            report.wall_time = time.perf_counter() - start
            raise SolveError(report.failure, report) from exc
        x = x + gamma * x_k
        report.refinements = k
        report.inner_iterations += iters
        report.iterations_history.append(report.inner_iterations)
        report.overflow_history.append(len(monitor.events))
        r, rel = residual_fp(A_fp, x, b)
        report.relres_history.append(rel)
        if not np.isfinite(rel):
            report.failure = f"refinement {k}: residual is not finite"
            break
    report.converged = rel < cfg.epsilon
    report.wall_time = time.perf_counter() - start
    return x, report

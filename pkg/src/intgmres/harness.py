"""Matrix Market I/O, experiment runner and the ``intgmres`` command line."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fxp import TABLE_IV, TABLE_VI, OverflowMonitor, QFormat, ShiftPlan
from .ilu import factorize_ilu0, fp_preconditioner, split_cast
from .refine import RefineConfig, SolveError, solve
from .refsolve import FpGmresConfig, solve_fp
from .specmat import build_split, residual_fp, row_scale

__all__ = ["MatrixMarketError", "load_matrix_market", "write_matrix_market",
           "ExperimentSpec", "run_experiment", "write_history_csv", "main"]

log = logging.getLogger(__name__)

CSV_HEADER = ["restart", "iters", "relres", "gamma", "overflows"]


class MatrixMarketError(ValueError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


def load_matrix_market(path) -> sp.csr_matrix:
    """Read a real coordinate Matrix Market file into a sorted float64 CSR matrix.

    Symmetric and skew-symmetric storage is expanded; duplicate entries are an
    error rather than being summed.
    """
    path = Path(path)
    with path.open("r") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
            raise MatrixMarketError("missing %%MatrixMarket matrix header", 1)
        fmt, field_, symmetry = (p.lower() for p in parts[2:])
        if fmt != "coordinate":
            raise MatrixMarketError(f"unsupported format {fmt!r}", 1)
        if field_ not in ("real", "integer", "double"):
            raise MatrixMarketError(f"unsupported field {field_!r}", 1)
        if symmetry not in ("general", "symmetric", "skew-symmetric"):
            raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", 1)

        lineno = 1
        size = None
        for line in fh:
            lineno += 1
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            try:
                nrows, ncols, nnz = (int(t) for t in s.split())
            except ValueError:
                raise MatrixMarketError(f"bad size line {s!r}", lineno) from None
            size = (nrows, ncols, nnz)
            break
        if size is None:
            raise MatrixMarketError("missing size line", lineno)
        nrows, ncols, nnz = size

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for line in fh:
            lineno += 1
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            toks = s.split()
            if len(toks) != 3 or k >= nnz:
                raise MatrixMarketError(f"bad entry {s!r}", lineno)
            try:
                i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
            except ValueError:
                raise MatrixMarketError(f"bad entry {s!r}", lineno) from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise MatrixMarketError(f"index ({i}, {j}) out of bounds", lineno)
            if symmetry != "general" and j > i:
                raise MatrixMarketError("upper-triangle entry in symmetric storage", lineno)
            rows[k], cols[k], vals[k] = i - 1, j - 1, v
            k += 1
        if k != nnz:
            raise MatrixMarketError(f"expected {nnz} entries, found {k}", lineno)

    if symmetry != "general":
        off = rows != cols
        sign = -1.0 if symmetry == "skew-symmetric" else 1.0
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, sign * vals[off]]))
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    dup = np.flatnonzero((rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1]))
    if dup.size:
        i, j = rows[dup[0]] + 1, cols[dup[0]] + 1
        raise MatrixMarketError(f"duplicate entry ({i}, {j})")
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return sp.csr_matrix((vals, cols, indptr), shape=(nrows, ncols))


def write_matrix_market(path, A) -> None:
    """Write ``A`` as a general real coordinate file with round-trip precision."""
    A = sp.csr_matrix(A)
    A.sort_indices()
    coo = A.tocoo()
    with Path(path).open("w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


@dataclass
class ExperimentSpec:
    matrix_path: str
    solver: str = "int"
    precond: str = "none"
    m: int = 30
    d_f: int = 30
    alpha_a: int | None = None
    s: int = 0
    epsilon: float = 1e-8
    max_refinements: int = 1000
    checked: bool = True
    shift_overrides: dict = field(default_factory=dict)
    shift_preset: str | None = None
    scaled: bool = True
    output: str | None = None

    def __post_init__(self):
        if self.solver not in ("int", "double"):
            raise ValueError(f"solver must be 'int' or 'double', got {self.solver!r}")
        if self.precond not in ("none", "ilu0"):
            raise ValueError(f"precond must be 'none' or 'ilu0', got {self.precond!r}")
        if self.alpha_a is None:
            self.alpha_a = 32 if self.precond == "ilu0" else 16
        if self.m < 1 or self.s < 0 or not self.epsilon > 0:
            raise ValueError("need m >= 1, s >= 0 and tol > 0")
        QFormat(self.d_f)

    @property
    def dataset(self) -> str:
        return Path(self.matrix_path).stem

    def shift_plan(self) -> ShiftPlan:
        preset = self.shift_preset or ("table6" if self.precond == "ilu0" else "table4")
        plan = {"table4": TABLE_IV, "table6": TABLE_VI, "zero": ShiftPlan()}[preset]
        return plan.replace(**self.shift_overrides)


def write_history_csv(path, report) -> None:
    """One row per restart: cumulative iterations, relres, gamma, overflow count."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for k, rel in enumerate(report.relres_history):
            if k == 0:
                iters, gamma, over = 0, float("nan"), 0
            else:
                iters = report.iterations_history[k - 1]
                gamma = report.gamma_history[k - 1]
                over = report.overflow_history[k - 1]
            w.writerow([k, iters, f"{rel:.16e}", f"{gamma:.16e}", over])


def run_experiment(spec: ExperimentSpec):
    """Load, scale and solve one system with right-hand side of ones.

    Returns ``(x, report, summary)`` and writes the CSV history if
    ``spec.output`` is set. Solver failures propagate as :class:`SolveError`
    after the partial history has been written.
    """
    A_hat = load_matrix_market(spec.matrix_path)
    n = A_hat.shape[0]
    b_hat = np.ones(n)
    if spec.scaled or spec.solver == "int":
        A, b, d = row_scale(A_hat, b_hat, spec.alpha_a)
    else:
        A, b = A_hat, b_hat

    if spec.solver == "double":
        precond = fp_preconditioner(A) if spec.precond == "ilu0" else None
        x, report = solve_fp(A, b, FpGmresConfig(spec.m, spec.epsilon, spec.max_refinements),
                             precond)
    else:
        M = build_split(A, spec.alpha_a, max(4, spec.s))
        M.scale_diag = d
        precond = split_cast(*factorize_ilu0(A)) if spec.precond == "ilu0" else None
        cfg = RefineConfig(epsilon=spec.epsilon, max_refinements=spec.max_refinements,
                           m=spec.m, s_schedule=spec.s, fmt=QFormat(spec.d_f),
                           shifts=spec.shift_plan(), checked=spec.checked)
        try:
            x, report = solve(M, A, b, cfg, precond, OverflowMonitor(checked=spec.checked))
        except SolveError as exc:
            if spec.output:
                write_history_csv(spec.output, exc.report)
            raise

    if spec.output:
        write_history_csv(spec.output, report)
    _, rel_orig = residual_fp(A_hat, x, b_hat)
    summary = (f"{spec.dataset} m={spec.m} solver={spec.solver} precond={spec.precond} "
               f"iterations={report.inner_iterations} restarts={report.refinements} "
               f"converged={'yes' if report.converged else 'no'} "
               f"relres={report.final_relres:.3e} relres_unscaled={rel_orig:.3e} "
               f"overflows={len(report.overflow_events)} time={report.wall_time:.2f}s")
    return x, report, summary


def _shift_arg(text):
    key, _, value = text.partition("=")
    if not value:
        raise argparse.ArgumentTypeError("expected KEY=INT, e.g. dot_b1=16")
    return key.strip(), int(value)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="intgmres",
        description="Solve A x = ones with integer GMRES(m) + iterative refinement "
                    "or the double-precision GMRES(m) baseline.")
    p.add_argument("--matrix", required=True, help="Matrix Market coordinate file")
    p.add_argument("--solver", choices=["int", "double"], default="int")
    p.add_argument("--precond", choices=["none", "ilu0"], default="none")
    p.add_argument("--m", type=int, default=30, help="restart period")
    p.add_argument("--df", type=int, default=30, help="fractional bits")
    p.add_argument("--alpha-a", type=int, default=None,
                   help="row-scaling exponent (default 16, or 32 with ilu0)")
    p.add_argument("--s", type=int, default=0, help="split components used per SpMV")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-refinements", type=int, default=1000)
    p.add_argument("--checked", choices=["on", "off"], default="on")
    p.add_argument("--shift-plan", choices=["table4", "table6", "zero"], default=None,
                   help="operand shift preset (default table4, or table6 with ilu0)")
    p.add_argument("--shift", type=_shift_arg, action="append", default=[],
                   metavar="KEY=INT", help="override one shift, e.g. --shift div_b1=20")
    p.add_argument("--unscaled", action="store_true",
                   help="double solver only: skip row scaling")
    p.add_argument("--out", default=None, help="CSV convergence history")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = ExperimentSpec(
            matrix_path=args.matrix, solver=args.solver, precond=args.precond, m=args.m,
            d_f=args.df, alpha_a=args.alpha_a, s=args.s, epsilon=args.tol,
            max_refinements=args.max_refinements, checked=args.checked == "on",
            shift_overrides=dict(args.shift), shift_preset=args.shift_plan,
            scaled=not args.unscaled, output=args.out)
        _, report, summary = run_experiment(spec)
    except (OSError, ValueError, SolveError, ArithmeticError) as exc:
        print(f"intgmres: error: {exc}", file=sys.stderr)
        return 2
    print(summary)
    return 0 if report.converged else 1


if __name__ == "__main__":
    sys.exit(main())

"""Sparse linear solver whose GMRES inner loop runs in 64-bit integer arithmetic."""
from .fxp import TABLE_IV, TABLE_VI, OverflowMonitor, QFormat, ShiftPlan
from .gmres_int import CycleConfig, run_cycle
from .harness import ExperimentSpec, load_matrix_market, run_experiment
from .ilu import IluFactors, factorize_ilu0, split_cast
from .refine import RefineConfig, SolveError, SolveReport, solve
from .refsolve import FpGmresConfig, solve_fp
from .specmat import SplitMatrix, build_split, row_scale

__all__ = [
    "TABLE_IV", "TABLE_VI", "OverflowMonitor", "QFormat", "ShiftPlan",
    "CycleConfig", "run_cycle", "ExperimentSpec", "load_matrix_market",
    "run_experiment", "IluFactors", "factorize_ilu0", "split_cast",
    "RefineConfig", "SolveError", "SolveReport", "solve",
    "FpGmresConfig", "solve_fp", "SplitMatrix", "build_split", "row_scale",
]

__version__ = "0.1.0"

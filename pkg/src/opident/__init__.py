"""Greedy control design and Gauss-Newton identification of unknown operators.

Offline phase: the greedy algorithms (lgr, gr, ogr) design control functions
that make the Gauss-Newton normal-equation matrix positive definite.  Online
phase: gn_solve reconstructs the unknown drift / control operator from
simulated experiment data.  The harness module wires both into reproducible
robustness sweeps.
"""

from ._kernels import USING_NUMBA
from .controls import AdmissibleBox, ControlSignal, constant, project, zero
from .dynamics import (BasisSet, SystemModel, Trajectory, bilinear_control,
                       bilinear_drift, canonical_basis, general_nonlinear,
                       linear_control_matrix, linear_drift, observe,
                       random_basis, simulate_data, solve_forward,
                       solve_linearized, synth_transfer_control)
from .gauss_newton import GNProblem, GNReport, gn_matrix, gn_solve, jacobian, residuals, wtilde
from .greedy import GreedyOutcome, OptimizerConfig, WMatrix, build_W, gr, lgr, ogr
from .harness import Scenario, SweepResult, analytic_bilinear_oracle, run_sweep, sample_sphere, setup_schrodinger

__version__ = "0.1.0"

__all__ = [
    "USING_NUMBA", "AdmissibleBox", "ControlSignal", "constant", "project",
    "zero", "BasisSet", "SystemModel", "Trajectory", "bilinear_control",
    "bilinear_drift", "canonical_basis", "general_nonlinear",
    "linear_control_matrix", "linear_drift", "observe", "random_basis",
    "simulate_data", "solve_forward", "solve_linearized",
    "synth_transfer_control", "GNProblem", "GNReport", "gn_matrix", "gn_solve",
    "jacobian", "residuals", "wtilde", "GreedyOutcome", "OptimizerConfig",
    "WMatrix", "build_W", "gr", "lgr", "ogr", "Scenario", "SweepResult",
    "analytic_bilinear_oracle", "run_sweep", "sample_sphere", "setup_schrodinger",
]

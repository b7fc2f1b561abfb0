"""Numerical toolkit for two-component Gross-Pitaevskii states under strong repulsion.

Finite-difference energies and constrained gradients, normalized gradient
flows for the coupled and the segregated problem, genus-k minimax families,
and beta sweeps towards phase segregation.
"""
from .discretization import Grid, build_grid, load_snapshot, save_snapshot
from .flows import FlowConfig, FlowTrace, relax_beta, relax_infty, step_beta, step_infty
from .functionals import (
    Multipliers,
    StatePair,
    TildeMultipliers,
    energy_beta,
    energy_infty,
    energy_star,
    gradient_beta,
    gradient_infty,
    multipliers,
    tilde_multipliers,
)
from .minimax import GenusFamily, LevelEstimate, PhiBasis, build_phi_basis, extract_critical, minimax_level, psi_map, sample_sphere
from .sweep import SweepRecord, SweepReport, limit_point_check, run_sweep

__version__ = "0.1.0"

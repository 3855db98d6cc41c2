"""Picard iteration for spatially quasi-periodic solutions of generalized KdV.

The package builds the Fourier-coefficient iterates on a truncated lattice,
certifies them against the explicit decay and contraction bounds, and checks
the combinatorial and lattice-sum estimates behind those bounds exactly.
"""
from .convolution import convolve_pair, convolve_power, truncation_tail_estimate
from .lattice import Box, DimensionError, WaveVector, enumerate_box, frequency, resonance_scan
from .oracle import appendix_checks, rk4_truncated, single_mode_first_correction
from .picard import (ExistenceConstants, TimeGrid, Trajectory, contraction_certificate,
                     decay_certificate, existence_constants, free_evolution, iterate,
                     load_trajectory, picard_step, save_trajectory, uniqueness_window)
from .qpfield import (CoefficientField, DecayProfile, decay_bound_check, evaluate_u,
                      fit_decay, pde_residual, sample_initial_data)
from .trees import (BranchStats, CapExceeded, compositions_H, enumerate_branches,
                    index_set_B, index_set_R, phi, stats, tree_evaluate_ck,
                    weighted_tree_sum)

__version__ = "0.1.0"

__all__ = [
    "Box", "DimensionError", "WaveVector", "enumerate_box", "frequency", "resonance_scan",
    "CoefficientField", "DecayProfile", "decay_bound_check", "evaluate_u", "fit_decay",
    "pde_residual", "sample_initial_data",
    "convolve_pair", "convolve_power", "truncation_tail_estimate",
    "ExistenceConstants", "TimeGrid", "Trajectory", "contraction_certificate",
    "decay_certificate", "existence_constants", "free_evolution", "iterate",
    "load_trajectory", "picard_step", "save_trajectory", "uniqueness_window",
    "BranchStats", "CapExceeded", "compositions_H", "enumerate_branches", "index_set_B",
    "index_set_R", "phi", "stats", "tree_evaluate_ck", "weighted_tree_sum",
    "appendix_checks", "rk4_truncated", "single_mode_first_correction",
]

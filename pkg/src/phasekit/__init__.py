"""Phase-space representation of the finite-level oscillator.

The package builds the truncated oscillator in its number basis,
represents states as smoothed phase-space densities through a family of
Gaussian frame vectors, and checks the classical side of that
representation: frame resolution, uncertainty budgets, informational
completeness, observable dequantization, the analytic transform, and
transport under the oscillator flow.

Submodule attributes are re-exported lazily so that the command-line
entry point can cap BLAS threads before numpy is first imported.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # fock
    "OscParams": "fock",
    "FockVector": "fock",
    "Operator": "fock",
    "build_canonical": "fock",
    "canonical_squares": "fock",
    "hermite_functions": "fock",
    "hermite_position_density": "fock",
    "hermite_momentum_density": "fock",
    "quantum_expectation": "fock",
    "quantum_variance": "fock",
    "validate_density": "fock",
    "random_pure": "fock",
    "random_density": "fock",
    "operator_to_json": "fock",
    "operator_from_json": "fock",
    # grids
    "PhaseGrid": "grids",
    "PhaseField": "grids",
    # displacement
    "trusted_dim": "displacement",
    "z_abs_sq": "displacement",
    "displacement_op": "displacement",
    "weyl_op": "displacement",
    "displaced_fock_block": "displacement",
    "CharSamples": "displacement",
    "char_function": "displacement",
    "reconstruct_from_char": "displacement",
    "hs_inner_via_char": "displacement",
    # coherentframe
    "coherent_overlaps": "coherentframe",
    "overlap_grid": "coherentframe",
    "FrameSpec": "coherentframe",
    "grid_is_adequate": "coherentframe",
    "auto_grid": "coherentframe",
    "phase_transform": "coherentframe",
    "resolution_check": "coherentframe",
    "kernel": "coherentframe",
    "kernel_reproducing_check": "coherentframe",
    "stencil_d1": "coherentframe",
    "stencil_d2": "coherentframe",
    "pde_residual": "coherentframe",
    "gauge_transform": "coherentframe",
    "BargmannFunction": "coherentframe",
    "bargmann_transform": "coherentframe",
    "bargmann_eval_via_field": "coherentframe",
    "bargmann_field_samples": "coherentframe",
    "bargmann_ops_check": "coherentframe",
    "cauchy_riemann_residual": "coherentframe",
    # classrep
    "ConfidenceFunction": "classrep",
    "confidence_functions": "classrep",
    "confidence_moments_from_operator": "classrep",
    "husimi": "classrep",
    "marginals": "classrep",
    "classical_expectation": "classrep",
    "classical_variance": "classrep",
    "uncertainty_report": "classrep",
    "EffectSet": "classrep",
    "effect_partition": "classrep",
    "effect_of_region": "classrep",
    "hermitian_coords": "classrep",
    "coords_to_hermitian": "classrep",
    "completeness_rank": "classrep",
    "fourier_criterion": "classrep",
    "husimi_point_effects": "classrep",
    "reconstruct_from_density": "classrep",
    "reconstruct_state": "classrep",
    # dequant
    "SYMBOLS": "dequant",
    "Dequantizer": "dequant",
    "dequantizer_for": "dequant",
    "check_dequantizer": "dequant",
    "oscillator_density": "dequant",
    "energy_density": "dequant",
    "energy_histogram": "dequant",
    "dequantize_effect": "dequant",
    # dynamics
    "FlowPoint": "dynamics",
    "classical_flow": "dynamics",
    "evolve_state": "dynamics",
    "evolve_density": "dynamics",
    "liouville_match": "dynamics",
    "coherent_evolution_check": "dynamics",
    "correction_coefficient": "dynamics",
    "generator_residual": "dynamics",
}

__all__ = ["__version__", *sorted(_EXPORTS)]


def __getattr__(name: str):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module 'phasekit' has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{module}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))

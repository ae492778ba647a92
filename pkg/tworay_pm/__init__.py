"""
Positional modulation array design under a two-ray channel
Geometry, closed-form and group-sparse weight design, and BER evaluation
"""

__version__ = "1.0.0"
__author__ = "tworay-pm developers"

from .geometry import ScenarioGeometry, PathParams, desired_paths, eavesdropper_paths, ring_paths
from .array_model import ArrayLayout, SteeringSet, uniform_layout, steering_vector, build_steering_set
from .targets import ConstellationSpec, TargetResponses, qpsk_spec, mpsk_spec, build_targets
from .closed_form import (
    GainDiagonals, CombinedChannel, WeightMatrix, FixedArrayDesign,
    solve_symbol_kkt, solve_symbol_reduced, solve_symbol_swept, solve_symbol_printed, design_fixed_array,
)
from .sparse_design import GroupSparseProblem, SparseDesignResult, solve_group_l1, reweight_iterate, summarize
from .ber_sim import BerConfig, BerCurve, received_value, noise_sigma, run_ber, los_comparison
from .config import RunConfig, parse_config
from .runner import run_pattern_sweep, run_full_study

__all__ = [
    'ScenarioGeometry',
    'PathParams',
    'desired_paths',
    'eavesdropper_paths',
    'ring_paths',
    'ArrayLayout',
    'SteeringSet',
    'uniform_layout',
    'steering_vector',
    'build_steering_set',
    'ConstellationSpec',
    'TargetResponses',
    'qpsk_spec',
    'mpsk_spec',
    'build_targets',
    'GainDiagonals',
    'CombinedChannel',
    'WeightMatrix',
    'FixedArrayDesign',
    'solve_symbol_kkt',
    'solve_symbol_reduced',
    'solve_symbol_swept',
    'solve_symbol_printed',
    'design_fixed_array',
    'GroupSparseProblem',
    'SparseDesignResult',
    'solve_group_l1',
    'reweight_iterate',
    'summarize',
    'BerConfig',
    'BerCurve',
    'received_value',
    'noise_sigma',
    'run_ber',
    'los_comparison',
    'RunConfig',
    'parse_config',
    'run_pattern_sweep',
    'run_full_study',
]

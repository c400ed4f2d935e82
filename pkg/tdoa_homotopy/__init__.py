"""
tdoa_homotopy
=============

Self-calibration of 2D TDOA sensor networks with homotopy continuation.

:license:   MIT
"""

from .errors import TDOAError, DimensionError, NonSquareSystemError, \
    UnsupportedConfigurationError, InfeasibleSolutionError, \
    DegenerateGeometryError
from .polysys import Poly, PolySystem
from .homotopy import Homotopy, PathResult, TrackOptions, start_system, \
    track_path, track_paths, solve_system, run_homotopy, newton_refine, \
    deduplicate
from .model import PseudorangeMatrix, NetworkGroundTruth, DualSolution, \
    Calibration, DualLayout, excess_constraint, classify, \
    configuration_status, build_dual_system, upgrade_solution, \
    primal_residual, is_feasible, embed_ground_truth
from .solvers import SolverConfig, SolveOutcome, Solver, MultiSolver, \
    get_solver, solve, solve_6r3s, solve_7r3s, solve_6r4s, solve_5r4s, \
    solve_5r5s, trilaterate_point, trilaterate_point_offset, select_best

__version__ = '1.0.1dev'

__all__ = [
    'TDOAError', 'DimensionError', 'NonSquareSystemError',
    'UnsupportedConfigurationError', 'InfeasibleSolutionError',
    'DegenerateGeometryError', 'Poly', 'PolySystem', 'Homotopy',
    'PathResult', 'TrackOptions', 'start_system', 'track_path',
    'track_paths', 'solve_system', 'run_homotopy', 'newton_refine',
    'deduplicate', 'PseudorangeMatrix', 'NetworkGroundTruth', 'DualSolution',
    'Calibration', 'DualLayout', 'excess_constraint', 'classify',
    'configuration_status', 'build_dual_system', 'upgrade_solution',
    'primal_residual', 'is_feasible', 'embed_ground_truth', 'SolverConfig',
    'SolveOutcome', 'Solver', 'MultiSolver', 'get_solver', 'solve',
    'solve_6r3s', 'solve_7r3s', 'solve_6r4s', 'solve_5r4s', 'solve_5r5s',
    'trilaterate_point', 'trilaterate_point_offset', 'select_best',
]

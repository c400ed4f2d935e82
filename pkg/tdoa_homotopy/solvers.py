"""
tdoa_homotopy.solvers
=====================

End-to-end calibration solvers for the 6r/3s, 7r/3s, 6r/4s, 5r/4s and 5r/5s
configurations.

Example::

    solver = Solver7r3s()

    @solver.verify_candidate
    def inside_room(calibration, pr):
        return np.all(np.abs(calibration.positions()) < 50)

    outcome = solver.solve(pr)
"""

import logging

import numpy as np
import scipy.linalg

from .errors import DegenerateGeometryError, DimensionError, \
    InfeasibleSolutionError, UnsupportedConfigurationError
from .homotopy import TrackOptions, run_homotopy
from .model import DualLayout, build_dual_system, is_feasible, is_real, \
    primal_residual, upgrade_solution

logger = logging.getLogger(__name__)

SHAPES = {
    '6r3s': (6, 3),
    '7r3s': (7, 3),
    '6r4s': (6, 4),
    '5r4s': (5, 4),
    '5r5s': (5, 5),
}

_RANK_TOL = 1e-10


class SolverConfig(object):
    def __init__(self, kind='6r3s', residual_threshold=1e-10,
                 track_options=None):
        if kind not in SHAPES:
            raise UnsupportedConfigurationError(
                'unknown solver configuration {0!r}'.format(kind))
        if not residual_threshold > 0:
            raise ValueError('residual threshold must be positive')
        self.kind = kind
        self.residual_threshold = float(residual_threshold)
        self.track_options = track_options or TrackOptions()


class SolveOutcome(object):
    """Candidates sorted by primal residual, the best one and diagnostics.

    ``diagnostics`` counts the tracked paths, the converged paths, the
    distinct, real and feasible dual solutions and the surviving candidates.
    ``dual_residuals`` holds the primal residual of every feasible dual
    solution before any threshold was applied. Solvers that extend the dual
    candidates with trilaterated nodes add ``candidate_residuals``, the
    residuals of the extended candidates.
    """

    def __init__(self, candidates=None, best=None, diagnostics=None):
        self.candidates = list(candidates or [])
        self.best = best
        self.diagnostics = dict(diagnostics or {})

    @property
    def success(self):
        return self.best is not None

    def __repr__(self):
        return '<SolveOutcome candidates={0} best={1!r}>'.format(
            len(self.candidates), self.best)


def _relative_rank(singular_values):
    if not len(singular_values) or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > _RANK_TOL * singular_values[0]))


def trilaterate_point(anchors, dists):
    """Locate a 2D point from its distances to three or more anchors.

    Subtracting the first circle equation from the others leaves a linear
    system, solved in the least squares sense.
    """
    anchors = np.asarray(anchors, dtype=float)
    dists = np.asarray(dists, dtype=float).reshape(-1)
    if anchors.ndim != 2 or anchors.shape[1] != 2 or len(anchors) < 3:
        raise DimensionError('trilateration needs at least three 2D anchors')
    if len(dists) != len(anchors):
        raise DimensionError('one distance per anchor is required')
    A = 2.0 * (anchors[1:] - anchors[0])
    rhs = (np.sum(anchors[1:] ** 2, axis=1) - np.sum(anchors[0] ** 2) -
           dists[1:] ** 2 + dists[0] ** 2)
    solution, _, _, singular_values = scipy.linalg.lstsq(A, rhs)
    if _relative_rank(singular_values) < 2:
        raise DegenerateGeometryError('trilateration anchors are collinear')
    return solution


def _pseudorange_residuals(point, offset, anchors, pseudoranges):
    d2 = np.sum((anchors - point) ** 2, axis=1)
    return d2 - (pseudoranges - offset) ** 2


def trilaterate_point_offset(anchors, pseudoranges, tol=1e-8):
    """Locate a transmitter and its offset from four or more receivers.

    Expanding ``|x - r_i|^2 = (f_i - o)^2`` and subtracting the first equation
    cancels ``|x|^2`` and ``o^2``, leaving a linear system in ``(x, y, o)``.
    When the pseudorange differences cannot fix the offset (for instance all
    pseudoranges equal) the linear solution is a line; the point on it is
    chosen with the first quadratic equation, preferring non-negative
    distances ``f_i - o``.
    """
    anchors = np.asarray(anchors, dtype=float)
    pseudoranges = np.asarray(pseudoranges, dtype=float).reshape(-1)
    if anchors.ndim != 2 or anchors.shape[1] != 2 or len(anchors) < 4:
        raise DimensionError('trilateration with offset needs at least four '
                             '2D anchors')
    if len(pseudoranges) != len(anchors):
        raise DimensionError('one pseudorange per anchor is required')
    f0 = pseudoranges[0]
    A = np.column_stack([2.0 * (anchors[1:] - anchors[0]),
                         -2.0 * (pseudoranges[1:] - f0)])
    rhs = (np.sum(anchors[1:] ** 2, axis=1) - np.sum(anchors[0] ** 2) -
           pseudoranges[1:] ** 2 + f0 ** 2)
    if _relative_rank(np.linalg.svd(A[:, :2], compute_uv=False)) < 2:
        raise DegenerateGeometryError('trilateration anchors are collinear')
    solution, _, _, singular_values = scipy.linalg.lstsq(A, rhs)
    rank = _relative_rank(singular_values)
    if rank < 3:
        solution = _resolve_offset_line(A, solution, anchors, pseudoranges)
    point, offset = solution[:2], solution[2]

    residuals = _pseudorange_residuals(point, offset, anchors, pseudoranges)
    scale = max(1.0, float(np.max(pseudoranges ** 2)))
    if np.max(np.abs(residuals)) > tol * scale:
        logger.info('trilaterated transmitter violates the range equations '
                    'by %.3g', np.max(np.abs(residuals)))
    return point, float(offset)


def _resolve_offset_line(A, particular, anchors, pseudoranges):
    direction = np.linalg.svd(A)[2][-1]
    r0, f0 = anchors[0], pseudoranges[0]
    p_xy, p_o = particular[:2] - r0, particular[2]
    v_xy, v_o = direction[:2], direction[2]
    # |p_xy + s v_xy|^2 - (f0 - p_o - s v_o)^2 = a s^2 + b s + c
    a = v_xy @ v_xy - v_o ** 2
    b = 2.0 * (p_xy @ v_xy) + 2.0 * (f0 - p_o) * v_o
    c = p_xy @ p_xy - (f0 - p_o) ** 2
    if abs(a) < _RANK_TOL:
        steps = [-c / b] if abs(b) > _RANK_TOL else [0.0]
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0:
            steps = [-b / (2.0 * a)]
        else:
            root = np.sqrt(disc)
            steps = [(-b - root) / (2.0 * a), (-b + root) / (2.0 * a)]
    options = []
    for s in steps:
        candidate = particular + s * direction
        distances = pseudoranges - candidate[2]
        residual = np.max(np.abs(_pseudorange_residuals(
            candidate[:2], candidate[2], anchors, pseudoranges)))
        options.append((np.any(distances < 0), residual, candidate[2],
                        candidate))
    options.sort(key=lambda option: option[:3])
    return options[0][3]


def select_best(candidates, pr):
    """Candidate with the smallest primal residual, or None."""
    if not candidates:
        return None
    return min(candidates,
               key=lambda c: (primal_residual(c, pr), c.sort_key()))


def _with_residual(calibration, pr):
    calibration.primal_residual = primal_residual(calibration, pr)
    return calibration


class Solver(object):
    """Base class of the configuration solvers.

    Subclasses set ``kind`` and ``shape`` and implement ``candidates``, which
    returns every upgraded candidate for the full pseudorange matrix. Minimal
    solvers keep only candidates below ``residual_threshold``. Subminimal
    solvers keep everything and return the smallest residual.
    """

    kind = None
    shape = None
    minimal = False

    def __init__(self, residual_threshold=1e-10, track_options=None):
        if not residual_threshold > 0:
            raise ValueError('residual threshold must be positive')
        self.residual_threshold = float(residual_threshold)
        self.track_options = track_options or TrackOptions()
        self.verify_candidate_callback = None
        self.error_handler_callback = None

        def default_verify_candidate(calibration, pr):
            return True

        def default_error_handler(outcome):
            return outcome

        self.verify_candidate(default_verify_candidate)
        self.error_handler(default_error_handler)

    @classmethod
    def from_config(cls, config):
        return cls(residual_threshold=config.residual_threshold,
                   track_options=config.track_options)

    def verify_candidate(self, f):
        self.verify_candidate_callback = f
        return f

    def error_handler(self, f):
        self.error_handler_callback = f
        return f

    def check_shape(self, pr):
        if pr.shape != self.shape:
            raise DimensionError('{0} solver needs a {1} x {2} pseudorange '
                                 'matrix, got {3} x {4}'.format(
                                     self.kind, self.shape[0], self.shape[1],
                                     pr.m, pr.n))

    def candidates(self, pr):
        raise NotImplementedError

    def solve(self, pr):
        self.check_shape(pr)
        candidates, diagnostics = self.candidates(pr)
        if self.minimal:
            candidates = [c for c in candidates
                          if c.primal_residual < self.residual_threshold]
        candidates = [c for c in candidates
                      if self.verify_candidate_callback(c, pr)]
        candidates.sort(key=lambda c: (c.primal_residual, c.sort_key()))
        diagnostics['candidates'] = len(candidates)
        outcome = SolveOutcome(candidates, select_best(candidates, pr),
                               diagnostics)
        logger.info('%s: %d paths, %d converged, %d real, %d feasible, '
                    '%d candidates', self.kind, diagnostics.get('paths', 0),
                    diagnostics.get('converged', 0),
                    diagnostics.get('real', 0),
                    diagnostics.get('feasible', 0), len(candidates))
        if outcome.best is None:
            return self.error_handler_callback(outcome)
        return outcome

    def _dual_candidates(self, pr, kind):
        """Solve a dual system and upgrade its feasible solutions.

        Returns ``(pairs, diagnostics)`` where pairs holds a
        ``(DualSolution, Calibration)`` tuple for every upgradable solution.
        """
        layout = DualLayout.for_kind(kind)
        run = run_homotopy(build_dual_system(pr, kind), self.track_options)
        tol = self.track_options.reality_tol
        real = [x for x in run.solutions if is_real(x, tol)]
        feasible = [ds for ds in (is_feasible(x, layout, tol) for x in real)
                    if ds is not None]
        pairs = []
        for ds in feasible:
            try:
                pairs.append((ds, upgrade_solution(ds, pr)))
            except InfeasibleSolutionError as exc:
                logger.debug('discarding dual solution: %s', exc)
        diagnostics = {
            'paths': run.bezout,
            'converged': run.converged,
            'retracked': run.retracked,
            'solutions': len(run.solutions),
            'real': len(real),
            'feasible': len(feasible),
            'dual_residuals': sorted(c.primal_residual for _, c in pairs),
        }
        return pairs, diagnostics


class Solver6r3s(Solver):
    """Minimal solver; several candidates are expected."""

    kind = '6r3s'
    shape = (6, 3)
    minimal = True

    def candidates(self, pr):
        pairs, diagnostics = self._dual_candidates(pr, '6r3s')
        return [c for _, c in pairs], diagnostics


class Solver7r3s(Solver):
    """Drops receiver 7, solves 6r/3s and trilaterates it back."""

    kind = '7r3s'
    shape = (7, 3)

    def candidates(self, pr):
        core = Solver6r3s(self.residual_threshold, self.track_options)
        base, diagnostics = core.candidates(pr.select(rows=range(6)))
        extended = []
        for c in base:
            try:
                receiver = trilaterate_point(c.transmitters,
                                             pr.f[6] - c.offsets)
            except DegenerateGeometryError as exc:
                logger.debug('skipping candidate: %s', exc)
                continue
            extended.append(_with_residual(c.extended(receivers=[receiver]),
                                           pr))
        return extended, diagnostics


class Solver6r4s(Solver):
    """Drops transmitter 4, solves 6r/3s and trilaterates it with its
    offset from all six receivers."""

    kind = '6r4s'
    shape = (6, 4)

    def candidates(self, pr):
        core = Solver6r3s(self.residual_threshold, self.track_options)
        base, diagnostics = core.candidates(pr.select(cols=range(3)))
        extended = []
        for c in base:
            try:
                point, offset = trilaterate_point_offset(c.receivers,
                                                         pr.f[:, 3])
            except DegenerateGeometryError as exc:
                logger.debug('skipping candidate: %s', exc)
                continue
            extended.append(_with_residual(
                c.extended(transmitters=[point], offsets=[offset]), pr))
        return extended, diagnostics


class Solver5r4s(Solver):
    """Dual system of the first three transmitters plus the rank minors of
    the whole compaction matrix; transmitter 4 is trilaterated with its
    solved offset."""

    kind = '5r4s'
    shape = (5, 4)

    def candidates(self, pr):
        pairs, diagnostics = self._dual_candidates(pr, '5r4s')
        extended = []
        for ds, c in pairs:
            offset = ds.offsets[3]
            try:
                point = trilaterate_point(c.receivers, pr.f[:, 3] - offset)
            except DegenerateGeometryError as exc:
                logger.debug('skipping candidate: %s', exc)
                continue
            extended.append(_with_residual(
                c.extended(transmitters=[point], offsets=[offset]), pr))
        diagnostics['candidate_residuals'] = sorted(
            c.primal_residual for c in extended)
        return extended, diagnostics


class Solver5r5s(Solver):
    """Drops transmitter 5, solves 5r/4s and trilaterates it with its
    offset."""

    kind = '5r5s'
    shape = (5, 5)

    def candidates(self, pr):
        core = Solver5r4s(self.residual_threshold, self.track_options)
        base, diagnostics = core.candidates(pr.select(cols=range(4)))
        extended = []
        for c in base:
            try:
                point, offset = trilaterate_point_offset(c.receivers,
                                                         pr.f[:, 4])
            except DegenerateGeometryError as exc:
                logger.debug('skipping candidate: %s', exc)
                continue
            extended.append(_with_residual(
                c.extended(transmitters=[point], offsets=[offset]), pr))
        return extended, diagnostics


SOLVERS = {
    '6r3s': Solver6r3s,
    '7r3s': Solver7r3s,
    '6r4s': Solver6r4s,
    '5r4s': Solver5r4s,
    '5r5s': Solver5r5s,
}


class MultiSolver(object):
    """Dispatches to the solver whose shape matches the pseudoranges."""

    def __init__(self, *solvers):
        if not solvers:
            solvers = tuple(cls() for _, cls in sorted(SOLVERS.items()))
        self.solvers = solvers

    def select(self, pr):
        for solver in self.solvers:
            if solver.shape == pr.shape:
                return solver
        raise UnsupportedConfigurationError(
            'no solver for a {0}r/{1}s network'.format(pr.m, pr.n))

    def solve(self, pr):
        return self.select(pr).solve(pr)


def get_solver(kind, residual_threshold=1e-10, track_options=None):
    if kind not in SOLVERS:
        raise UnsupportedConfigurationError(
            'unknown solver configuration {0!r}'.format(kind))
    return SOLVERS[kind](residual_threshold=residual_threshold,
                         track_options=track_options)


def solve(pr, config):
    return SOLVERS[config.kind].from_config(config).solve(pr)


def _solve_as(kind, pr, config):
    config = config or SolverConfig(kind)
    return SOLVERS[kind].from_config(config).solve(pr)


def solve_6r3s(pr, config=None):
    return _solve_as('6r3s', pr, config)


def solve_7r3s(pr, config=None):
    return _solve_as('7r3s', pr, config)


def solve_6r4s(pr, config=None):
    return _solve_as('6r4s', pr, config)


def solve_5r4s(pr, config=None):
    return _solve_as('5r4s', pr, config)


def solve_5r5s(pr, config=None):
    return _solve_as('5r5s', pr, config)

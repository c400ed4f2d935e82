"""
tdoa_homotopy.homotopy
======================

Total-degree homotopy continuation with the gamma trick.

Paths run from ``t = 1`` (start system) to ``t = 0`` (target system) along
``H(x, t) = (1 - t) F(x) + gamma t G(x)``. They are tracked in vectorized
chunks: every stage of a step is one batched evaluation and one batched
linear solve. :func:`run_homotopy` tracks on a random affine chart of
projective space and tracks crossed paths a second time.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DimensionError, NonSquareSystemError
from .polysys import Poly, PolySystem

logger = logging.getLogger(__name__)

CONVERGED = 'converged'
DIVERGED = 'diverged'
SINGULAR = 'singular'
MAX_STEPS = 'max_steps'

PREDICTORS = ('rk4', 'euler')

# paths that fail before this t are tracked again; later failures are
# paths running into singular endpoints
ENDGAME_T = 0.01


class TrackOptions(object):
    """Path tracker settings.

    ``newton_tol`` bounds the start-root check and endpoint polishing,
    ``corrector_tol`` is the relative Newton update accepted along the path
    and ``endpoint_tol`` is the residual a converged endpoint must reach.
    Paths are processed ``batch_size`` at a time. With ``workers > 1`` the
    batches run in threads; the batches themselves never depend on
    ``workers`` so the results do not either.

    ``predictor`` is ``'rk4'`` or ``'euler'``. With ``projective`` set,
    :func:`run_homotopy` tracks the homogenized systems on a random affine
    chart, so paths heading to infinity stay bounded. ``retries`` is the
    number of rounds in which crossed or early-failed paths are tracked
    again with smaller steps.
    """

    def __init__(self, initial_step=0.05, min_step=1e-7, max_step=0.25,
                 newton_tol=1e-10, newton_max_iters=3, corrector_tol=1e-7,
                 endpoint_tol=1e-8, refine_max_iters=20, regularity_tol=1e-8,
                 divergence_norm=1e8, max_steps=10000, reality_tol=1e-6,
                 dedup_tol=1e-8, batch_size=2048, workers=1, seed=0,
                 predictor='rk4', projective=True, retries=1):
        self.initial_step = float(initial_step)
        self.min_step = float(min_step)
        self.max_step = float(max_step)
        self.newton_tol = float(newton_tol)
        self.newton_max_iters = int(newton_max_iters)
        self.corrector_tol = float(corrector_tol)
        self.endpoint_tol = float(endpoint_tol)
        self.refine_max_iters = int(refine_max_iters)
        self.regularity_tol = float(regularity_tol)
        self.divergence_norm = float(divergence_norm)
        self.max_steps = int(max_steps)
        self.reality_tol = float(reality_tol)
        self.dedup_tol = float(dedup_tol)
        self.batch_size = int(batch_size)
        self.workers = int(workers)
        self.seed = int(seed)
        self.predictor = predictor
        self.projective = bool(projective)
        self.retries = int(retries)
        for name in ('initial_step', 'min_step', 'max_step', 'newton_tol',
                     'corrector_tol', 'endpoint_tol', 'regularity_tol',
                     'divergence_norm', 'reality_tol', 'dedup_tol'):
            if not getattr(self, name) > 0:
                raise ValueError('{0} must be positive'.format(name))
        for name in ('newton_max_iters', 'refine_max_iters', 'max_steps',
                     'batch_size', 'workers'):
            if getattr(self, name) < 1:
                raise ValueError('{0} must be at least 1'.format(name))
        if not self.min_step <= self.initial_step <= self.max_step:
            raise ValueError('step sizes must satisfy min_step <= '
                             'initial_step <= max_step')
        if self.seed < 0:
            raise ValueError('seed must be non-negative')
        if self.retries < 0:
            raise ValueError('retries must be non-negative')
        if self.predictor not in PREDICTORS:
            raise ValueError('unknown predictor {0!r}'.format(self.predictor))

    def as_dict(self):
        return dict(self.__dict__)

    def copy(self, **changes):
        options = self.as_dict()
        options.update(changes)
        return TrackOptions(**options)

    def careful(self):
        """Options for tracking a path again: a quarter of the step size."""
        max_step = self.max_step / 4.0
        return self.copy(max_step=max_step,
                         initial_step=min(self.initial_step, max_step),
                         min_step=min(self.min_step, max_step) / 100.0,
                         max_steps=4 * self.max_steps)

    def __eq__(self, other):
        if not isinstance(other, TrackOptions):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __repr__(self):
        items = sorted(self.__dict__.items())
        return 'TrackOptions({0})'.format(', '.join(
            '{0}={1!r}'.format(k, v) for k, v in items))


class PathResult(object):
    """Outcome of one path. ``t`` is where tracking stopped."""

    def __init__(self, status, endpoint, steps_taken, final_residual, t=0.0):
        self.status = status
        self.endpoint = endpoint
        self.steps_taken = int(steps_taken)
        self.final_residual = float(final_residual)
        self.t = float(t)

    @property
    def converged(self):
        return self.status == CONVERGED

    def __repr__(self):
        return '<PathResult {0} steps={1} residual={2:.3g}>'.format(
            self.status, self.steps_taken, self.final_residual)


def start_system(degrees, seed=0, constants=None):
    """Build ``G = [x_i^d_i - a_i]`` and all of its ``prod(d_i)`` roots.

    Unless ``constants`` are given, each ``a_i`` is a random point on the unit
    circle drawn from ``seed``.
    """
    degrees = [int(d) for d in degrees]
    if any(d < 1 for d in degrees):
        raise ValueError('start system degrees must be at least 1, got '
                         '{0}'.format(degrees))
    n = len(degrees)
    if constants is None:
        rng = np.random.default_rng(seed)
        constants = np.exp(2j * np.pi * rng.random(n))
    else:
        constants = np.asarray(constants, dtype=complex).reshape(-1)
        if len(constants) != n:
            raise DimensionError('expected {0} constants, got {1}'.format(
                n, len(constants)))
        if np.any(constants == 0):
            raise ValueError('start system constants must be non-zero')
    polys = []
    per_variable = []
    for i, (d, a) in enumerate(zip(degrees, constants)):
        exponents = [0] * n
        exponents[i] = d
        polys.append(Poly([(1.0, exponents), (-a, (0,) * n)], n))
        principal = abs(a) ** (1.0 / d) * np.exp(1j * np.angle(a) / d)
        per_variable.append([principal * np.exp(2j * np.pi * k / d)
                             for k in range(d)])
    roots = [np.array(r, dtype=complex)
             for r in itertools.product(*per_variable)]
    return PolySystem(polys, n), roots


class Homotopy(object):
    """``H(x, t) = (1 - t) F(x) + gamma t G(x)`` for square F and G.

    A homotopy built with :meth:`projective` works on ``X = (x0, x)``: both
    systems are homogenized and share the chart equation ``patch . X = 1``.
    Start points and endpoints are always affine; :meth:`lift` and
    :meth:`dehomogenize` convert. ``affine_target`` is the system the
    endpoints are polished on.
    """

    def __init__(self, target, start, gamma):
        if not target.is_square or not start.is_square:
            raise NonSquareSystemError('homotopy systems must be square')
        if target.nvars != start.nvars:
            raise DimensionError('target has {0} variables, start has '
                                 '{1}'.format(target.nvars, start.nvars))
        gamma = complex(gamma)
        if abs(abs(gamma) - 1.0) > 1e-12:
            raise ValueError('gamma must have unit modulus')
        self.target = target
        self.start = start
        self.gamma = gamma
        self.patch = None
        self.affine_target = target

    @classmethod
    def projective(cls, target, start, gamma, patch):
        if not target.is_square or not start.is_square:
            raise NonSquareSystemError('homotopy systems must be square')
        n = target.nvars
        patch = np.asarray(patch, dtype=complex).reshape(-1)
        if len(patch) != n + 1:
            raise DimensionError('the chart of {0} variables needs {1} '
                                 'coefficients, got {2}'.format(n, n + 1,
                                                                len(patch)))
        terms = [(c, tuple(int(k == i) for k in range(n + 1)))
                 for i, c in enumerate(patch)]
        chart = Poly(terms + [(-1.0, (0,) * (n + 1))], n + 1)
        homotopy = cls(PolySystem(list(target.homogenize()) + [chart]),
                       PolySystem(list(start.homogenize()) + [chart]), gamma)
        homotopy.patch = patch
        homotopy.affine_target = target
        return homotopy

    @property
    def nvars(self):
        return self.target.nvars

    def lift(self, points):
        points = np.array(points, dtype=complex, ndmin=2)
        if self.patch is None:
            return points
        lifted = np.hstack([np.ones((len(points), 1)), points])
        return lifted / (lifted @ self.patch)[:, None]

    def dehomogenize(self, points):
        points = np.array(points, dtype=complex, ndmin=2)
        if self.patch is None:
            return points
        with np.errstate(divide='ignore', invalid='ignore'):
            return points[:, 1:] / points[:, :1]

    def affine_norm(self, points):
        if self.patch is None:
            return _max_norm(points)
        with np.errstate(divide='ignore', invalid='ignore'):
            return _max_norm(points[:, 1:]) / np.abs(points[:, 0])

    def at(self, t):
        t = float(t)
        return PolySystem([f * (1.0 - t) + g * (self.gamma * t)
                           for f, g in zip(self.target, self.start)],
                          self.nvars)

    def evaluate(self, points, t):
        values, _, _ = self._evaluate(points, t, jacobian=False)
        return values

    def jacobians(self, points, t):
        """Return ``(H, dH/dx, dH/dt)`` at every row of ``points``."""
        return self._evaluate(points, t, jacobian=True)

    def _evaluate(self, points, t, jacobian):
        points = np.atleast_2d(np.asarray(points, dtype=complex))
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(points),))
        f, fj = self.target.evaluate_batch(points, jacobian=jacobian)
        g, gj = self.start.evaluate_batch(points, jacobian=jacobian)
        a = (1.0 - t)[:, None]
        b = (self.gamma * t)[:, None]
        values = a * f + b * g
        if not jacobian:
            return values, None, None
        jx = a[:, :, None] * fj + b[:, :, None] * gj
        return values, jx, self.gamma * g - f


def _solve_batch(matrices, rhs):
    ok = np.ones(len(rhs), dtype=bool)
    if not len(rhs):
        return rhs.copy(), ok
    try:
        solution = np.linalg.solve(matrices, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        solution = np.zeros_like(rhs)
        for k in range(len(rhs)):
            try:
                solution[k] = np.linalg.solve(matrices[k], rhs[k])
            except np.linalg.LinAlgError:
                ok[k] = False
    ok &= np.all(np.isfinite(solution), axis=1)
    solution[~ok] = 0
    return solution, ok


def _max_norm(values):
    if values.shape[1] == 0:
        return np.zeros(len(values))
    return np.abs(values).max(axis=1)


def newton_refine_batch(system, points, tol, max_iters):
    """Damped Newton on every row of ``points``.

    Returns ``(points, converged, residuals)``. A row stops as soon as its
    residual drops below ``tol`` or its Jacobian becomes singular.
    """
    x = np.array(points, dtype=complex, copy=True, ndmin=2)
    values, jac = system.evaluate_batch(x)
    norms = _max_norm(values)
    converged = norms < tol
    failed = ~np.isfinite(norms)
    for _ in range(max_iters):
        idx = np.flatnonzero(~converged & ~failed)
        if not idx.size:
            break
        step, ok = _solve_batch(jac[idx], -values[idx])
        failed[idx[~ok]] = True
        idx, step = idx[ok], step[ok]
        if not idx.size:
            break
        base = x[idx]
        scale = np.ones(len(idx))
        trial = base + step
        trial_values, trial_jac = system.evaluate_batch(trial)
        trial_norms = _max_norm(trial_values)
        for _ in range(6):
            worse = ~(trial_norms < norms[idx])
            if not worse.any():
                break
            scale[worse] /= 2
            trial[worse] = base[worse] + scale[worse, None] * step[worse]
            v, j = system.evaluate_batch(trial[worse])
            trial_values[worse], trial_jac[worse] = v, j
            trial_norms[worse] = _max_norm(v)
        x[idx] = trial
        values[idx] = trial_values
        jac[idx] = trial_jac
        norms[idx] = trial_norms
        failed[idx] |= ~np.isfinite(trial_norms)
        converged[idx] = trial_norms < tol
    return x, converged, norms


def newton_refine(system, point, tol, max_iters):
    """Refine one approximate root of a square system with damped Newton."""
    if not system.is_square:
        raise NonSquareSystemError('newton_refine requires a square system')
    point = np.asarray(point, dtype=complex).reshape(-1)
    if len(point) != system.nvars:
        raise DimensionError('point has {0} coordinates, expected {1}'.format(
            len(point), system.nvars))
    x, converged, _ = newton_refine_batch(system, point[None, :], tol,
                                          max_iters)
    return x[0], bool(converged[0])


def _is_regular(system, points, tol):
    # quadratic convergence: two more Newton steps must become negligible
    values, jac = system.evaluate_batch(points)
    step, ok = _solve_batch(jac, -values)
    moved = points + step
    values, jac = system.evaluate_batch(moved)
    step, ok2 = _solve_batch(jac, -values)
    scale = 1.0 + _max_norm(points)
    return ok & ok2 & (_max_norm(step) <= tol * scale)


def _correct(homotopy, points, t, opts):
    x = points.copy()
    ok = np.ones(len(x), dtype=bool)
    done = np.zeros(len(x), dtype=bool)
    previous = np.full(len(x), np.inf)
    for _ in range(opts.newton_max_iters):
        idx = np.flatnonzero(ok & ~done)
        if not idx.size:
            break
        values, jx, _ = homotopy.jacobians(x[idx], t[idx])
        step, solved = _solve_batch(jx, -values)
        size = _max_norm(step)
        bad = ~solved | (size > 0.5 * previous[idx])
        ok[idx[bad]] = False
        good = ~bad
        idx, step, size = idx[good], step[good], size[good]
        x[idx] += step
        previous[idx] = size
        scale = 1.0 + _max_norm(x[idx])
        done[idx[size <= opts.corrector_tol * scale]] = True
    return x, ok & done


def _velocity(homotopy, points, t):
    _, jx, ht = homotopy.jacobians(points, t)
    return _solve_batch(jx, -ht)


def _predict(homotopy, x, t, h, predictor):
    # t decreases, so x(t - h) ~ x(t) - h dx/dt
    k1, ok = _velocity(homotopy, x, t)
    if predictor == 'euler':
        return x - h[:, None] * k1, ok
    half = h / 2.0
    k2, ok2 = _velocity(homotopy, x - half[:, None] * k1, t - half)
    k3, ok3 = _velocity(homotopy, x - half[:, None] * k2, t - half)
    k4, ok4 = _velocity(homotopy, x - h[:, None] * k3, t - h)
    step = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return x - h[:, None] * step, ok & ok2 & ok3 & ok4


def _track_chunk(homotopy, starts, opts):
    npaths = len(starts)
    x = np.array(starts, dtype=complex, copy=True)
    t = np.ones(npaths)
    dt = np.full(npaths, opts.initial_step)
    steps = np.zeros(npaths, dtype=int)
    streak = np.zeros(npaths, dtype=int)
    status = np.array([None] * npaths, dtype=object)
    residual = np.zeros(npaths)

    start_values, _ = homotopy.start.evaluate_batch(x, jacobian=False)
    start_norms = _max_norm(start_values)
    bad = ~(start_norms < opts.newton_tol)
    status[bad] = SINGULAR
    residual[bad] = start_norms[bad]
    active = ~bad
    reached = np.zeros(npaths, dtype=bool)

    while True:
        idx = np.flatnonzero(active)
        if not idx.size:
            break
        over = steps[idx] >= opts.max_steps
        if over.any():
            status[idx[over]] = MAX_STEPS
            active[idx[over]] = False
            idx = idx[~over]
            if not idx.size:
                break

        ti = t[idx]
        h = np.minimum(dt[idx], ti)
        predicted, solved = _predict(homotopy, x[idx], ti, h, opts.predictor)
        t_next = np.where(h >= ti, 0.0, ti - h)
        corrected, converged = _correct(homotopy, predicted, t_next, opts)
        success = solved & converged
        steps[idx] += 1

        won = idx[success]
        x[won] = corrected[success]
        t[won] = t_next[success]
        streak[won] += 1
        grow = won[streak[won] >= 3]
        dt[grow] = np.minimum(2.0 * dt[grow], opts.max_step)
        streak[grow] = 0

        lost = idx[~success]
        dt[lost] /= 2.0
        streak[lost] = 0
        under = lost[dt[lost] < opts.min_step]
        status[under] = SINGULAR
        active[under] = False

        far = won[homotopy.affine_norm(x[won]) > opts.divergence_norm]
        status[far] = DIVERGED
        active[far] = False

        finished = won[(t[won] == 0.0) & active[won]]
        reached[finished] = True
        active[finished] = False

    endpoints = homotopy.dehomogenize(x)
    idx = np.flatnonzero(reached)
    far = idx[~(homotopy.affine_norm(x[idx]) <= opts.divergence_norm)]
    status[far] = DIVERGED
    idx = np.setdiff1d(idx, far)
    if idx.size:
        target = homotopy.affine_target
        polished, _, norms = newton_refine_batch(
            target, endpoints[idx], opts.newton_tol, opts.refine_max_iters)
        good = (norms <= opts.endpoint_tol) & _is_regular(
            target, polished, opts.regularity_tol)
        endpoints[idx] = polished
        residual[idx] = norms
        status[idx[good]] = CONVERGED
        status[idx[~good]] = SINGULAR

    logger.debug('chunk of %d paths: %d converged, %d diverged, %d singular',
                 npaths, np.sum(status == CONVERGED),
                 np.sum(status == DIVERGED), np.sum(status == SINGULAR))
    return [PathResult(status[k], endpoints[k].copy(), steps[k], residual[k],
                       t[k])
            for k in range(npaths)]


def track_paths(homotopy, starts, opts=None):
    """Track every start root in ``starts`` and return one result per path.

    ``starts`` and the returned endpoints are affine points of
    ``homotopy.affine_target``.
    """
    opts = opts or TrackOptions()
    starts = np.array(starts, dtype=complex, ndmin=2)
    if starts.size == 0:
        return []
    if starts.shape[1] != homotopy.affine_target.nvars:
        raise DimensionError('start points have {0} coordinates, expected '
                             '{1}'.format(starts.shape[1],
                                          homotopy.affine_target.nvars))
    starts = homotopy.lift(starts)
    chunks = [starts[i:i + opts.batch_size]
              for i in range(0, len(starts), opts.batch_size)]
    if opts.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            parts = list(pool.map(
                lambda chunk: _track_chunk(homotopy, chunk, opts), chunks))
    else:
        parts = [_track_chunk(homotopy, chunk, opts) for chunk in chunks]
    return [result for part in parts for result in part]


def track_path(homotopy, start, opts=None):
    return track_paths(homotopy, [start], opts)[0]


def deduplicate(solutions, tol):
    """Keep the first vector of every cluster closer than ``tol``."""
    if not tol > 0:
        raise ValueError('deduplication tolerance must be positive')
    kept = []
    for x in solutions:
        x = np.asarray(x, dtype=complex)
        if all(np.max(np.abs(x - k)) >= tol for k in kept):
            kept.append(x)
    return kept


def solution_key(x):
    return tuple(v for z in x for v in (z.real, z.imag))


def crossed_paths(paths, tol):
    """Indices of converged paths that share their endpoint with another.

    A regular root is the end of exactly one path, so a shared endpoint
    means at least one of the paths jumped.
    """
    idx = [k for k, p in enumerate(paths) if p.converged]
    if len(idx) < 2:
        return []
    ends = np.array([paths[k].endpoint for k in idx])
    scale = 1.0 + _max_norm(ends)
    crossed = set()
    for a in range(len(idx) - 1):
        gaps = np.abs(ends[a + 1:] - ends[a]).max(axis=1)
        close = np.flatnonzero(gaps < tol * np.maximum(scale[a],
                                                       scale[a + 1:]))
        if close.size:
            crossed.add(idx[a])
            crossed.update(idx[a + 1 + c] for c in close)
    return sorted(crossed)


def failed_early(paths):
    return [k for k, p in enumerate(paths)
            if p.status in (SINGULAR, MAX_STEPS) and p.t > ENDGAME_T]


class HomotopyRun(object):
    def __init__(self, solutions, paths, gamma, bezout, retracked=0):
        self.solutions = solutions
        self.paths = paths
        self.gamma = gamma
        self.bezout = bezout
        self.retracked = retracked

    @property
    def converged(self):
        return sum(1 for p in self.paths if p.converged)

    def count(self, status):
        return sum(1 for p in self.paths if p.status == status)


def _retrack(homotopy, roots, paths, opts):
    """Track crossed and early-failed paths again with smaller steps."""
    retracked = set()
    careful = opts
    for _ in range(opts.retries):
        idx = sorted(set(crossed_paths(paths, opts.dedup_tol)) |
                     set(failed_early(paths)))
        if not idx:
            break
        careful = careful.careful()
        redone = track_paths(homotopy, [roots[k] for k in idx], careful)
        for k, path in zip(idx, redone):
            paths[k] = path
        retracked.update(idx)
        logger.debug('re-tracked %d paths with max_step %g', len(idx),
                     careful.max_step)
    return len(retracked)


def run_homotopy(system, opts=None):
    """Solve a square system and keep the per-path bookkeeping."""
    opts = opts or TrackOptions()
    if not system.is_square:
        raise NonSquareSystemError(
            'homotopy continuation requires a square system, got {0} '
            'equations in {1} variables'.format(len(system), system.nvars))
    if any(p.total_degree() == 0 and not p.is_zero() for p in system):
        logger.info('a non-zero constant equation has no solutions')
        return HomotopyRun([], [], None, 0)
    start_seed, gamma_seed, patch_seed = [
        int(s.generate_state(1)[0])
        for s in np.random.SeedSequence(opts.seed).spawn(3)]
    start, roots = start_system(system.degrees(), seed=start_seed)
    gamma = np.exp(2j * np.pi * np.random.default_rng(gamma_seed).random())
    if opts.projective:
        rng = np.random.default_rng(patch_seed)
        patch = rng.normal(size=system.nvars + 1) + \
            1j * rng.normal(size=system.nvars + 1)
        homotopy = Homotopy.projective(system, start, gamma,
                                       patch / np.linalg.norm(patch))
    else:
        homotopy = Homotopy(system, start, gamma)
    paths = track_paths(homotopy, roots, opts)
    retracked = _retrack(homotopy, roots, paths, opts)
    endpoints = sorted((p.endpoint for p in paths if p.converged),
                       key=solution_key)
    solutions = deduplicate(endpoints, opts.dedup_tol)
    run = HomotopyRun(solutions, paths, gamma, len(roots), retracked)
    logger.info('tracked %d paths: %d converged, %d diverged, %d singular, '
                '%d re-tracked, %d distinct solutions', len(paths),
                run.converged, run.count(DIVERGED), run.count(SINGULAR),
                retracked, len(solutions))
    return run


def solve_system(system, opts=None):
    """Return the distinct solutions of a square system, sorted."""
    return run_homotopy(system, opts).solutions

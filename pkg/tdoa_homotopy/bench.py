"""
tdoa_homotopy.bench
===================

Synthetic instances, gauge alignment, error metrics and the two studies:
the 6r/3s solution count study and the clean/noisy accuracy sweep.
"""

import csv
import io
import json
import logging

import numpy as np
import scipy.linalg

from .errors import DimensionError
from .homotopy import TrackOptions
from .model import Calibration, NetworkGroundTruth, PseudorangeMatrix
from .solvers import SHAPES, Solver6r3s, get_solver

logger = logging.getLogger(__name__)

DEFAULT_SIGMAS = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
INSTANCE_DISTRIBUTION = 'gaussian'

SWEEP_COLUMNS = ('sigma', 'trials', 'failures', 'median_pos_err',
                 'median_offset_err')
COUNT_COLUMNS = ('trial', 'real_count', 'feasible_count')


class InstanceSpec(object):
    def __init__(self, m, n, seed=0, position_sigma=1.0, offset_sigma=1.0):
        if m < 1 or n < 1:
            raise DimensionError('an instance needs at least one receiver and '
                                 'one transmitter')
        if not position_sigma > 0 or not offset_sigma > 0:
            raise ValueError('instance sigmas must be positive')
        self.m = int(m)
        self.n = int(n)
        self.seed = seed
        self.position_sigma = float(position_sigma)
        self.offset_sigma = float(offset_sigma)


class NoiseSpec(object):
    def __init__(self, sigma=0.0, seed=0):
        if not sigma >= 0:
            raise ValueError('noise sigma must be non-negative')
        self.sigma = float(sigma)
        self.seed = seed


def generate_instance(spec):
    """Draw nodes and offsets from zero-mean Gaussians.

    Returns ``(NetworkGroundTruth, PseudorangeMatrix)``.
    """
    rng = np.random.default_rng(spec.seed)
    receivers = rng.normal(0.0, spec.position_sigma, size=(spec.m, 2))
    transmitters = rng.normal(0.0, spec.position_sigma, size=(spec.n, 2))
    offsets = rng.normal(0.0, spec.offset_sigma, size=spec.n)
    truth = NetworkGroundTruth(receivers, transmitters, offsets)
    return truth, truth.pseudoranges()


def add_noise(pr, noise):
    if noise.sigma == 0:
        return PseudorangeMatrix(pr.f)
    rng = np.random.default_rng(noise.seed)
    return PseudorangeMatrix(pr.f + rng.normal(0.0, noise.sigma,
                                               size=pr.shape))


def align(estimate, truth):
    """Move ``estimate`` onto ``truth`` with the best rigid motion.

    Reflections are allowed. Offsets are left untouched.
    """
    if (estimate.m, estimate.n) != (truth.m, truth.n):
        raise DimensionError('cannot align a {0}r/{1}s estimate with a '
                             '{2}r/{3}s network'.format(estimate.m, estimate.n,
                                                        truth.m, truth.n))
    source = estimate.positions()
    target = np.vstack([truth.receivers, truth.transmitters])
    source_mean = source.mean(axis=0)
    target_mean = target.mean(axis=0)
    rotation, _ = scipy.linalg.orthogonal_procrustes(source - source_mean,
                                                     target - target_mean)
    moved = (source - source_mean) @ rotation + target_mean
    return Calibration(moved[:estimate.m], moved[estimate.m:],
                       estimate.offsets, estimate.primal_residual)


def relative_errors(aligned, truth):
    """Return ``(pos_err, offset_err)`` of an aligned estimate."""
    target = np.vstack([truth.receivers, truth.transmitters])
    spread = np.linalg.norm(target - target.mean(axis=0))
    pos_err = np.linalg.norm(aligned.positions() - target) / \
        max(spread, np.finfo(float).tiny)
    offset_err = np.linalg.norm(aligned.offsets - truth.offsets) / \
        max(np.linalg.norm(truth.offsets), np.finfo(float).eps)
    return float(pos_err), float(offset_err)


def _trial_seeds(seed, trial):
    """Instance and noise seeds of one trial."""
    children = np.random.SeedSequence([int(seed), int(trial)]).spawn(2)
    return [int(child.generate_state(1, dtype=np.uint64)[0])
            for child in children]


def _median(values):
    return float(np.median(values)) if values else None


def _percentile(values, q):
    return float(np.percentile(values, q)) if values else None


class BenchReport(object):
    """Per-trial records plus aggregates recomputed from them.

    ``kind`` is ``'count-study'`` or ``'noise-sweep'``.
    """

    def __init__(self, kind, parameters, records):
        self.kind = kind
        self.parameters = dict(parameters)
        self.records = sorted(records, key=lambda r: (r.get('sigma', 0.0),
                                                      r['trial']))

    @property
    def aggregates(self):
        if self.kind == 'count-study':
            return self._count_aggregates()
        return self._sweep_aggregates()

    def _count_aggregates(self):
        aggregates = {}
        for key in ('real_count', 'feasible_count'):
            values = np.array([r[key] for r in self.records], dtype=float)
            aggregates[key] = {
                'min': int(values.min()),
                'max': int(values.max()),
                'mean': float(values.mean()),
                'std': float(values.std()),
            }
        return aggregates

    def _sweep_aggregates(self):
        rows = []
        for sigma in sorted(set(r['sigma'] for r in self.records)):
            records = [r for r in self.records if r['sigma'] == sigma]
            solved = [r for r in records if r['success']]
            pos = [r['pos_err'] for r in solved]
            offs = [r['offset_err'] for r in solved]
            failures = len(records) - len(solved)
            rows.append({
                'sigma': sigma,
                'trials': len(records),
                'failures': failures,
                'failure_rate': failures / float(len(records)),
                'median_pos_err': _median(pos),
                'median_offset_err': _median(offs),
                'p90_pos_err': _percentile(pos, 90),
            })
        return rows

    def to_dict(self):
        return {
            'kind': self.kind,
            'parameters': self.parameters,
            'records': self.records,
            'aggregates': self.aggregates,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n'

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        if self.kind == 'count-study':
            writer.writerow(COUNT_COLUMNS)
            for r in self.records:
                writer.writerow([r[c] for c in COUNT_COLUMNS])
        else:
            writer.writerow(SWEEP_COLUMNS)
            for row in self.aggregates:
                writer.writerow(['' if row[c] is None else repr(row[c])
                                 for c in SWEEP_COLUMNS])
        return out.getvalue()

    def write(self, path):
        path = str(path)
        if path.endswith('.json'):
            text = self.to_json()
        elif path.endswith('.csv'):
            text = self.to_csv()
        else:
            raise ValueError('report path must end in .json or .csv: '
                             '{0}'.format(path))
        with open(path, 'w') as f:
            f.write(text)


def _score(outcome, truth, minimal):
    """Errors of the scored candidate, the candidate and how it was picked.

    Every candidate of a minimal problem solves it exactly, so residuals
    cannot tell them apart; the one closest to the truth is scored.
    Subminimal problems score the best candidate.
    """
    if not minimal:
        return (relative_errors(align(outcome.best, truth), truth),
                outcome.best, 'best')
    errors = [relative_errors(align(c, truth), truth)
              for c in outcome.candidates]
    k = min(range(len(errors)), key=lambda i: errors[i])
    return errors[k], outcome.candidates[k], 'closest'


def _parameters(trials, seed, residual_threshold, track_options, **extra):
    parameters = {
        'trials': trials,
        'seed': seed,
        'residual_threshold': residual_threshold,
        'distribution': INSTANCE_DISTRIBUTION,
        'position_sigma': 1.0,
        'offset_sigma': 1.0,
        'tracker_seed': track_options.seed,
        'minimal_scoring': 'closest-candidate',
    }
    parameters.update(extra)
    return parameters


def run_solution_count_study(trials, seed=0, residual_threshold=1e-10,
                             track_options=None):
    """Count real and feasible 6r/3s dual solutions on random instances.

    ``feasible_count`` is the number of candidates left after the residual
    threshold; ``feasible_dual`` counts the real positive definite dual
    solutions before it.
    """
    if trials < 1:
        raise ValueError('at least one trial is required')
    track_options = track_options or TrackOptions()
    solver = Solver6r3s(residual_threshold, track_options)
    records = []
    for trial in range(trials):
        instance_seed, _ = _trial_seeds(seed, trial)
        truth, pr = generate_instance(InstanceSpec(6, 3, instance_seed))
        outcome = solver.solve(pr)
        diagnostics = outcome.diagnostics
        record = {
            'trial': trial,
            'instance_seed': instance_seed,
            'solutions': diagnostics['solutions'],
            'real_count': diagnostics['real'],
            'feasible_count': diagnostics['candidates'],
            'feasible_dual': diagnostics['feasible'],
            'candidates': diagnostics['candidates'],
            'dual_residuals': [float(r) for r in
                               diagnostics['dual_residuals']],
        }
        if outcome.success:
            errors, _, record['scored'] = _score(outcome, truth, True)
            record['pos_err'], record['offset_err'] = errors
        records.append(record)
        logger.info('count study trial %d: %d real, %d feasible', trial,
                    record['real_count'], record['feasible_count'])
    return BenchReport('count-study',
                       _parameters(trials, seed, residual_threshold,
                                   track_options, kind='6r3s'),
                       records)


def run_noise_sweep(kind, sigmas=DEFAULT_SIGMAS, trials=100, seed=0,
                    residual_threshold=1e-10, track_options=None):
    """Median relative errors of one solver kind at several noise levels.

    Each trial draws one instance and reuses it at every sigma. Trials with
    no candidate are recorded as failures and left out of the medians. The
    minimal 6r/3s solver is run with no residual threshold once noise is
    added, since noisy data never meets it. Minimal solvers are scored on
    the candidate closest to the truth, the others on the best candidate;
    each record names the choice in ``scored``.
    """
    if kind not in SHAPES:
        raise ValueError('unknown solver configuration {0!r}'.format(kind))
    if trials < 1:
        raise ValueError('at least one trial is required')
    sigmas = [float(s) for s in sigmas]
    if any(s < 0 for s in sigmas):
        raise ValueError('noise sigmas must be non-negative')
    track_options = track_options or TrackOptions()
    m, n = SHAPES[kind]
    clean_solver = get_solver(kind, residual_threshold, track_options)
    noisy_solver = get_solver(kind, np.inf, track_options)
    records = []
    for trial in range(trials):
        instance_seed, noise_seed = _trial_seeds(seed, trial)
        truth, pr = generate_instance(InstanceSpec(m, n, instance_seed))
        for sigma in sigmas:
            noisy = add_noise(pr, NoiseSpec(sigma, noise_seed))
            solver = clean_solver if sigma == 0 else noisy_solver
            outcome = solver.solve(noisy)
            record = {
                'trial': trial,
                'sigma': sigma,
                'instance_seed': instance_seed,
                'noise_seed': noise_seed,
                'success': outcome.success,
                'candidates': len(outcome.candidates),
                'pos_err': None,
                'offset_err': None,
                'residual': None,
                'scored': None,
            }
            if outcome.success:
                errors, scored, record['scored'] = _score(
                    outcome, truth, solver.minimal)
                record['pos_err'], record['offset_err'] = errors
                record['residual'] = scored.primal_residual
            records.append(record)
        logger.info('%s sweep trial %d done', kind, trial)
    report = BenchReport('noise-sweep',
                         _parameters(trials, seed, residual_threshold,
                                     track_options, kind=kind,
                                     sigmas=sigmas),
                         records)
    for row in report.aggregates:
        logger.info('sigma %g: median pos_err %s, %d failures', row['sigma'],
                    row['median_pos_err'], row['failures'])
    return report

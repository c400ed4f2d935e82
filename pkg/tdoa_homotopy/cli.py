"""
tdoa_homotopy.cli
=================

Command line interface::

    tdoa-homotopy generate --m 6 --n 3 --seed 1 --out pr.json --truth gt.json
    tdoa-homotopy solve --config 6r3s --in pr.json --out result.json
    tdoa-homotopy count-study --trials 500 --out counts.csv
    tdoa-homotopy noise-sweep --config 5r4s --sigmas 1e-6,1e-4 --out sweep.json
    tdoa-homotopy classify --m 5 --n 4

Exit codes: 0 on success, 1 when the solver finds no candidate, 2 on bad
input.
"""

import json
import logging
import sys

import click
import numpy as np

from .bench import DEFAULT_SIGMAS, InstanceSpec, NoiseSpec, add_noise, \
    generate_instance, run_noise_sweep, run_solution_count_study
from .errors import DimensionError, TDOAError
from .homotopy import TrackOptions
from .model import PseudorangeMatrix, classify, configuration_status, \
    excess_constraint
from .solvers import SHAPES, get_solver

logger = logging.getLogger(__name__)


class InputError(click.ClickException):
    exit_code = 2


def _dump(data, path):
    with open(path, 'w') as f:
        json.dump(data, f, sort_keys=True, indent=2)
        f.write('\n')


def read_pseudoranges(path):
    """Load ``{"m": .., "n": .., "pseudoranges": [[..]]}``."""
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, ValueError) as exc:
        raise InputError('cannot read {0}: {1}'.format(path, exc))
    if not isinstance(data, dict) or 'pseudoranges' not in data:
        raise InputError('{0} has no "pseudoranges" entry'.format(path))
    try:
        f = np.array(data['pseudoranges'], dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError('malformed pseudoranges in {0}: {1}'.format(path,
                                                                     exc))
    if f.ndim != 2:
        raise InputError('pseudoranges in {0} must be a matrix'.format(path))
    if (data.get('m', f.shape[0]), data.get('n', f.shape[1])) != f.shape:
        raise InputError('declared size {0}x{1} does not match the {2}x{3} '
                         'pseudorange matrix'.format(data.get('m'),
                                                     data.get('n'),
                                                     *f.shape))
    if not np.all(np.isfinite(f)):
        raise InputError('pseudoranges in {0} must be finite'.format(path))
    return PseudorangeMatrix(f)


def pseudoranges_to_dict(pr):
    return {'m': pr.m, 'n': pr.n, 'pseudoranges': pr.f.tolist()}


def calibration_to_dict(calibration):
    return {
        'receivers': calibration.receivers.tolist(),
        'transmitters': calibration.transmitters.tolist(),
        'offsets': calibration.offsets.tolist(),
        'residual': calibration.primal_residual,
    }


def _parse_sigmas(ctx, param, value):
    if value is None:
        return list(DEFAULT_SIGMAS)
    try:
        sigmas = [float(s) for s in value.split(',') if s.strip()]
    except ValueError:
        raise click.BadParameter('expected comma separated numbers')
    if not sigmas or any(not s >= 0 for s in sigmas):
        raise click.BadParameter('sigmas must be non-negative numbers')
    return sigmas


def _check_report_path(ctx, param, value):
    if not value.endswith(('.json', '.csv')):
        raise click.BadParameter('report path must end in .json or .csv')
    return value


_configs = click.Choice(sorted(SHAPES))


@click.group()
@click.option('-v', '--verbose', count=True, help='-v for info, -vv for debug')
@click.option('--workers', default=1, type=click.IntRange(min=1),
              help='threads used by the path tracker')
@click.pass_context
def cli(ctx, verbose, workers):
    """Self-calibration of 2D TDOA networks."""
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level,
                        format='%(levelname)s %(name)s: %(message)s')
    ctx.obj = {'workers': workers}


@cli.command()
@click.option('--config', 'kind', required=True, type=_configs)
@click.option('--in', 'in_path', required=True,
              type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', required=True,
              type=click.Path(dir_okay=False))
@click.option('--threshold', default=1e-10,
              type=click.FloatRange(min=0, min_open=True))
@click.option('--seed', default=0, type=click.IntRange(min=0),
              help='seed of the start system and gamma')
@click.option('--all-candidates', is_flag=True,
              help='also write every surviving candidate')
@click.pass_context
def solve(ctx, kind, in_path, out_path, threshold, seed, all_candidates):
    """Calibrate a network from a pseudorange JSON file."""
    pr = read_pseudoranges(in_path)
    options = TrackOptions(seed=seed, workers=ctx.obj['workers'])
    solver = get_solver(kind, threshold, options)
    try:
        solver.check_shape(pr)
    except DimensionError as exc:
        raise InputError(str(exc))
    outcome = solver.solve(pr)
    if not outcome.success:
        click.echo('no calibration found: {0}'.format(
            json.dumps(outcome.diagnostics, sort_keys=True)), err=True)
        ctx.exit(1)
    if outcome.best.primal_residual > threshold:
        logger.warning('best residual %.3g is above the threshold %.3g',
                       outcome.best.primal_residual, threshold)
    result = calibration_to_dict(outcome.best)
    result['candidates_considered'] = len(outcome.candidates)
    if all_candidates:
        result['candidates'] = [calibration_to_dict(c)
                                for c in outcome.candidates]
    _dump(result, out_path)


@cli.command()
@click.option('--m', 'm', required=True, type=click.IntRange(min=1))
@click.option('--n', 'n', required=True, type=click.IntRange(min=1))
@click.option('--seed', default=0, type=click.IntRange(min=0))
@click.option('--out', 'out_path', required=True,
              type=click.Path(dir_okay=False))
@click.option('--truth', 'truth_path', type=click.Path(dir_okay=False))
@click.option('--noise-sigma', default=0.0, type=click.FloatRange(min=0))
def generate(m, n, seed, out_path, truth_path, noise_sigma):
    """Write a random instance with Gaussian nodes and offsets."""
    truth, pr = generate_instance(InstanceSpec(m, n, seed))
    # noise seed is kept apart from the instance seed
    pr = add_noise(pr, NoiseSpec(noise_sigma, [seed, 1]))
    _dump(pseudoranges_to_dict(pr), out_path)
    if truth_path:
        _dump({'receivers': truth.receivers.tolist(),
               'transmitters': truth.transmitters.tolist(),
               'offsets': truth.offsets.tolist()}, truth_path)


@cli.command('count-study')
@click.option('--trials', default=500, type=click.IntRange(min=1))
@click.option('--seed', default=0, type=click.IntRange(min=0))
@click.option('--threshold', default=1e-10,
              type=click.FloatRange(min=0, min_open=True))
@click.option('--out', 'out_path', required=True,
              callback=_check_report_path)
@click.pass_context
def count_study(ctx, trials, seed, threshold, out_path):
    """Count real and feasible 6r/3s solutions over random instances."""
    report = run_solution_count_study(
        trials, seed, threshold, TrackOptions(workers=ctx.obj['workers']))
    report.write(out_path)


@cli.command('noise-sweep')
@click.option('--config', 'kind', required=True, type=_configs)
@click.option('--sigmas', callback=_parse_sigmas,
              help='comma separated noise levels')
@click.option('--trials', default=100, type=click.IntRange(min=1))
@click.option('--seed', default=0, type=click.IntRange(min=0))
@click.option('--threshold', default=1e-10,
              type=click.FloatRange(min=0, min_open=True))
@click.option('--out', 'out_path', required=True,
              callback=_check_report_path)
@click.pass_context
def noise_sweep(ctx, kind, sigmas, trials, seed, threshold, out_path):
    """Median relative errors of a solver at several noise levels."""
    report = run_noise_sweep(kind, sigmas, trials, seed, threshold,
                             TrackOptions(workers=ctx.obj['workers']))
    report.write(out_path)


@cli.command('classify')
@click.option('--m', 'm', required=True, type=click.IntRange(min=1))
@click.option('--n', 'n', required=True, type=click.IntRange(min=1))
def classify_command(m, n):
    """Print the constraint balance of an m receiver, n transmitter network."""
    click.echo('excess constraints: {0}'.format(excess_constraint(m, n)))
    click.echo('class: {0}'.format(classify(m, n)))
    status = configuration_status(m, n)
    click.echo('status: {0}'.format('unknown' if status is None else status))


def run_command(argv):
    """Run the CLI with ``argv`` and return the exit code."""
    try:
        result = cli.main(args=list(argv), prog_name='tdoa-homotopy',
                          standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except TDOAError as exc:
        click.echo('Error: {0}'.format(exc), err=True)
        return 2
    return result if isinstance(result, int) else 0


def main():
    sys.exit(run_command(sys.argv[1:]))

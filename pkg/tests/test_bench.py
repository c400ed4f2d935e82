import json
import os
import shutil
import tempfile
import unittest

import numpy as np

from tdoa_homotopy import Calibration, DimensionError, SolveOutcome
from tdoa_homotopy.bench import BenchReport, InstanceSpec, NoiseSpec, \
    _score, add_noise, align, generate_instance, relative_errors, \
    run_noise_sweep, run_solution_count_study
from tdoa_homotopy.model import primal_residual

SLOW = os.environ.get('TDOA_HOMOTOPY_SLOW_TESTS') == '1'


def rotation(angle):
    return np.array([[np.cos(angle), -np.sin(angle)],
                     [np.sin(angle), np.cos(angle)]])


class InstanceTestCase(unittest.TestCase):
    def test_generate(self):
        truth, pr = generate_instance(InstanceSpec(6, 3, 42))
        self.assertEqual(pr.shape, (6, 3))
        self.assertLess(primal_residual(truth.to_calibration(), pr), 1e-12)
        _, again = generate_instance(InstanceSpec(6, 3, 42))
        _, other = generate_instance(InstanceSpec(6, 3, 43))
        self.assertEqual(pr, again)
        self.assertNotEqual(pr, other)

    def test_bad_spec(self):
        self.assertRaises(ValueError, InstanceSpec, 6, 3, 0, 0.0)
        self.assertRaises(ValueError, NoiseSpec, -1.0)

    def test_noise(self):
        _, pr = generate_instance(InstanceSpec(100, 100, 1))
        self.assertEqual(add_noise(pr, NoiseSpec(0.0, 5)), pr)
        noisy = add_noise(pr, NoiseSpec(0.01, 5))
        self.assertEqual(noisy, add_noise(pr, NoiseSpec(0.01, 5)))
        spread = np.std(noisy.f - pr.f)
        self.assertLess(abs(spread - 0.01), 0.0005)


class AlignTestCase(unittest.TestCase):
    def setUp(self):
        self.truth, _ = generate_instance(InstanceSpec(5, 4, 7))

    def _estimate(self, network):
        return Calibration(network.receivers, network.transmitters,
                           network.offsets)

    def test_rigid_motion(self):
        moved = self.truth.transformed(rotation(2.1), (4.0, -3.0))
        aligned = align(self._estimate(moved), self.truth)
        np.testing.assert_allclose(aligned.receivers, self.truth.receivers,
                                   atol=1e-12)
        self.assertEqual(relative_errors(aligned, self.truth)[1], 0.0)
        self.assertLess(relative_errors(aligned, self.truth)[0], 1e-10)

    def test_reflection(self):
        mirrored = self.truth.transformed(np.diag([1.0, -1.0]))
        aligned = align(self._estimate(mirrored), self.truth)
        np.testing.assert_allclose(aligned.transmitters,
                                   self.truth.transmitters, atol=1e-12)

    def test_never_worse(self):
        rng = np.random.default_rng(3)
        target = np.vstack([self.truth.receivers, self.truth.transmitters])
        for _ in range(20):
            noisy = target + rng.normal(scale=0.3, size=target.shape)
            estimate = Calibration(noisy[:5], noisy[5:], self.truth.offsets)
            aligned = align(estimate, self.truth)
            self.assertLessEqual(
                np.linalg.norm(aligned.positions() - target),
                np.linalg.norm(noisy - target) + 1e-12)

    def test_errors_scale(self):
        rng = np.random.default_rng(4)
        target = np.vstack([self.truth.receivers, self.truth.transmitters])
        delta = rng.normal(size=target.shape)
        one = Calibration((target + delta)[:5], (target + delta)[5:],
                          self.truth.offsets)
        two = Calibration((target + 2 * delta)[:5], (target + 2 * delta)[5:],
                          self.truth.offsets)
        self.assertAlmostEqual(relative_errors(two, self.truth)[0],
                               2 * relative_errors(one, self.truth)[0])
        self.assertEqual(relative_errors(self.truth.to_calibration(),
                                         self.truth), (0.0, 0.0))

    def test_mismatch(self):
        other, _ = generate_instance(InstanceSpec(6, 3, 7))
        self.assertRaises(DimensionError, align, other.to_calibration(),
                          self.truth)


class BenchReportTestCase(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        records = [
            {'trial': 1, 'sigma': 0.0, 'success': True, 'pos_err': 3e-12,
             'offset_err': 1e-12},
            {'trial': 0, 'sigma': 0.0, 'success': True, 'pos_err': 1e-12,
             'offset_err': 2e-12},
            {'trial': 0, 'sigma': 0.1, 'success': False, 'pos_err': None,
             'offset_err': None},
            {'trial': 1, 'sigma': 0.1, 'success': True, 'pos_err': 0.2,
             'offset_err': 0.1},
        ]
        self.sweep = BenchReport('noise-sweep', {'trials': 2}, records)
        self.counts = BenchReport('count-study', {'trials': 3}, [
            {'trial': 0, 'real_count': 4, 'feasible_count': 2},
            {'trial': 1, 'real_count': 10, 'feasible_count': 1},
            {'trial': 2, 'real_count': 7, 'feasible_count': 3},
        ])

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_sweep_aggregates(self):
        rows = self.sweep.aggregates
        self.assertEqual([r['sigma'] for r in rows], [0.0, 0.1])
        self.assertEqual(rows[0]['failures'], 0)
        self.assertAlmostEqual(rows[0]['median_pos_err'], 2e-12)
        self.assertEqual(rows[1]['failures'], 1)
        self.assertEqual(rows[1]['failure_rate'], 0.5)
        self.assertEqual(rows[1]['median_pos_err'], 0.2)

    def test_count_aggregates(self):
        real = self.counts.aggregates['real_count']
        self.assertEqual((real['min'], real['max']), (4, 10))
        self.assertAlmostEqual(real['mean'], 7.0)
        self.assertAlmostEqual(real['std'], np.std([4, 10, 7]))

    def test_csv(self):
        lines = self.sweep.to_csv().splitlines()
        self.assertEqual(lines[0], 'sigma,trials,failures,median_pos_err,'
                                   'median_offset_err')
        self.assertEqual(len(lines), 3)
        lines = self.counts.to_csv().splitlines()
        self.assertEqual(lines[0], 'trial,real_count,feasible_count')
        self.assertEqual(lines[2], '1,10,1')

    def test_write(self):
        path = os.path.join(self.tmpdir, 'report.json')
        self.sweep.write(path)
        with open(path) as f:
            data = json.load(f)
        self.assertEqual(data['kind'], 'noise-sweep')
        self.assertEqual(data['records'][0]['trial'], 0)
        self.assertEqual(self.sweep.to_json(), self.sweep.to_json())
        self.assertRaises(ValueError, self.sweep.write,
                          os.path.join(self.tmpdir, 'report.txt'))


class StudyTestCase(unittest.TestCase):
    def test_count_study(self):
        report = run_solution_count_study(1, seed=3)
        record = report.records[0]
        self.assertGreaterEqual(record['real_count'],
                                record['feasible_count'])
        self.assertGreaterEqual(record['feasible_count'], 1)
        self.assertEqual(record['feasible_count'], record['candidates'])
        self.assertGreaterEqual(record['feasible_dual'],
                                record['feasible_count'])
        self.assertEqual(record['scored'], 'closest')
        self.assertLess(record['pos_err'], 1e-6)
        self.assertEqual(report.parameters['distribution'], 'gaussian')
        self.assertEqual(report.to_json(),
                         run_solution_count_study(1, seed=3).to_json())

    def test_clean_sweep(self):
        report = run_noise_sweep('7r3s', sigmas=[0.0], trials=1, seed=8)
        row = report.aggregates[0]
        self.assertEqual(row['failures'], 0)
        self.assertLess(row['median_pos_err'], 1e-6)

    def test_bad_arguments(self):
        self.assertRaises(ValueError, run_noise_sweep, '4r4s', trials=1)
        self.assertRaises(ValueError, run_noise_sweep, '6r3s', [-1.0], 1)
        self.assertRaises(ValueError, run_solution_count_study, 0)

    @unittest.skipUnless(SLOW, 'set TDOA_HOMOTOPY_SLOW_TESTS=1')
    def test_count_statistics(self):
        report = run_solution_count_study(500, seed=1)
        real = report.aggregates['real_count']
        feasible = report.aggregates['feasible_count']
        self.assertTrue(6 <= real['mean'] <= 12)
        self.assertLessEqual(real['max'], 150)
        self.assertGreaterEqual(feasible['min'], 1)

    @unittest.skipUnless(SLOW, 'set TDOA_HOMOTOPY_SLOW_TESTS=1')
    def test_noise_monotone(self):
        for kind in ('6r3s', '7r3s', '6r4s', '5r4s', '5r5s'):
            report = run_noise_sweep(kind, [0.0, 1e-6, 1e-4, 1e-2],
                                     trials=100, seed=2)
            rows = report.aggregates
            self.assertLess(rows[0]['p90_pos_err'], 1e-6, kind)
            medians = [row['median_pos_err'] for row in rows]
            self.assertLess(medians[1], 1e-3, kind)
            for a, b in zip(medians, medians[1:]):
                self.assertLessEqual(a, b, kind)


def rigid_motion(rng):
    motion = rotation(rng.uniform(0, 2 * np.pi))
    if rng.random() < 0.5:
        motion = motion @ np.diag([1.0, -1.0])
    return motion, rng.normal(scale=3.0, size=2)


class ProcrustesTestCase(unittest.TestCase):
    def test_recovers_rigid_motions(self):
        rng = np.random.default_rng(50)
        for seed in range(50):
            truth, _ = generate_instance(InstanceSpec(6, 3, 500 + seed))
            moved = truth.transformed(*rigid_motion(rng))
            aligned = align(Calibration(moved.receivers, moved.transmitters,
                                        moved.offsets), truth)
            self.assertLess(relative_errors(aligned, truth)[0], 1e-10, seed)

    def test_optimal_among_rigid_motions(self):
        rng = np.random.default_rng(51)
        for seed in range(50):
            truth, _ = generate_instance(InstanceSpec(5, 4, 600 + seed))
            target = np.vstack([truth.receivers, truth.transmitters])
            noisy = target + rng.normal(scale=0.2, size=target.shape)
            estimate = Calibration(noisy[:5], noisy[5:], truth.offsets)
            best = np.linalg.norm(align(estimate, truth).positions() - target)
            self.assertLessEqual(best, np.linalg.norm(noisy - target) + 1e-12)
            for _ in range(10):
                motion, shift = rigid_motion(rng)
                other = np.linalg.norm(noisy @ motion.T + shift - target)
                self.assertLessEqual(best, other + 1e-12, seed)


class ScoreTestCase(unittest.TestCase):
    def setUp(self):
        self.truth, _ = generate_instance(InstanceSpec(6, 3, 60))
        exact = self.truth.to_calibration()
        receivers = self.truth.receivers.copy()
        receivers[3] += 0.5
        self.far = Calibration(receivers, self.truth.transmitters,
                               self.truth.offsets)
        self.exact = Calibration(exact.receivers, exact.transmitters,
                                 exact.offsets, primal_residual=1e-3)
        self.outcome = SolveOutcome([self.far, self.exact], self.far)

    def test_minimal_scores_closest(self):
        errors, scored, how = _score(self.outcome, self.truth, True)
        self.assertIs(scored, self.exact)
        self.assertEqual(how, 'closest')
        self.assertLess(errors[0], 1e-12)

    def test_subminimal_scores_best(self):
        errors, scored, how = _score(self.outcome, self.truth, False)
        self.assertIs(scored, self.far)
        self.assertEqual(how, 'best')
        self.assertGreater(errors[0], 1e-3)

import os
import unittest

import numpy as np
import sympy

from tdoa_homotopy import DimensionError, Homotopy, NonSquareSystemError, \
    Poly, PolySystem, TrackOptions, deduplicate, newton_refine, \
    run_homotopy, solve_system, start_system, track_path, track_paths
from tdoa_homotopy.bench import InstanceSpec, generate_instance
from tdoa_homotopy.homotopy import CONVERGED, DIVERGED, MAX_STEPS, SINGULAR, \
    PathResult, crossed_paths, failed_early
from tdoa_homotopy.model import build_dual_system, embed_ground_truth

SLOW = os.environ.get('TDOA_HOMOTOPY_SLOW_TESTS') == '1'

DENSE_QUADRATIC = [(2, 0), (1, 1), (0, 2), (1, 0), (0, 1), (0, 0)]


def _match(found, expected, tol):
    if len(found) != len(expected):
        return False
    remaining = list(found)
    for e in expected:
        distances = [np.max(np.abs(f - e)) for f in remaining]
        if not distances or min(distances) > tol:
            return False
        remaining.pop(int(np.argmin(distances)))
    return True


def _univariate_case(rng, degree):
    coefficients = rng.normal(size=degree + 1) + \
        1j * rng.normal(size=degree + 1)
    p = Poly([(c, (degree - k,)) for k, c in enumerate(coefficients)], 1)
    expected = [np.array([r]) for r in np.roots(coefficients)]
    return PolySystem([p]), expected


def _resultant_case(rng):
    x, y = sympy.symbols('x y')
    tables = [dict(zip(DENSE_QUADRATIC, rng.normal(size=6)))
              for _ in range(2)]
    exact = [sum(sympy.Rational(float(c)) * x ** i * y ** j
                 for (i, j), c in table.items()) for table in tables]
    res = sympy.Poly(sympy.resultant(exact[0], exact[1], y), x)
    xs = np.roots([complex(c) for c in res.all_coeffs()])
    system = PolySystem([Poly([(c, e) for e, c in table.items()], 2)
                         for table in tables])
    expected = []
    for x0 in xs:
        # candidate y values from the first equation, keep the common one
        y_coefficients = [sum(c * x0 ** i for (i, j), c in tables[0].items()
                              if j == power) for power in (2, 1, 0)]
        ys = np.roots(y_coefficients)
        y0 = min(ys, key=lambda v: abs(system[1]([x0, v])))
        root, ok = newton_refine(system, [x0, y0], 1e-13, 20)
        expected.append(root)
    return system, expected


def _triangular_case(rng):
    # x^2 = a, y^2 = x + b, z^3 = x y + c
    a, b, c = rng.normal(size=3) + 1j * rng.normal(size=3)
    X, Y, Z = [Poly.variable(i, 3) for i in range(3)]
    system = PolySystem([X * X - a, Y * Y - X - b, Z ** 3 - X * Y - c])
    expected = []
    for x0 in np.roots([1, 0, -a]):
        for y0 in np.roots([1, 0, -(x0 + b)]):
            for z0 in np.roots([1, 0, 0, -(x0 * y0 + c)]):
                expected.append(np.array([x0, y0, z0]))
    return system, expected


class StartSystemTestCase(unittest.TestCase):
    def test_roots_solve_start_system(self):
        system, roots = start_system([3, 2, 4], seed=5)
        self.assertEqual(len(roots), 24)
        self.assertEqual(len(deduplicate(roots, 1e-8)), 24)
        for root in roots:
            self.assertLess(np.max(np.abs(system(root))), 1e-12)

    def test_explicit_constants(self):
        system, roots = start_system([2], constants=[4])
        np.testing.assert_allclose(sorted(r[0].real for r in roots), [-2, 2])
        self.assertRaises(ValueError, start_system, [2], constants=[0])

    def test_bad_degree(self):
        self.assertRaises(ValueError, start_system, [2, 0])

    def test_seeded(self):
        _, a = start_system([3, 3], seed=11)
        _, b = start_system([3, 3], seed=11)
        _, c = start_system([3, 3], seed=12)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.allclose(a, c))


class HomotopyTestCase(unittest.TestCase):
    def setUp(self):
        x, y = Poly.variable(0, 2), Poly.variable(1, 2)
        # circle meets the diagonal in two real points
        self.target = PolySystem([x * x + y * y - 1, x - y])
        self.start, self.roots = start_system([2, 1], seed=3)
        self.homotopy = Homotopy(self.target, self.start,
                                 np.exp(0.7j))
        self.options = TrackOptions()

    def test_endpoints(self):
        np.testing.assert_allclose(self.homotopy.evaluate(self.roots[0], 1.0),
                                   [[0, 0]], atol=1e-12)
        point = [0.3 + 0.1j, -2.0]
        np.testing.assert_allclose(self.homotopy.evaluate(point, 0.0)[0],
                                   self.target(point))
        np.testing.assert_allclose(self.homotopy.at(0.25)(point),
                                   self.homotopy.evaluate(point, 0.25)[0])

    def test_rejects_non_square(self):
        x, y = Poly.variable(0, 2), Poly.variable(1, 2)
        self.assertRaises(NonSquareSystemError, Homotopy,
                          PolySystem([x * y]), self.start, 1.0)
        self.assertRaises(ValueError, Homotopy, self.target, self.start, 2.0)

    def test_track_paths(self):
        results = track_paths(self.homotopy, self.roots, self.options)
        self.assertEqual(len(results), 2)
        self.assertTrue(all(r.status == CONVERGED for r in results))
        found = sorted(r.endpoint[0].real for r in results)
        np.testing.assert_allclose(found, [-0.5 ** 0.5, 0.5 ** 0.5],
                                   atol=1e-10)
        self.assertTrue(all(r.final_residual < 1e-8 for r in results))

    def test_bad_start_point(self):
        result = track_path(self.homotopy, [5.0, 5.0], self.options)
        self.assertEqual(result.status, SINGULAR)
        self.assertEqual(result.steps_taken, 0)

    def test_deficient_system_has_no_spurious_roots(self):
        x, y = Poly.variable(0, 2), Poly.variable(1, 2)
        # Bezout bound 4, but only (1, 1) and (-1, -1) are finite roots
        system = PolySystem([x * x - 1, x * y - 1])
        solutions = solve_system(system)
        expected = [np.array([-1, -1]), np.array([1, 1])]
        self.assertTrue(_match(solutions, expected, 1e-8))

    def test_singular_root_is_rejected(self):
        x, y = Poly.variable(0, 2), Poly.variable(1, 2)
        system = PolySystem([(x - 1) * (x - 1), y - 2])
        run = run_homotopy(system)
        self.assertEqual(run.solutions, [])
        self.assertEqual(run.converged, 0)
        self.assertEqual(len(run.paths), 2)

    def test_deterministic_across_workers(self):
        system, _ = _triangular_case(np.random.default_rng(4))
        serial = solve_system(system, TrackOptions(seed=9, batch_size=3))
        threaded = solve_system(system, TrackOptions(seed=9, batch_size=3,
                                                     workers=4))
        self.assertEqual(len(serial), len(threaded))
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a, b)


class NewtonTestCase(unittest.TestCase):
    def test_refine(self):
        x = Poly.variable(0, 1)
        system = PolySystem([x * x - 2])
        root, ok = newton_refine(system, [1.4], 1e-14, 20)
        self.assertTrue(ok)
        self.assertAlmostEqual(root[0].real, 2 ** 0.5, places=13)

    def test_non_square(self):
        x, y = Poly.variable(0, 2), Poly.variable(1, 2)
        self.assertRaises(NonSquareSystemError, newton_refine,
                          PolySystem([x + y]), [0, 0], 1e-10, 5)


class DeduplicateTestCase(unittest.TestCase):
    def test_clusters(self):
        points = [np.array([1.0]), np.array([1.0 + 1e-12]),
                  np.array([2.0])]
        self.assertEqual(len(deduplicate(points, 1e-8)), 2)
        self.assertRaises(ValueError, deduplicate, points, 0)


class OracleTestCase(unittest.TestCase):
    """Homotopy solutions against independent root finders."""

    def _run(self, count):
        rng = np.random.default_rng(2024)
        matched = 0
        for k in range(count):
            kind = k % 3
            if kind == 0:
                system, expected = _univariate_case(rng, 2 + k % 5)
            elif kind == 1:
                system, expected = _resultant_case(rng)
            else:
                system, expected = _triangular_case(rng)
            options = TrackOptions(seed=k)
            found = solve_system(system, options)
            for x in found:
                self.assertLessEqual(np.max(np.abs(system(x))),
                                     options.endpoint_tol)
            if _match(found, expected, 1e-8):
                matched += 1
        return matched

    def test_small_sample(self):
        self.assertGreaterEqual(self._run(12), 11)

    @unittest.skipUnless(SLOW, 'set TDOA_HOMOTOPY_SLOW_TESTS=1')
    def test_hundred_systems(self):
        self.assertGreaterEqual(self._run(100), 99)


class ExampleTestCase(unittest.TestCase):
    def test_stationary_homotopy(self):
        start, roots = start_system([3, 2], seed=8)
        homotopy = Homotopy(start, start, 1.0)
        results = track_paths(homotopy, roots)
        self.assertEqual(len(results), 6)
        for root, result in zip(roots, results):
            self.assertEqual(result.status, CONVERGED)
            np.testing.assert_allclose(result.endpoint, root, atol=1e-12)

    def test_two_from_one(self):
        x = Poly.variable(0, 1)
        target = PolySystem([x * x - 4])
        start, roots = start_system([2], constants=[1])
        np.testing.assert_allclose(sorted(r[0].real for r in roots), [-1, 1])
        results = track_paths(Homotopy(target, start, np.exp(0.3j)), roots)
        self.assertTrue(all(r.converged for r in results))
        np.testing.assert_allclose(
            sorted(r.endpoint[0].real for r in results), [-2, 2], atol=1e-10)
        solutions = solve_system(target)
        np.testing.assert_allclose([s[0] for s in solutions], [-2, 2],
                                   atol=1e-10)

    def test_constant_equation_has_no_solutions(self):
        x, y = Poly.variable(0, 2), Poly.variable(1, 2)
        system = PolySystem([x - 1, Poly.constant(3, 2)])
        self.assertEqual(solve_system(system), [])
        run = run_homotopy(system)
        self.assertEqual((run.bezout, run.paths), (0, []))
        solutions = solve_system(PolySystem([x - 1, y + 0.5]))
        self.assertEqual(len(solutions), 1)
        np.testing.assert_allclose(solutions[0], [1, -0.5], atol=1e-12)

    def test_solutions_meet_endpoint_tolerance(self):
        system, _ = _triangular_case(np.random.default_rng(5))
        options = TrackOptions(endpoint_tol=1e-9)
        for x in solve_system(system, options):
            self.assertLessEqual(np.max(np.abs(system(x))), 1e-9)


class ProjectiveTestCase(unittest.TestCase):
    def setUp(self):
        x, y = Poly.variable(0, 2), Poly.variable(1, 2)
        self.system = PolySystem([x * x - 1, x * y - 1])
        self.start, self.roots = start_system([2, 2], seed=1)
        patch = np.array([0.3 + 0.4j, -0.5 + 0.1j, 0.2 - 0.6j])
        self.homotopy = Homotopy.projective(self.system, self.start,
                                            np.exp(1.1j), patch)

    def test_chart(self):
        self.assertEqual(self.homotopy.nvars, 3)
        self.assertIs(self.homotopy.affine_target, self.system)
        lifted = self.homotopy.lift(self.roots)
        np.testing.assert_allclose(lifted @ self.homotopy.patch, 1.0)
        np.testing.assert_allclose(self.homotopy.dehomogenize(lifted),
                                   self.roots)
        np.testing.assert_allclose(
            self.homotopy.evaluate(lifted, 1.0), np.zeros((4, 3)), atol=1e-12)
        self.assertRaises(DimensionError, Homotopy.projective, self.system,
                          self.start, 1.0, [1, 2])

    def test_paths_to_infinity(self):
        results = track_paths(self.homotopy, self.roots)
        self.assertEqual(len(results), 4)
        converged = deduplicate([r.endpoint for r in results if r.converged],
                                1e-6)
        self.assertTrue(_match(converged, [np.array([1, 1]),
                                           np.array([-1, -1])], 1e-8))
        self.assertTrue(all(r.status in (DIVERGED, SINGULAR, MAX_STEPS)
                            for r in results if not r.converged))

    def test_affine_tracking_agrees(self):
        system, expected = _triangular_case(np.random.default_rng(6))
        for projective in (True, False):
            for predictor in ('rk4', 'euler'):
                options = TrackOptions(projective=projective,
                                       predictor=predictor)
                self.assertTrue(_match(solve_system(system, options),
                                       expected, 1e-8),
                                (projective, predictor))


class RetrackTestCase(unittest.TestCase):
    def test_crossed_paths(self):
        one = np.array([1.0, 2.0])
        paths = [PathResult(CONVERGED, one, 5, 0.0),
                 PathResult(CONVERGED, np.array([3.0, 0.0]), 5, 0.0),
                 PathResult(CONVERGED, one + 1e-12, 5, 0.0),
                 PathResult(SINGULAR, one, 5, 1.0, t=0.5),
                 PathResult(SINGULAR, one, 5, 1.0, t=1e-4)]
        self.assertEqual(crossed_paths(paths, 1e-8), [0, 2])
        self.assertEqual(failed_early(paths), [3])
        self.assertEqual(crossed_paths(paths[:2], 1e-8), [])

    def test_careful_options(self):
        options = TrackOptions(seed=3, workers=2)
        careful = options.careful()
        self.assertEqual(careful.max_step, options.max_step / 4)
        self.assertLess(careful.min_step, options.min_step)
        self.assertEqual((careful.seed, careful.workers), (3, 2))
        self.assertEqual(options.copy(), options)
        self.assertNotEqual(options.copy(seed=4), options)
        self.assertRaises(ValueError, options.copy, predictor='midpoint')
        self.assertRaises(ValueError, options.copy, retries=-1)

    def test_without_retries(self):
        system, expected = _triangular_case(np.random.default_rng(7))
        run = run_homotopy(system, TrackOptions(retries=0))
        self.assertEqual(run.retracked, 0)
        self.assertTrue(_match(run.solutions, expected, 1e-8))


class DeterminismTestCase(unittest.TestCase):
    def test_workers_do_not_change_results(self):
        rng = np.random.default_rng(77)
        for k in range(50):
            if k % 2:
                system, _ = _triangular_case(rng)
            else:
                system, _ = _univariate_case(rng, 3 + k % 4)
            serial = TrackOptions(seed=k, batch_size=3)
            a = solve_system(system, serial)
            b = solve_system(system, serial.copy(workers=4))
            self.assertEqual(len(a), len(b), k)
            for x, y in zip(a, b):
                np.testing.assert_array_equal(x, y)


class DualRootTestCase(unittest.TestCase):
    """Newton and continuation on the 6r/3s dual system."""

    def setUp(self):
        truth, pr = generate_instance(InstanceSpec(6, 3, 21))
        self.system = build_dual_system(pr, '6r3s')
        self.root = embed_ground_truth(truth).vector()

    def test_refine_perturbed_root(self):
        floor = np.max(np.abs(self.system(self.root)))
        scale = 1.0 + np.max(np.abs(self.root))
        rng = np.random.default_rng(0)
        perturbed = self.root * (1 + 1e-6 * rng.normal(size=len(self.root)))
        refined, _ = newton_refine(self.system, perturbed, 1e-10, 20)
        self.assertLess(np.max(np.abs(self.system(refined))),
                        max(1e-10, 10 * floor))
        self.assertLess(np.max(np.abs(refined - self.root)), 1e-7 * scale)
        self.assertLess(np.max(np.abs(refined.imag)), 1e-10 * scale)

    def test_solve_contains_truth(self):
        solutions = solve_system(self.system)
        scale = 1.0 + np.max(np.abs(self.root))
        gaps = [np.max(np.abs(x - self.root)) for x in solutions]
        self.assertLess(min(gaps), 1e-6 * scale)

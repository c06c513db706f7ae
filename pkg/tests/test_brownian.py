import os
import tempfile
import unittest

import numpy as np
from numpy import testing as npt

from sdebound.brownian import (
    PathSegment, BrownianPath, uniform_grid, sample_path, sample_paths, pin_to_knots, fill_gaps, refine_path,
    LazyRefinement, ito_sum, ito_deterministic, x2_via_parts, x3_via_parts, h_integral, solution_values,
    exact_solution, solution_along_path,
)
from sdebound.coeffs import make_default_coeffs
from sdebound.psi import ConstantPsi
from sdebound.utils import stream
from sdebound.errors import PathError

CS = make_default_coeffs(1.0, 0.25, 0.5)


class TestPathSegment(unittest.TestCase):

    def test_validation(self):
        with self.assertRaises(PathError):
            PathSegment([0.0, 0.5, 0.5], [0.0, 1.0, 2.0])
        with self.assertRaises(PathError):
            PathSegment([0.0, 0.5], [0.0, np.nan])
        with self.assertRaises(PathError):
            PathSegment([0.0, 0.5], [0.0])
        with self.assertRaises(PathError):
            BrownianPath([0.0, 0.5], [0.1, 0.0])
        with self.assertRaises(PathError):
            BrownianPath([0.1, 0.5], [0.0, 0.0])

    def test_interpolation(self):
        seg = PathSegment([0.5, 1.0, 2.0], [1.0, 2.0, 0.0])
        self.assertEqual(seg(0.75), 1.5)
        npt.assert_array_equal(seg([1.0, 1.5]), [2.0, 1.0])
        self.assertEqual((seg.start, seg.end, len(seg)), (0.5, 2.0, 3))

        with self.assertRaises(PathError):
            seg(0.25)
        with self.assertRaises(PathError):
            seg([1.0, 2.5])

        self.assertTrue(seg.contains(1.0))
        self.assertFalse(seg.contains(1.5))
        self.assertFalse(seg.contains(3.0))

        with self.assertRaises(ValueError):
            seg.values[0] = 4.0

    def test_restrict(self):
        path = sample_path(uniform_grid(1.0, 4), seed=3)
        tail = path.restrict(0.5, 1.0)
        self.assertNotIsInstance(tail, BrownianPath)
        self.assertEqual(len(tail), 9)
        self.assertEqual(tail.start, 0.5)
        self.assertEqual(tail(0.75), path(0.75))

        with self.assertRaises(PathError):
            path.restrict(0.01, 0.02)

    def test_csv(self):
        path = BrownianPath([0.0, 0.5, 1.0], [0.0, 0.25, -1.0])
        with tempfile.TemporaryDirectory() as tmp:
            filepath = os.path.join(tmp, 'path.csv')
            path.to_csv(filepath)
            with open(filepath) as f:
                lines = f.read().splitlines()

        self.assertEqual(lines[0], 't,w')
        self.assertEqual(lines[2], '0.5,0.25')
        self.assertEqual(len(lines), 4)


class TestSampling(unittest.TestCase):

    def test_grid(self):
        grid = uniform_grid(1.0, 3)
        self.assertEqual(len(grid), 9)
        self.assertEqual(grid[-1], 1.0)
        self.assertEqual(grid[1], 0.125)

        with self.assertRaises(PathError):
            sample_path([0.1, 0.2], seed=0)
        with self.assertRaises(PathError):
            sample_path([0.0, 0.2, 0.1], seed=0)

    def test_reproducible(self):
        grid = uniform_grid(1.0, 8)
        a = sample_path(grid, seed=(7, 3))
        b = sample_path(grid, seed=(7, 3))
        c = sample_path(grid, seed=(7, 4))
        self.assertEqual(a, b)
        self.assertNotEqual(a, c)
        self.assertEqual(a.values[0], 0.0)

        ## a generator and its stream keys give the same draws
        npt.assert_array_equal(sample_paths(grid, 2, stream(7, 3)), sample_paths(grid, 2, (7, 3)))

    def test_moments(self):
        grid = uniform_grid(1.0, 4)
        values = sample_paths(grid, 8000, seed=11)
        self.assertEqual(values.shape, (8000, 17))

        ## Var W(t) = t; the standard error of a sample variance at n = 8000 is about 0.016 t
        var = values.var(axis=0)
        npt.assert_allclose(var[[4, 8, 16]], [0.25, 0.5, 1.0], rtol=0.08)
        npt.assert_allclose(values.mean(axis=0)[-1], 0.0, atol=0.05)

        ## independent increments
        inc = np.diff(values[:, [0, 8, 16]], axis=1)
        self.assertLess(abs(np.corrcoef(inc.T)[0, 1]), 0.05)


class TestRefinement(unittest.TestCase):

    def test_pin_to_knots(self):
        times = np.linspace(0.0, 1.0, 9)
        free = np.random.default_rng(0).standard_normal((3, 9))
        knot_times = np.array([0.0, 0.5, 1.0])
        knot_values = np.array([0.0, 1.0, -2.0])

        out = pin_to_knots(times, free, knot_times, knot_values)
        self.assertEqual(out.shape, (3, 9))
        npt.assert_array_equal(out[:, [0, 4, 8]], np.broadcast_to(knot_values, (3, 3)))

        ## bridges between knots are the free path minus its chord
        resid = out - free
        npt.assert_allclose(np.diff(resid[:, :5], 2, axis=1), 0.0, atol=1e-12)

    def test_fill_gaps(self):
        rng = stream(5)
        times = np.linspace(0.0, 1.0, 5)
        draws = fill_gaps(np.array([0.0, 1.0]), np.array([0.0, 3.0]), times, rng, size=6000)
        self.assertEqual(draws.shape, (6000, 5))
        npt.assert_array_equal(draws[:, -1], 3.0)

        ## bridge mean 3t and variance t(1 - t)
        npt.assert_allclose(draws.mean(axis=0), 3.0 * times, atol=0.03)
        npt.assert_allclose(draws[:, 2].var(), 0.25, rtol=0.08)

    def test_refine_path(self):
        path = sample_path(uniform_grid(1.0, 3), seed=1)
        fine = refine_path(path, [0.3, 0.01, 0.3], seed=2)
        self.assertIsInstance(fine, BrownianPath)
        self.assertEqual(len(fine), len(path) + 2)
        for t, w in zip(path.times, path.values):
            self.assertEqual(fine(t), w)

        self.assertEqual(refine_path(path, [0.5], seed=2), path)
        self.assertEqual(refine_path(path, [0.3, 0.01], seed=2), fine)

        with self.assertRaises(PathError):
            refine_path(path, [1.5], seed=2)

    def test_lazy(self):
        path = sample_path(uniform_grid(1.0, 3), seed=1)
        lazy = LazyRefinement(path, seed=4)

        self.assertEqual(lazy(0.25), path.values[2])
        w = lazy(0.3)
        self.assertEqual(lazy(0.3), w)
        lazy(0.31)

        again = LazyRefinement(path, seed=4)
        self.assertEqual(again(0.25), path.values[2])
        self.assertEqual(again(0.3), w)

        fine = lazy.to_path()
        self.assertEqual(len(fine), len(path) + 2)
        self.assertEqual(fine(0.3), w)
        self.assertIs(LazyRefinement(path, seed=4).to_path(), path)

        with self.assertRaises(PathError):
            lazy(1.5)

    def test_lazy_law(self):
        ## a single off-grid draw is the bridge between its grid neighbours
        path = BrownianPath([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
        draws = np.array([LazyRefinement(path, seed=(9, i))(0.25) for i in range(4000)])
        npt.assert_allclose(draws.mean(), 0.5, atol=0.03)
        npt.assert_allclose(draws.var(), 0.125, rtol=0.1)


class TestIntegrals(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.path = sample_path(uniform_grid(1.0, 14), seed=(1, 2))

    def test_ito_constant(self):
        path = self.path
        one = lambda t: np.ones_like(t)
        npt.assert_allclose(ito_deterministic(path, one, 0.25, 0.75), path(0.75) - path(0.25), atol=1e-12)

        ## off-grid endpoints are interpolated
        npt.assert_allclose(ito_deterministic(path, one, 0.1, 0.3), path(0.3) - path(0.1), atol=1e-12)

        batch = np.stack([path.values, 2 * path.values])
        npt.assert_allclose(ito_sum(path.times, batch, one, 0.0, 1.0), [path.values[-1], 2 * path.values[-1]], atol=1e-12)

    def test_unresolved(self):
        path = BrownianPath([0.0, 1.0], [0.0, 0.5])
        with self.assertRaises(PathError):
            ito_deterministic(path, CS.f, 0.0, 0.25)
        with self.assertRaises(PathError):
            ito_deterministic(self.path, CS.f, 0.5, 0.25)

    def test_parts(self):
        x2 = ito_deterministic(self.path, CS.f, 0.0, CS.tau1)
        x3 = ito_deterministic(self.path, CS.g, CS.tau1, CS.tau2)
        npt.assert_allclose(x2_via_parts(self.path, CS), x2, atol=1e-3)
        npt.assert_allclose(x3_via_parts(self.path, CS), x3, atol=1e-3)

    def test_h_integral(self):
        self.assertEqual(h_integral(CS, 0.4), 0.0)
        self.assertEqual(h_integral(CS, 0.5), 0.0)
        self.assertGreater(h_integral(CS, 0.75), 0.0)
        self.assertLess(h_integral(CS, 0.75), h_integral(CS, 1.0))


class TestSolution(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.path = sample_path(uniform_grid(1.0, 10), seed=5)
        cls.psi = ConstantPsi(1.0)

    def test_exact_solution(self):
        sol = exact_solution(CS, self.psi, self.path)
        x2 = ito_deterministic(self.path, CS.f, 0.0, 0.25)
        x3 = ito_deterministic(self.path, CS.g, 0.25, 0.5)

        self.assertEqual(sol.x1, 1.0)
        npt.assert_allclose(sol.x2, x2, rtol=1e-12)
        npt.assert_allclose(sol.x3, x3, rtol=1e-12)
        npt.assert_allclose(sol.x4, np.cos(x2) * h_integral(CS, 1.0), rtol=1e-12)

    def test_early_times(self):
        sol = exact_solution(CS, self.psi, self.path, t=0.2)
        self.assertEqual(sol.x1, 0.2)
        self.assertEqual((float(sol.x3), float(sol.x4)), (0.0, 0.0))

        sol = exact_solution(CS, self.psi, self.path, t=0.0)
        npt.assert_array_equal(sol.values(), [0.0, 0.0, 0.0, 0.0])

        ## only [0, tau2] is needed when t >= tau2
        short = self.path.restrict(0.0, 0.5)
        npt.assert_allclose(exact_solution(CS, self.psi, short, t=0.5).values(),
                            exact_solution(CS, self.psi, self.path, t=0.5).values(), rtol=1e-12)

        with self.assertRaises(PathError):
            exact_solution(CS, self.psi, self.path.restrict(0.0, 0.4), t=0.5)
        with self.assertRaises(PathError):
            solution_values(CS, self.psi, self.path.times, self.path.values, 1.5)

    def test_along_path(self):
        sols = solution_along_path(CS, self.psi, self.path)
        self.assertEqual(sols.shape, (len(self.path),))

        end = exact_solution(CS, self.psi, self.path)
        npt.assert_allclose(sols[-1].values()[:3], end.values()[:3], rtol=1e-10, atol=1e-14)
        npt.assert_allclose(sols.x4[-1], end.x4, rtol=1e-4)

        ## X2 is frozen after tau1 and X4 is zero before tau2
        i1 = np.searchsorted(self.path.times, 0.25)
        self.assertTrue(np.all(sols.x2[i1:] == sols.x2[i1]))
        self.assertTrue(np.all(sols.x4[self.path.times < 0.5] == 0.0))


if __name__ == '__main__':
    unittest.main()

import logging
import math
from functools import lru_cache

import numpy as np
from scipy import integrate

from . errors import PathError
from . records import SolutionVec, PathPoint
from . utils import as_generator, check_sorted, integrate_1d, DEFAULT_QUAD_TOL

logger = logging.getLogger(__name__)


class PathSegment:
    """ Brownian values observed on a strictly increasing time grid. Values between grid points are
        read from the piecewise-linear interpolant. Arrays are read-only.
    """

    def __init__(self, times, values):
        times = np.array(times, dtype=np.float64).reshape(-1)
        values = np.array(values, dtype=np.float64).reshape(-1)

        if times.shape != values.shape or len(times) < 1:
            raise PathError('times and values must be non-empty and of equal length, got {} and {}'.format(
                times.shape, values.shape))
        if not check_sorted(times):
            raise PathError('path times must be strictly increasing')
        if not np.all(np.isfinite(values)):
            raise PathError('path values must be finite')

        times.flags.writeable = False
        values.flags.writeable = False
        self.times = times
        self.values = values

    @property
    def start(self):
        return float(self.times[0])

    @property
    def end(self):
        return float(self.times[-1])

    def __len__(self):
        return len(self.times)

    def __call__(self, t):
        """ W(t) from the piecewise-linear interpolant. t must lie in the span. """
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < self.start) or np.any(t_arr > self.end):
            raise PathError('time(s) outside the path span [{}, {}]'.format(self.start, self.end))
        out = np.interp(t_arr, self.times, self.values)
        return float(out) if out.ndim == 0 else out

    def contains(self, t):
        ## t is a grid time of this segment
        i = np.searchsorted(self.times, t)
        return bool(i < len(self.times) and self.times[i] == t)

    def restrict(self, lo, hi):
        """ Grid points in [lo, hi], as a PathSegment. """
        mask = (self.times >= lo) & (self.times <= hi)
        if not np.any(mask):
            raise PathError('no grid points in [{}, {}]'.format(lo, hi))
        return PathSegment(self.times[mask], self.values[mask])

    def to_records(self):
        rows = PathPoint(shape=(len(self),))
        rows.t = self.times
        rows.w = self.values
        return rows

    def to_csv(self, filepath):
        self.to_records().to_csv(filepath)

    def __eq__(self, other):
        return (
            isinstance(other, PathSegment)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return '{}({} points on [{:.6g}, {:.6g}])'.format(self.__class__.__name__, len(self), self.start, self.end)


class BrownianPath(PathSegment):
    """ A PathSegment starting at (0, 0). """

    def __init__(self, times, values):
        super().__init__(times, values)
        if self.times[0] != 0 or self.values[0] != 0:
            raise PathError('a Brownian path starts at W(0) = 0, got W({}) = {}'.format(self.times[0], self.values[0]))


def uniform_grid(T, exp):
    """ 2**exp + 1 equidistant points on [0, T]. """
    return np.linspace(0.0, T, 2 ** int(exp) + 1)


def _check_grid(grid):
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if len(grid) < 1 or grid[0] != 0:
        raise PathError('grid must start at 0')
    if not check_sorted(grid):
        raise PathError('grid must be strictly increasing')
    return grid


def sample_paths(grid, num_paths, seed):
    """ num_paths independent Brownian paths on grid, as a (num_paths, len(grid)) array of values. """
    grid = _check_grid(grid)
    rng = as_generator(seed)
    incr = rng.standard_normal((num_paths, len(grid) - 1)) * np.sqrt(np.diff(grid))
    values = np.zeros((num_paths, len(grid)))
    np.cumsum(incr, axis=-1, out=values[:, 1:])
    return values


def sample_path(grid, seed):
    """ Brownian path on grid. Equal seeds (integers or stream key tuples) give bit-identical paths.

        Example:
            path = sample_path(uniform_grid(1.0, 16), seed=(master_seed, path_index))
    """
    grid = _check_grid(grid)
    return BrownianPath(grid, sample_paths(grid, 1, seed)[0])


def pin_to_knots(times, free, knot_times, knot_values):
    """ Turns free Brownian draws on times into draws conditioned on W(knot_times) = knot_values.

        Between consecutive knots the free path minus its own chord is an independent Brownian bridge;
        adding the chord of the knot values gives the conditional law. knot_times must be a subset of
        times covering its span; free and knot_values may carry leading batch axes.
    """
    kpos = np.searchsorted(times, knot_times)
    knot_values = np.asarray(knot_values, dtype=np.float64)
    out = np.array(free, dtype=np.float64)

    if len(knot_times) >= 2:
        il = np.clip(np.searchsorted(knot_times, times, side='right') - 1, 0, len(knot_times) - 2)
        tl, tr = knot_times[il], knot_times[il + 1]
        lam = (times - tl) / (tr - tl)

        zl, zr = free[..., kpos[il]], free[..., kpos[il + 1]]
        wl, wr = knot_values[..., il], knot_values[..., il + 1]
        out = free - zl - lam * (zr - zl) + wl + lam * (wr - wl)

    ## observed points are reproduced exactly
    out[..., kpos] = knot_values
    return out


def fill_gaps(knot_times, knot_values, times, rng, size=None):
    """ Draws W on times (a superset of knot_times) conditioned on the knot values. size adds a leading
        axis of independent draws.
    """
    shape = (len(times) - 1,) if size is None else (size, len(times) - 1)
    incr = rng.standard_normal(shape) * np.sqrt(np.diff(times))
    free = np.zeros(shape[:-1] + (len(times),))
    np.cumsum(incr, axis=-1, out=free[..., 1:])
    return pin_to_knots(times, free, knot_times, knot_values)


def refine_path(path, extra_times, seed):
    """ Adds extra_times to the path, drawing the new values from the Brownian bridge law given the
        existing points. Existing (time, value) pairs are kept exactly.
    """
    extra = np.unique(np.asarray(extra_times, dtype=np.float64).reshape(-1))
    if len(extra) and (extra[0] < path.start or extra[-1] > path.end):
        raise PathError('extra times must lie in the path span [{}, {}]'.format(path.start, path.end))

    times = np.union1d(path.times, extra)
    if len(times) == len(path.times):
        return path

    values = fill_gaps(path.times, path.values, times, as_generator(seed))
    return path.__class__(times, values)


class LazyRefinement:
    """ A path whose off-grid values are drawn on first use from the bridge law between the nearest
        known neighbours (grid points or earlier draws). Draws agree in law with refine_path and cost
        O(log n) each, so long master paths are never copied.
    """

    def __init__(self, path, seed):
        self.path = path
        self.rng = as_generator(seed)
        self._t = np.empty(0)
        self._w = np.empty(0)

    def __call__(self, s):
        s = float(s)
        times, values = self.path.times, self.path.values
        if not times[0] <= s <= times[-1]:
            raise PathError('time {} outside the path span [{}, {}]'.format(s, times[0], times[-1]))

        i = int(np.searchsorted(times, s))
        if times[i] == s:
            return float(values[i])

        j = int(np.searchsorted(self._t, s))
        if j < len(self._t) and self._t[j] == s:
            return float(self._w[j])

        tl, wl, tr, wr = times[i - 1], values[i - 1], times[i], values[i]
        if j > 0 and self._t[j - 1] > tl:
            tl, wl = self._t[j - 1], self._w[j - 1]
        if j < len(self._t) and self._t[j] < tr:
            tr, wr = self._t[j], self._w[j]

        lam = (s - tl) / (tr - tl)
        mean = (1 - lam) * wl + lam * wr
        var = (tr - s) * (s - tl) / (tr - tl)
        w = float(mean + np.sqrt(var) * self.rng.standard_normal())

        self._t = np.insert(self._t, j, s)
        self._w = np.insert(self._w, j, w)
        return w

    def to_path(self):
        """ The master path with every drawn point inserted. """
        if not len(self._t):
            return self.path
        times = np.concatenate([self.path.times, self._t])
        values = np.concatenate([self.path.values, self._w])
        order = np.argsort(times, kind='stable')
        return self.path.__class__(times[order], values[order])


def _interp_batch(times, values, t):
    ## linear interpolation of the last axis of values at a scalar t inside the span
    i = int(np.clip(np.searchsorted(times, t, side='right') - 1, 0, len(times) - 2))
    lam = (t - times[i]) / (times[i + 1] - times[i])
    return values[..., i] + lam * (values[..., i + 1] - values[..., i])


def _segment(times, values, a, b):
    ## grid points in [a, b] plus interpolated endpoints when a or b is off-grid
    if a < times[0] or b > times[-1] or not a < b:
        raise PathError('[{}, {}] is not an interval inside the path span [{}, {}]'.format(a, b, times[0], times[-1]))

    mask = (times >= a) & (times <= b)
    if np.count_nonzero(mask) < 2:
        raise PathError('path grid does not resolve [{}, {}]: fewer than 2 grid points inside'.format(a, b))

    t = times[mask]
    w = values[..., mask]
    if t[0] > a:
        t = np.concatenate([[a], t])
        w = np.concatenate([_interp_batch(times, values, a)[..., None], w], axis=-1)
    if t[-1] < b:
        t = np.concatenate([t, [b]])
        w = np.concatenate([w, _interp_batch(times, values, b)[..., None]], axis=-1)
    return t, w


def ito_sum(times, values, integrand, a, b):
    """ Left-point sum of integrand(t_i) (W(t_{i+1}) - W(t_i)) over the grid points in [a, b]. values
        may carry leading batch axes.
    """
    t, w = _segment(times, values, a, b)
    return np.sum(integrand(t[:-1]) * np.diff(w, axis=-1), axis=-1)


def ito_deterministic(path, integrand, a, b):
    """ int_a^b integrand(s) dW(s) on path, by left-point sums. """
    return float(ito_sum(path.times, path.values, integrand, a, b))


def parts_integral(times, values, deriv, a, b):
    """ -int_a^b deriv(t) W(t) dt by the trapezoidal rule on the grid. """
    t, w = _segment(times, values, a, b)
    return -integrate.trapezoid(deriv(t) * w, t, axis=-1)


def x2_via_parts(path, cs):
    return float(parts_integral(path.times, path.values, cs.f.deriv, 0.0, cs.tau1))


def x3_via_parts(path, cs):
    return float(parts_integral(path.times, path.values, cs.g.deriv, cs.tau1, cs.tau2))


@lru_cache(maxsize=256)
def h_integral(cs, t, quad_tol=DEFAULT_QUAD_TOL):
    """ int_tau2^t h(s) ds (0 for t <= tau2). """
    if t <= cs.tau2:
        return 0.0
    return integrate_1d(cs.h.eval, cs.tau2, t, tol=quad_tol)


def solution_values(cs, psi, times, values, t):
    """ The four coordinates of the closed-form solution at time t, shape (..., 4), for paths given as
        values (..., len(times)) on a shared grid.
    """
    if not 0 <= t <= times[-1]:
        raise PathError('t = {} outside the path span [0, {}]'.format(t, times[-1]))

    batch = np.shape(values)[:-1]
    out = np.zeros(batch + (4,))
    out[..., 0] = t

    if t > 0:
        out[..., 1] = ito_sum(times, values, cs.f, 0.0, min(t, cs.tau1))
    if t > cs.tau1:
        out[..., 2] = ito_sum(times, values, cs.g, cs.tau1, min(t, cs.tau2))
    if t > cs.tau2:
        out[..., 3] = np.cos(out[..., 1] * psi(out[..., 2])) * h_integral(cs, float(t))

    return out


def exact_solution(cs, psi, path, t=None):
    """ Closed-form solution at t (default T) on the given path:

            X1 = t, X2 = int_0^min(t,tau1) f dW, X3 = 1_{t >= tau1} int_tau1^min(t,tau2) g dW,
            X4 = 1_{t >= tau2} cos(X2(tau1) psi(X3(tau2))) int_tau2^t h ds
    """
    t = cs.T if t is None else t
    end = cs.tau2 if t >= cs.tau2 else t
    if path.end < end:
        raise PathError('path ends at {} and does not resolve [0, {}]'.format(path.end, end))
    return SolutionVec.from_vector(solution_values(cs, psi, path.times, path.values, t))


def solution_along_path(cs, psi, path):
    """ X(t) at every grid time of path, by cumulative left-point sums. Returns a SolutionVec of shape (len(path),). """
    t, w = path.times, path.values
    dw = np.diff(w)

    x2 = np.concatenate([[0.0], np.cumsum(cs.f(t[:-1]) * dw)])
    x3 = np.concatenate([[0.0], np.cumsum(cs.g(t[:-1]) * dw)])

    ## f vanishes after tau1 and g outside [tau1, tau2], so the cumulative sums freeze there
    x2_end = x2[np.searchsorted(t, cs.tau1, side='right') - 1]
    x3_end = x3[np.searchsorted(t, cs.tau2, side='right') - 1]

    hint = np.concatenate([[0.0], integrate.cumulative_trapezoid(cs.h(t), t)])
    x4 = np.where(t >= cs.tau2, math.cos(x2_end * psi(x3_end)) * hint, 0.0)

    return SolutionVec.from_vector(np.stack([t, x2, x3, x4], axis=-1))

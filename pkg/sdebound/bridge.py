import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . brownian import PathSegment, BrownianPath, fill_gaps
from . errors import ObservationError, DuplicateSiteError, PathError, QuadratureError
from . utils import as_generator, DEFAULT_QUAD_TOL

logger = logging.getLogger(__name__)


class ObservationSet:
    """ Information available to a scheme: W observed at distinct sites in (0, delta) and along the
        tail segment on [delta, T].

        Sites may be given in any order. They are kept in the order given (sites_in_order) and sorted
        internally; permutation maps sorted position -> position in the given order.

        Example:
            obs = ObservationSet(0.125, sites=[0.05, 0.02], values=[0.3, -0.1], tail=path.restrict(0.125, 1.0))
            obs.conditional_mean(0.035)
    """

    def __init__(self, delta, sites, values, tail):
        sites = np.array(sites, dtype=np.float64).reshape(-1)
        values = np.array(values, dtype=np.float64).reshape(-1)

        if sites.shape != values.shape:
            raise ObservationError('sites and values must have equal length, got {} and {}'.format(len(sites), len(values)))
        if not isinstance(tail, PathSegment):
            raise ObservationError('tail must be a PathSegment')
        if tail.start != delta:
            raise ObservationError('tail grid must start at delta = {}, starts at {}'.format(delta, tail.start))
        if not 0 < delta <= tail.end:
            raise ObservationError('delta must lie in (0, T], got {}'.format(delta))
        if np.any(sites <= 0) or np.any(sites >= delta):
            raise ObservationError('sites must lie in the open interval (0, {})'.format(delta))

        permutation = np.argsort(sites, kind='stable')
        sorted_sites = sites[permutation]

        ## exact equality test
        dup = np.flatnonzero(np.diff(sorted_sites) == 0)
        if len(dup):
            raise DuplicateSiteError('site {} observed more than once'.format(sorted_sites[dup[0]]))

        for arr in (sites, values, permutation):
            arr.flags.writeable = False

        self.delta = float(delta)
        self.sites_in_order = sites
        self.values_in_order = values
        self.permutation = permutation
        self.tail = tail

        self.knot_times = np.concatenate([[0.0], sorted_sites, [self.delta]])
        self.knot_values = np.concatenate([[0.0], values[permutation], [tail.values[0]]])
        self.knot_times.flags.writeable = False
        self.knot_values.flags.writeable = False

    @property
    def T(self):
        return self.tail.end

    @property
    def sites(self):
        return self.knot_times[1:-1]

    @property
    def values(self):
        return self.knot_values[1:-1]

    def __len__(self):
        return len(self.sites_in_order)

    def with_site(self, site, value):
        """ New ObservationSet with one more observation. """
        return ObservationSet(
            self.delta,
            np.append(self.sites_in_order, site),
            np.append(self.values_in_order, value),
            self.tail,
        )

    def _check_times(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(t > self.T):
            raise ObservationError('time(s) outside [0, {}]'.format(self.T))
        return t

    def conditional_mean(self, t):
        return conditional_mean(self, t)

    def conditional_cov(self, r, t):
        return conditional_cov(self, r, t)

    def __repr__(self):
        return 'ObservationSet(delta={:.6g}, {} sites, tail {!r})'.format(self.delta, len(self), self.tail)


def conditional_mean(obs, t):
    """ E[W(t) | observations]: the piecewise-linear interpolant through (0, 0), the sorted observations
        and (delta, v(delta)) on [0, delta], the tail interpolant v(t) on [delta, T].
    """
    t = obs._check_times(t)
    tail_part = np.interp(t, obs.tail.times, obs.tail.values)
    head_part = np.interp(t, obs.knot_times, obs.knot_values)
    out = np.where(t >= obs.delta, tail_part, head_part)
    return float(out) if out.ndim == 0 else out


def conditional_cov(obs, r, t):
    """ Cov[W(r), W(t) | observations]: the Brownian bridge covariance

            (s_k - max(r, t)) (min(r, t) - s_{k-1}) / (s_k - s_{k-1})

        when r and t share the gap (s_{k-1}, s_k) of [0, delta]; 0 otherwise.
    """
    r = obs._check_times(r)
    t = obs._check_times(t)
    r, t = np.broadcast_arrays(r, t)

    kt = obs.knot_times
    gap_r = np.searchsorted(kt, r, side='right') - 1
    gap_t = np.searchsorted(kt, t, side='right') - 1
    same = (gap_r == gap_t) & (r < obs.delta) & (t < obs.delta)

    k = np.clip(gap_r, 0, len(kt) - 2)
    lo, hi = kt[k], kt[k + 1]
    cov = (hi - np.maximum(r, t)) * (np.minimum(r, t) - lo) / (hi - lo)
    out = np.where(same, cov, 0.0)
    return float(out) if out.ndim == 0 else out


def _conditional_grid(obs, grid):
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if np.any(grid < 0) or np.any(grid > obs.T):
        raise ObservationError('grid must lie in [0, {}]'.format(obs.T))
    out_times = np.union1d([0.0], grid)
    head = np.union1d(obs.knot_times, out_times[out_times <= obs.delta])
    return out_times, head


def sample_conditional_batch(obs, grid, size, seed):
    """ size independent draws of W on union({0}, grid) from its conditional law given obs.
        Returns (times, values) with values of shape (size, len(times)).
    """
    out_times, head = _conditional_grid(obs, grid)
    rng = as_generator(seed)

    head_values = fill_gaps(obs.knot_times, obs.knot_values, head, rng, size=size)

    values = np.empty((size, len(out_times)))
    in_head = out_times <= obs.delta
    values[:, in_head] = head_values[:, np.searchsorted(head, out_times[in_head])]
    values[:, ~in_head] = np.interp(out_times[~in_head], obs.tail.times, obs.tail.values)
    return out_times, values


def sample_conditional(obs, grid, seed):
    """ One draw of W on union({0}, grid) given obs, as a BrownianPath. Independent Brownian bridges are
        pinned at the observed values in each gap of [0, delta]; on [delta, T] the path follows the tail.
    """
    times, values = sample_conditional_batch(obs, grid, 1, seed)
    return BrownianPath(times, values[0])


@dataclass(frozen=True)
class BridgeDecomposition:
    """ w = outer on [0, t0] u [t1, upper] and w = bridge + chord on [t0, t1]. """
    t0: float
    t1: float
    w0: float
    w1: float
    outer: PathSegment
    bridge: PathSegment

    def chord(self, t):
        lam = (np.asarray(t, dtype=np.float64) - self.t0) / (self.t1 - self.t0)
        return (1 - lam) * self.w0 + lam * self.w1

    def reconstruct(self):
        """ Bridge plus chord on the bridge grid. """
        return self.bridge.values + self.chord(self.bridge.times)


def bridge_decompose(path, t0, t1, upper=None):
    """ Splits path into its restriction to [0, t0] u [t1, upper] and the bridge

            B(t) = w(t) - (t1 - t)/(t1 - t0) w(t0) - (t - t0)/(t1 - t0) w(t1)    on [t0, t1].

        w(t0) and w(t1) are read from the interpolant when off-grid; B(t0) = B(t1) = 0 exactly.
    """
    upper = path.end if upper is None else upper
    if not t0 < t1:
        raise PathError('bridge interval needs t0 < t1, got [{}, {}]'.format(t0, t1))
    if t0 < path.start or t1 > path.end or upper < t1 or upper > path.end:
        raise PathError('[{}, {}] with upper {} is outside the path span [{}, {}]'.format(t0, t1, upper, path.start, path.end))

    w0, w1 = float(path(t0)), float(path(t1))

    inner = (path.times > t0) & (path.times < t1)
    bt = np.concatenate([[t0], path.times[inner], [t1]])
    lam = (path.times[inner] - t0) / (t1 - t0)
    bv = np.concatenate([[0.0], path.values[inner] - ((1 - lam) * w0 + lam * w1), [0.0]])

    left = path.times < t0
    right = (path.times > t1) & (path.times <= upper)
    ot = np.concatenate([path.times[left], [t0, t1], path.times[right]])
    ov = np.concatenate([path.values[left], [w0, w1], path.values[right]])

    return BridgeDecomposition(
        t0=float(t0), t1=float(t1), w0=w0, w1=w1, outer=PathSegment(ot, ov), bridge=PathSegment(bt, bv)
    )


def bridge_functional_variance(fprime, t0, t1, quad_tol=DEFAULT_QUAD_TOL):
    """ Variance of -int_t0^t1 fprime(t) B(t) dt for a Brownian bridge B pinned to 0 at t0 and t1:

            int int fprime(r) fprime(t) (t1 - max(r, t)) (min(r, t) - t0) / (t1 - t0) dr dt

        evaluated as twice the integral over the triangle r < t.
    """
    if not t0 < t1:
        raise ObservationError('bridge interval needs t0 < t1, got [{}, {}]'.format(t0, t1))

    gap = t1 - t0

    def kernel(r, t):
        return float(fprime(r)) * float(fprime(t)) * (t1 - t) * (r - t0) / gap

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        value, abserr = integrate.dblquad(
            kernel, t0, t1, lambda t: t0, lambda t: t, epsabs=quad_tol / 2, epsrel=0.0
        )

    if abserr > 10 * quad_tol:
        raise QuadratureError('double quadrature on [{}, {}] did not reach {:.1e} (estimate {:.3e})'.format(
            t0, t1, quad_tol, abserr))

    return 2.0 * value


def conditional_functional_variance(fprime, obs_or_sites, delta=None, quad_tol=DEFAULT_QUAD_TOL):
    """ Var[-int_0^delta fprime W dt | W at the sites, W(delta)]: the sum of bridge_functional_variance
        over the gaps of 0 < s_1 < ... < s_n < delta.
    """
    if isinstance(obs_or_sites, ObservationSet):
        knots = obs_or_sites.knot_times
    else:
        sites = np.sort(np.asarray(obs_or_sites, dtype=np.float64).reshape(-1))
        if delta is None:
            raise ObservationError('delta is required when sites are given directly')
        knots = np.concatenate([[0.0], sites, [delta]])

    return float(sum(bridge_functional_variance(fprime, a, b, quad_tol) for a, b in zip(knots[:-1], knots[1:])))


def conditional_variance_floor(alpha, delta, n):
    """ alpha delta^3 / (96 n^2), a lower bound of conditional_functional_variance for n >= 1 sites when
        |fprime| >= sqrt(alpha) with constant sign on [0, delta].
    """
    return alpha * delta ** 3 / (96.0 * n ** 2)

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from . bridge import ObservationSet, sample_conditional_batch
from . brownian import LazyRefinement, PathSegment, sample_path, uniform_grid, solution_values
from . errors import SchemeError, NonTerminatingSchemeError, ObservationError
from . records import SolutionVec
from . utils import as_generator, standard_error, stream, stream_keys

logger = logging.getLogger(__name__)


class AdaptiveScheme(ABC):
    """ A strategy (next_site, should_stop, estimate) that observes the tail of W on [delta, T] and then
        evaluates W sequentially at sites in (0, delta), each chosen from the observations so far.

        Subclasses are immutable; all state of a run lives in the ObservationSet passed to each method.
    """

    label = 'scheme'

    ## end of the time interval; used for default grids
    horizon = 1.0

    @abstractmethod
    def next_site(self, obs):
        """ Next evaluation site in (0, obs.delta), given the observations so far. """

    @abstractmethod
    def should_stop(self, obs):
        """ True once the scheme has seen enough. """

    @abstractmethod
    def estimate(self, obs):
        """ Approximation of X(T) from the observations, as a SolutionVec. """

    def estimate_for_run(self, obs, seed):
        """ estimate() inside run_scheme; seed is the stream key of the run. """
        return self.estimate(obs)

    def declared_cost(self, delta):
        """ Number of (0, delta) evaluations the scheme will use, or None if it depends on the path. """
        return None

    def __repr__(self):
        return '{}({})'.format(self.__class__.__name__, self.label)


class FixedSiteScheme(AdaptiveScheme):
    """ Non-adaptive scheme: evaluates the sites returned by sites_for(delta) in order, then stops. """

    def sites_for(self, delta):
        raise NotImplementedError()

    def check_sites(self, delta):
        """ Sites for delta, checked to lie in (0, delta) and to be distinct. Raises ObservationError. """
        sites = np.asarray(self.sites_for(delta), dtype=np.float64)
        if len(sites) and (np.min(sites) <= 0 or np.max(sites) >= delta):
            raise ObservationError('{} has sites outside (0, {})'.format(self, delta))
        if len(np.unique(sites)) != len(sites):
            raise ObservationError('{} repeats a site'.format(self))
        return sites

    def next_site(self, obs):
        sites = self.sites_for(obs.delta)
        if len(obs) >= len(sites):
            raise SchemeError('{} has no sites left'.format(self))
        return float(sites[len(obs)])

    def should_stop(self, obs):
        return len(obs) >= len(self.sites_for(obs.delta))

    def declared_cost(self, delta):
        return len(self.sites_for(delta))


class FixedSites(FixedSiteScheme):
    """ Evaluates the given sites and estimates X(T) by Euler on the sites plus the tail grid. """

    label = 'fixed'

    def __init__(self, sites, cs=None, psi=None):
        self.sites = tuple(float(s) for s in sites)
        self.cs = cs
        self.psi = psi
        if cs is not None:
            self.horizon = cs.T

    def sites_for(self, delta):
        return self.sites

    def estimate(self, obs):
        if self.cs is None:
            return SolutionVec(x1=obs.T)
        return euler_on_observations(self.cs, self.psi, obs)


@dataclass(frozen=True, eq=False)
class RunRecord:
    nu: int
    estimate: SolutionVec
    sites: np.ndarray

    def __post_init__(self):
        if self.nu != len(self.sites) or self.nu < 1:
            raise SchemeError('a run record needs nu = len(sites) >= 1, got nu={} with {} sites'.format(self.nu, len(self.sites)))

    def __eq__(self, other):
        return (
            isinstance(other, RunRecord)
            and self.nu == other.nu
            and np.array_equal(self.sites, other.sites)
            and np.array_equal(self.estimate.values(), other.estimate.values())
        )


def tail_segment(view, delta, T, stride=1):
    """ Tail observation on [delta, T]: W(delta) plus every stride-th grid point of the master path in (delta, T]. """
    times = view.path.times
    grid = times[::stride]
    if grid[-1] != times[-1]:
        grid = np.append(grid, times[-1])
    grid = grid[(grid > delta) & (grid <= T)]
    values = np.concatenate([[view(delta)], view.path.values[np.searchsorted(times, grid)]])
    return PathSegment(np.concatenate([[delta], grid]), values)


def run_scheme(scheme, delta, path, nu_cap, seed, tail_stride=1):
    """ Runs scheme on one master path: observe the tail on [delta, T], then alternate site selection,
        evaluation of W and the stopping test until the scheme stops.

        Off-grid sites (and delta itself) are drawn from the Brownian bridge between their neighbours, so
        scheme and exact solution share one trajectory. Raises DuplicateSiteError for a repeated site and
        NonTerminatingSchemeError if nu would exceed nu_cap.
    """
    if nu_cap < 1:
        raise ValueError('nu_cap must be >= 1')
    if not 0 < delta <= path.end:
        raise ObservationError('delta must lie in (0, {}], got {}'.format(path.end, delta))

    view = LazyRefinement(path, seed)
    obs = ObservationSet(delta, [], [], tail_segment(view, delta, path.end, tail_stride))

    for _ in range(nu_cap):
        site = scheme.next_site(obs)
        if not 0 < site < delta:
            raise ObservationError('{} chose site {} outside (0, {})'.format(scheme, site, delta))
        obs = obs.with_site(site, view(site))
        if scheme.should_stop(obs):
            break
    else:
        raise NonTerminatingSchemeError('{} did not stop within {} evaluations'.format(scheme, nu_cap))

    estimate = scheme.estimate_for_run(obs, seed)
    return RunRecord(nu=len(obs), estimate=estimate, sites=np.array(obs.sites_in_order))


def euler_on_grid(cs, psi, times, w):
    """ Euler-Maruyama iterate at times[-1] for

            dX = (1, 0, 0, h(X1) cos(X2 psi(X3))) dt + (0, f(X1), g(X1), 0) dW,   X(0) = 0

        driven by W sampled at times. w may carry leading batch axes. Returns shape (..., 4).
    """
    times = np.asarray(times, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    dt = np.diff(times)
    dw = np.diff(w, axis=-1)
    tk = times[:-1]

    ## X2, X3 before each step
    x2 = np.cumsum(cs.f(tk) * dw, axis=-1)
    x3 = np.cumsum(cs.g(tk) * dw, axis=-1)
    x2_prev = np.concatenate([np.zeros(x2.shape[:-1] + (1,)), x2[..., :-1]], axis=-1)
    x3_prev = np.concatenate([np.zeros(x3.shape[:-1] + (1,)), x3[..., :-1]], axis=-1)

    ## h vanishes before tau2, skip the psi evaluations there
    active = cs.h(tk) != 0
    x4 = np.zeros(w.shape[:-1])
    if np.any(active):
        drift = np.cos(x2_prev[..., active] * psi(x3_prev[..., active]))
        x4 = np.sum(cs.h(tk[active]) * drift * dt[active], axis=-1)

    out = np.zeros(w.shape[:-1] + (4,))
    out[..., 0] = times[-1] - times[0]
    out[..., 1] = x2[..., -1]
    out[..., 2] = x3[..., -1]
    out[..., 3] = x4
    return out


def euler_on_observations(cs, psi, obs, head_times=None):
    """ Euler on 0, the observed sites (or head_times), delta and the tail grid, with W read from the
        observations and the tail interpolant.
    """
    head = obs.knot_times if head_times is None else np.union1d([0.0, obs.delta], head_times)
    times = np.union1d(head, obs.tail.times)
    return SolutionVec.from_vector(euler_on_grid(cs, psi, times, obs.conditional_mean(times)))


class EulerEquidistant(FixedSiteScheme):
    """ Euler-Maruyama with n equidistant steps kT/n. The scheme evaluates W at the nodes in (0, delta)
        (delta/2 if there are none) and reads the nodes in [delta, T] from the tail.
    """

    label = 'euler'

    def __init__(self, cs, psi, n):
        if n < 1:
            raise ValueError('n must be >= 1, got {}'.format(n))
        self.cs = cs
        self.psi = psi
        self.n = int(n)
        self.horizon = cs.T

    @property
    def nodes(self):
        return np.linspace(0.0, self.cs.T, self.n + 1)

    def sites_for(self, delta):
        nodes = self.nodes
        sites = nodes[(nodes > 0) & (nodes < delta)]
        return sites if len(sites) else np.array([delta / 2])

    def estimate(self, obs):
        nodes = self.nodes
        return SolutionVec.from_vector(euler_on_grid(self.cs, self.psi, nodes, obs.conditional_mean(nodes)))

    def __repr__(self):
        return 'EulerEquidistant(n={})'.format(self.n)


def euler_equidistant(cs, psi, n):
    return EulerEquidistant(cs, psi, n)


class GapRefiner(AdaptiveScheme):
    """ Adaptive site choice: first delta/2, then the midpoint of the gap of [0, delta] with the largest
        |increment| * sqrt(length) score. Ties go to the longest gap, then the leftmost. Stops after
        budget sites and estimates X(T) by Euler on the induced grid.
    """

    label = 'gap_refiner'

    def __init__(self, cs, psi, budget):
        if budget < 2:
            raise ValueError('budget must be >= 2, got {}'.format(budget))
        self.cs = cs
        self.psi = psi
        self.budget = int(budget)
        self.horizon = cs.T

    def next_site(self, obs):
        if len(obs) == 0:
            return obs.delta / 2

        gaps = np.diff(obs.knot_times)
        score = np.abs(np.diff(obs.knot_values)) * np.sqrt(gaps)

        candidates = np.flatnonzero(score == np.max(score))
        longest = candidates[gaps[candidates] == np.max(gaps[candidates])]
        k = int(longest[0])
        return float(0.5 * (obs.knot_times[k] + obs.knot_times[k + 1]))

    def should_stop(self, obs):
        return len(obs) >= self.budget

    def estimate(self, obs):
        return euler_on_observations(self.cs, self.psi, obs)

    def declared_cost(self, delta):
        return self.budget

    def __repr__(self):
        return 'GapRefiner(budget={})'.format(self.budget)


def adaptive_gap_refiner(cs, psi, budget):
    return GapRefiner(cs, psi, budget)


class ConditionalMeanEstimator(FixedSiteScheme):
    """ Evaluates W at fixed sites and estimates X(T) by the componentwise mean (or median) of the
        closed-form solution over inner_mc draws of W from its conditional law given the observations.
    """

    label = 'cond_mean'

    def __init__(self, cs, psi, sites, inner_mc, seed=0, statistic='mean', head_points=257):
        if inner_mc < 1:
            raise ValueError('inner_mc must be >= 1, got {}'.format(inner_mc))
        if statistic not in ('mean', 'median'):
            raise ValueError('statistic must be "mean" or "median", got {!r}'.format(statistic))
        if head_points < 2:
            raise ValueError('head_points must be >= 2, got {}'.format(head_points))
        sites = tuple(float(s) for s in sites)
        if len(set(sites)) != len(sites):
            raise ObservationError('sites must be distinct')

        self.cs = cs
        self.psi = psi
        self.sites = sites
        self.inner_mc = int(inner_mc)
        self.seed = seed
        self.statistic = statistic
        self.head_points = int(head_points)
        self.horizon = cs.T
        if statistic == 'median':
            self.label = 'cond_median'

    def sites_for(self, delta):
        return self.sites

    def estimate(self, obs):
        return self._estimate(obs, as_generator(self.seed))

    def estimate_for_run(self, obs, seed):
        ## inner draws keyed by (scheme seed, run seed): independent across master paths
        return self._estimate(obs, stream(*stream_keys(self.seed), *stream_keys(seed)))

    def _estimate(self, obs, rng):
        head = np.linspace(0.0, obs.delta, self.head_points)
        grid = np.union1d(np.union1d(head, obs.sites), obs.tail.times)
        times, values = sample_conditional_batch(obs, grid, self.inner_mc, rng)

        draws = solution_values(self.cs, self.psi, times, values, self.cs.T)
        est = np.mean(draws, axis=0) if self.statistic == 'mean' else np.median(draws, axis=0)
        est[0] = self.cs.T
        return SolutionVec.from_vector(est)

    def __repr__(self):
        return 'ConditionalMeanEstimator({} sites, inner_mc={}, {})'.format(len(self.sites), self.inner_mc, self.statistic)


def conditional_mean_estimator(cs, psi, sites, inner_mc, seed=0, statistic='mean', head_points=257):
    return ConditionalMeanEstimator(cs, psi, sites, inner_mc, seed=seed, statistic=statistic, head_points=head_points)


def euler_steps_for_budget(N, T, delta):
    """ Largest n whose equidistant nodes in (0, delta) number at most N. """
    n = int(math.floor((N + 1) * T / delta))
    while n > 1 and np.count_nonzero((np.arange(1, n + 1) * (T / n)) < delta) > N:
        n -= 1
    return max(n, 1)


def equispaced_sites(N, delta):
    """ k delta / (N + 1) for k = 1..N. """
    return np.arange(1, N + 1) * (delta / (N + 1))


def cost(scheme, delta, trials, master_seed, grid=None, nu_cap=10_000, tail_stride=1):
    """ Monte Carlo estimate of E nu over trials master paths. Returns (mean, standard error). """
    if trials < 1:
        raise ValueError('trials must be >= 1')
    grid = uniform_grid(scheme.horizon, 10) if grid is None else grid

    nus = np.empty(trials)
    for i in range(trials):
        path = sample_path(grid, (master_seed, i))
        nus[i] = run_scheme(scheme, delta, path, nu_cap, (master_seed, i, 1), tail_stride).nu

    return float(np.mean(nus)), standard_error(nus)


def in_class(measured_cost, N):
    """ Class membership: expected number of (0, delta) evaluations at most N. """
    return measured_cost <= N

import logging
import math
from dataclasses import dataclass

import numpy as np

from . errors import PlanError, PsiRangeError
from . psi import plateau_value, compute_N0
from . records import BoundRow
from . utils import integrate_1d, DEFAULT_QUAD_TOL

logger = logging.getLogger(__name__)

## half-width, in standard deviations, of the quadrature range of sine_moment
SINE_MOMENT_SPAN = 15.0

## smallest tau for which the cosine series of E|sin Y| is used
SINE_SERIES_MIN_TAU = 0.25


def thm1_parts(consts, psi, tau1, delta, N):
    """ (raw bound, D_N, psi^-1(D_N)) of the lower bound at budget N. """
    if N < 1:
        raise ValueError('N must be >= 1, got {}'.format(N))
    if not delta > 0:
        raise ValueError('delta must be positive, got {}'.format(delta))

    D = plateau_value(consts.alpha, delta, tau1, N)
    x = psi.inv(D)
    raw = consts.c1 * math.exp(-x * x / consts.beta) - consts.c2 / N
    return raw, D, x


def thm1_bound(consts, psi, tau1, delta, N):
    """ c1 exp(-psi^-1(D_N)^2 / beta) - c2/N with D_N = (1 + sqrt(96/(alpha min(delta, tau1/2)^3))) N^3.

        The raw value is returned; it is negative when the bound is vacuous.
    """
    return thm1_parts(consts, psi, tau1, delta, N)[0]


def kappa(plan, consts):
    """ a_N0 / a_1. """
    N0 = compute_N0(plan, consts.c1, consts.c2)
    return plan.a_N(N0) / plan.a_N(1)


def cor3_bound(plan, consts, N):
    """ kappa * a_N, with kappa = a_N0 / a_1. Raises PlanError when N is beyond the stored prefix. """
    if not 1 <= N <= len(plan):
        raise PlanError('N = {} is outside the stored prefix 1..{}'.format(N, len(plan)))
    return kappa(plan, consts) * plan.a_N(N)


def sine_moment_bound():
    """ exp(-pi^2/8) / sqrt(8 pi), a lower bound of E|sin Y| for Y ~ N(a, tau^2), tau >= 1. """
    return math.exp(-math.pi ** 2 / 8) / math.sqrt(8 * math.pi)


def _sine_moment_series(a, tau, tol):
    ## |sin y| = 2/pi - (4/pi) sum_k cos(2ky)/(4k^2 - 1) and E cos(2kY) = cos(2ka) exp(-2 k^2 tau^2)
    total = 2 / math.pi
    k = 1
    while True:
        damp = math.exp(-2.0 * k * k * tau * tau)
        total -= (4 / math.pi) * math.cos(2 * k * a) * damp / (4 * k * k - 1)
        ## remaining terms are bounded by damp / (4k^2 - 1) times a geometric factor below 1
        if (4 / math.pi) * damp / (4 * k * k - 1) < tol * 1e-2:
            return total
        k += 1


def sine_moment(a, tau, quad_tol=DEFAULT_QUAD_TOL):
    """ E|sin Y| for Y ~ N(a, tau^2), to absolute tolerance quad_tol.

        For tau >= 1/4 the cosine series of |sin| is summed in closed form term by term; below that the
        Gaussian integral is evaluated by adaptive quadrature with the zeros of sin as breakpoints.
    """
    if not tau > 0:
        raise ValueError('tau must be positive, got {}'.format(tau))

    if tau >= SINE_SERIES_MIN_TAU:
        return _sine_moment_series(a, tau, quad_tol)

    lo, hi = a - SINE_MOMENT_SPAN * tau, a + SINE_MOMENT_SPAN * tau
    zeros = [k * math.pi for k in range(math.ceil(lo / math.pi), math.floor(hi / math.pi) + 1)]
    norm = 1.0 / (tau * math.sqrt(2 * math.pi))

    def integrand(y):
        return abs(math.sin(y)) * norm * math.exp(-0.5 * ((y - a) / tau) ** 2)

    return integrate_1d(integrand, lo, hi, tol=quad_tol, points=zeros)


@dataclass(frozen=True)
class BoundCurve:
    N_values: np.ndarray
    bound_values: np.ndarray
    increasing_tail: bool = False

    def __post_init__(self):
        if len(self.N_values) != len(self.bound_values):
            raise ValueError('N_values and bound_values must have equal length')
        if np.any(np.diff(self.N_values) <= 0):
            raise ValueError('N_values must be strictly increasing')


def _per_N(delta, N_values):
    delta = np.asarray(delta, dtype=np.float64)
    return np.broadcast_to(delta, (len(N_values),))


def superpoly_diagnostic(psi, consts, tau1, delta, q, N_range):
    """ N^q exp(-psi^-1(D_N)^2 / beta) = N^q (thm1_bound + c2/N) / c1 over N_range, flagged when it is
        strictly increasing over the second half of the range. delta is a scalar or one value per N.
    """
    if not q >= 0:
        raise ValueError('q must be non-negative, got {}'.format(q))

    N_values = np.asarray(list(N_range), dtype=np.int64)
    deltas = _per_N(delta, N_values)

    values = np.empty(len(N_values))
    for i, (N, dl) in enumerate(zip(N_values, deltas)):
        x = psi.inv(plateau_value(consts.alpha, float(dl), tau1, int(N)))
        values[i] = float(N) ** q * math.exp(-x * x / consts.beta)

    tail = values[len(values) // 2:]
    increasing = bool(len(tail) > 1 and np.all(np.diff(tail) > 0))

    return BoundCurve(N_values=N_values, bound_values=values, increasing_tail=increasing)


def bound_rows(consts, psi, tau1, delta, N_values):
    """ BoundRow records (N, raw_bound, clamped_bound, D_N, psi_inv_DN, extrapolated_flag). """
    N_values = np.asarray(list(N_values), dtype=np.int64)
    deltas = _per_N(delta, N_values)
    rows = BoundRow(shape=(len(N_values),))

    for i, (N, dl) in enumerate(zip(N_values, deltas)):
        try:
            raw, D, x = thm1_parts(consts, psi, tau1, float(dl), int(N))
        except PsiRangeError as e:
            logger.warning('no bound at N=%d: %s', N, e)
            raw, D, x = np.nan, plateau_value(consts.alpha, float(dl), tau1, int(N)), np.nan

        extrapolated = psi.is_extrapolated(D)
        if extrapolated:
            logger.warning('bound at N=%d uses psi beyond its last stored knot', N)

        rows.N[i] = N
        rows.raw_bound[i] = raw
        rows.clamped_bound[i] = max(0.0, raw) if np.isfinite(raw) else np.nan
        rows.D_N[i] = D
        rows.psi_inv_DN[i] = x
        rows.extrapolated_flag[i] = extrapolated

    return rows

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . errors import PlanError, PsiRangeError
from . utils import clamped_exp, safe_reciprocal, check_sorted

logger = logging.getLogger(__name__)

## |x - b_N| <= KNOT_TOL * (1 + |b_N|) is treated as x == b_N
KNOT_TOL = 1e-15

## absolute x tolerance of psi_inv
INV_XTOL = 1e-12

## largest argument psi_inv will search to
MAX_ABS_X = 1e300

## names usable in plan expressions, besides N, T and tau1
_EXPR_NAMESPACE = {
    name: getattr(np, name)
    for name in ('log', 'log1p', 'exp', 'sqrt', 'minimum', 'maximum', 'power', 'abs', 'pi', 'e')
}
_EXPR_NAMESPACE.update(min=np.minimum, max=np.maximum, ln=np.log)


def evaluate_sequence(expr, length, **params):
    """ Evaluates an expression in N (and the given params) for N = 1..length into a float array.

        Example:
            evaluate_sequence('1/log(N+1)', 5)
    """
    N = np.arange(1, length + 1, dtype=np.float64)
    namespace = dict(_EXPR_NAMESPACE, N=N, **params)
    try:
        values = eval(compile(expr, '<plan expression>', 'eval'), {'__builtins__': {}}, namespace)
    except Exception as e:
        raise PlanError('Could not evaluate plan expression {!r}: {}'.format(expr, e)) from e

    values = np.broadcast_to(np.asarray(values, dtype=np.float64), N.shape).copy()
    if not np.all(np.isfinite(values)):
        raise PlanError('Plan expression {!r} produced non-finite values'.format(expr))
    return values


@dataclass(frozen=True)
class RatePlan:
    """ Target errors a_N and interval lengths delta_N for N = 1..len(a). a[0] is a_1.
    """
    a: np.ndarray
    delta: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        delta = np.asarray(self.delta, dtype=np.float64)

        if a.ndim != 1 or a.shape != delta.shape or len(a) < 1:
            raise PlanError('a and delta must be 1D sequences of equal, positive length')
        if not np.all(a > 0):
            raise PlanError('a_N must be positive')
        if not check_sorted(-a, strict=True):
            raise PlanError('a_N must be strictly decreasing over the stored prefix')
        if not (np.all(delta > 0) and np.all(delta <= self.T)):
            raise PlanError('delta_N must lie in (0, T]')
        if not check_sorted(-delta, strict=False):
            raise PlanError('delta_N must be non-increasing over the stored prefix')

        a.flags.writeable = False
        delta.flags.writeable = False
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'delta', delta)

    @classmethod
    def from_expressions(cls, a_expr, delta_expr, length, T=1.0, tau1=None):
        params = dict(T=T) if tau1 is None else dict(T=T, tau1=tau1)
        return cls(
            a=evaluate_sequence(a_expr, length, **params),
            delta=evaluate_sequence(delta_expr, length, **params),
            T=T,
        )

    def __len__(self):
        return len(self.a)

    def a_N(self, N):
        if not 1 <= N <= len(self.a):
            raise PlanError('N = {} is outside the stored prefix 1..{}'.format(N, len(self.a)))
        return float(self.a[N - 1])

    def delta_N(self, N):
        if not 1 <= N <= len(self.delta):
            raise PlanError('N = {} is outside the stored prefix 1..{}'.format(N, len(self.delta)))
        return float(self.delta[N - 1])


def plateau_value(alpha, delta, tau1, N):
    """ (1 + sqrt(96/(alpha min(delta, tau1/2)^3))) N^3, the psi value the lower bound is evaluated at. """
    m = min(delta, tau1 / 2)
    return (1.0 + math.sqrt(96.0 / (alpha * m ** 3))) * float(N) ** 3


def compute_N0(plan, c1, c2):
    """ Least N in the stored prefix with a_N + c2/N <= c1. """
    N = np.arange(1, len(plan) + 1, dtype=np.float64)
    ok = np.flatnonzero(plan.a + c2 / N <= c1)
    if len(ok) == 0:
        raise PlanError(
            'No N <= {} satisfies a_N + c2/N <= c1 (c1={:.4g}, c2={:.4g}, smallest a_N + c2/N = {:.4g}); '
            'extend the prefix or scale the target sequence'.format(len(plan), c1, c2, float(np.min(plan.a + c2 / N))))
    return int(ok[0]) + 1


class Psi:
    """ Interface shared by the psi functions: vectorized __call__ and a scalar inverse. """

    def __call__(self, x):
        raise NotImplementedError()

    def inv(self, y):
        raise NotImplementedError()

    def is_extrapolated(self, y):
        return False


class ConstantPsi(Psi):
    """ psi = value everywhere; not invertible. Used for mild-psi experiments. """

    def __init__(self, value=1.0):
        self.value = float(value)

    def __call__(self, x):
        return np.full(np.shape(x), self.value) if np.ndim(x) else self.value

    def inv(self, y):
        raise PsiRangeError('a constant psi has no inverse')


class AffinePsi(Psi):
    """ psi(x) = slope * x + intercept. Fails the growth hypothesis of the superpolynomial bound. """

    def __init__(self, slope=1.0, intercept=0.0):
        if not slope > 0:
            raise ValueError('slope must be positive')
        self.slope = float(slope)
        self.intercept = float(intercept)

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=np.float64) + self.intercept if np.ndim(x) else self.slope * x + self.intercept

    def inv(self, y):
        return (y - self.intercept) / self.slope


class PsiSpec(Psi):
    """ Smooth, positive, strictly increasing psi glued from knots b and plateau values d (N >= N0):

            psi(x) = d_N0 (1 - exp(1/(x - b_N0)))                                        x < b_N0
            psi(b_N) = d_N
            psi(x) = d_{N-1} + (d_N - d_{N-1}) / (1 + exp(1/(x - b_{N-1}) - 1/(b_N - x)))   b_{N-1} < x < b_N

        Beyond the last stored knot the knot sequences continue affinely with the last spacings,
        b_{L+j} = b_L + j db and d_{L+j} = d_L + j dd. psi keeps its logistic steps between these virtual
        knots, so it meets the last secant line at every virtual knot but is not affine in between.
    """

    def __init__(self, N0, b, d, alpha, beta):
        b = np.array(b, dtype=np.float64)
        d = np.array(d, dtype=np.float64)

        if len(b) < 2 or b.shape != d.shape:
            raise PlanError('psi needs at least two knots and as many plateau values as knots')
        if not check_sorted(b):
            raise PlanError('knots b_N must be strictly increasing')
        if not check_sorted(d):
            raise PlanError('plateau values d_N must be strictly increasing')
        if not d[0] > 0:
            raise PlanError('plateau values d_N must be positive')

        b.flags.writeable = False
        d.flags.writeable = False

        self.N0 = int(N0)
        self.b = b
        self.d = d
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.db = float(b[-1] - b[-2])
        self.dd = float(d[-1] - d[-2])

    @property
    def tail_slope(self):
        return self.dd / self.db

    @property
    def N_last(self):
        return self.N0 + len(self.b) - 1

    def knot(self, N):
        """ (b_N, d_N) for a stored or tail-extended N >= N0. """
        if N < self.N0:
            raise PlanError('N = {} is below N0 = {}'.format(N, self.N0))
        j = N - self.N0
        if j < len(self.b):
            return float(self.b[j]), float(self.d[j])
        k = j - (len(self.b) - 1)
        return float(self.b[-1] + k * self.db), float(self.d[-1] + k * self.dd)

    def _knots_around(self, x):
        ## (b_{N-1}, b_N, d_{N-1}, d_N) of the knot interval containing x >= b_N0, tail-extended beyond b_L
        L = len(self.b) - 1
        i = np.searchsorted(self.b, x, side='right')
        i = np.clip(i, 1, L)
        bl, br, dl, dr = self.b[i - 1], self.b[i], self.d[i - 1], self.d[i]

        ## beyond b_L: logistic steps between virtual knots on the last secant, not the secant line itself
        beyond = x > self.b[-1]
        k = np.floor((x - self.b[-1]) / self.db)
        ## the division may round across a virtual knot
        k = np.where(x < self.b[-1] + k * self.db, k - 1, k)
        k = np.where(x >= self.b[-1] + (k + 1) * self.db, k + 1, k)
        k = np.where(beyond, np.maximum(k, 0), 0)
        bl = np.where(beyond, self.b[-1] + k * self.db, bl)
        br = np.where(beyond, self.b[-1] + (k + 1) * self.db, br)
        dl = np.where(beyond, self.d[-1] + k * self.dd, dl)
        dr = np.where(beyond, self.d[-1] + (k + 1) * self.dd, dr)
        return bl, br, dl, dr

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))

        b0, d0 = self.b[0], self.d[0]
        out = np.empty_like(x)

        ## left tail; -expm1 keeps precision far to the left where the exponent is close to 0
        left = x < b0
        z = np.clip(safe_reciprocal(x[left] - b0), -700.0, 700.0)
        out[left] = -d0 * np.expm1(z)

        right = ~left
        xr = x[right]
        bl, br, dl, dr = self._knots_around(xr)
        with np.errstate(divide='ignore', invalid='ignore'):
            z = safe_reciprocal(xr - bl) - safe_reciprocal(br - xr)
        vals = dl + (dr - dl) / (1.0 + clamped_exp(z))

        ## knot ties
        at_left = np.abs(xr - bl) <= KNOT_TOL * (1 + np.abs(bl))
        at_right = np.abs(xr - br) <= KNOT_TOL * (1 + np.abs(br))
        vals = np.where(at_left, dl, np.where(at_right, dr, vals))
        out[right] = vals

        return float(out[0]) if scalar else out

    def is_extrapolated(self, y):
        return bool(y > self.d[-1])

    def inv(self, y):
        """ The unique x with psi(x) = y, by bisection to absolute tolerance 1e-12 in x. """
        y = float(y)
        if not y > 0:
            raise PsiRangeError('psi is positive; cannot invert y = {}'.format(y))
        if not math.isfinite(y):
            raise PsiRangeError('cannot invert y = {}'.format(y))

        ## exact stored knot values
        j = int(np.searchsorted(self.d, y))
        if j < len(self.d) and self.d[j] == y:
            return float(self.b[j])

        if y < self.d[0]:
            hi = float(self.b[0])
            step = 1.0
            lo = hi - step
            while self(lo) >= y:
                step *= 2
                lo = hi - step
                if step > MAX_ABS_X:
                    raise PsiRangeError('y = {} is below the representable range of psi'.format(y))
        elif y <= self.d[-1]:
            lo, hi = float(self.b[j - 1]), float(self.b[j])
        else:
            k = max(math.floor((y - self.d[-1]) / self.dd), 0)
            if y < self.d[-1] + k * self.dd:
                k -= 1
            elif y >= self.d[-1] + (k + 1) * self.dd:
                k += 1
            lo = self.b[-1] + k * self.db
            hi = self.b[-1] + (k + 1) * self.db
            if not abs(hi) < MAX_ABS_X:
                raise PsiRangeError('y = {} is above the representable range of psi'.format(y))
            if self.d[-1] + k * self.dd == y:
                return float(lo)
            logger.debug('psi_inv(%g) extrapolates beyond the last stored knot', y)

        if self(hi) == y:
            return float(hi)
        if self(lo) == y:
            return float(lo)

        return float(optimize.bisect(lambda x: self(x) - y, lo, hi, xtol=INV_XTOL, maxiter=2000))

    def to_dict(self):
        return dict(
            N0=self.N0, b=self.b.tolist(), d=self.d.tolist(), alpha=self.alpha, beta=self.beta, tail_slope=self.tail_slope
        )

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, dct):
        return cls(N0=dct['N0'], b=dct['b'], d=dct['d'], alpha=dct['alpha'], beta=dct['beta'])

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def __repr__(self):
        return 'PsiSpec(N0={}, knots={}, b=[{:.6g} .. {:.6g}], d=[{:.6g} .. {:.6g}])'.format(
            self.N0, len(self.b), self.b[0], self.b[-1], self.d[0], self.d[-1])


def compute_knots(plan, consts, tau1):
    """ Knots b_N = sqrt(-beta ln((a_N + c2/N)/c1)) and plateaus d_N = (1 + sqrt(96/(alpha min(delta_N, tau1/2)^3))) N^3
        for the stored N >= N0, glued into a PsiSpec.
    """
    N0 = compute_N0(plan, consts.c1, consts.c2)

    Ns = np.arange(N0, len(plan) + 1)
    if len(Ns) < 2:
        raise PlanError('prefix of length {} leaves fewer than two knots beyond N0 = {}'.format(len(plan), N0))

    ratio = (plan.a[Ns - 1] + consts.c2 / Ns) / consts.c1
    ## ratio <= 1 by the choice of N0; clip rounding noise at N0
    b = np.sqrt(np.maximum(-consts.beta * np.log(ratio), 0.0))
    d = np.array([plateau_value(consts.alpha, plan.delta_N(int(N)), tau1, int(N)) for N in Ns])

    if not check_sorted(b):
        raise PlanError('knots b_N are not strictly increasing; the plan is inadmissible')
    if not check_sorted(d):
        raise PlanError('plateau values d_N are not strictly increasing; check that delta_N is decreasing')

    spec = PsiSpec(N0=N0, b=b, d=d, alpha=consts.alpha, beta=consts.beta)
    logger.info('built %r', spec)
    return spec


def psi_eval(spec, x):
    return spec(x)


def psi_inv(spec, y):
    return spec.inv(y)


def check_hits_one(spec):
    """ True if 1 lies in psi(R), checked numerically by inverting psi at 1. """
    try:
        x = spec.inv(1.0)
    except (PsiRangeError, ValueError):
        return False
    return bool(abs(spec(x) - 1.0) <= 1e-9)

import json
import logging
from dataclasses import dataclass, asdict, replace
from typing import Callable, Tuple

import numpy as np
from scipy import optimize

from . errors import CoefficientError, DegenerateCoefficientError
from . utils import clamped_exp, integrate_1d, DEFAULT_QUAD_TOL

logger = logging.getLogger(__name__)

## number of grid points used for alpha and for the support checks
ALPHA_GRID_POINTS = 100_000

## smallest admissible min |f'| on [0, tau1/2]
DERIV_FLOOR = 1e-12


@dataclass(frozen=True)
class SmoothFn:
    """ A bounded smooth function of time with its derivative and declared support.

        eval and deriv are vectorized callables; support is a closed interval (lo, hi) where lo may be
        -inf and hi may be inf. Values outside the support are exactly 0.
    """
    eval: Callable
    deriv: Callable
    support: Tuple[float, float]
    sup_bound: float
    name: str = ''

    def __call__(self, t):
        return self.eval(t)

    def scaled(self, amp):
        """ amp * self, with the same support. """
        return SmoothFn(
            eval=lambda t, e=self.eval: amp * e(t),
            deriv=lambda t, d=self.deriv: amp * d(t),
            support=self.support,
            sup_bound=abs(amp) * self.sup_bound,
            name=self.name,
        )


def _log_or_neg_inf(u):
    with np.errstate(divide='ignore'):
        return np.log(u)


def left_bump(tau, amp=1.0):
    """ x -> amp * exp(1/(x - tau)) for x < tau, 0 otherwise. Supremum amp, approached as x -> -inf. """

    def value(x):
        x = np.asarray(x, dtype=np.float64)
        inside = x < tau
        u = np.where(inside, tau - x, 1.0)
        return np.where(inside, amp * clamped_exp(-1.0 / u), 0.0)

    def deriv(x):
        ## d/dx exp(1/(x - tau)) = -exp(1/(x - tau)) / (x - tau)^2
        x = np.asarray(x, dtype=np.float64)
        inside = x < tau
        u = np.where(inside, tau - x, 1.0)
        return np.where(inside, -amp * clamped_exp(-1.0 / u - 2.0 * _log_or_neg_inf(u)), 0.0)

    return SmoothFn(eval=value, deriv=deriv, support=(-np.inf, tau), sup_bound=abs(amp), name='f')


def window_bump(tau1, tau2, amp=1.0):
    """ x -> amp * exp(c + 1/(tau1 - x) + 1/(x - tau2)) on (tau1, tau2), 0 otherwise, with c = 4/(tau2 - tau1)
        so that the maximum (attained at the midpoint) is amp.
    """
    c = 4.0 / (tau2 - tau1)

    def _parts(x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x > tau1) & (x < tau2)
        u = np.where(inside, x - tau1, 1.0)
        v = np.where(inside, tau2 - x, 1.0)
        return inside, u, v, c - 1.0 / u - 1.0 / v

    def value(x):
        inside, u, v, expo = _parts(x)
        return np.where(inside, amp * clamped_exp(expo), 0.0)

    def deriv(x):
        ## d/dx of the exponent is 1/(x - tau1)^2 - 1/(tau2 - x)^2
        inside, u, v, expo = _parts(x)
        left = clamped_exp(expo - 2.0 * _log_or_neg_inf(u))
        right = clamped_exp(expo - 2.0 * _log_or_neg_inf(v))
        return np.where(inside, amp * (left - right), 0.0)

    return SmoothFn(eval=value, deriv=deriv, support=(tau1, tau2), sup_bound=abs(amp), name='g')


def right_bump(tau, amp=1.0):
    """ x -> amp * exp(1/(tau - x)) for x > tau, 0 otherwise. Supremum amp, approached as x -> inf. """

    def value(x):
        x = np.asarray(x, dtype=np.float64)
        inside = x > tau
        u = np.where(inside, x - tau, 1.0)
        return np.where(inside, amp * clamped_exp(-1.0 / u), 0.0)

    def deriv(x):
        x = np.asarray(x, dtype=np.float64)
        inside = x > tau
        u = np.where(inside, x - tau, 1.0)
        return np.where(inside, amp * clamped_exp(-1.0 / u - 2.0 * _log_or_neg_inf(u)), 0.0)

    return SmoothFn(eval=value, deriv=deriv, support=(tau, np.inf), sup_bound=abs(amp), name='h')


@dataclass(frozen=True)
class CoefficientSet:
    """ Structural data (T, tau1, tau2, f, g, h) of the 4-dimensional SDE

            dX = (1, 0, 0, h(X1) cos(X2 psi(X3))) dt + (0, f(X1), g(X1), 0) dW,   X(0) = 0.

        Construction checks the ordering of the times and the declared supports. The numerical
        conditions on f', g and h are checked by validate().
    """
    T: float
    tau1: float
    tau2: float
    f: SmoothFn
    g: SmoothFn
    h: SmoothFn

    def __post_init__(self):
        if not (0 < self.tau1 < self.tau2 < self.T):
            raise CoefficientError(
                'Time parameters must satisfy 0 < tau1 < tau2 < T, got T={}, tau1={}, tau2={}'.format(
                    self.T, self.tau1, self.tau2))

        if self.f.support[1] > self.tau1:
            raise CoefficientError('supp(f) must lie in (-inf, tau1], declared {}'.format(self.f.support))
        if self.g.support[0] < self.tau1 or self.g.support[1] > self.tau2:
            raise CoefficientError('supp(g) must lie in [tau1, tau2], declared {}'.format(self.g.support))
        if self.h.support[0] < self.tau2:
            raise CoefficientError('supp(h) must lie in [tau2, inf), declared {}'.format(self.h.support))

    def min_abs_fprime(self, points=ALPHA_GRID_POINTS):
        """ Grid minimum of |f'| on [0, tau1/2] and the grid point where it is attained. """
        grid = np.linspace(0.0, self.tau1 / 2, points)
        values = np.abs(self.f.deriv(grid))
        i = int(np.argmin(values))
        return float(values[i]), grid, i

    def validate(self, quad_tol=DEFAULT_QUAD_TOL, points=ALPHA_GRID_POINTS):
        """ Checks the numerical conditions: inf |f'| > 0 on [0, tau1/2], g not identically 0 and
            int_tau2^T h != 0. Returns self.
        """
        fmin, _, _ = self.min_abs_fprime(points)
        if not fmin > DERIV_FLOOR:
            raise DegenerateCoefficientError(
                'min |f\'| on [0, tau1/2] is {:.3e}, below the floor {:.1e}'.format(fmin, DERIV_FLOOR))

        grid = np.linspace(self.tau1, self.tau2, points)
        if not np.any(self.g(grid) != 0):
            raise CoefficientError('g vanishes on the sampled grid of [tau1, tau2]')

        if integrate_1d(self.h.eval, self.tau2, self.T, tol=quad_tol) == 0:
            raise CoefficientError('int_tau2^T h(t) dt must be nonzero')

        return self


def make_default_coeffs(T, tau1, tau2, beta=None, gamma=None, quad_tol=DEFAULT_QUAD_TOL):
    """ Mollifier coefficient set

            f(x) = exp(1/(x - tau1))                                on x < tau1
            g(x) = A_g exp(4/(tau2 - tau1) + 1/(tau1 - x) + 1/(x - tau2))  on tau1 < x < tau2
            h(x) = A_h exp(1/(tau2 - x))                             on x > tau2

        With beta and gamma left as None, A_g = A_h = 1 and every sup-norm is 1. Otherwise A_g and A_h
        are chosen so that int g^2 = beta and int_tau2^T h = gamma.
    """
    if not (0 < tau1 < tau2 < T):
        raise CoefficientError(
            'Time parameters must satisfy 0 < tau1 < tau2 < T, got T={}, tau1={}, tau2={}'.format(T, tau1, tau2))

    f = left_bump(tau1)
    g = window_bump(tau1, tau2)
    h = right_bump(tau2)

    if beta is not None:
        if not beta > 0:
            raise CoefficientError('beta target must be positive, got {}'.format(beta))
        unit_beta = integrate_1d(lambda t: g(t) ** 2, tau1, tau2, tol=quad_tol)
        g = g.scaled(np.sqrt(beta / unit_beta))

    if gamma is not None:
        if gamma == 0:
            raise CoefficientError('gamma target must be nonzero')
        unit_gamma = integrate_1d(h.eval, tau2, T, tol=quad_tol)
        h = h.scaled(gamma / unit_gamma)

    cs = CoefficientSet(T=float(T), tau1=float(tau1), tau2=float(tau2), f=f, g=g, h=h).validate(quad_tol)

    logger.info('coefficients on T=%g, tau1=%g, tau2=%g; sup|g|=%.4g, sup|h|=%.4g', T, tau1, tau2, g.sup_bound, h.sup_bound)

    return cs


@dataclass(frozen=True)
class DerivedConstants:
    alpha: float
    beta: float
    gamma: float
    c1: float
    c2: float

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, dct):
        return cls(**{k: float(dct[k]) for k in ('alpha', 'beta', 'gamma', 'c1', 'c2')})

    def perturbed(self, beta_factor=1.0):
        """ Copy with beta multiplied by beta_factor and every other constant unchanged. """
        return replace(self, beta=self.beta * beta_factor)


def c1_c2(beta, gamma):
    """ The two constants of the lower bound, from beta and gamma. |gamma| is used so c1, c2 > 0. """
    gamma = abs(gamma)
    c1 = gamma * np.exp(-np.pi ** 2 / 4 - 1.0 / beta) / (8 * np.pi * np.sqrt(2 * np.pi * beta))
    c2 = gamma * np.exp(-np.pi ** 2 / 4) / (4 * np.pi)
    return float(c1), float(c2)


def derived_constants(cs, quad_tol=DEFAULT_QUAD_TOL):
    """ alpha = inf_{[0, tau1/2]} |f'|^2, beta = int_tau1^tau2 g^2, gamma = int_tau2^T h, and c1, c2.

        alpha is the grid minimum over 1e5 points refined by bounded scalar minimisation on the two grid
        cells around it.
    """
    if not quad_tol > 0:
        raise ValueError('quad_tol must be positive, got {}'.format(quad_tol))

    fmin, grid, i = cs.min_abs_fprime()
    if not fmin > DERIV_FLOOR:
        raise DegenerateCoefficientError(
            'min |f\'| on [0, tau1/2] is {:.3e}, below the floor {:.1e}'.format(fmin, DERIV_FLOOR))

    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(
        lambda t: float(np.abs(cs.f.deriv(t))), bounds=(lo, hi), method='bounded', options=dict(xatol=1e-12)
    )
    fmin = min(fmin, float(res.fun)) if res.success else fmin
    alpha = fmin ** 2

    beta = integrate_1d(lambda t: cs.g(t) ** 2, cs.tau1, cs.tau2, tol=quad_tol)
    gamma = integrate_1d(cs.h.eval, cs.tau2, cs.T, tol=quad_tol)

    if not beta > 0:
        raise DegenerateCoefficientError('beta = int g^2 must be positive, got {}'.format(beta))
    if gamma == 0:
        raise DegenerateCoefficientError('gamma = int h must be nonzero')

    c1, c2 = c1_c2(beta, gamma)

    consts = DerivedConstants(alpha=float(alpha), beta=float(beta), gamma=float(gamma), c1=c1, c2=c2)

    logger.info('derived constants: %s', consts)

    return consts

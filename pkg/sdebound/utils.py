import logging
import warnings

import numpy as np
from scipy import integrate

from . errors import QuadratureError

logger = logging.getLogger(__name__)

EXP_CLAMP = 700.0

DEFAULT_QUAD_TOL = 1e-10

QUAD_LIMIT = 200


def clamped_exp(x):
    """ exp(x) with the argument clamped to [-700, 700]. Works on scalars and arrays.

        Example:
            clamped_exp(-1e6) --> exp(-700)
    """
    return np.exp(np.clip(x, -EXP_CLAMP, EXP_CLAMP))


def safe_reciprocal(x):
    ## 1/x with +-inf at 0 and no divide warnings; callers clamp the result before exponentiating
    with np.errstate(divide='ignore'):
        return np.reciprocal(np.asarray(x, dtype=np.float64))


def integrate_1d(func, a, b, tol=DEFAULT_QUAD_TOL, points=None, limit=QUAD_LIMIT):
    """ Adaptive Gauss-Kronrod quadrature of func over [a, b] to absolute tolerance tol.

        Raises QuadratureError if QUADPACK reports non-convergence and its error estimate
        exceeds tol by more than a factor of 10.
    """
    if a == b:
        return 0.0

    if points is not None:
        points = [p for p in points if a < p < b]
        limit = max(limit, 2 * len(points) + 50)
        points = points or None

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        value, abserr, *rest = integrate.quad(
            func, a, b, epsabs=tol, epsrel=0.0, limit=limit, points=points, full_output=1
        )

    if len(rest) > 1 and abserr > 10 * tol:
        raise QuadratureError(
            'Quadrature over [{}, {}] did not converge: error estimate {:.3e} > tolerance {:.3e} ({})'.format(
                a, b, abserr, tol, rest[1])
        )
    elif abserr > tol:
        logger.warning('quadrature error estimate %.3e above tolerance %.3e on [%g, %g]', abserr, tol, a, b)

    return float(value)


def stream(*keys):
    """ Counter-based (Philox) generator for the stream identified by a tuple of non-negative integers,
        e.g. stream(master_seed, path_index). Equal keys give bit-identical draws on any worker.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def as_generator(seed):
    """ Accepts a Generator (returned as is), an integer seed, or a tuple of integer stream keys.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        return stream(*seed)
    return stream(seed)


def stream_keys(seed):
    """ Stream keys of an integer seed or key tuple, for deriving child streams. A Generator contributes
        one draw.

        Example:
            stream(*stream_keys((7, 3)), 1) --> stream(7, 3, 1)
    """
    if isinstance(seed, np.random.Generator):
        return (int(seed.integers(2 ** 63)),)
    if isinstance(seed, (tuple, list)):
        return tuple(int(k) for k in seed)
    return (int(seed),)


def check_sorted(values, strict=True):
    ## check that a 1D sequence is (strictly) increasing
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        return False
    diffs = np.diff(values)
    return bool(np.all(diffs > 0)) if strict else bool(np.all(diffs >= 0))


def check_shapes(a, b):
    ## check that the shape length of a and b match
    if len(a) != len(b):
        return False

    ## check that the length of each dimension matches
    for i in range(len(a)):
        if a[i] != b[i]:
            return False

    return True


def standard_error(samples):
    """ Sample standard deviation over sqrt(n); 0 for a single sample.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 2:
        return 0.0
    return float(np.std(samples, ddof=1) / np.sqrt(samples.size))

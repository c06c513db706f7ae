import json
import logging
from dataclasses import dataclass, field, fields, asdict, replace

from . errors import ConfigError

logger = logging.getLogger(__name__)

SCHEME_NAMES = ('euler', 'gap_refiner', 'cond_mean')

PSI_KINDS = ('plan', 'constant', 'affine')


@dataclass(frozen=True)
class SchemeSpec:
    """ Scheme descriptor. n (euler) and budget (gap_refiner) default to the row's N. """
    scheme: str
    n: int = None
    budget: int = None
    inner_mc: int = 32
    statistic: str = 'mean'
    head_points: int = 257

    def __post_init__(self):
        if self.scheme not in SCHEME_NAMES:
            raise ConfigError('unknown scheme {!r}, expected one of {}'.format(self.scheme, SCHEME_NAMES))
        if self.statistic not in ('mean', 'median'):
            raise ConfigError('statistic must be "mean" or "median", got {!r}'.format(self.statistic))
        if self.inner_mc < 1:
            raise ConfigError('inner_mc must be >= 1')
        if self.head_points < 2:
            raise ConfigError('head_points must be >= 2')
        if self.n is not None and self.n < 1:
            raise ConfigError('n must be >= 1')
        if self.budget is not None and self.budget < 2:
            raise ConfigError('budget must be >= 2')

    @property
    def label(self):
        if self.scheme == 'cond_mean' and self.statistic == 'median':
            return 'cond_median'
        return self.scheme


@dataclass(frozen=True)
class VerifyConfig:
    """ Sample sizes of the verify suite. """
    samples: int = 100_000
    parts_paths: int = 100
    parts_grid_exp: int = 16
    isometry_grid_exp: int = 12
    oracle_paths: int = 200
    oracle_exps: tuple = (12, 14, 16)
    scheme_paths: int = 10_000
    dominance_paths: int = 10_000
    sine_tol: float = 1e-9
    chunk: int = 2_000

    def __post_init__(self):
        for name in ('samples', 'parts_paths', 'oracle_paths', 'scheme_paths', 'dominance_paths', 'chunk'):
            if getattr(self, name) < 1:
                raise ConfigError('verify.{} must be >= 1'.format(name))
        if not self.sine_tol > 0:
            raise ConfigError('verify.sine_tol must be positive')
        object.__setattr__(self, 'oracle_exps', tuple(int(e) for e in self.oracle_exps))


def _default_schemes():
    return (SchemeSpec('euler'), SchemeSpec('gap_refiner'), SchemeSpec('cond_mean', inner_mc=32))


@dataclass(frozen=True)
class ExperimentConfig:
    """ Every setting of an experiment. Loaded from one JSON document; keys left out take the defaults
        below and unknown keys are rejected.

        Example:
            config = load_config('experiment.json', master_seed=7, workers=4)
    """
    master_seed: int = 20240917
    num_paths: int = 10_000
    fine_grid_exp: int = 16
    tail_grid_exp: int = 12
    T: float = 1.0
    tau1: float = 0.25
    tau2: float = 0.5
    beta_target: float = 2.0
    gamma_target: float = 2000.0
    quad_tol: float = 1e-10
    a_expr: str = '1/log(N+1)'
    delta_expr: str = 'minimum(1, 2/N)*tau1/2'
    prefix_length: int = 200
    psi_kind: str = 'plan'
    psi_slope: float = 1.0
    schemes: tuple = field(default_factory=_default_schemes)
    N_list: object = 'auto'
    delta: float = None
    nu_cap: int = 10_000
    workers: int = 1
    output_dir: str = 'out'
    perturb_beta: float = 1.0
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def __post_init__(self):
        schemes = tuple(s if isinstance(s, SchemeSpec) else SchemeSpec(**s) for s in self.schemes)
        object.__setattr__(self, 'schemes', schemes)
        if isinstance(self.verify, dict):
            object.__setattr__(self, 'verify', _from_dict(VerifyConfig, self.verify, 'verify'))
        if self.N_list != 'auto':
            object.__setattr__(self, 'N_list', tuple(int(n) for n in self.N_list))
        self.validate()

    def validate(self):
        if self.num_paths < 1:
            raise ConfigError('num_paths must be >= 1, got {}'.format(self.num_paths))
        if not 0 <= self.tail_grid_exp <= self.fine_grid_exp:
            raise ConfigError('need 0 <= tail_grid_exp <= fine_grid_exp, got {} and {}'.format(
                self.tail_grid_exp, self.fine_grid_exp))
        if not 0 < self.tau1 < self.tau2 < self.T:
            raise ConfigError('need 0 < tau1 < tau2 < T, got T={}, tau1={}, tau2={}'.format(self.T, self.tau1, self.tau2))
        if not self.quad_tol > 0:
            raise ConfigError('quad_tol must be positive')
        if self.beta_target is not None and not self.beta_target > 0:
            raise ConfigError('beta_target must be positive')
        if self.gamma_target is not None and self.gamma_target == 0:
            raise ConfigError('gamma_target must be nonzero')
        if self.prefix_length < 2:
            raise ConfigError('prefix_length must be >= 2')
        if self.psi_kind not in PSI_KINDS:
            raise ConfigError('psi_kind must be one of {}, got {!r}'.format(PSI_KINDS, self.psi_kind))
        if not self.psi_slope > 0:
            raise ConfigError('psi_slope must be positive')
        if self.N_list != 'auto' and any(n < 1 for n in self.N_list):
            raise ConfigError('N_list entries must be >= 1')
        if self.delta is not None and not 0 < self.delta <= self.T:
            raise ConfigError('delta must lie in (0, T]')
        if self.nu_cap < 1:
            raise ConfigError('nu_cap must be >= 1')
        if self.workers < 1:
            raise ConfigError('workers must be >= 1')
        if not self.perturb_beta > 0:
            raise ConfigError('perturb_beta must be positive')

    @property
    def tail_stride(self):
        return 2 ** (self.fine_grid_exp - self.tail_grid_exp)

    def to_dict(self):
        dct = asdict(self)
        dct['schemes'] = [asdict(s) for s in self.schemes]
        dct['verify'] = asdict(self.verify)
        dct['verify']['oracle_exps'] = list(self.verify.oracle_exps)
        dct['N_list'] = self.N_list if self.N_list == 'auto' else list(self.N_list)
        return dct

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def override(self, **kwargs):
        """ Copy with the given fields replaced; None values are ignored. """
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs) if kwargs else self

    @classmethod
    def from_dict(cls, dct):
        return _from_dict(cls, dct, 'config')


def _from_dict(cls, dct, where):
    if not isinstance(dct, dict):
        raise ConfigError('{} must be a JSON object'.format(where))
    known = {f.name for f in fields(cls)}
    unknown = set(dct) - known
    if unknown:
        raise ConfigError('unknown {} keys: {}'.format(where, sorted(unknown)))
    try:
        return cls(**dct)
    except TypeError as e:
        raise ConfigError('invalid {}: {}'.format(where, e)) from e


def load_config(path=None, **overrides):
    """ ExperimentConfig from a JSON file (defaults when path is None), with field overrides applied. """
    if path is None:
        config = ExperimentConfig()
    else:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                dct = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError('could not read config {}: {}'.format(path, e)) from e
        config = ExperimentConfig.from_dict(dct)

    config = config.override(**overrides)
    logger.debug('effective config: %s', config.to_json())
    return config

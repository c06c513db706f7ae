from . errors import *
from . records import Record, SolutionVec, RunRow, CurveRow, BreakdownRow, BoundRow, PathRow, PathPoint
from . table import LabeledTable, Labels
from . coeffs import (
    SmoothFn, CoefficientSet, DerivedConstants, make_default_coeffs, derived_constants, left_bump, window_bump,
    right_bump,
)
from . psi import (
    RatePlan, PsiSpec, ConstantPsi, AffinePsi, compute_N0, compute_knots, psi_eval, psi_inv, check_hits_one,
)
from . brownian import (
    PathSegment, BrownianPath, sample_path, sample_paths, refine_path, ito_deterministic, x2_via_parts,
    x3_via_parts, exact_solution, uniform_grid,
)
from . bridge import (
    ObservationSet, conditional_mean, conditional_cov, sample_conditional, bridge_decompose,
    bridge_functional_variance, conditional_functional_variance,
)
from . schemes import (
    AdaptiveScheme, RunRecord, run_scheme, euler_equidistant, adaptive_gap_refiner, conditional_mean_estimator, cost,
)
from . bounds import thm1_bound, cor3_bound, sine_moment_bound, sine_moment, superpoly_diagnostic, BoundCurve
from . config import ExperimentConfig, SchemeSpec, load_config
from . harness import measure_error, error_curve, verify_all, ErrorEstimate
from . import fields

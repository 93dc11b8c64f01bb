"""Theory constants and numerical checks of the perturbation and performance bounds."""
from .banded import BandedReport, random_block_tridiagonal, verify_banded_decay
from .constants import (
    TheoryConstants,
    WindowThresholds,
    C_of_p,
    cr_coefficient,
    cr_condition_rhs,
    decay_constants,
    least_integer,
    ltv_decay,
    regret_condition_rhs,
    replan_condition_rhs,
    theory_constants,
    window_thresholds,
)
from .corollaries import (
    InequalityReport,
    SmoothnessReport,
    fd_hessian,
    verify_cost_smoothness,
    verify_one_step_diff,
    verify_opt_stability,
    verify_switching_smoothness,
)
from .performance import (
    CompetitiveReport,
    RegretTable,
    ReplanReport,
    competitive_report,
    iss_bound,
    potential_coefficient,
    potential_series,
    regret_sweep,
    replan_report,
    verify_iss,
    worker_count,
)
from .sensitivity import (
    ReductionReport,
    SensitivityReport,
    verify_ltv_sensitivity,
    verify_soco_reduction,
    verify_soco_sensitivity,
)
from .soco import SocoInstance, ltv_to_soco, random_quadratic_soco, solve_soco

import types as _types

__all__ = [n for n, v in dict(globals()).items() if not n.startswith("_") and not isinstance(v, _types.ModuleType)]

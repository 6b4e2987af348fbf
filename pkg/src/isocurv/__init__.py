"""Isotropic curvature model for matrix-gradient updates.

Solve ``min_Q -Tr(Q G^T) + E H(|Q z|)`` over a uniform sphere, certify the
shape of the optimum, probe curvature growth from loss remainders and
compare Muon-style update rules in one step.
"""

__version__ = "0.1.0"

from .certificates import KinkCertificate, alignment_gap, converse_gap, kink_certificate
from .curvature import (
    Kink,
    Power,
    Quadratic,
    Quartic,
    Tabulated,
    assumption1_holds,
    from_dict,
    h_subdiff,
    h_value,
)
from .errors import (
    ConvergenceError,
    CurvatureError,
    DivergenceError,
    InputError,
    IsoCurvError,
    PreconditionError,
    ProbeError,
    RankDeficientError,
    ShapeError,
    SvdConvergenceError,
)
from .linalg import msgn_exact, singular_values, svd_compact, trace_inner, von_neumann_bound
from .muon import ModelLoss, NsConfig, compare_one_step, msgn_newton_schulz
from .probe import ProbeConfig, PurePowerOracle, QuadraticOracle, TinyMLP, fit_exponent, probe
from .solver import (
    ModelProblem,
    SpectrumSolution,
    homogenization_report,
    solve,
    solve_generic,
    solve_kink,
    solve_quadratic,
    solve_quartic_fixed_point,
)
from .sphere import SphereSampler, mc_expectation, quartic_expectation, second_moment

__all__ = [name for name in dir() if not name.startswith("_")]

"""Dirichlet problems with deviated arguments: contraction and monotone solvers."""

from .conditions import (
    ConditionReport,
    LipschitzPair,
    check_main_rule,
    check_max_principle,
    check_uniqueness,
    compute_norms,
    condition_report,
    implication_lattice,
)
from .contraction import PicardSettings, apply_integral_operator, picard_solve
from .grid import GridFunction, Mesh, QuadratureRule, integrate, interp, second_difference
from .jumps import PiecewiseFn, derivative_infimum, shift_constant
from .model import DeviatedBVP, ScalarMap, TernaryMap, history_extend, validate_problem
from .monotone import (
    LowerUpperPair,
    apply_G,
    iterate_extremal,
    verify_lower,
    verify_upper,
)

__version__ = "0.1.0"

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devbvp.conditions import LipschitzPair
from devbvp.config import example1, example2, trivial_constant, trivial_linear
from devbvp.contraction import PicardSettings, apply_integral_operator, picard_solve
from devbvp.grid import GridFunction, Mesh, interp
from devbvp.model import DeviatedBVP
from devbvp.monotone import (
    EPS_MONO,
    LowerUpperPair,
    MonotoneOperator,
    OrderingViolation,
    _stalled,
    apply_G,
    derivative_bound,
    iterate_extremal,
    max_slope,
    verify_lower,
    verify_upper,
)

from oracles import fd_linear


def setup(cfg, N=200):
    mesh = Mesh(cfg.T, cfg.r, N)
    return cfg.problem(), cfg.lipschitz().with_norms(mesh), cfg.lower_upper(mesh)


@pytest.fixture(scope="module")
def ex1():
    return setup(example1(), 200)


@pytest.fixture(scope="module")
def ex2():
    return setup(example2(0.05), 200)


@pytest.fixture(scope="module")
def ex1_bracket(ex1):
    p, lp, lu = ex1
    return iterate_extremal(p, lp, lu, outer_tol=1e-8)


def test_builtin_lower_upper_solutions_verify(ex1, ex2):
    for p, _, lu in (ex1, ex2):
        lo, up = verify_lower(p, lu.alpha), verify_upper(p, lu.beta)
        assert lo.is_valid and up.is_valid
        assert max(lo.boundary_defects.values()) <= 1e-7
        assert max(up.boundary_defects.values()) <= 1e-7


def test_shifted_lower_solution_rejected(ex1):
    p, _, lu = ex1
    bad = GridFunction(lu.mesh, lu.beta.values + 1)
    rep = verify_lower(p, bad)
    assert not rep.is_valid
    assert rep.max_differential_defect > 0


def test_zero_upper_solution_rejected(ex1):
    p, _, lu = ex1
    rep = verify_upper(p, GridFunction(lu.mesh, np.zeros(lu.mesh.size)))
    assert not rep.is_valid
    assert rep.boundary_defects["endpoint"] == pytest.approx(math.pi / 4)


def test_pair_ordering_enforced():
    m = Mesh(1.0, 0.0, 10)
    with pytest.raises(ValueError):
        LowerUpperPair.from_maps("1", "0", m)


def test_zero_coefficients_reduce_to_integral_operator(ex1):
    p, _, lu = ex1
    gamma = lu.convex(0.3)
    g = apply_G(p, LipschitzPair(0.0, 0.0), gamma)
    np.testing.assert_allclose(g.values, apply_integral_operator(p, gamma).values, atol=1e-12)


def test_G_of_lower_solution_lies_above(ex1):
    p, lp, lu = ex1
    g = apply_G(p, lp, lu.alpha)
    assert np.all(g.values >= lu.alpha.values - EPS_MONO)
    assert np.all(g.values <= lu.beta.values + EPS_MONO)


def test_fixed_point_property(ex1):
    p, lp, lu = ex1
    sol = picard_solve(p, PicardSettings(tol_sup=1e-12), mesh=lu.mesh).u
    assert np.max(np.abs(apply_G(p, lp, sol).values - sol.values)) <= 1e-9


def test_constant_forcing_hits_solution_in_one_step():
    p, lp, lu = setup(trivial_constant(), 100)
    b = iterate_extremal(p, lp, lu, outer_tol=1e-10)
    t = lu.mesh.nodes
    for it in (b.lower_iterates[1], b.upper_iterates[1]):
        np.testing.assert_allclose(it.values, t * (1 - t), atol=1e-12)


@pytest.mark.parametrize("which", ["ex1", "ex2"])
@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_order_preservation(which, request, a, b):
    p, lp, lu = request.getfixturevalue(which)
    op = _operator(which, p, lp, lu)
    lo, hi = sorted((a, b))
    g1, g2 = op(lu.convex(lo)), op(lu.convex(hi))
    assert np.all(g1.values <= g2.values + 1e-7)


_ops = {}


def _operator(key, p, lp, lu):
    if key not in _ops:
        _ops[key] = MonotoneOperator(p, lp, lu.mesh)
    return _ops[key]


def test_bracket_invariants(ex1_bracket, ex1):
    p, _, lu = ex1
    b = ex1_bracket
    assert b.converged and not b.refined
    for seq, sign in ((b.lower_iterates, 1), (b.upper_iterates, -1)):
        for u, v in zip(seq, seq[1:]):
            assert np.all(sign * (v.values - u.values) >= -EPS_MONO)
        for u in seq:
            assert np.all(u.values >= lu.alpha.values - EPS_MONO)
            assert np.all(u.values <= lu.beta.values + EPS_MONO)
    assert np.all(b.gap.values >= -EPS_MONO)


def test_fixed_point_residual(ex1_bracket, ex1):
    p, lp, _ = ex1
    for u in (ex1_bracket.u_star_low, ex1_bracket.u_star_high):
        assert np.max(np.abs(apply_G(p, lp, u).values - u.values)) <= 1e-8 + 1e-10


def test_independent_solution_lies_in_bracket(ex1_bracket, ex1):
    p, _, lu = ex1
    u = picard_solve(p, mesh=lu.mesh).u
    eps = 1e-8 + 10 * lu.mesh.h**2
    assert np.all(ex1_bracket.u_star_low.values - eps <= u.values)
    assert np.all(u.values <= ex1_bracket.u_star_high.values + eps)


def test_oracle_solution_lies_in_bracket():
    cfg = trivial_linear()
    p, lp, lu = setup(cfg, 200)
    b = iterate_extremal(p, lp, lu, outer_tol=1e-10)
    t, u = fd_linear(2.0, 1.0, 0.0, lambda s: 0.0, lambda s: 0.0, lambda s: 0.1, lambda s: 2.0, lambda s: s - 1)
    eps = 1e-10 + 10 * lu.mesh.h**2
    assert np.all(interp(b.u_star_low, t) - eps <= u)
    assert np.all(u <= interp(b.u_star_high, t) + eps)


@pytest.mark.parametrize("cfg", [example1(), example2(0.05)], ids=["ex1", "ex2"])
def test_derivative_bound(cfg):
    p, lp, lu = setup(cfg, 200)
    b = iterate_extremal(p, lp, lu, outer_tol=1e-8)
    bound = derivative_bound(p, lp, lu, cfg.psi_map())
    # the bound holds for images G(gamma); alpha and beta themselves are free
    for u in b.lower_iterates[1:] + b.upper_iterates[1:]:
        assert max_slope(u) <= bound + 0.1


def test_thread_count_does_not_change_results(ex1):
    p, lp, lu = ex1
    one = iterate_extremal(p, lp, lu, workers=1)
    two = iterate_extremal(p, lp, lu, workers=2)
    np.testing.assert_array_equal(one.u_star_low.values, two.u_star_low.values)
    assert one.log_rows == two.log_rows


def test_ordering_violation_survives_refinement():
    # f = -20 x + 2 is claimed to need no coefficients: G is not monotone
    p = DeviatedBVP(T=1.0, r=0.0, B=0.0, tau="t", phi="0", f="-20*x + 2")
    m = Mesh(1.0, 0.0, 100)
    lu = LowerUpperPair.from_maps("t^2 - t", "t - t^2", m)
    with pytest.raises(OrderingViolation) as info:
        iterate_extremal(p, LipschitzPair(0.0, 0.0), lu)
    assert info.value.N == 200 and info.value.step == 1 and info.value.t == 0.5


def test_partial_bracket_when_outer_budget_runs_out(ex1):
    p, lp, lu = ex1
    b = iterate_extremal(p, lp, lu, outer_tol=1e-14, max_outer=2)
    assert not b.converged
    assert len(b.lower_iterates) == 3


def test_stall_rule():
    assert _stalled([5e-9, 4e-9, 6e-9, 5e-9, 7e-9], 1e-9)
    assert not _stalled([9e-9, 8e-9, 7e-9, 6e-9, 5e-9], 1e-9)
    assert not _stalled([5e-9, 4e-9, 6e-9], 1e-9)


def test_bracket_files(ex1_bracket, tmp_path):
    ex1_bracket.write_bracket(tmp_path / "b.csv")
    ex1_bracket.write_log(tmp_path / "c.csv")
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "t,alpha,u_star_low,u_star_high,beta"
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "step,side,delta_sup,ordering_defect,residual_L1"

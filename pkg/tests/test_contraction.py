import math

import numpy as np
import pytest

from devbvp.conditions import LipschitzPair, check_uniqueness, contraction_factor
from devbvp.config import example2, trivial_linear
from devbvp.contraction import (
    ContractionRefused,
    Discretization,
    NonlinearityError,
    PicardNonConvergence,
    PicardSettings,
    apply_integral_operator,
    picard_solve,
    predicted_iterations,
)
from devbvp.grid import GridFunction, Mesh, interp
from devbvp.model import DeviatedBVP
from devbvp.monotone import MonotoneOperator

from oracles import fd_linear


def bvp(f, T=1.0, r=0.0, B=0.0, tau="t", phi="0", **kw):
    return DeviatedBVP(T=T, r=r, B=B, tau=tau, phi=phi, f=f, **kw)


def anything(mesh, seed=0):
    return GridFunction(mesh, np.random.default_rng(seed).normal(size=mesh.size))


@pytest.mark.parametrize(
    "f,B,exact",
    [("0", 0.0, lambda t: 0 * t), ("2", 0.0, lambda t: t * (1 - t)), ("0", 1.0, lambda t: t)],
)
def test_integral_operator_closed_forms(f, B, exact):
    p = bvp(f, B=B)
    m = Mesh(1.0, 0.0, 50)
    v = apply_integral_operator(p, anything(m))
    np.testing.assert_allclose(v.values, exact(m.nodes), atol=1e-14)


def test_discrete_operator_inverts_second_difference():
    p = bvp("x", T=2.0, r=0.5, tau="t - 0.5", phi="1 + t")
    m = Mesh(2.0, 0.5, 64)
    disc = Discretization(p, m)
    u = anything(m, 3)
    F = disc.nonlinearity(u.values)
    v = disc.sweep(F)
    d2 = (v[m.i0:][:-2] - 2 * v[m.i0:][1:-1] + v[m.i0:][2:]) / m.h**2
    np.testing.assert_allclose(-d2, F[1:-1], atol=1e-9)
    np.testing.assert_array_equal(v[: m.i0 + 1], 1 + m.history)


def test_constant_forcing_converges_in_two_sweeps():
    p = bvp("2")
    m = Mesh(1.0, 0.0, 100)
    res = picard_solve(p, PicardSettings(tol_sup=1e-9), u0=anything(m))
    assert res.iterations == 2
    np.testing.assert_allclose(res.u.values, m.nodes * (1 - m.nodes), atol=1e-9)


def test_refusal_at_threshold():
    # f = -x with L1 = 1 on T = 1: C1 is 1 < 1, false; q = 1
    p = bvp("-x")
    lp = LipschitzPair(1.0, 0.0).with_norms(Mesh(1.0, 0.0, 100))
    assert not check_uniqueness(lp, 1.0)["C1"].holds
    q = contraction_factor(lp, Mesh(1.0, 0.0, 100))
    assert q == pytest.approx(1.0)
    with pytest.raises(ContractionRefused):
        picard_solve(p, PicardSettings(q_estimate=q))


def test_delayed_problem_residual_and_oracle():
    p = bvp("-(1/8)*y + 2", T=1.0, r=1.0, tau="t - 1")
    m = Mesh(1.0, 1.0, 400)
    res = picard_solve(p, PicardSettings(q_estimate=0.25), mesh=m)
    assert res.residual_L1 <= 1e-6
    t, u = fd_linear(1.0, 1.0, 0.0, lambda s: 0.0, lambda s: 0.0, lambda s: 1 / 8, lambda s: 2.0, lambda s: s - 1)
    assert np.max(np.abs(interp(res.u, t) - u)) <= 2e-4


def test_delay_reaching_solution_against_oracle():
    cfg = trivial_linear()
    p = cfg.problem()
    m = Mesh(2.0, 1.0, 400)
    res = picard_solve(p, PicardSettings(), mesh=m)
    t, u = fd_linear(2.0, 1.0, 0.0, lambda s: 0.0, lambda s: 0.0, lambda s: 0.1, lambda s: 2.0, lambda s: s - 1)
    assert np.max(np.abs(interp(res.u, t) - u)) <= 2e-4
    assert res.residual_L1 <= 1e-6


def test_boundary_exactness():
    p = bvp("sin(t*x) + y/3", T=1.5, r=0.7, B=0.3, tau="t - 0.7", phi="cos(t)")
    m = Mesh(1.5, 0.7, 120)
    res = picard_solve(p, mesh=m)
    assert res.u.values[-1] == 0.3
    np.testing.assert_array_equal(res.u.values[: m.i0 + 1], np.cos(m.history))


@pytest.mark.parametrize("a", [0.2, 0.5, 0.9])
def test_contraction_ratios(a):
    p = bvp(f"-{a}*x + 1 + floor(3*t)")
    m = Mesh(1.0, 0.0, 200)
    q = contraction_factor(LipschitzPair(a, 0.0), m)
    res = picard_solve(p, PicardSettings(q_estimate=q), mesh=m)
    assert np.all(res.ratios() <= q + 0.05)
    assert res.iterations <= res.predicted_iters + 2


def exact_linear(a, t):
    # -u'' + a u = 1, u(0) = u(1) = 0
    k = math.sqrt(a)
    return (1 - np.cosh(k * (t - 0.5)) / math.cosh(k / 2)) / a


@pytest.mark.parametrize("a", [0.3, 0.9])
def test_oracle_equivalence_nondeviated(a):
    p = bvp(f"-{a}*x + 1")
    t_fd, u_fd = fd_linear(1.0, 0.0, 0.0, lambda s: 0.0, lambda s: a, lambda s: 0.0, lambda s: 1.0, lambda s: s)
    assert np.max(np.abs(u_fd - exact_linear(a, t_fd))) < 1e-8
    for N in (50, 100, 200):
        m = Mesh(1.0, 0.0, N)
        res = picard_solve(p, mesh=m)
        u_fd_nodes = np.interp(m.nodes, t_fd, u_fd)
        assert np.max(np.abs(res.u.values - u_fd_nodes)) <= 5 * m.h**2


def test_convergence_order_nodal():
    a = 0.5
    errs = []
    for N in (25, 50, 100, 200):
        m = Mesh(1.0, 0.0, N)
        res = picard_solve(bvp(f"-{a}*x + 1"), PicardSettings(tol_sup=1e-13), mesh=m)
        errs.append(np.max(np.abs(res.u.values - exact_linear(a, m.nodes))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.9)


def test_nonconvergence_carries_history():
    with pytest.raises(PicardNonConvergence) as info:
        picard_solve(bvp("-0.5*x + 1"), PicardSettings(max_iter=2))
    assert len(info.value.deltas) == 2


def test_nonlinearity_domain_error():
    with pytest.raises(NonlinearityError):
        picard_solve(bvp("1/x", B=1.0))


def test_singular_problem_never_samples_zero():
    cfg = example2(0.05)
    disc = Discretization(cfg.problem(), cfg.mesh())
    assert disc.samples[0] == pytest.approx(cfg.mesh().h / 4)


def test_singular_linear_auxiliary_problem_contracts():
    cfg = example2(0.05)
    mesh = Mesh(1.0, 0.0, 400)
    lp = cfg.lipschitz().with_norms(mesh)
    q = contraction_factor(lp, mesh)
    op = MonotoneOperator(cfg.problem(), lp, mesh, PicardSettings(q_estimate=q))
    res = op.solve(cfg.lower_upper(mesh).alpha.values)
    assert np.all(res.ratios() <= q + 0.05)
    assert res.iterations <= res.predicted_iters + 2


def test_predicted_iterations_formula():
    assert predicted_iterations(0.5, 1.0, 1e-3) == math.ceil(math.log(0.5e-3) / math.log(0.5))
    assert predicted_iterations(0.0, 1.0, 1e-3) == 1
    assert predicted_iterations(0.5, 1e-6, 1e-3) == 1


def test_iteration_log(tmp_path):
    res = picard_solve(bvp("-0.3*x + 1"), PicardSettings(record_residuals=True))
    res.write_log(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "n,delta_sup,residual_L1"
    assert len(lines) == res.iterations + 1

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devbvp.config import example1, example2
from devbvp.jumps import (
    CertificateInconsistent,
    CertificateRefused,
    PiecewiseFn,
    brute_force_slope,
    derivative_infimum,
    monotone_scan,
    shift_constant,
)

L2_EX1 = (1 + math.pi / 2) / 9


def ex1_slice():
    return example1().piecewise_slice()


def analytic_ex1_infimum():
    # on (k-1, k): f' = -(sin z + z cos z)/9 with z = y pi / (2k); the largest
    # value of sin z + z cos z on (0, pi/2) sits where 2 cos z = z sin z
    from scipy.optimize import brentq

    z = brentq(lambda z: 2 * math.cos(z) - z * math.sin(z), 0.5, 1.5)
    return -(math.sin(z) + z * math.cos(z)) / 9


def test_identity_and_linear():
    assert derivative_infimum(PiecewiseFn.from_expr("x", "x", (0, 1))) == pytest.approx(1.0, abs=1e-8)
    assert derivative_infimum(PiecewiseFn.from_expr("-3*x", "x", (0, 1))) == pytest.approx(-3.0, abs=1e-8)
    assert shift_constant(PiecewiseFn.from_expr("-3*x", "x", (0, 1))) == pytest.approx(3.0, abs=1e-8)


def test_monotone_function_needs_no_shift():
    assert shift_constant(PiecewiseFn.from_expr("x^3 + floor(x)", "x", (-2, 2), jumps=[-1, 0, 1])) <= 1e-8


def test_downward_jump_refused():
    pf = PiecewiseFn.from_expr("x - 2*floor(x)", "x", (0, 2), jumps=[1])
    with pytest.raises(CertificateRefused, match="x=1"):
        shift_constant(pf)


def test_undeclared_jump_is_inconsistent():
    pf = PiecewiseFn.from_expr("x - 2*floor(x)", "x", (0, 2))
    with pytest.raises(CertificateInconsistent):
        shift_constant(pf)


def test_example1_slice_jumps_are_upward():
    assert all(jc.ok for jc in ex1_slice().check_jumps())


def test_example1_slice_against_analytic_infimum():
    M = derivative_infimum(ex1_slice())
    assert M == pytest.approx(analytic_ex1_infimum(), abs=1e-6)
    assert M >= -L2_EX1
    assert shift_constant(ex1_slice()) <= L2_EX1


def test_example1_slice_against_brute_force():
    assert derivative_infimum(ex1_slice()) == pytest.approx(brute_force_slope(ex1_slice()), abs=1e-3)


def test_example2_slice_certifies_k():
    cfg = example2(0.05)
    c = shift_constant(cfg.piecewise_slice())
    assert c == pytest.approx(0.05, abs=1e-6)
    assert all(jc.ok for jc in cfg.piecewise_slice().check_jumps())


def test_example2_negative_side_has_downward_jumps():
    cfg = example2(0.05)
    pf = PiecewiseFn.from_expr(cfg.f, "x", (-0.25, -0.05), [-1 / n for n in range(5, 20)], {"t": 0.5})
    with pytest.raises(CertificateRefused):
        shift_constant(pf)


@pytest.mark.parametrize(
    "src,expected",
    [("x^2", -2.0), ("x^3 - 3*x", -3.0), ("2*x^2 - x", -5.0)],
)
def test_polynomials(src, expected):
    assert derivative_infimum(PiecewiseFn.from_expr(src, "x", (-1, 1))) == pytest.approx(expected, abs=1e-3)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 4),
    st.lists(st.floats(0.05, 0.95), min_size=0, max_size=4, unique=True),
)
def test_certificate_soundness(a, b, w, jumps):
    # smooth part plus upward steps at the declared points
    jumps = sorted(round(j, 3) for j in jumps)
    if len(set(jumps)) != len(jumps):
        return
    steps = " + ".join(f"piecewise(x >= {j}, 1, 0)" for j in jumps) or "0"
    src = f"{a}*sin({w}*x) + {b}*x^2 + {steps}"
    pf = PiecewiseFn.from_expr(src, "x", (0, 1), jumps)
    c = shift_constant(pf)
    assert monotone_scan(pf, c) <= 1e-9
    assert c >= 0


def test_window_filters_jumps():
    pf = PiecewiseFn.from_expr("floor(x)", "x", (0.5, 2.5), jumps=[0, 1, 2, 3])
    np.testing.assert_array_equal(pf.jumps, [1.0, 2.0])


def test_bad_windows():
    with pytest.raises(ValueError):
        PiecewiseFn.from_expr("x", "x", (1, 0))
    with pytest.raises(ValueError):
        PiecewiseFn.from_expr("x", "x", (0, 1), jumps=[0.5, 0.5])
    with pytest.raises(ValueError):
        derivative_infimum(PiecewiseFn.from_expr("x", "x", (0, 1)), samples_per_piece=8)

"""Shift constants for piecewise-C1 functions with upward jumps.

If f is C1 between jump points x_k, satisfies

    lim_{x -> x_k-} f(x) <= f(x_k) <= lim_{x -> x_k+} f(x)

at every jump, and M is the infimum of f' over all pieces, then
x -> f(x) + |M| x is nondecreasing. A slice of a nonlinearity in one argument
therefore yields the one-sided Lipschitz coefficient |M| for that argument.
Certificates are window-local: only the pieces inside [a, b] are examined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from . import expr as _expr

EPS_JUMP = 1e-9
SCAN_POINTS = 10_000
SCAN_TOL = 1e-9


class CertificateRefused(ValueError):
    """A declared jump point goes downward, so no shift constant exists."""


class CertificateInconsistent(RuntimeError):
    """f + c x failed the monotonicity scan; the pieces are undersampled."""


@dataclass(frozen=True)
class JumpCheck:
    x: float
    left: float
    value: float
    right: float

    @property
    def ok(self) -> bool:
        return self.left <= self.value + EPS_JUMP and self.value <= self.right + EPS_JUMP


class PiecewiseFn:
    """A scalar function on a window with user-declared jump points."""

    def __init__(self, fn: Callable, jumps, window: tuple[float, float]):
        a, b = (float(v) for v in window)
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ValueError(f"window must be finite with a < b, got {window}")
        xs = np.asarray(sorted(float(j) for j in jumps), dtype=float)
        if np.any(np.diff(xs) <= 0):
            raise ValueError("jump points must be strictly increasing")
        xs = xs[(xs > a) & (xs < b)]
        self.fn = fn
        self.window = (a, b)
        self.jumps = xs

    @classmethod
    def from_expr(cls, source, var: str, window, jumps=(), fixed: dict | None = None) -> "PiecewiseFn":
        """Slice an expression in (t, x, y) along ``var``, holding the others fixed."""
        if var not in _expr.VARIABLES:
            raise ValueError(f"slice variable must be one of {_expr.VARIABLES}")
        tree = _expr.parse(source) if isinstance(source, str) else source
        fixed = dict(fixed or {})

        def fn(v):
            args = {"t": fixed.get("t", 0.0), "x": fixed.get("x", 0.0), "y": fixed.get("y", 0.0)}
            args[var] = v
            return _expr.evaluate(tree, args["t"], args["x"], args["y"])

        return cls(fn, jumps, window)

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    @property
    def breaks(self) -> np.ndarray:
        a, b = self.window
        return np.concatenate([[a], self.jumps, [b]])

    def one_sided_limit(self, x: float, side: int) -> float:
        """Quadratic extrapolation to 0 from offsets d, d/2, d/4 on one side."""
        d = 1e-4 * (self.window[1] - self.window[0])
        f1, f2, f4 = self(np.array([x + side * d, x + side * d / 2, x + side * d / 4]))
        return float((8.0 * f4 - 6.0 * f2 + f1) / 3.0)

    def check_jumps(self) -> list[JumpCheck]:
        out = []
        for xk in self.jumps:
            out.append(
                JumpCheck(
                    float(xk),
                    self.one_sided_limit(xk, -1),
                    float(self(np.array([xk]))[0]),
                    self.one_sided_limit(xk, +1),
                )
            )
        return out


def _chebyshev(a: float, b: float, n: int) -> np.ndarray:
    k = np.arange(n)
    return 0.5 * (a + b) + 0.5 * (b - a) * np.cos((2 * k + 1) * np.pi / (2 * n))[::-1]


def _derivative(pf: PiecewiseFn, x: np.ndarray, step: float) -> np.ndarray:
    return (pf(x + step) - pf(x - step)) / (2 * step)


def derivative_infimum(pf: PiecewiseFn, samples_per_piece: int = 64) -> float:
    """Smallest derivative over all pieces in the window.

    Each piece is sampled at Chebyshev points and at its two ends (pulled in
    so the central-difference stencil stays inside the piece); the best
    sample is then polished by a bounded scalar minimisation between its
    neighbours.
    """
    if samples_per_piece < 16:
        raise ValueError("samples_per_piece must be >= 16")
    best = np.inf
    br = pf.breaks
    for a, b in zip(br[:-1], br[1:]):
        step = 1e-6 * (b - a)
        lo_end, hi_end = a + 2 * step, b - 2 * step
        xs = np.concatenate([[lo_end], _chebyshev(a, b, samples_per_piece), [hi_end]])
        d = _derivative(pf, xs, step)
        i = int(np.argmin(d))
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
        res = minimize_scalar(
            lambda z: float(_derivative(pf, np.array([z]), step)[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10 * (b - a)},
        )
        best = min(best, float(d[i]), float(res.fun))
    return best


def monotone_scan(pf: PiecewiseFn, c: float, points: int = SCAN_POINTS) -> float:
    """Largest drop of x -> f(x) + c x between consecutive scan points (>= 0)."""
    a, b = pf.window
    x = np.linspace(a, b, points)
    g = pf(x) + c * x
    return float(max(0.0, np.max(g[:-1] - g[1:])))


def shift_constant(pf: PiecewiseFn, samples_per_piece: int = 64) -> float:
    """Return c = max(0, -M) such that f(x) + c x is nondecreasing on the window.

    Raises CertificateRefused when a declared jump is downward and
    CertificateInconsistent when the monotonicity scan fails.
    """
    for jc in pf.check_jumps():
        if not jc.ok:
            raise CertificateRefused(
                f"jump at x={jc.x:.6g} is not upward: left {jc.left:.6g}, "
                f"value {jc.value:.6g}, right {jc.right:.6g}"
            )
    M = derivative_infimum(pf, samples_per_piece)
    if not np.isfinite(M):
        raise CertificateRefused("derivative infimum is not finite")
    c = max(0.0, -M)
    drop = monotone_scan(pf, c)
    if drop > SCAN_TOL:
        raise CertificateInconsistent(
            f"f + {c:.6g} x drops by {drop:.3g}; add jump points or samples"
        )
    return c


def brute_force_slope(pf: PiecewiseFn, points: int = 100_000) -> float:
    """Minimum forward-difference slope on a uniform scan, skipping jump cells."""
    a, b = pf.window
    x = np.linspace(a, b, points)
    slope = np.diff(pf(x)) / np.diff(x)
    cell = np.searchsorted(pf.jumps, x, side="right")
    keep = cell[:-1] == cell[1:]
    # a scan point sitting exactly on a jump belongs to the piece on its left
    on_jump = np.isin(x, pf.jumps)
    keep &= ~on_jump[:-1] & ~on_jump[1:]
    return float(np.min(slope[keep]))

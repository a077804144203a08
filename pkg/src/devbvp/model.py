"""Problem instances for -u'' = f(t, u(tau_x(t)), u(tau(t))) with history data.

The unknown lives on [-r, T]: it equals the history function ``phi`` on
[-r, 0] and satisfies the differential equation on I = [0, T] together with
``u(T) = B``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import expr as _expr
from .grid import GridFunction, Mesh, second_difference

GLUE_TOL = 1e-9


class GluingError(ValueError):
    """Raised when a function on [0, T] does not meet the history at t = 0."""


class ScalarMap:
    """A real function of t, backed by an expression, a grid function or a callable."""

    def __init__(self, fn: Callable, source=None):
        self._fn = fn
        self.source = source

    @classmethod
    def from_expr(cls, e) -> "ScalarMap":
        tree = _expr.parse(e) if isinstance(e, str) else e
        return cls(lambda t: _expr.evaluate(tree, t), source=tree)

    @classmethod
    def from_grid(cls, u: GridFunction) -> "ScalarMap":
        return cls(u, source=u)

    @classmethod
    def constant(cls, c: float) -> "ScalarMap":
        return cls.from_expr(_expr.Num(float(c)))

    @classmethod
    def coerce(cls, obj) -> "ScalarMap":
        if isinstance(obj, ScalarMap):
            return obj
        if isinstance(obj, (str, _expr.Num, _expr.Var, _expr.Const, _expr.Unary, _expr.Binary, _expr.Call)):
            return cls.from_expr(obj)
        if isinstance(obj, GridFunction):
            return cls.from_grid(obj)
        if isinstance(obj, (int, float)):
            return cls.constant(obj)
        if callable(obj):
            return cls(obj)
        raise TypeError(f"cannot build a ScalarMap from {type(obj).__name__}")

    def __call__(self, t):
        out = self._fn(t)
        if np.ndim(t) == 0:
            out = float(out)
        else:
            out = np.broadcast_to(np.asarray(out, dtype=float), np.shape(t))
        if not np.all(np.isfinite(out)):
            raise ValueError("scalar map returned a non-finite value")
        return out

    def __repr__(self):
        if isinstance(self.source, GridFunction) or self.source is None:
            return f"ScalarMap({self.source!r})"
        return f"ScalarMap({_expr.unparse(self.source)!r})"


class TernaryMap:
    """The nonlinearity f(t, x, y), vectorised over its arguments."""

    def __init__(self, fn: Callable, source=None):
        self._fn = fn
        self.source = source

    @classmethod
    def from_expr(cls, e) -> "TernaryMap":
        tree = _expr.parse(e) if isinstance(e, str) else e
        return cls(lambda t, x, y: _expr.evaluate(tree, t, x, y), source=tree)

    @classmethod
    def coerce(cls, obj) -> "TernaryMap":
        if isinstance(obj, TernaryMap):
            return obj
        if isinstance(obj, str):
            return cls.from_expr(obj)
        if callable(obj):
            return cls(obj)
        raise TypeError(f"cannot build a TernaryMap from {type(obj).__name__}")

    def __call__(self, t, x, y):
        return self._fn(t, x, y)

    def __repr__(self):
        if self.source is None:
            return "TernaryMap(<callable>)"
        return f"TernaryMap({_expr.unparse(self.source)!r})"


@dataclass(frozen=True)
class DeviatedBVP:
    """-u''(t) = f(t, u(tau_x(t)), u(tau(t))) on [0, T], u = phi on [-r, 0], u(T) = B.

    ``tau_x`` defaults to the identity, which gives the usual form
    f(t, u(t), u(tau(t))). ``singular_at_zero`` marks nonlinearities that are
    undefined at t = 0 (integrable blow-up); solvers then never sample t = 0.
    """

    T: float
    r: float
    B: float
    tau: ScalarMap
    phi: ScalarMap
    f: TernaryMap
    tau_x: ScalarMap | None = None
    singular_at_zero: bool = False
    name: str = "problem"

    def __post_init__(self):
        object.__setattr__(self, "tau", ScalarMap.coerce(self.tau))
        object.__setattr__(self, "phi", ScalarMap.coerce(self.phi))
        object.__setattr__(self, "f", TernaryMap.coerce(self.f))
        if self.tau_x is not None:
            object.__setattr__(self, "tau_x", ScalarMap.coerce(self.tau_x))

    def x_argument(self, t):
        return t if self.tau_x is None else self.tau_x(t)

    def mesh(self, N: int = 200) -> Mesh:
        return Mesh.uniform(self.T, self.r, N)


def validate_problem(p: DeviatedBVP, mesh: Mesh) -> list[str]:
    """Collect violated invariants of ``p`` on the nodes of ``mesh``; empty means valid."""
    out = []
    if not p.T > 0:
        out.append(f"T={p.T} must be positive")
    if not p.r >= 0:
        out.append(f"r={p.r} must be nonnegative")
    if not np.isfinite(p.B):
        out.append(f"B={p.B} must be finite")
    if out:
        return out
    t = mesh.t
    for label, m in (("tau", p.tau), ("tau_x", p.tau_x)):
        if m is None:
            continue
        try:
            vals = m(t)
        except (ValueError, _expr.ExprError) as exc:
            out.append(f"{label} undefined on [0,T]: {exc}")
            continue
        lo = np.flatnonzero(vals < -p.r - 1e-12)
        hi = np.flatnonzero(vals > p.T + 1e-12)
        if lo.size:
            i = lo[0]
            out.append(f"{label}({t[i]:.6g})={vals[i]:.6g} < -r={-p.r:.6g}")
        if hi.size:
            i = hi[0]
            out.append(f"{label}({t[i]:.6g})={vals[i]:.6g} > T={p.T:.6g}")
    try:
        p.phi(mesh.history)
    except (ValueError, _expr.ExprError) as exc:
        out.append(f"phi not finite on [-r,0]: {exc}")
    return out


def history_extend(u: GridFunction, phi: ScalarMap, r: float) -> GridFunction:
    """Glue ``phi`` on [-r, 0] to the [0, T] part of ``u``.

    Raises GluingError if u(0) and phi(0) differ by more than GLUE_TOL.
    """
    phi = ScalarMap.coerce(phi)
    main = u.on_interval
    if abs(main[0] - phi(0.0)) > GLUE_TOL:
        raise GluingError(f"u(0)={main[0]:.17g} but phi(0)={phi(0.0):.17g}")
    if r == 0 and u.mesh.r == 0:
        return u
    mesh = Mesh(u.mesh.T, r, u.mesh.N)
    hist = phi(mesh.nodes[: mesh.i0]) if mesh.i0 else np.empty(0)
    return GridFunction(mesh, np.concatenate([hist, main]))


@dataclass(frozen=True)
class SolutionClassMember:
    """A grid function on [-r, T] that matches phi on the history, with its
    second differences on [0, T] (the mesh-level stand-in for W^{2,1})."""

    u: GridFunction
    second_diff: np.ndarray

    @classmethod
    def build(cls, u: GridFunction, phi: ScalarMap, tol: float = GLUE_TOL) -> "SolutionClassMember":
        phi = ScalarMap.coerce(phi)
        hist = u.mesh.history
        err = np.max(np.abs(u.values[: u.mesh.i0 + 1] - phi(hist)))
        if err > tol:
            raise GluingError(f"function differs from phi on the history by {err:.3g}")
        return cls(u, second_difference(u))

"""Picard iteration on the integral form of the Dirichlet problem.

A function u on [-r, T] solves the problem exactly when it is a fixed point of

    Gu(t) = phi(t),                                  t in [-r, 0]
    Gu(t) = phi(0) + C t - int_0^t (t - s) F(s) ds,  t in [0, T]

with F(s) = f(s, u(tau_x(s)), u(tau(s))) and
C = (B - phi(0) + int_0^T (T - s) F(s) ds) / T.

Quadrature is the composite trapezoid rule on the mesh nodes, applied through
the running sums of F and s F, so one sweep costs O(N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as _expr
from .grid import GridFunction, Mesh, PointInterp, second_difference, write_columns
from .model import DeviatedBVP


class ContractionRefused(ValueError):
    """The supplied contraction estimate is not below 1."""


class NonlinearityError(ValueError):
    """f could not be evaluated along the current iterate."""


class PicardNonConvergence(RuntimeError):
    def __init__(self, message: str, deltas: list[float]):
        self.deltas = list(deltas)
        super().__init__(message)


@dataclass(frozen=True)
class PicardSettings:
    tol_sup: float = 1e-10
    max_iter: int = 10_000
    q_estimate: float | None = None
    record_residuals: bool = False

    def __post_init__(self):
        if not self.tol_sup > 0:
            raise ValueError("tol_sup must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class PicardResult:
    u: GridFunction
    iterations: int
    final_delta: float
    residual_L1: float
    predicted_iters: int | None
    deltas: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)

    def ratios(self) -> np.ndarray:
        d = np.asarray(self.deltas)
        return d[1:] / d[:-1]

    def write_log(self, path) -> None:
        n = np.arange(1, len(self.deltas) + 1)
        cols = {"n": n, "delta_sup": np.asarray(self.deltas)}
        if self.residuals:
            cols["residual_L1"] = np.asarray(self.residuals)
        else:
            cols["residual_L1"] = np.full(len(n), np.nan)
        write_columns(path, cols)


class Discretization:
    """Everything about (problem, mesh) that stays fixed across sweeps.

    F is sampled at the nodes of [0, T]; for a problem singular at t = 0 the
    first sample is moved to h/4. Deviated points are located once.
    """

    def __init__(self, p: DeviatedBVP, mesh: Mesh):
        if (mesh.T, mesh.r) != (p.T, p.r):
            raise ValueError(f"{mesh!r} does not match problem T={p.T}, r={p.r}")
        self.p = p
        self.mesh = mesh
        s = np.array(mesh.t)
        if p.singular_at_zero:
            s[0] = 0.25 * mesh.h
        s.flags.writeable = False
        self.samples = s
        self.at_tau: PointInterp = mesh.locate(p.tau(s))
        self.at_x: PointInterp = mesh.locate(p.x_argument(s))
        self.phi_hist = np.asarray(p.phi(mesh.history), dtype=float).reshape(-1)
        self.phi0 = float(p.phi(0.0))
        t = mesh.t
        self._dt = np.diff(t)

    def nonlinearity(self, values: np.ndarray) -> np.ndarray:
        """F(s) = f(s, u(tau_x(s)), u(tau(s))) at the samples."""
        try:
            return np.asarray(
                self.p.f(self.samples, self.at_x.apply(values), self.at_tau.apply(values)),
                dtype=float,
            )
        except _expr.ExprDomainError as exc:
            raise NonlinearityError(f"nonlinearity undefined: {exc}") from exc

    def sweep(self, F: np.ndarray) -> np.ndarray:
        """Apply the integral operator to sampled forcing F; returns full-mesh values."""
        t = self.mesh.t
        T = self.mesh.T
        half = 0.5 * self._dt
        I0 = np.concatenate([[0.0], np.cumsum(half * (F[:-1] + F[1:]))])
        sF = t * F
        I1 = np.concatenate([[0.0], np.cumsum(half * (sF[:-1] + sF[1:]))])
        W = t * I0 - I1
        C = (self.p.B - self.phi0 + W[-1]) / T
        v = self.phi0 + C * t - W
        v[0] = self.phi0
        v[-1] = self.p.B
        return np.concatenate([self.phi_hist[:-1], v])

    def affine_start(self) -> np.ndarray:
        t = self.mesh.t
        v = self.phi0 + (self.p.B - self.phi0) * t / self.mesh.T
        return np.concatenate([self.phi_hist[:-1], v])

    def residual_L1(self, values: np.ndarray, F: np.ndarray | None = None) -> float:
        """h * sum |-u'' - f| over interior nodes of [0, T]."""
        if F is None:
            F = self.nonlinearity(values)
        d2 = second_difference(GridFunction(self.mesh, values))
        return float(self.mesh.h * np.sum(np.abs(-d2 - F[1:-1])))


def predicted_iterations(q: float, delta1: float, tol: float) -> int:
    """ceil(log(tol (1 - q) / delta1) / log q): a priori sweep count."""
    if delta1 <= tol:
        return 1
    if q <= 0.0:
        return 1
    return max(1, math.ceil(math.log(tol * (1.0 - q) / delta1) / math.log(q)))


def iterate(
    disc: Discretization,
    forcing: Callable[[np.ndarray], np.ndarray],
    settings: PicardSettings,
    u0: np.ndarray,
) -> PicardResult:
    q = settings.q_estimate
    if q is not None and not 0.0 <= q < 1.0:
        raise ContractionRefused(f"contraction estimate q={q:.6g} is not in [0, 1)")
    u = np.asarray(u0, dtype=float)
    deltas: list[float] = []
    residuals: list[float] = []
    predicted = None
    for n in range(1, settings.max_iter + 1):
        F = forcing(u)
        v = disc.sweep(F)
        d = float(np.max(np.abs(v - u)))
        deltas.append(d)
        u = v
        if settings.record_residuals:
            residuals.append(disc.residual_L1(u))
        if n == 1 and q is not None:
            predicted = predicted_iterations(q, d, settings.tol_sup)
        if d <= settings.tol_sup:
            break
    else:
        raise PicardNonConvergence(
            f"no convergence in {settings.max_iter} sweeps (last delta {deltas[-1]:.3g})",
            deltas,
        )
    return PicardResult(
        u=GridFunction(disc.mesh, u),
        iterations=len(deltas),
        final_delta=deltas[-1],
        residual_L1=disc.residual_L1(u),
        predicted_iters=predicted,
        deltas=deltas,
        residuals=residuals,
    )


def apply_integral_operator(
    p: DeviatedBVP, u: GridFunction, disc: Discretization | None = None
) -> GridFunction:
    """One application of the integral operator to ``u``."""
    if disc is None:
        disc = Discretization(p, u.mesh)
    return GridFunction(disc.mesh, disc.sweep(disc.nonlinearity(u.values)))


def picard_solve(
    p: DeviatedBVP,
    settings: PicardSettings = PicardSettings(),
    u0: GridFunction | None = None,
    mesh: Mesh | None = None,
    disc: Discretization | None = None,
) -> PicardResult:
    """Fixed point of the integral operator by successive substitution.

    ``settings.q_estimate`` must lie in [0, 1) when given; it only drives the
    predicted iteration count. The solver evaluates f along the iterates and
    cannot verify a global Lipschitz bound.
    """
    if disc is None:
        if mesh is None:
            mesh = u0.mesh if u0 is not None else p.mesh()
        disc = Discretization(p, mesh)
    start = disc.affine_start() if u0 is None else u0.values
    return iterate(disc, disc.nonlinearity, settings, start)

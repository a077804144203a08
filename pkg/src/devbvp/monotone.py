"""Monotone iteration between a lower and an upper solution.

For gamma in the order interval [alpha, beta], G(gamma) is the solution of the
linear auxiliary problem

    -u'' + L1 (u o tau_x - gamma o tau_x) + L2 (u o tau - gamma o tau) = f(t, gamma o tau_x, gamma o tau)

with the original history and endpoint data. Under the one-sided Lipschitz
bound G is nondecreasing and maps [alpha, beta] into itself, so the sequences
alpha, G alpha, ... and beta, G beta, ... increase and decrease toward the
least and greatest solutions in [alpha, beta].
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .conditions import LipschitzPair, compute_norms, green_factor, rule_for
from .contraction import Discretization, PicardResult, PicardSettings, iterate
from .grid import GridFunction, Mesh, cell_integrals, format_float, second_difference, write_columns
from .model import DeviatedBVP, ScalarMap

log = logging.getLogger(__name__)

EPS_ORD = 1e-9
EPS_MONO = 1e-7
EPS_VER = 1e-7
STALL_WINDOW = 5


class OrderingViolation(RuntimeError):
    """Computed iterates broke the order the maximum principle guarantees."""

    def __init__(self, side: str, step: int, t: float, amount: float, N: int):
        self.side, self.step, self.t, self.amount, self.N = side, step, t, amount, N
        super().__init__(
            f"{side} sequence step {step}: ordering violated by {amount:.3g} "
            f"at t={t:.6g} (N={N})"
        )


# ---------------------------------------------------------------- lower/upper pair


@dataclass(frozen=True)
class LowerUpperPair:
    alpha: GridFunction
    beta: GridFunction
    alpha_source: ScalarMap | None = None
    beta_source: ScalarMap | None = None

    def __post_init__(self):
        if self.alpha.mesh != self.beta.mesh:
            raise ValueError("alpha and beta live on different meshes")
        bad = self.alpha.values - self.beta.values
        if np.max(bad) > EPS_ORD:
            i = int(np.argmax(bad))
            t = self.alpha.mesh.nodes[i]
            raise ValueError(f"alpha > beta at t={t:.6g} by {bad[i]:.3g}")

    @classmethod
    def from_maps(cls, alpha, beta, mesh: Mesh) -> "LowerUpperPair":
        a = ScalarMap.coerce(alpha)
        b = ScalarMap.coerce(beta)
        return cls(GridFunction.from_callable(mesh, a), GridFunction.from_callable(mesh, b), a, b)

    @property
    def mesh(self) -> Mesh:
        return self.alpha.mesh

    def on(self, mesh: Mesh) -> "LowerUpperPair":
        """The same pair on another mesh (re-sampled from source when known)."""
        a = GridFunction.from_callable(mesh, self.alpha_source) if self.alpha_source else self.alpha.resample(mesh)
        b = GridFunction.from_callable(mesh, self.beta_source) if self.beta_source else self.beta.resample(mesh)
        return LowerUpperPair(a, b, self.alpha_source, self.beta_source)

    def convex(self, lam: float) -> GridFunction:
        return GridFunction(self.mesh, (1 - lam) * self.alpha.values + lam * self.beta.values)


# ---------------------------------------------------------------- verification


@dataclass
class VerificationReport:
    kind: str
    differential_defect: np.ndarray
    boundary_defects: dict[str, float]
    tol: float
    tol_differential: float

    @property
    def max_differential_defect(self) -> float:
        d = self.differential_defect
        return float(np.max(d)) if d.size else 0.0

    @property
    def is_valid(self) -> bool:
        return self.max_differential_defect <= self.tol_differential and all(
            v <= self.tol for v in self.boundary_defects.values()
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "is_valid": self.is_valid,
            "max_differential_defect": self.max_differential_defect,
            "tol_differential": self.tol_differential,
            "boundary_defects": dict(self.boundary_defects),
            "tol": self.tol,
        }


def _verify(p: DeviatedBVP, u: GridFunction, kind: str, eps_ver: float) -> VerificationReport:
    disc = Discretization(p, u.mesh)
    mesh = u.mesh
    F = disc.nonlinearity(u.values)[1:-1]
    minus_u2 = -second_difference(u)
    hist = u.values[: mesh.i0 + 1]
    phi = disc.phi_hist
    sign = 1.0 if kind == "lower" else -1.0
    # lower: -a'' <= f, a <= phi, phi - a <= phi(0) - a(0), a(T) <= B
    # upper: the same with every inequality reversed
    diff = np.maximum(0.0, sign * (minus_u2 - F))
    gap = sign * (hist - phi)  # must be <= 0
    drop = -gap - (-gap[-1])  # (phi-a) - (phi-a)(0) for lower, (b-phi) - (b-phi)(0) for upper
    boundary = {
        "history_order": float(max(0.0, np.max(gap[:-1]))) if mesh.i0 else 0.0,
        "initial": float(max(0.0, gap[-1])),
        "history_drop": float(max(0.0, np.max(drop))),
        "endpoint": float(max(0.0, sign * (u.values[-1] - p.B))),
    }
    tol_diff = max(eps_ver, mesh.h**2)
    return VerificationReport(kind, diff, boundary, eps_ver, tol_diff)


def verify_lower(p: DeviatedBVP, alpha: GridFunction, eps_ver: float = EPS_VER) -> VerificationReport:
    """Check the lower-solution inequalities at mesh resolution."""
    return _verify(p, alpha, "lower", eps_ver)


def verify_upper(p: DeviatedBVP, beta: GridFunction, eps_ver: float = EPS_VER) -> VerificationReport:
    """Check the upper-solution inequalities at mesh resolution."""
    return _verify(p, beta, "upper", eps_ver)


# ---------------------------------------------------------------- the operator G


class MonotoneOperator:
    """G on a fixed mesh; caches coefficients and deviated-point lookups."""

    def __init__(self, p: DeviatedBVP, lp: LipschitzPair, mesh: Mesh, settings: PicardSettings = PicardSettings()):
        self.p = p
        self.lp = lp
        self.disc = Discretization(p, mesh)
        s = self.disc.samples
        self.L1 = np.broadcast_to(np.asarray(lp.L1(s), dtype=float), s.shape)
        self.L2 = np.broadcast_to(np.asarray(lp.L2(s), dtype=float), s.shape)
        if settings.q_estimate is None:
            settings = replace(settings, q_estimate=green_factor(lp, mesh))
        self.settings = settings

    @property
    def mesh(self) -> Mesh:
        return self.disc.mesh

    def solve(self, gamma: np.ndarray, start: np.ndarray | None = None) -> PicardResult:
        d = self.disc
        gx = d.at_x.apply(gamma)
        gy = d.at_tau.apply(gamma)
        frozen = d.nonlinearity(gamma) + self.L1 * gx + self.L2 * gy

        def forcing(u):
            return frozen - self.L1 * d.at_x.apply(u) - self.L2 * d.at_tau.apply(u)

        return iterate(d, forcing, self.settings, gamma if start is None else start)

    def __call__(self, gamma: GridFunction) -> GridFunction:
        return self.solve(gamma.values).u


def apply_G(
    p: DeviatedBVP,
    lp: LipschitzPair,
    gamma: GridFunction,
    settings: PicardSettings = PicardSettings(),
) -> GridFunction:
    """Solve the auxiliary linear problem frozen at ``gamma``."""
    return MonotoneOperator(p, lp, gamma.mesh, settings)(gamma)


# ---------------------------------------------------------------- extremal iteration


@dataclass
class SideRun:
    side: str
    iterates: list[np.ndarray]
    deltas: list[float]
    defects: list[float]
    residuals: list[float]
    converged: bool
    stalled: bool


@dataclass
class ExtremalBracket:
    mesh: Mesh
    alpha: GridFunction
    beta: GridFunction
    lower_iterates: list[GridFunction]
    upper_iterates: list[GridFunction]
    monotonicity_defect: float
    lower: SideRun
    upper: SideRun
    refined: bool = False
    log_rows: list[tuple] = field(default_factory=list)

    @property
    def u_star_low(self) -> GridFunction:
        return self.lower_iterates[-1]

    @property
    def u_star_high(self) -> GridFunction:
        return self.upper_iterates[-1]

    @property
    def gap(self) -> GridFunction:
        return GridFunction(self.mesh, self.u_star_high.values - self.u_star_low.values)

    @property
    def converged(self) -> bool:
        return self.lower.converged and self.upper.converged

    @property
    def residual_low(self) -> float:
        return self.lower.residuals[-1]

    @property
    def residual_high(self) -> float:
        return self.upper.residuals[-1]

    def summary(self) -> dict:
        return {
            "N": self.mesh.N,
            "refined": self.refined,
            "converged": self.converged,
            "lower": {
                "steps": len(self.lower.deltas),
                "converged": self.lower.converged,
                "stalled": self.lower.stalled,
                "final_delta": self.lower.deltas[-1] if self.lower.deltas else 0.0,
                "residual_L1": self.residual_low,
                "u_at_0": float(self.u_star_low.on_interval[0]),
                "u_at_T": float(self.u_star_low.values[-1]),
            },
            "upper": {
                "steps": len(self.upper.deltas),
                "converged": self.upper.converged,
                "stalled": self.upper.stalled,
                "final_delta": self.upper.deltas[-1] if self.upper.deltas else 0.0,
                "residual_L1": self.residual_high,
                "u_at_0": float(self.u_star_high.on_interval[0]),
                "u_at_T": float(self.u_star_high.values[-1]),
            },
            "monotonicity_defect": self.monotonicity_defect,
            "max_gap": float(np.max(self.gap.values)),
        }

    def write_bracket(self, path) -> None:
        write_columns(
            path,
            {
                "t": self.mesh.nodes,
                "alpha": self.alpha.values,
                "u_star_low": self.u_star_low.values,
                "u_star_high": self.u_star_high.values,
                "beta": self.beta.values,
            },
        )

    def write_log(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "side", "delta_sup", "ordering_defect", "residual_L1"])
            for step, side, delta, defect, res in self.log_rows:
                w.writerow([step, side, format_float(delta), format_float(defect), format_float(res)])


def _stalled(deltas: list[float], outer_tol: float) -> bool:
    if len(deltas) < STALL_WINDOW:
        return False
    tail = deltas[-STALL_WINDOW:]
    small = all(d < 10 * outer_tol for d in tail)
    nonmonotone = any(b >= a for a, b in zip(tail, tail[1:]))
    return small and nonmonotone


def _run_side(
    op: MonotoneOperator,
    lu: LowerUpperPair,
    side: str,
    outer_tol: float,
    max_outer: int,
    eps_mono: float,
) -> SideRun:
    x = (lu.alpha if side == "lower" else lu.beta).values
    nodes = op.mesh.nodes
    a, b = lu.alpha.values, lu.beta.values
    run = SideRun(side, [x], [], [], [], False, False)
    for step in range(1, max_outer + 1):
        y = op.solve(x).u.values
        delta = float(np.max(np.abs(y - x)))
        mono = (x - y) if side == "lower" else (y - x)
        viol = np.maximum(np.maximum(mono, a - y), y - b)
        i = int(np.argmax(viol))
        defect = max(0.0, float(viol[i]))
        if defect > eps_mono:
            raise OrderingViolation(side, step, float(nodes[i]), defect, op.mesh.N)
        run.iterates.append(y)
        run.deltas.append(delta)
        run.defects.append(defect)
        run.residuals.append(op.disc.residual_L1(y))
        x = y
        if delta <= outer_tol:
            run.converged = True
            break
        if _stalled(run.deltas, outer_tol):
            run.converged = True
            run.stalled = True
            log.warning("%s sequence stalled below 10*outer_tol at step %d", side, step)
            break
    return run


def _workers(workers: int | None) -> int:
    if workers is not None:
        return workers
    try:
        return max(1, int(os.environ.get("DEVBVP_THREADS", "1")))
    except ValueError:
        return 1


def _bracket_once(p, lp, lu, settings, outer_tol, max_outer, eps_mono, workers) -> ExtremalBracket:
    op = MonotoneOperator(p, lp, lu.mesh, settings)
    args = (outer_tol, max_outer, eps_mono)
    if _workers(workers) >= 2:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fl = pool.submit(_run_side, op, lu, "lower", *args)
            fu = pool.submit(_run_side, op, lu, "upper", *args)
            low, up = fl.result(), fu.result()
    else:
        low = _run_side(op, lu, "lower", *args)
        up = _run_side(op, lu, "upper", *args)

    worst = max(low.defects + up.defects + [0.0])
    nl, nu = len(low.iterates), len(up.iterates)
    for n in range(max(nl, nu)):
        diff = low.iterates[min(n, nl - 1)] - up.iterates[min(n, nu - 1)]
        i = int(np.argmax(diff))
        if diff[i] > eps_mono:
            raise OrderingViolation("cross", n, float(lu.mesh.nodes[i]), float(diff[i]), lu.mesh.N)
        worst = max(worst, float(diff[i]))

    rows = []
    for run in (low, up):
        for k, (d, e, r) in enumerate(zip(run.deltas, run.defects, run.residuals), start=1):
            rows.append((k, run.side, d, e, r))
    mesh = lu.mesh
    return ExtremalBracket(
        mesh=mesh,
        alpha=lu.alpha,
        beta=lu.beta,
        lower_iterates=[GridFunction(mesh, v) for v in low.iterates],
        upper_iterates=[GridFunction(mesh, v) for v in up.iterates],
        monotonicity_defect=max(0.0, worst),
        lower=low,
        upper=up,
        log_rows=rows,
    )


def iterate_extremal(
    p: DeviatedBVP,
    lp: LipschitzPair,
    lu: LowerUpperPair,
    settings: PicardSettings = PicardSettings(),
    outer_tol: float = 1e-8,
    max_outer: int = 500,
    eps_mono: float = EPS_MONO,
    workers: int | None = None,
    refine_on_violation: bool = True,
) -> ExtremalBracket:
    """Run the increasing sequence from alpha and the decreasing one from beta.

    The caller is responsible for the hypotheses (valid lower/upper
    solutions, main smallness rule). Every step is checked against the
    ordering alpha_n <= alpha_{n+1} <= beta_{n+1} <= beta_n within
    ``eps_mono``. On the first violation the mesh is doubled once and the run
    repeated; a second violation raises OrderingViolation. If ``max_outer``
    is reached the partial bracket is returned with ``converged`` False.
    """
    try:
        return _bracket_once(p, lp, lu, settings, outer_tol, max_outer, eps_mono, workers)
    except OrderingViolation as exc:
        if not refine_on_violation:
            raise
        log.warning("%s; retrying on a doubled mesh", exc)
        fine = lu.mesh.refined()
        out = _bracket_once(p, lp, lu.on(fine), settings, outer_tol, max_outer, eps_mono, workers)
        out.refined = True
        return out


def derivative_bound(p: DeviatedBVP, lp: LipschitzPair, lu: LowerUpperPair, psi: ScalarMap) -> float:
    """|B - phi(0)|/T + ||psi||_1 + ||L1+L2||_1 ||beta - alpha||_inf.

    Bounds the slope of every image G(gamma) with gamma in [alpha, beta]; the
    starting functions alpha and beta are not images and may exceed it.
    """
    mesh = lu.mesh
    norms = lp.norms or compute_norms(lp, mesh)
    psi_rule = rule_for(p.singular_at_zero or lp.singular)
    psi_1 = cell_integrals(lambda s: np.abs(psi(s)), mesh.t, psi_rule).total
    width = float(np.max(lu.beta.values - lu.alpha.values))
    return abs(p.B - float(p.phi(0.0))) / p.T + psi_1 + norms.n_1 * width


def max_slope(u: GridFunction) -> float:
    v = u.on_interval
    return float(np.max(np.abs(np.diff(v)))) / u.mesh.h

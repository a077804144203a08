"""Smallness conditions on the Lipschitz coefficients L1, L2.

Uniqueness conditions (Lipschitz case, sup-norm contraction):

    C1:  ||L1+L2||_inf < 1/T^2
    C2:  ||L1+L2||_2   < (3/(2 T^3))^(1/2)
    C3:  ||L1+L2||_1   < 1/(2T)

Maximum-principle conditions:

    C1^: ||L1+L2||_inf < 2/T^2
    C2^: ||L1+L2||_2   < 2^(1/2)/T
    C3^: ||L1+L2||_1   < 1/T

The monotone method needs one of C1, C2, C3 when T >= 3/4 and one of
C1, C2^, C3 when 0 < T < 3/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Mesh, QuadratureRule, cell_integrals
from .model import ScalarMap

EPS_COND = 1e-12
T_SPLIT = 0.75


class InvalidCoefficientError(ValueError):
    """A Lipschitz coefficient is negative or not integrable."""


@dataclass(frozen=True)
class Norms:
    n_inf: float
    n_2: float
    n_1: float

    def holder_ok(self, T: float, rtol: float = 1e-9) -> bool:
        """n_1 <= sqrt(T) n_2 <= T n_inf, skipped for infinite entries."""
        a, b, c = self.n_1, math.sqrt(T) * self.n_2, T * self.n_inf
        ok = True
        if math.isfinite(b):
            ok &= a <= b * (1 + rtol) + 1e-14
        if math.isfinite(b) and math.isfinite(c):
            ok &= b <= c * (1 + rtol) + 1e-14
        return ok


@dataclass(frozen=True)
class LipschitzPair:
    """Coefficients (L1, L2) of the one-sided Lipschitz bound, with cached norms."""

    L1: ScalarMap
    L2: ScalarMap
    L1_singular: bool = False
    L2_singular: bool = False
    norms: Norms | None = None

    def __post_init__(self):
        object.__setattr__(self, "L1", ScalarMap.coerce(self.L1))
        object.__setattr__(self, "L2", ScalarMap.coerce(self.L2))

    @property
    def singular(self) -> bool:
        return self.L1_singular or self.L2_singular

    def total(self, t):
        return self.L1(t) + self.L2(t)

    def with_norms(self, mesh: Mesh) -> "LipschitzPair":
        return replace(self, norms=compute_norms(self, mesh))


def rule_for(singular: bool) -> QuadratureRule:
    """Graded midpoint for integrands singular at t = 0, trapezoid otherwise."""
    if singular:
        return QuadratureRule("midpoint", singular_left=True)
    return QuadratureRule("trapezoid")


def _rule(lp: LipschitzPair) -> QuadratureRule:
    return rule_for(lp.singular)


def _checked_total(lp: LipschitzPair, t: np.ndarray) -> np.ndarray:
    a, b = lp.L1(t), lp.L2(t)
    for name, v in (("L1", a), ("L2", b)):
        neg = np.flatnonzero(v < 0)
        if neg.size:
            i = neg[0]
            raise InvalidCoefficientError(f"{name}({t[i]:.6g}) = {v[i]:.6g} is negative")
    return a + b


def _sample_points(lp: LipschitzPair, mesh: Mesh) -> np.ndarray:
    t = mesh.t
    mids = 0.5 * (t[:-1] + t[1:])
    pts = np.sort(np.concatenate([t, mids]))
    return pts[1:] if lp.singular else pts


def compute_norms(lp: LipschitzPair, mesh: Mesh) -> Norms:
    """L^inf, L^2 and L^1 norms of L1+L2 on [0, T].

    The sup norm is a max over nodes and cell midpoints, or infinity for a
    coefficient flagged singular. The L^2 norm integrates (L1+L2)^2 directly.
    Divergence of a singular integral is detected from the graded cells and
    reported as infinity (L^2) or an error (L^1).
    """
    pts = _sample_points(lp, mesh)
    total = _checked_total(lp, pts)
    n_inf = math.inf if lp.singular else float(np.max(total))
    rule = _rule(lp)
    sq = cell_integrals(lambda s: _checked_total(lp, s) ** 2, mesh.t, rule)
    n_2 = math.inf if sq.diverges else math.sqrt(sq.total)
    one = cell_integrals(lambda s: _checked_total(lp, s), mesh.t, rule)
    if one.diverges:
        raise InvalidCoefficientError("L1+L2 is not integrable on [0, T]")
    return Norms(n_inf, n_2, one.total)


@dataclass(frozen=True)
class ConditionCheck:
    holds: bool
    lhs: float
    threshold: float
    margin: float

    @classmethod
    def compare(cls, lhs: float, threshold: float) -> "ConditionCheck":
        margin = threshold - lhs
        return cls(bool(margin > EPS_COND), lhs, threshold, margin)

    @property
    def status(self) -> str:
        if self.holds:
            return "holds"
        if abs(self.margin) <= EPS_COND:
            return "boundary - condition not satisfied"
        return "fails"


def uniqueness_thresholds(T: float) -> dict[str, float]:
    return {"C1": 1.0 / T**2, "C2": math.sqrt(3.0 / (2.0 * T**3)), "C3": 1.0 / (2.0 * T)}


def max_principle_thresholds(T: float) -> dict[str, float]:
    return {"C1^": 2.0 / T**2, "C2^": math.sqrt(2.0) / T, "C3^": 1.0 / T}


def _norms_of(lp: LipschitzPair) -> Norms:
    if lp.norms is None:
        raise ValueError("norms not computed; call lp.with_norms(mesh) first")
    return lp.norms


def check_uniqueness(lp: LipschitzPair, T: float) -> dict[str, ConditionCheck]:
    n = _norms_of(lp)
    th = uniqueness_thresholds(T)
    return {
        "C1": ConditionCheck.compare(n.n_inf, th["C1"]),
        "C2": ConditionCheck.compare(n.n_2, th["C2"]),
        "C3": ConditionCheck.compare(n.n_1, th["C3"]),
    }


def check_max_principle(lp: LipschitzPair, T: float) -> dict[str, ConditionCheck]:
    n = _norms_of(lp)
    th = max_principle_thresholds(T)
    return {
        "C1^": ConditionCheck.compare(n.n_inf, th["C1^"]),
        "C2^": ConditionCheck.compare(n.n_2, th["C2^"]),
        "C3^": ConditionCheck.compare(n.n_1, th["C3^"]),
    }


def main_rule(checks: dict[str, ConditionCheck], T: float) -> bool:
    if T >= T_SPLIT:
        names = ("C1", "C2", "C3")
    else:
        names = ("C1", "C2^", "C3")
    return any(checks[n].holds for n in names)


def check_main_rule(lp: LipschitzPair, T: float) -> bool:
    checks = {**check_uniqueness(lp, T), **check_max_principle(lp, T)}
    return main_rule(checks, T)


def contraction_factor(lp: LipschitzPair, mesh: Mesh) -> float:
    """q = 2 * int_0^T (T - s)(L1 + L2)(s) ds."""
    T = mesh.T
    ci = cell_integrals(lambda s: (T - s) * _checked_total(lp, s), mesh.t, _rule(lp))
    return 2.0 * ci.total


def green_factor(lp: LipschitzPair, mesh: Mesh) -> float:
    """max_t int_0^T g(t, s)(L1 + L2)(s) ds with the Dirichlet Green kernel
    g(t, s) = min(s, t) (T - max(s, t)) / T.

    This is the sup-norm Lipschitz constant of the integral operator for
    coefficients L1 + L2, evaluated at the mesh nodes; it never exceeds q/2.
    """
    T = mesh.T
    t = mesh.t
    rule = _rule(lp)
    left = cell_integrals(lambda s: s * _checked_total(lp, s), t, rule).cells
    right = cell_integrals(lambda s: (T - s) * _checked_total(lp, s), t, rule).cells
    below = np.concatenate([[0.0], np.cumsum(left)])
    above = np.concatenate([np.cumsum(right[::-1])[::-1], [0.0]])
    vals = (T - t) / T * below + t / T * above
    return float(np.max(vals))


@dataclass
class ConditionReport:
    T: float
    norms: Norms
    checks: dict[str, ConditionCheck]
    main_rule_ok: bool
    q: float
    q_green: float
    notes: list[str] = field(default_factory=list)

    def via(self) -> list[str]:
        """Conditions through which the main rule is satisfied."""
        names = ("C1", "C2", "C3") if self.T >= T_SPLIT else ("C1", "C2^", "C3")
        return [n for n in names if self.checks[n].holds]

    def to_flat_dict(self) -> dict:
        out: dict = {"T": self.T}
        for name, c in self.checks.items():
            out[f"{name}.holds"] = c.holds
            out[f"{name}.lhs"] = _json_float(c.lhs)
            out[f"{name}.threshold"] = _json_float(c.threshold)
            out[f"{name}.margin"] = _json_float(c.margin)
        out["n_inf"] = _json_float(self.norms.n_inf)
        out["n_2"] = _json_float(self.norms.n_2)
        out["n_1"] = _json_float(self.norms.n_1)
        out["q"] = _json_float(self.q)
        out["q_green"] = _json_float(self.q_green)
        out["main_rule_ok"] = self.main_rule_ok
        out["via"] = self.via()
        return out


def _json_float(v: float):
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else "-inf"


def condition_report(lp: LipschitzPair, mesh: Mesh) -> ConditionReport:
    if lp.norms is None:
        lp = lp.with_norms(mesh)
    T = mesh.T
    checks = {**check_uniqueness(lp, T), **check_max_principle(lp, T)}
    q = contraction_factor(lp, mesh)
    qg = green_factor(lp, mesh)
    notes = []
    if not lp.norms.holder_ok(T):
        notes.append("Holder chain n_1 <= sqrt(T) n_2 <= T n_inf violated; check quadrature")
    if any(checks[n].holds for n in ("C1", "C2", "C3")) and q >= 1:
        notes.append(f"q = {q:.6g} >= 1 although a uniqueness condition holds; "
                     f"the sharper Green bound q_green = {qg:.6g} is used for iteration")
    return ConditionReport(T, lp.norms, checks, main_rule(checks, T), q, qg, notes)


@dataclass(frozen=True)
class Implication:
    name: str
    premise_threshold: float
    conclusion_threshold: float
    holds: bool
    relation: str  # "<", "=", ">"


def implication_lattice(T: float, tol: float = 1e-12) -> list[Implication]:
    """Which condition implies which, read off the threshold values at T.

    A condition with the smaller threshold implies the one with the larger
    threshold on the same norm. For the L^2 pair the direction flips at
    T = 3/4, where both thresholds equal 4 sqrt(2)/3.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    u = uniqueness_thresholds(T)
    m = max_principle_thresholds(T)
    out = [
        Implication("C1 => C1^", u["C1"], m["C1^"], u["C1"] < m["C1^"], "<"),
        Implication("C3 => C3^", u["C3"], m["C3^"], u["C3"] < m["C3^"], "<"),
    ]
    a, b = u["C2"], m["C2^"]
    if abs(a - b) <= tol * max(a, b):
        out.append(Implication("C2 <=> C2^", a, b, True, "="))
    elif a < b:
        out.append(Implication("C2 => C2^", a, b, True, "<"))
    else:
        out.append(Implication("C2^ => C2", b, a, True, ">"))
    return out

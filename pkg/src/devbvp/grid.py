"""Meshes over [-r, T], piecewise-linear grid functions and quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

ENDPOINT_TOL = 1e-12
# graded bisection depth for left-endpoint singular integrands
SINGULAR_DEPTH = 20
# midpoint sub-samples per (sub)cell when an integrand is flagged singular
SINGULAR_POINTS = 4


class ExtrapolationError(ValueError):
    """Raised when a grid function is evaluated outside its mesh."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


class Mesh:
    """Nodes covering [-r, T]: a uniform part on [0, T] plus history nodes.

    The history segment [-r, 0] uses ``ceil(r/h)`` equal cells, so its step
    matches ``h`` up to rounding. ``i0`` is the index of the node t = 0.
    """

    def __init__(self, T: float, r: float, N: int):
        if not T > 0:
            raise ValueError(f"T must be positive, got {T}")
        if not r >= 0:
            raise ValueError(f"r must be nonnegative, got {r}")
        if int(N) != N or N < 4:
            raise ValueError(f"N must be an integer >= 4, got {N}")
        self.T = float(T)
        self.r = float(r)
        self.N = int(N)
        self.h = self.T / self.N
        t_main = np.linspace(0.0, self.T, self.N + 1)
        if self.r > 0:
            m = max(1, int(np.ceil(self.r / self.h - 1e-9)))
            t_hist = np.linspace(-self.r, 0.0, m + 1)[:-1]
        else:
            t_hist = np.empty(0)
        self.i0 = len(t_hist)
        self.nodes = _frozen(np.concatenate([t_hist, t_main]))

    @classmethod
    def uniform(cls, T: float, r: float = 0.0, N: int = 200) -> "Mesh":
        return cls(T, r, N)

    def refined(self) -> "Mesh":
        return Mesh(self.T, self.r, 2 * self.N)

    @property
    def t(self) -> np.ndarray:
        """Nodes of the main interval [0, T]."""
        return self.nodes[self.i0:]

    @property
    def history(self) -> np.ndarray:
        """Nodes of [-r, 0], including 0."""
        return self.nodes[: self.i0 + 1]

    @property
    def size(self) -> int:
        return len(self.nodes)

    def __eq__(self, other):
        return (
            isinstance(other, Mesh)
            and (self.T, self.r, self.N) == (other.T, other.r, other.N)
        )

    def __hash__(self):
        return hash((self.T, self.r, self.N))

    def __repr__(self):
        return f"Mesh(T={self.T}, r={self.r}, N={self.N})"

    def locate(self, points) -> "PointInterp":
        return PointInterp(self, points)


class PointInterp:
    """Cached bracketing cells and weights for a fixed set of points.

    Built once per (mesh, points) pair; ``apply(values)`` then evaluates the
    piecewise-linear interpolant without searching.
    """

    def __init__(self, mesh: Mesh, points):
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        lo, hi = mesh.nodes[0], mesh.nodes[-1]
        bad = (pts < lo - ENDPOINT_TOL) | (pts > hi + ENDPOINT_TOL) | ~np.isfinite(pts)
        if bad.any():
            p = pts[bad][0]
            raise ExtrapolationError(f"point {p:.17g} outside mesh range [{lo}, {hi}]")
        pts = np.clip(pts, lo, hi)
        idx = np.searchsorted(mesh.nodes, pts, side="right") - 1
        idx = np.clip(idx, 0, mesh.size - 2)
        left = mesh.nodes[idx]
        width = mesh.nodes[idx + 1] - left
        self.mesh = mesh
        self.points = _frozen(pts)
        self.idx = idx
        self.w = _frozen((pts - left) / width)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (1.0 - self.w) * values[self.idx] + self.w * values[self.idx + 1]


class GridFunction:
    """Nodal values on a mesh, read as the piecewise-linear interpolant."""

    def __init__(self, mesh: Mesh, values):
        v = _frozen(values)
        if v.shape != (mesh.size,):
            raise ValueError(f"expected {mesh.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        self.mesh = mesh
        self.values = v

    @classmethod
    def from_callable(cls, mesh: Mesh, fn: Callable) -> "GridFunction":
        return cls(mesh, np.broadcast_to(fn(mesh.nodes), mesh.nodes.shape))

    @property
    def on_interval(self) -> np.ndarray:
        """Values at the nodes of [0, T]."""
        return self.values[self.mesh.i0:]

    def __call__(self, t):
        return interp(self, t)

    def resample(self, mesh: Mesh) -> "GridFunction":
        return GridFunction(mesh, interp(self, mesh.nodes))

    def to_csv(self, path) -> None:
        write_columns(path, {"t": self.mesh.nodes, "value": self.values})

    def __repr__(self):
        return f"GridFunction({self.mesh!r})"


def interp(u: GridFunction, t):
    """Piecewise-linear value of ``u`` at ``t`` (scalar or array).

    Raises ExtrapolationError for t outside [-r, T] beyond roundoff.
    """
    out = PointInterp(u.mesh, t).apply(u.values)
    return float(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))


def second_difference(u: GridFunction) -> np.ndarray:
    """Central second difference at the interior nodes t_1 .. t_{N-1} of [0, T]."""
    v = u.on_interval
    h = u.mesh.h
    return (v[:-2] - 2.0 * v[1:-1] + v[2:]) / (h * h)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_columns(path, columns: dict[str, np.ndarray]) -> None:
    """Write equal-length columns as CSV with 17 significant digits."""
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    lines = [",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Composite rule on mesh cells.

    ``singular_left`` marks an integrable singularity at the left end of the
    range: the first cell is then bisected ``depth`` times toward the end and
    every (sub)cell uses a midpoint rule, so the integrand is never evaluated
    at the singular point.
    """

    kind: str = "trapezoid"
    singular_left: bool = False
    depth: int = SINGULAR_DEPTH

    def __post_init__(self):
        if self.kind not in ("trapezoid", "midpoint"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def _midpoint_sum(g: Callable, a: np.ndarray, b: np.ndarray, m: int) -> np.ndarray:
    """Composite m-point midpoint rule on each interval [a_j, b_j]."""
    offs = (np.arange(m) + 0.5) / m
    width = b - a
    pts = a[:, None] + width[:, None] * offs[None, :]
    vals = np.asarray(g(pts.ravel()), dtype=float).reshape(pts.shape)
    return width * vals.mean(axis=1)


@dataclass(frozen=True)
class CellIntegrals:
    """Per-cell integrals plus the graded contributions of the first cell."""

    cells: np.ndarray
    graded: np.ndarray  # empty unless singular_left

    @property
    def total(self) -> float:
        return float(np.sum(self.cells))

    @property
    def diverges(self) -> bool:
        # s^-p on dyadic cells [a, 2a] contributes in ratio 2^(p-1); p >= 1 is
        # not integrable.
        g = self.graded
        if len(g) < 3 or g[-2] == 0.0:
            return False
        return bool(g[-1] / g[-2] > 0.999 and g[-2] / g[-3] > 0.999)


def cell_integrals(g: Callable, breaks, rule: QuadratureRule = QuadratureRule()) -> CellIntegrals:
    """Integrate ``g`` over each cell [breaks[j], breaks[j+1]]."""
    x = np.asarray(breaks, dtype=float)
    a, b = x[:-1], x[1:]
    if rule.singular_left:
        first = np.empty(0)
        inner = _midpoint_sum(g, a[1:], b[1:], SINGULAR_POINTS) if len(a) > 1 else first
        # [a0 + w/2^(j+1), a0 + w/2^j] for j = 0..depth-1, then the remnant
        w = b[0] - a[0]
        j = np.arange(rule.depth + 1, dtype=float)
        hi = a[0] + w / 2.0**j
        lo = np.append(hi[1:], a[0])
        graded = _midpoint_sum(g, lo, hi, SINGULAR_POINTS)
        cells = np.concatenate([[np.sum(graded[::-1])], inner])
        return CellIntegrals(cells, graded[:-1])
    if rule.kind == "midpoint":
        return CellIntegrals(_midpoint_sum(g, a, b, 1), np.empty(0))
    ga = np.asarray(g(x), dtype=float)
    ga = np.broadcast_to(ga, x.shape)
    return CellIntegrals(0.5 * (b - a) * (ga[:-1] + ga[1:]), np.empty(0))


def integrate(
    g: Callable,
    a: float,
    b: float,
    rule: QuadratureRule = QuadratureRule(),
    mesh: Mesh | None = None,
    cells: int = 200,
) -> float:
    """Integrate ``g`` over [a, b] with a composite rule.

    Cell boundaries are the mesh nodes inside (a, b) when a mesh is given,
    otherwise ``cells`` equal cells. ``g`` must accept an array of points.
    """
    if b < a:
        raise ValueError(f"need a <= b, got [{a}, {b}]")
    if b == a:
        return 0.0
    if mesh is not None:
        inner = mesh.nodes[(mesh.nodes > a) & (mesh.nodes < b)]
        breaks = np.concatenate([[a], inner, [b]])
    else:
        breaks = np.linspace(a, b, cells + 1)
    return cell_integrals(g, breaks, rule).total

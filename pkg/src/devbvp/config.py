"""JSON problem files and the built-in problem library."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import expr as _expr
from .conditions import LipschitzPair
from .contraction import PicardSettings
from .grid import Mesh
from .jumps import PiecewiseFn
from .model import DeviatedBVP, ScalarMap, TernaryMap
from .monotone import LowerUpperPair


class ConfigError(ValueError):
    pass


@dataclass
class CertifySpec:
    """Which one-variable slice of f to certify, and where its jumps are."""

    slice: str = "y"
    window: tuple[float, float] = (0.0, 1.0)
    jumps: list[float] = field(default_factory=list)
    fixed: dict[str, float] = field(default_factory=dict)


@dataclass
class ProblemConfig:
    name: str
    T: float
    r: float
    B: float
    f: str
    tau: str
    phi: str
    alpha: str | None = None
    beta: str | None = None
    L1: str = "0"
    L2: str = "0"
    tau_x: str | None = None
    psi: str | None = None
    singular_at_zero: dict[str, bool] = field(default_factory=dict)
    N: int = 200
    tol_sup: float = 1e-10
    outer_tol: float = 1e-8
    eps_mono: float = 1e-7
    max_outer: int = 500
    certify: CertifySpec | None = None

    def __post_init__(self):
        for key in ("f", "tau", "phi", "alpha", "beta", "L1", "L2", "tau_x", "psi"):
            src = getattr(self, key)
            if src is None:
                continue
            try:
                tree = _expr.parse(str(src))
            except _expr.ExprSyntaxError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
            extra = _expr.variables(tree) - ({"t", "x", "y"} if key == "f" else {"t"})
            if extra:
                raise ConfigError(f"{key} may only use t, found {sorted(extra)}")
        if int(self.N) != self.N or self.N < 4:
            raise ConfigError(f"N must be an integer >= 4, got {self.N}")
        for key in ("tol_sup", "outer_tol", "eps_mono"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if not self.T > 0 or not self.r >= 0:
            raise ConfigError("need T > 0 and r >= 0")
        unknown = set(self.singular_at_zero) - {"f", "L1", "L2", "psi"}
        if unknown:
            raise ConfigError(f"unknown singular_at_zero keys {sorted(unknown)}")

    # ------------------------------------------------------------ (de)serialisation

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        data = dict(data)
        for key in ("T", "r", "B"):
            if key not in data:
                raise ConfigError(f"missing field {key!r}")
            data[key] = _number(data[key], key)
        for key in ("f", "tau", "phi"):
            if key not in data:
                raise ConfigError(f"missing field {key!r}")
        data.setdefault("name", "problem")
        cert = data.pop("certify", None)
        if cert is not None:
            cert = CertifySpec(
                slice=cert.get("slice", "y"),
                window=tuple(_number(v, "certify.window") for v in cert["window"]),
                jumps=[_number(v, "certify.jumps") for v in cert.get("jumps", [])],
                fixed={k: _number(v, "certify.fixed") for k, v in cert.get("fixed", {}).items()},
            )
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown fields {sorted(extra)}")
        try:
            return cls(certify=cert, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ProblemConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.certify is not None:
            out["certify"]["window"] = list(self.certify.window)
        else:
            out.pop("certify")
        return out

    # ------------------------------------------------------------ domain objects

    def problem(self) -> DeviatedBVP:
        return DeviatedBVP(
            T=self.T,
            r=self.r,
            B=self.B,
            tau=ScalarMap.from_expr(self.tau),
            phi=ScalarMap.from_expr(self.phi),
            f=TernaryMap.from_expr(self.f),
            tau_x=ScalarMap.from_expr(self.tau_x) if self.tau_x else None,
            singular_at_zero=any(self.singular_at_zero.get(k, False) for k in ("f", "L1", "L2")),
            name=self.name,
        )

    def mesh(self) -> Mesh:
        return Mesh.uniform(self.T, self.r, self.N)

    def lipschitz(self) -> LipschitzPair:
        return LipschitzPair(
            ScalarMap.from_expr(self.L1),
            ScalarMap.from_expr(self.L2),
            L1_singular=self.singular_at_zero.get("L1", False),
            L2_singular=self.singular_at_zero.get("L2", False),
        )

    def lower_upper(self, mesh: Mesh | None = None) -> LowerUpperPair:
        if self.alpha is None or self.beta is None:
            raise ConfigError("alpha and beta are required")
        return LowerUpperPair.from_maps(self.alpha, self.beta, mesh or self.mesh())

    def psi_map(self) -> ScalarMap | None:
        return ScalarMap.from_expr(self.psi) if self.psi else None

    def picard_settings(self) -> PicardSettings:
        return PicardSettings(tol_sup=self.tol_sup)

    def piecewise_slice(self) -> PiecewiseFn:
        if self.certify is None:
            raise ConfigError("config has no 'certify' section")
        return PiecewiseFn.from_expr(
            self.f, self.certify.slice, self.certify.window, self.certify.jumps, self.certify.fixed
        )


def _number(v, key: str) -> float:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if isinstance(v, str):
        try:
            tree = _expr.parse(v)
        except _expr.ExprSyntaxError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
        if _expr.variables(tree):
            raise ConfigError(f"{key} must be a constant expression")
        return _expr.evaluate(tree)
    raise ConfigError(f"{key}: expected a number, got {v!r}")


# ---------------------------------------------------------------- built-ins


def example1() -> ProblemConfig:
    """Delay problem on [0, 2] with an integer-part nonlinearity."""
    return ProblemConfig(
        name="example1",
        T=2.0,
        r=1.0,
        B=math.pi / 4,
        f="floor(t*x) - (1/9)*y*sin(y*pi/(2*floor(abs(y))+2))",
        tau="t - 1",
        phi="cos(pi*t/2)",
        alpha="0",
        beta="piecewise(t <= 0, cos(pi*t/2), 1 - t*(t - 2))",
        L1="0",
        L2="(1/9)*(1 + pi/2)",
        psi="4",
        certify=CertifySpec(slice="y", window=(0.0, 3.0), jumps=[1.0, 2.0], fixed={"t": 1.0, "x": 0.0}),
    )


def example2(k: float = 0.05) -> ProblemConfig:
    """Delay-and-advance problem on [0, 1] with a coefficient singular at t = 0."""
    if not k > 0:
        raise ConfigError(f"k must be positive, got {k}")
    ks = repr(float(k))
    jumps = [1.0 / n for n in range(19, 4, -1)]
    return ProblemConfig(
        name="example2",
        T=1.0,
        r=0.0,
        B=0.0,
        f=f"sin(t) + paperphi({ks}, x) + y/(5*sqrt(t))",
        tau="sqrt(t)",
        tau_x="sqrt(1 - t)",
        phi="0",
        alpha="t^2 - t",
        beta="t - t^2",
        L1=ks,
        L2="1/(5*sqrt(t))",
        psi=f"sin(t) + {ks}/2 + 1/(20*sqrt(t))",
        singular_at_zero={"f": True, "L2": True, "psi": True},
        certify=CertifySpec(slice="x", window=(0.05, 0.25), jumps=jumps, fixed={"t": 0.5, "y": 0.0}),
    )


def trivial_constant() -> ProblemConfig:
    """-u'' = 2, u(0) = u(1) = 0; solution t(1 - t)."""
    return ProblemConfig(
        name="trivial_constant",
        T=1.0,
        r=0.0,
        B=0.0,
        f="2",
        tau="t",
        phi="0",
        alpha="0",
        beta="t*(1 - t)",
    )


def trivial_linear() -> ProblemConfig:
    """-u'' = 2 - u(t-1)/10 on [0, 2], zero history and endpoint."""
    return ProblemConfig(
        name="trivial_linear",
        T=2.0,
        r=1.0,
        B=0.0,
        f="2 - 0.1*y",
        tau="t - 1",
        phi="0",
        alpha="0",
        beta="piecewise(t <= 0, 0, t*(2 - t))",
        L1="0",
        L2="0.1",
        psi="2.2",
    )


BUILTINS = {
    "example1": example1,
    "example2": example2,
    "trivial_constant": trivial_constant,
    "trivial_linear": trivial_linear,
}


def builtin(name: str, k: float | None = None) -> ProblemConfig:
    if name not in BUILTINS:
        raise ConfigError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}")
    if name == "example2":
        return example2(0.05 if k is None else k)
    if k is not None:
        raise ConfigError("--k only applies to example2")
    return BUILTINS[name]()

"""devbvp command line: check | verify | solve | certify | report.

Exit codes: 0 success, 1 bad input or internal inconsistency, 2 hypothesis
not satisfied (conditions, lower/upper solutions, certificate refused),
3 ordering violation, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from . import expr as _expr
from .conditions import condition_report, implication_lattice
from .config import BUILTINS, ConfigError, ProblemConfig, builtin
from .contraction import ContractionRefused, NonlinearityError, PicardNonConvergence
from .grid import ExtrapolationError
from .jumps import CertificateInconsistent, CertificateRefused, PiecewiseFn, derivative_infimum, shift_constant
from .model import validate_problem
from .monotone import (
    OrderingViolation,
    derivative_bound,
    iterate_extremal,
    max_slope,
    verify_lower,
    verify_upper,
)

log = logging.getLogger("devbvp")

EXIT_OK, EXIT_INPUT, EXIT_HYPOTHESIS, EXIT_ORDER, EXIT_NONCONV = 0, 1, 2, 3, 4


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        self.code = code
        super().__init__(message)


def _dump(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True)


def load_config(args) -> ProblemConfig:
    name = args.builtin or args.name
    if args.config and name:
        raise ConfigError("give either --config or a builtin name, not both")
    if args.config:
        cfg = ProblemConfig.load(args.config)
        if args.k is not None:
            raise ConfigError("--k only applies to the example2 builtin")
    elif name:
        cfg = builtin(name, args.k)
    else:
        raise ConfigError(f"no problem given; use --config FILE or one of {sorted(BUILTINS)}")
    if args.n is not None:
        cfg.N = args.n
    if args.tol is not None:
        cfg.outer_tol = args.tol
    cfg.__post_init__()
    return cfg


def _validated(cfg: ProblemConfig):
    p = cfg.problem()
    mesh = cfg.mesh()
    problems = validate_problem(p, mesh)
    if problems:
        raise CommandError("invalid problem: " + "; ".join(problems), EXIT_INPUT)
    return p, mesh


# ---------------------------------------------------------------- commands


def cmd_check(cfg: ProblemConfig) -> tuple[dict, int]:
    _, mesh = _validated(cfg)
    rep = condition_report(cfg.lipschitz(), mesh)
    out = rep.to_flat_dict()
    out["notes"] = rep.notes
    out["implications"] = [i.name for i in implication_lattice(cfg.T)]
    return out, EXIT_OK if rep.main_rule_ok else EXIT_HYPOTHESIS


def cmd_verify(cfg: ProblemConfig) -> tuple[dict, int]:
    p, mesh = _validated(cfg)
    lu = cfg.lower_upper(mesh)
    lo = verify_lower(p, lu.alpha)
    up = verify_upper(p, lu.beta)
    out = {"lower": lo.to_dict(), "upper": up.to_dict()}
    return out, EXIT_OK if (lo.is_valid and up.is_valid) else EXIT_HYPOTHESIS


def cmd_solve(cfg: ProblemConfig, out_dir: Path, force: bool = False) -> tuple[dict, int]:
    p, mesh = _validated(cfg)
    checks, code = cmd_check(cfg)
    verification, vcode = cmd_verify(cfg)
    if code or vcode:
        reason = "smallness rule fails" if code else "alpha/beta are not lower/upper solutions"
        if not force:
            raise CommandError(f"refusing to solve: {reason} (use --force to override)", EXIT_HYPOTHESIS)
        log.warning("--force: solving although %s", reason)
    lp = cfg.lipschitz().with_norms(mesh)
    lu = cfg.lower_upper(mesh)
    start = time.perf_counter()
    bracket = iterate_extremal(
        p,
        lp,
        lu,
        cfg.picard_settings(),
        outer_tol=cfg.outer_tol,
        max_outer=cfg.max_outer,
        eps_mono=cfg.eps_mono,
    )
    elapsed = time.perf_counter() - start

    out_dir.mkdir(parents=True, exist_ok=True)
    bracket.write_bracket(out_dir / "bracket.csv")
    bracket.write_log(out_dir / "convergence.csv")
    summary = {"problem": cfg.name, "wall_time_s": elapsed, **bracket.summary()}
    psi = cfg.psi_map()
    if psi is not None:
        bound = derivative_bound(p, lp, bracket_pair(bracket, lu), psi)
        slope = max(max_slope(u) for u in bracket.lower_iterates[1:] + bracket.upper_iterates[1:])
        summary["slope_bound"] = bound
        summary["max_iterate_slope"] = slope
    summary["conditions_ok"] = code == EXIT_OK
    summary["lower_upper_ok"] = vcode == EXIT_OK
    (out_dir / "summary.json").write_text(_dump(summary) + "\n", encoding="utf-8")
    return summary, EXIT_OK if bracket.converged else EXIT_NONCONV


def bracket_pair(bracket, lu):
    # refinement may have moved the bracket to a finer mesh
    return lu if bracket.mesh == lu.mesh else lu.on(bracket.mesh)


def cmd_certify(cfg: ProblemConfig, slice_var=None, window=None, jumps=None, fixed=None) -> tuple[dict, int]:
    spec = cfg.certify
    slice_var = slice_var or (spec.slice if spec else "y")
    if window is None:
        if spec is None:
            raise CommandError("no window: pass --window A B or add a certify section", EXIT_INPUT)
        window = spec.window
    if jumps is None:
        jumps = spec.jumps if spec else []
    if fixed is None:
        fixed = spec.fixed if spec else {}
    pf = PiecewiseFn.from_expr(cfg.f, slice_var, window, jumps, fixed)
    out = {"slice": slice_var, "window": list(window), "jumps": list(pf.jumps), "fixed": fixed,
           "window_local": True}
    try:
        out["shift"] = shift_constant(pf)
        out["derivative_infimum"] = derivative_infimum(pf)
    except CertificateRefused as exc:
        out["refused"] = str(exc)
        return out, EXIT_HYPOTHESIS
    return out, EXIT_OK


def cmd_report(cfg: ProblemConfig, out_dir: Path, force: bool = False) -> tuple[dict, int]:
    checks, ccode = cmd_check(cfg)
    verification, _ = cmd_verify(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "conditions.json").write_text(_dump(checks) + "\n", encoding="utf-8")
    (out_dir / "verification.json").write_text(_dump(verification) + "\n", encoding="utf-8")
    try:
        summary, code = cmd_solve(cfg, out_dir, force)
    except CommandError as exc:
        summary, code = {"error": str(exc)}, exc.code
    cert = None
    if cfg.certify is not None:
        cert, _ = cmd_certify(cfg)
    text = _render_report(cfg, checks, verification, summary, cert)
    (out_dir / "report.md").write_text(text, encoding="utf-8")
    return {"report": str(out_dir / "report.md"), "exit": code}, code


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _render_report(cfg, checks, verification, summary, cert) -> str:
    lines = [f"# {cfg.name}", "", f"T = {cfg.T}, r = {cfg.r}, B = {cfg.B:.17g}, N = {cfg.N}", "",
             f"    -u'' = {cfg.f}", f"    tau = {cfg.tau}" + (f", tau_x = {cfg.tau_x}" if cfg.tau_x else ""),
             "", "## Smallness conditions", "", "| condition | lhs | threshold | holds |", "|---|---|---|---|"]
    for name in ("C1", "C2", "C3", "C1^", "C2^", "C3^"):
        lines.append(
            f"| {name} | {_fmt(checks[name + '.lhs'])} | {_fmt(checks[name + '.threshold'])} "
            f"| {checks[name + '.holds']} |"
        )
    lines += ["", f"main rule: {checks['main_rule_ok']} (via {', '.join(checks['via']) or 'none'})",
              f"q = {_fmt(checks['q'])}, q_green = {_fmt(checks['q_green'])}", ""]
    lines += [f"- {n}" for n in checks.get("notes", [])]
    lines += ["## Lower and upper solutions", ""]
    for side in ("lower", "upper"):
        v = verification[side]
        lines.append(f"- {side}: valid={v['is_valid']}, max differential defect "
                     f"{_fmt(v['max_differential_defect'])}, boundary {v['boundary_defects']}")
    lines += ["", "## Extremal bracket", ""]
    if "error" in summary:
        lines.append(f"not computed: {summary['error']}")
    else:
        for side in ("lower", "upper"):
            s = summary[side]
            lines.append(f"- {side}: {s['steps']} steps, converged={s['converged']}, "
                         f"stalled={s['stalled']}, residual_L1={_fmt(s['residual_L1'])}")
        lines.append(f"- max gap {_fmt(summary['max_gap'])}, monotonicity defect "
                     f"{_fmt(summary['monotonicity_defect'])}")
        lines.append("- files: bracket.csv, convergence.csv, summary.json")
    if cert is not None:
        lines += ["", "## Jump-shift certificate", ""]
        if "refused" in cert:
            lines.append(f"refused: {cert['refused']}")
        else:
            lines.append(f"slice {cert['slice']} on {cert['window']}: shift {_fmt(cert['shift'])} "
                         "(window-local)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- argument parsing


def _fixed_arg(text: str) -> dict[str, float]:
    out = {}
    for part in text.split(","):
        key, _, val = part.partition("=")
        if key.strip() not in _expr.VARIABLES or not val:
            raise argparse.ArgumentTypeError(f"bad --fix entry {part!r}; use t=1,x=0")
        out[key.strip()] = float(val)
    return out


def _jumps_arg(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("name", nargs="?", help="builtin problem name")
    common.add_argument("--config", type=Path, help="JSON problem file")
    common.add_argument("--builtin", choices=sorted(BUILTINS))
    common.add_argument("--n", type=int, help="cells on [0, T]")
    common.add_argument("--tol", type=float, help="outer (monotone) stopping tolerance")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--force", action="store_true", help="solve even if hypotheses fail")
    common.add_argument("--k", type=float, help="parameter k of example2")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="devbvp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"devbvp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="evaluate the smallness conditions")
    sub.add_parser("verify", parents=[common], help="verify the lower and upper solutions")
    sub.add_parser("solve", parents=[common], help="bracket the extremal solutions")
    cert = sub.add_parser("certify", parents=[common], help="shift constant for a slice of f")
    cert.add_argument("--slice", choices=_expr.VARIABLES)
    cert.add_argument("--window", type=float, nargs=2, metavar=("A", "B"))
    cert.add_argument("--jumps", type=_jumps_arg, help="comma-separated jump points")
    cert.add_argument("--fix", type=_fixed_arg, help="values of the other variables, e.g. t=1,x=0")
    sub.add_parser("report", parents=[common], help="check, verify, solve and write report.md")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "check":
            payload, code = cmd_check(cfg)
        elif args.command == "verify":
            payload, code = cmd_verify(cfg)
        elif args.command == "solve":
            payload, code = cmd_solve(cfg, args.out, args.force)
        elif args.command == "certify":
            payload, code = cmd_certify(cfg, args.slice, args.window, args.jumps, args.fix)
        else:
            payload, code = cmd_report(cfg, args.out, args.force)
    except CommandError as exc:
        print(f"devbvp: {exc}", file=sys.stderr)
        return exc.code
    except OrderingViolation as exc:
        print(f"devbvp: maximum-principle ordering violated: {exc}", file=sys.stderr)
        return EXIT_ORDER
    except PicardNonConvergence as exc:
        print(f"devbvp: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (ConfigError, _expr.ExprError, ExtrapolationError, NonlinearityError,
            ContractionRefused, CertificateInconsistent, ValueError) as exc:
        print(f"devbvp: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(_dump(payload))
    return code


if __name__ == "__main__":
    sys.exit(main())

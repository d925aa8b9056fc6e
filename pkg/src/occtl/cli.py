"""Command-line front end.

Subcommands: simulate, jacobian, contraction, partial, oes, oes-eq,
lyapunov, reproduce.  Every randomized subcommand takes --seed (default 0)
and prints it, so runs are reproducible; series files are written with 17
significant digits and are byte-stable for a fixed seed and version.

Exit codes: 0 all checks passed / property holds; 1 a check was falsified
(witness in the report); 2 usage or validation error; 3 numerical failure
(blow-up or step underflow) where none was expected.

The environment variable OCCTL_THREADS caps the worker count; the numeric
engine evaluates samples as vectorised batches on one thread, so the cap is
recorded in reports and results never depend on it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .contraction import (
    SamplingPlan, check_oes_equilibrium, check_oes_variational,
    check_output_contraction, check_partial_contraction, divergence_csv,
    fit_rate, simulate_pair, verdict_json,
)
from .exprlang import ExprEvalError, ExprSyntaxError
from .lyapunov import (
    Bounds, CandidateV, CheckDomain, check_decay, check_sandwich,
    check_time_invariant, implied_rate, report_json,
)
from .odeint import IntegratorConfig, integrate, map_output, trajectory_csv
from .sysmodel import (
    BUILTIN_NAMES, SystemValidationError, builtin_system, eval_fh, jacobians,
    system_from_json, validate, vector_field,
)

USAGE_ERROR, FALSIFIED, NUMERIC_FAILURE = 2, 1, 3

#: reference value the fig2 reproduction checks the long-run output against
FIG2_OUTPUT_TARGET = 0.246
FIG2_OUTPUT_TOLERANCE = 0.005

#: initial conditions behind the fig1/fig2 reproductions
FIG1_STARTS = ((-2.5, -5.0), (-1.5, -3.0))
FIG2_START = (3.0, 3.0)


class UsageError(ValueError):
    pass


def load_system(path_or_name: str):
    """Resolve a built-in name or a JSON system document on disk."""
    if path_or_name in BUILTIN_NAMES:
        return builtin_system(path_or_name)
    path = Path(path_or_name)
    if path.exists():
        try:
            return system_from_json(path.read_text())
        except json.JSONDecodeError as err:
            raise UsageError(f"malformed system JSON {path}: {err}") from None
    raise UsageError(
        f"unknown system {path_or_name!r}: not a file and not one of "
        f"{', '.join(BUILTIN_NAMES)}")


def _threads() -> int:
    raw = os.environ.get("OCCTL_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"OCCTL_THREADS must be an integer, got {raw!r}") \
            from None
    if value < 1:
        raise UsageError("OCCTL_THREADS must be at least 1")
    return value


def _vec(text: str, n: int | None, what: str) -> np.ndarray:
    try:
        values = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got "
                         f"{text!r}") from None
    if n is not None and values.shape != (n,):
        raise UsageError(f"{what} needs {n} component(s), got {values.size}")
    return values


def _box(text: str, n: int) -> tuple[tuple[float, float], ...]:
    try:
        parts = [seg.split(":") for seg in text.split(",")]
        box = tuple((float(lo), float(hi)) for lo, hi in parts)
    except ValueError:
        raise UsageError(f"box must look like 'lo:hi,lo:hi', got {text!r}") \
            from None
    if len(box) != n:
        raise UsageError(f"box needs {n} interval(s), got {len(box)}")
    return box


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"range must look like 'lo:hi', got {text!r}") \
            from None
    return lo, hi


class _Reporter:
    """Collects the run report and the emitted file manifest."""

    def __init__(self, args):
        self.t_start = time.perf_counter()
        self.out = Path(args.out) if getattr(args, "out", None) else None
        self.fmt = getattr(args, "format", "csv")
        self.doc = {
            "command": " ".join(args.command_echo),
            "version": __version__,
            "seed": getattr(args, "seed", None),
            "threads": _threads(),
            "results": {},
            "files": [],
        }

    def add(self, key, value):
        self.doc["results"][key] = value

    def write_series(self, name: str, csv_text: str, json_obj) -> None:
        if self.out is None:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        if self.fmt == "json":
            path = self.out / f"{name}.json"
            path.write_text(json.dumps(json_obj, indent=2))
        else:
            path = self.out / f"{name}.csv"
            path.write_text(csv_text)
        self.doc["files"].append(path.name)

    def finish(self, code: int) -> int:
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            report_path = self.out / "report.json"
            report_path.write_text(
                json.dumps(self.doc, indent=2, sort_keys=True))
            self.doc["files"].append(report_path.name)
        self.doc["exit_code"] = code
        self.doc["wall_time_s"] = round(time.perf_counter() - self.t_start, 3)
        print(json.dumps(self.doc, indent=2, sort_keys=True))
        return code


def _traj_json(traj, outputs=None):
    doc = {"t": [float(v) for v in traj.times],
           "x": [[float(v) for v in row] for row in traj.states]}
    if outputs is not None:
        doc["y"] = [[float(v) for v in row] for row in outputs]
    return doc


def _integrator_config(args) -> IntegratorConfig:
    return IntegratorConfig(method=getattr(args, "method", "rk45-adaptive"),
                            step=getattr(args, "step", 1e-3),
                            rtol=getattr(args, "rtol", 1e-8),
                            atol=getattr(args, "atol", 1e-8))


def _plan(args, spec) -> SamplingPlan:
    return SamplingPlan(box=_box(args.box, spec.n), pairs=args.pairs,
                        seed=args.seed, t0=args.t0, tf=args.tf)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    rep = _Reporter(args)
    spec = load_system(args.system)
    x0 = _vec(args.x0, spec.n, "--x0")
    traj = integrate(vector_field(spec), x0, args.t0, args.tf,
                     _integrator_config(args))
    y = map_output(spec, traj)
    rep.add("t_end", traj.t_end)
    rep.add("failure", traj.failure)
    rep.add("final_state", [float(v) for v in traj.states[-1]])
    rep.add("final_output", [float(v) for v in y[-1]])
    rep.write_series(f"simulate_{spec.name}",
                     trajectory_csv(traj, outputs=y), _traj_json(traj, y))
    return rep.finish(0 if traj.ok else NUMERIC_FAILURE)


def cmd_jacobian(args) -> int:
    rep = _Reporter(args)
    spec = load_system(args.system)
    x = _vec(args.x, spec.n, "--x")
    bundle = jacobians(spec, x, args.t)
    f, y = eval_fh(spec, x, args.t)
    rep.add("f", [float(v) for v in f])
    rep.add("y", [float(v) for v in y])
    rep.add("Jf", [[float(v) for v in row] for row in bundle.Jf])
    rep.add("Jh", [[float(v) for v in row] for row in bundle.Jh])
    rep.add("dh_dt", [float(v) for v in bundle.dh_dt])
    return rep.finish(0)


def _run_verdict_command(args, checker) -> int:
    rep = _Reporter(args)
    spec = load_system(args.system)
    verdict = checker(spec, _plan(args, spec),
                      alpha_min=args.alpha_min)
    rep.add("verdict", verdict_json(verdict))
    if args.dump_series:
        for result in verdict.results:
            series = result.series
            rep.write_series(f"{verdict.kind}_pair_{result.index:03d}",
                             divergence_csv(series),
                             {"t": [float(v) for v in series.times],
                              "d": [float(v) for v in series.d]})
    return rep.finish(0 if verdict.holds else FALSIFIED)


def cmd_contraction(args) -> int:
    return _run_verdict_command(args, check_output_contraction)


def cmd_partial(args) -> int:
    return _run_verdict_command(args, check_partial_contraction)


def cmd_oes(args) -> int:
    return _run_verdict_command(args, check_oes_variational)


def cmd_oes_eq(args) -> int:
    rep = _Reporter(args)
    spec = load_system(args.system)
    y_star = _vec(args.y_star, None, "--y-star")
    x_ref0 = _vec(args.x_ref0, spec.n, "--x-ref0") \
        if args.x_ref0 is not None else None
    verdict = check_oes_equilibrium(spec, y_star, _plan(args, spec),
                                    x_ref0=x_ref0, alpha_min=args.alpha_min)
    rep.add("verdict", verdict_json(verdict))
    rep.add("y_star", [float(v) for v in y_star])
    return rep.finish(0 if verdict.holds else FALSIFIED)


def cmd_lyapunov(args) -> int:
    rep = _Reporter(args)
    spec = load_system(args.system)
    candidate = CandidateV.from_string(args.V)
    bounds = Bounds(alpha1=args.alpha1, alpha2=args.alpha2,
                    alpha3=args.alpha3, alpha4=args.alpha4, p=args.p)
    domain = CheckDomain(
        x_box=_box(args.x_box, spec.n) if args.x_box else
        tuple((-10.0, 10.0) for _ in range(spec.n)),
        t_range=_range(args.t_range),
        samples=args.samples, seed=args.seed,
        xi_radii=tuple(float(v) for v in args.xi_radii.split(",")))
    if bounds.alpha4 is None:
        reports = [check_time_invariant(spec, candidate, bounds, domain)]
    else:
        reports = [check_sandwich(spec, candidate, bounds, domain),
                   check_decay(spec, candidate, bounds, domain)]
    c, alpha = implied_rate(bounds)
    rep.add("checks", [report_json(r) for r in reports])
    rep.add("implied_rate", {"c": c, "alpha": alpha})
    passed = all(r.passed for r in reports)
    return rep.finish(0 if passed else FALSIFIED)


# ---------------------------------------------------------------------------
# reproductions
# ---------------------------------------------------------------------------

def _reproduce_fig1(args, rep: _Reporter) -> int:
    spec = builtin_system("ex1-timevarying")
    cfg = _integrator_config(args)
    for label, x0 in zip("ab", FIG1_STARTS):
        traj = integrate(vector_field(spec), np.array(x0), 0.0, args.tf, cfg)
        y = map_output(spec, traj)
        rep.write_series(f"fig1_trajectory_{label}",
                         trajectory_csv(traj, outputs=y),
                         _traj_json(traj, y))
    series = simulate_pair(spec, *map(np.array, FIG1_STARTS), 0.0, args.tf, cfg)
    fit = fit_rate(series, scale=series.dx0)
    ratio = float(series.state_dist[-1] / series.d[-1])
    rep.write_series("fig1_divergence", divergence_csv(series),
                     {"t": [float(v) for v in series.times],
                      "d": [float(v) for v in series.d]})
    rep.add("output_divergence_alpha", fit.alpha)
    rep.add("state_escape_truncated_at", series.t_end)
    rep.add("state_distance_over_output_divergence", ratio)
    rep.add("note", "the state separates (and escapes in finite time) while "
                    "the output differences contract")
    return 0 if (fit.valid and fit.alpha >= 0.9 and ratio > 10.0) else FALSIFIED


def _reproduce_fig2(args, rep: _Reporter) -> int:
    spec = builtin_system("ex2-timeinvariant")
    cfg = _integrator_config(args)
    traj = integrate(vector_field(spec), np.array(FIG2_START), 0.0, args.tf, cfg)
    y = map_output(spec, traj)
    rep.write_series("fig2_trajectory", trajectory_csv(traj, outputs=y),
                     _traj_json(traj, y))
    norms = np.linalg.norm(traj.states, axis=-1)
    exceeded = norms > 1e3
    final_y = float(y[-1, 0])
    rep.add("final_output", final_y)
    rep.add("output_target", FIG2_OUTPUT_TARGET)
    rep.add("output_error", abs(final_y - FIG2_OUTPUT_TARGET))
    rep.add("state_norm_final", float(norms[-1]))
    rep.add("state_norm_exceeds_1e3_at",
            float(traj.times[np.argmax(exceeded)]) if exceeded.any() else None)
    rep.add("note", "the state is unstable while the output settles")
    ok = traj.ok and abs(final_y - FIG2_OUTPUT_TARGET) <= FIG2_OUTPUT_TOLERANCE \
        and bool(exceeded.any())
    return 0 if ok else FALSIFIED


def _reproduce_remark1(args, rep: _Reporter) -> int:
    spec = builtin_system("lti-remark1")
    plan = SamplingPlan(box=((-5.0, 5.0), (-5.0, 5.0)), pairs=args.pairs,
                        seed=args.seed, t0=0.0, tf=args.tf)
    contraction = check_output_contraction(spec, plan)
    partial = check_partial_contraction(spec, plan)
    series = simulate_pair(spec, (0.0, 0.0), (0.0, 1.0), 0.0, args.tf)
    rep.write_series("remark1_divergence", divergence_csv(series),
                     {"t": [float(v) for v in series.times],
                      "d": [float(v) for v in series.d]})
    witness_pair = simulate_pair(spec, (1.0, 0.0), (1.0, 1.0), 0.0, args.tf)
    rep.write_series("remark1_partial_witness", divergence_csv(witness_pair),
                     {"t": [float(v) for v in witness_pair.times],
                      "d": [float(v) for v in witness_pair.d]})
    rep.add("output_contraction", verdict_json(contraction))
    rep.add("partial_contraction", verdict_json(partial))
    rep.add("note", "output contraction holds for y = x1 while partial "
                    "contraction is falsified by pairs with equal initial "
                    "outputs")
    # the reproduced phenomenon IS a falsification: surface it via the exit
    # code, with the witness in the report
    reproduced = contraction.holds and not partial.holds
    return FALSIFIED if reproduced else NUMERIC_FAILURE


def cmd_reproduce(args) -> int:
    rep = _Reporter(args)
    runner = {"fig1": _reproduce_fig1, "fig2": _reproduce_fig2,
              "remark1": _reproduce_remark1}[args.name]
    return rep.finish(runner(args, rep))


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(sub, system=True):
    if system:
        sub.add_argument("--system", required=True,
                         help="built-in name or path to a system JSON file")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--t0", type=float, default=0.0)
    sub.add_argument("--tf", type=float, default=10.0)
    sub.add_argument("--out", default=None, help="directory for emitted files")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_plan(sub):
    sub.add_argument("--box", default="-5:5,-5:5",
                     help="per-coordinate lo:hi intervals, comma separated")
    sub.add_argument("--pairs", "--samples", dest="pairs", type=int, default=50)
    sub.add_argument("--alpha-min", type=float, default=0.05)
    sub.add_argument("--dump-series", action="store_true",
                     help="also write every pair's divergence series")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occtl",
        description="certify-by-sampling or falsify output contraction and "
                    "output exponential stability of ODE systems with outputs")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    s = subs.add_parser("simulate", help="integrate a system and dump t,x,y")
    _add_common(s)
    s.add_argument("--x0", required=True)
    s.add_argument("--method", choices=("rk4-fixed", "rk45-adaptive"),
                   default="rk45-adaptive")
    s.add_argument("--step", type=float, default=1e-3)
    s.add_argument("--rtol", type=float, default=1e-8)
    s.add_argument("--atol", type=float, default=1e-8)
    s.set_defaults(func=cmd_simulate)

    s = subs.add_parser("jacobian", help="print f, y, Jf, Jh, dh/dt at a point")
    _add_common(s)
    s.add_argument("--x", required=True)
    s.add_argument("--t", type=float, default=0.0)
    s.set_defaults(func=cmd_jacobian)

    for name, func, blurb in (
            ("contraction", cmd_contraction,
             "sample pairs and check output contraction"),
            ("partial", cmd_partial,
             "check partial contraction (equal-initial-output pairs)"),
            ("oes", cmd_oes,
             "check exponential decay of the variational output")):
        s = subs.add_parser(name, help=blurb)
        _add_common(s)
        _add_plan(s)
        s.set_defaults(func=func)

    s = subs.add_parser("oes-eq",
                        help="check output convergence to an equilibrium")
    _add_common(s)
    _add_plan(s)
    s.add_argument("--y-star", required=True)
    s.add_argument("--x-ref0", default=None)
    s.set_defaults(func=cmd_oes_eq)

    s = subs.add_parser("lyapunov", help="falsification-check a certificate")
    _add_common(s)
    s.add_argument("--V", required=True, help="certificate over x*, xi*, t")
    s.add_argument("--alpha1", type=float, required=True)
    s.add_argument("--alpha2", type=float, required=True)
    s.add_argument("--alpha3", type=float, default=0.0)
    s.add_argument("--alpha4", type=float, default=None,
                   help="omit for the time-invariant form (alpha3 = decay)")
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--x-box", default=None)
    s.add_argument("--t-range", default="0:6.283185307179586")
    s.add_argument("--xi-radii", default="0.1,1,10")
    s.set_defaults(func=cmd_lyapunov)

    s = subs.add_parser("reproduce",
                        help="rebuild the bundled demonstration datasets")
    s.add_argument("name", choices=("fig1", "fig2", "remark1"))
    _add_common(s, system=False)
    s.add_argument("--pairs", type=int, default=25)
    s.add_argument("--rtol", type=float, default=1e-8)
    s.add_argument("--atol", type=float, default=1e-8)
    s.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.command_echo = ["occtl"] + argv
    try:
        return args.func(args)
    except (UsageError, SystemValidationError, ExprSyntaxError) as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_ERROR
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_ERROR
    except ExprEvalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return NUMERIC_FAILURE


if __name__ == "__main__":
    sys.exit(main())

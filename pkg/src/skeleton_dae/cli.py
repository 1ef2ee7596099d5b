"""Command-line front end.

    skeleton-dae [--tol T] [--step H] [--t-end T] chain  PROBLEM.json
    skeleton-dae ... solve PROBLEM.json --out traj.csv
    skeleton-dae ... check PROBLEM.json
    skeleton-dae ... synth --seed K --n N --out PREFIX

Exit codes: 0 success, 2 input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import linalg
from .chain import ChainKind, build_chain, build_projector, verify_chain
from .errors import (
    ChainMismatchError,
    NoConvergenceError,
    NonFiniteError,
    OrderCapExceededError,
    ParseError,
    SingularError,
    StepTooCoarseError,
)
from .oracle import random_spec, synthesize
from .signals import parse_components
from .solver import (
    DegenerateProblem,
    RegularizedIVP,
    check_classical_consistency,
    check_stability,
    solve_degenerate,
    solve_regular,
    time_grid,
)

log = logging.getLogger("skeleton_dae")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
DEFAULTS = {"tol": 1e-10, "step": 1e-3, "t_end": 1.0}
KNOWN_KEYS = {"b", "f", "c0", "x0", "t_end", "step", "tol", "M"}


class InputError(Exception):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _fmt_complex(z) -> str:
    return f"{z.real:.6g}{z.imag:+.6g}j" if z.imag else f"{z.real:.6g}"


def load_problem(path, overrides) -> dict:
    """Read and validate a problem file; command-line overrides win over file values."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read problem file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError("problem file must hold a JSON object")
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise InputError(f"unknown field(s): {', '.join(sorted(unknown))}")
    for key in ("b", "f"):
        if key not in raw:
            raise InputError(f"missing required field {key!r}")
    try:
        b = linalg.as_matrix(raw["b"], "b")
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from exc
    n = b.shape[0]
    if b.shape != (n, n) or n == 0:
        raise InputError(f"b must be a nonempty square matrix, got shape {b.shape}")
    f_src = raw["f"]
    if isinstance(f_src, str):
        f_src = [s for s in f_src.split(";")]
    if not isinstance(f_src, list) or len(f_src) != n:
        raise InputError(f"f must list {n} component expressions")
    try:
        f = parse_components([str(s) for s in f_src])
    except ParseError as exc:
        raise InputError(f"bad forcing expression: {exc}") from exc

    problem = {"b": b, "f": f}
    for key in ("c0", "x0"):
        if raw.get(key) is not None:
            try:
                problem[key] = linalg.as_vector(raw[key], key)
            except (ValueError, TypeError) as exc:
                raise InputError(str(exc)) from exc
    if problem.get("x0") is not None and problem["x0"].size != n:
        raise InputError(f"x0 must have {n} entries")
    for key, default in DEFAULTS.items():
        value = overrides.get(key)
        if value is None:
            value = raw.get(key, default)
        try:
            value = float(value)
        except (TypeError, ValueError) as exc:
            raise InputError(f"{key} must be a number") from exc
        if not value > 0 or not np.isfinite(value):
            raise InputError(f"{key} must be positive and finite")
        problem[key] = value
    if problem["step"] > problem["t_end"]:
        raise InputError("step must not exceed t_end")
    return problem


def write_csv(path, times, states) -> None:
    n = states.shape[1]
    lines = [",".join(["t"] + [f"x_{i + 1}" for i in range(n)])]
    for t, row in zip(times, states):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_chain(args, out) -> int:
    prob = load_problem(args.problem, _overrides(args))
    chain = build_chain(prob["b"], prob["tol"])
    dims = ",".join(str(d) for d in chain.dims)
    head = f"p={chain.p} kind={chain.kind} dims=[{dims}]"
    stability = None
    if chain.kind is ChainKind.REGULAR:
        stability = check_stability(chain)
        head += f" stability={stability.verdict}"
    print(head, file=out)
    report = verify_chain(chain, prob["tol"])
    for check in report.select("condition1"):
        print(f"  {check.name} residual={check.residual:.3e} bound={check.bound:.3e}", file=out)
    spectrum = linalg.eigenvalues(chain.terminal)
    print("  terminal spectrum: [" + ", ".join(_fmt_complex(z) for z in spectrum) + "]", file=out)
    if stability is not None:
        print(f"  spectral abscissa={stability.abscissa:.6g} decay rate={stability.decay_rate:.6g}", file=out)
    print(f"  verify: {'pass' if report.passed else 'FAIL'}", file=out)
    return EXIT_OK


def cmd_solve(args, out) -> int:
    prob = load_problem(args.problem, _overrides(args))
    b, f = prob["b"], prob["f"]
    chain = build_chain(b, prob["tol"])
    c0 = prob.get("c0")
    if chain.kind is ChainKind.DEGENERATE:
        if c0 is not None:
            log.warning("degenerate chain: the solution is unique without initial data; c0 ignored")
        traj = solve_degenerate(DegenerateProblem(b, f, prob["t_end"], prob["step"]), chain)
        summary = f"kind=degenerate p={chain.p} residual_max={traj.residual_max:.3e}"
    else:
        r_p = chain.dims[-1]
        if c0 is None:
            raise InputError(f"regular chain needs c0 with {r_p} entries")
        if c0.size != r_p:
            raise InputError(f"c0 has {c0.size} entries, the terminal space has dimension {r_p}")
        traj = solve_regular(RegularizedIVP(b, f, c0, prob["t_end"], prob["step"]), chain)
        summary = (
            f"kind=regular p={chain.p} residual_max={traj.residual_max:.3e} "
            f"hyperplane_defect={traj.hyperplane_defect:.3e}"
        )
    write_csv(args.out, traj.times, traj.states)
    print(summary, file=out)
    return EXIT_OK


def cmd_check(args, out) -> int:
    prob = load_problem(args.problem, _overrides(args))
    if prob.get("x0") is None:
        raise InputError("check needs x0")
    verdict = check_classical_consistency(prob["b"], prob["x0"], prob["f"], prob["tol"])
    if verdict.basis.dim == 0:
        print("consistent (trivial: ker B* = 0)", file=out)
    else:
        print(f"{verdict.verdict} defect={verdict.defect!r}", file=out)
    print(f"  null space dim={verdict.basis.dim}", file=out)
    chain = build_chain(prob["b"], prob["tol"])
    report = verify_chain(chain, prob["tol"])
    for check in report.checks:
        line = f"  {check.name}: {'pass' if check.passed else 'FAIL'}"
        if check.bound:
            line += f" residual={check.residual:.3e} bound={check.bound:.3e}"
        print(line, file=out)
    return EXIT_OK


def cmd_synth(args, out) -> int:
    if not 1 <= args.n <= 12:
        raise InputError("n must be between 1 and 12")
    spec = random_spec(args.seed, args.n)
    b, analytic = synthesize(spec)
    t_end = args.t_end if args.t_end is not None else 2.0
    step = args.step if args.step is not None else DEFAULTS["step"]
    tol = args.tol if args.tol is not None else DEFAULTS["tol"]
    if not (0 < step <= t_end):
        raise InputError("need 0 < step <= t_end")
    chain = build_chain(b, tol)
    m = build_projector(chain)
    x0 = analytic.initial_state()
    problem = {
        "b": b.tolist(),
        "f": spec.f.to_strings(),
        "x0": x0.tolist(),
        "t_end": t_end,
        "step": step,
        "tol": tol,
    }
    if chain.kind is ChainKind.REGULAR:
        problem["c0"] = (m @ x0).tolist()
        problem["M"] = m.tolist()
    prefix = Path(args.out)
    problem_path = prefix.with_name(prefix.name + ".json")
    ref_path = prefix.with_name(prefix.name + "_ref.csv")
    problem_path.write_text(json.dumps(problem, indent=2) + "\n")
    times = time_grid(t_end, step)
    write_csv(ref_path, times, analytic.evaluate(times))
    print(f"wrote {problem_path} and {ref_path} (n={spec.n} core={spec.c} nilpotent={spec.q} kind={chain.kind})", file=out)
    return EXIT_OK


def _overrides(args) -> dict:
    return {"tol": args.tol, "step": args.step, "t_end": args.t_end}


def _positive(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    def add_globals(p, default):
        p.add_argument("--tol", type=_positive, default=default, help="rank tolerance (default 1e-10)")
        p.add_argument("--step", type=_positive, default=default, help="time step override")
        p.add_argument("--t-end", dest="t_end", type=_positive, default=default, help="final time override")

    parser = argparse.ArgumentParser(prog="skeleton-dae", description="Skeleton-chain solver for B x' = x + f(t)")
    add_globals(parser, None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chain", help="build and report the skeleton chain of B")
    p.add_argument("problem")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("solve", help="solve and write the trajectory as CSV")
    p.add_argument("problem")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="classical consistency and chain verification")
    p.add_argument("problem")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synth", help="write a random problem and its reference trajectory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_synth)

    for p in sub.choices.values():
        add_globals(p, argparse.SUPPRESS)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args, out)
    except (InputError, ChainMismatchError, ParseError, NonFiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (StepTooCoarseError, SingularError, NoConvergenceError, OrderCapExceededError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

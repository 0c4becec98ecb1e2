"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 integration failure, 4 shooting
did not converge (best effort written), 5 compilation bound violation or
missed error target (ledger still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .constants import load_constants
from .fileio import (
    atomic_write_text,
    atomic_write_with,
    coefficients_from_json,
    path_from_json,
    read_json,
    unitary_from_json,
    write_json,
)
from .geodesic import IntegrationError, integrate_ivp
from .metric import PenaltyMetric, curve_length, normalize_curve
from .numerics import qubit_count
from .shooting import ShootingConfig, initial_guess, solve
from .synthesis import compile_geodesic, step_schedule
from .verify import format_report, run_all

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTEGRATION = 3
EXIT_NOT_CONVERGED = 4
EXIT_BOUND = 5

logger = logging.getLogger("geosynth")


class InputError(Exception):
    pass


def _positive(kind=float):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
        if not value > 0 or (kind is float and not math.isfinite(value)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return value

    return parse


def _load(path, loader):
    try:
        return loader(read_json(path))
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _dumps(data) -> str:
    return json.dumps(data, indent=2) + "\n"


def _shooting_config(args) -> ShootingConfig:
    return ShootingConfig(
        restarts=args.restarts,
        max_iterations=args.max_iterations,
        objective_tolerance=args.tolerance,
        seed=args.seed,
        initial_guess_mode=args.guess,
        step=args.step,
    )


# ---------------------------------------------------------------------------


def cmd_shoot(args) -> int:
    data = _load(args.input, lambda d: d)
    try:
        h0 = coefficients_from_json(data)
        t_final = float(args.t_final if args.t_final is not None else data["t_f"])
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{args.input}: {exc}") from None
    if not t_final > 0:
        raise InputError("t_f must be positive")
    if len(h0) == 0:
        raise InputError("initial velocity is zero")
    g = PenaltyMetric(h0.n, args.p or data.get("p"))
    try:
        path = integrate_ivp(g, h0, t_final, args.step)
    except IntegrationError as exc:
        logger.error("%s", exc)
        return EXIT_INTEGRATION
    out = path.to_json(args.stride)
    out["seed"] = args.seed
    _emit(_dumps(out), args.out)
    return EXIT_OK


def cmd_connect(args) -> int:
    target = _load(args.target, unitary_from_json)
    g = PenaltyMetric(qubit_count(target), args.p)
    result = solve(g, target, _shooting_config(args))
    out = result.to_json(args.stride)
    out.update({"metric": g.to_json(), "seed": args.seed})
    _emit(_dumps(out), args.out)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_distance(args) -> int:
    target = _load(args.target, unitary_from_json)
    g = PenaltyMetric(qubit_count(target), args.p)
    guess = initial_guess(target, g)
    result = solve(g, target, _shooting_config(args))
    report = {
        "n": g.n,
        "p": g.p,
        "constant_path_bound": guess.t_final,
        "shooting_estimate": result.length,
        "gap": guess.t_final - result.length,
        "boundary_error": result.boundary_error,
        "converged": result.converged,
        "branch_ambiguous": guess.branch_ambiguous,
        "seed": args.seed,
    }
    if args.format == "json":
        text = _dumps(report)
    else:
        text = "".join(f"{k:>20}: {v}\n" for k, v in report.items())
    _emit(text, args.out)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _ledger_table(ledger) -> str:
    rows = [
        ("1 projection", ledger.epsilon1, ledger.bound1),
        ("2 mean hamiltonian", ledger.epsilon2, ledger.bound2),
        ("3 trotter", ledger.epsilon3, ledger.bound3),
        ("total", ledger.total_error, ledger.total_bound),
    ]
    lines = [f"n={ledger.n} p={ledger.p:g} d={ledger.d:.6g} delta={ledger.delta:.6g} "
             f"windows={ledger.windows} gates={ledger.gate_count}",
             f"{'stage':<20}{'error':>14}{'bound':>14}  ok"]
    for name, err, bound in rows:
        lines.append(f"{name:<20}{err:>14.4e}{bound:>14.4e}  {'yes' if err <= bound else 'NO'}")
    for v in ledger.violations:
        lines.append(f"violation: {v}")
    return "\n".join(lines) + "\n"


def cmd_compile(args) -> int:
    data = _load(args.input, lambda d: d)
    try:
        path = path_from_json(data)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{args.input}: {exc}") from None
    g = PenaltyMetric(path.n, args.p or data.get("p"))
    speeds = g.cost_vec(path.coeffs)
    if np.max(np.abs(speeds - 1.0)) > 1e-6:
        try:
            path = normalize_curve(g, path)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    d = curve_length(g, path)
    delta = args.delta if args.delta is not None else step_schedule(g.n, d, args.target_error)
    circuit, ledger = compile_geodesic(path, g, delta)
    if args.prune:
        circuit = circuit.pruned()
    prefix = args.out or "compiled"
    atomic_write_with(f"{prefix}.circuit", circuit.write_text)
    ledger_json = ledger.to_json()
    ledger_json.update({"target_error": args.target_error, "seed": args.seed,
                        "constants_source": load_constants().source})
    write_json(f"{prefix}.ledger.json", ledger_json)
    if args.format == "json":
        sys.stdout.write(_dumps(ledger_json))
    else:
        sys.stdout.write(_ledger_table(ledger))
    if ledger.flagged or ledger.total_error > args.target_error:
        return EXIT_BOUND
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.samples < 1:
        raise InputError("sample count must be positive")
    if not 1 <= args.n_max <= 3:
        raise InputError("--n-max must be 1, 2 or 3")
    results = run_all(args.seed, args.samples, args.n_max)
    _emit(format_report(results, args.seed, load_constants().version, args.format), args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_BOUND


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geosynth", description="Geodesic circuit synthesis on SU(2^n).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=_positive(), default=None, help="penalty (default 4^n)")
    common.add_argument("--step", type=_positive(), default=None, help="integrator step")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "text"), default="text")
    common.add_argument("--out", default=None)

    shoot_opts = argparse.ArgumentParser(add_help=False)
    shoot_opts.add_argument("--restarts", type=_positive(int), default=4)
    shoot_opts.add_argument("--max-iterations", type=int, default=2000)
    shoot_opts.add_argument("--tolerance", type=_positive(), default=1e-6)
    shoot_opts.add_argument("--guess", choices=("log", "random"), default="log")
    shoot_opts.add_argument("--stride", type=_positive(int), default=10)

    p = sub.add_parser("shoot", parents=[common], help="integrate a geodesic from h0 for t_f")
    p.add_argument("input", help="coefficient JSON with an extra 't_f' field")
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--stride", type=_positive(int), default=10)
    p.set_defaults(func=cmd_shoot)

    p = sub.add_parser("connect", parents=[common, shoot_opts], help="shoot for a geodesic reaching a target")
    p.add_argument("target", help="unitary JSON")
    p.set_defaults(func=cmd_connect)

    p = sub.add_parser("distance", parents=[common, shoot_opts], help="upper estimates of d(I, U)")
    p.add_argument("target", help="unitary JSON")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("compile", parents=[common], help="compile a path into a circuit and error ledger")
    p.add_argument("input", help="geodesic or path JSON")
    p.add_argument("--delta", type=_positive(), default=None)
    p.add_argument("--target-error", type=_positive(), default=0.1)
    p.add_argument("--prune", action="store_true", help="drop rotations with |angle| < 1e-15")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("verify", parents=[common], help="run the randomized property suite")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--n-max", type=int, default=2)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())

"""Shooting for geodesics that connect the identity to a target unitary.

The search runs over initial velocities with ``F(h0) = 1`` and the final
time ``t_f``, so a converged result's ``t_f`` is the length of a geodesic
reaching the target and therefore an upper estimate of the distance.
Nothing here certifies global minimality.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares, minimize

from .geodesic import GeodesicPath, IntegrationError, default_step, integrate_ivp
from .metric import PenaltyMetric
from .numerics import check_unitary, operator_norm, phase_distance, qubit_count, special_unitary, unitary_log
from .pauli import PauliCoefficients

logger = logging.getLogger(__name__)

MAX_SHOOTING_QUBITS = 3
GUESS_MODES = ("log", "random", "supplied")
_FAILED = 4.0  # larger than any strict distance between unitaries


@dataclass
class ShootingConfig:
    restarts: int = 4
    max_iterations: int = 2000
    objective_tolerance: float = 1e-6
    seed: int = 0
    initial_guess_mode: str = "log"
    step: float | None = None
    search_step: float = 1e-2
    simplex_rounds: int = 3
    stop_on_convergence: bool = True
    supplied_h0: PauliCoefficients | None = None
    supplied_t_final: float | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not self.objective_tolerance > 0:
            raise ValueError("objective_tolerance must be positive")
        if self.initial_guess_mode not in GUESS_MODES:
            raise ValueError(f"initial_guess_mode must be one of {GUESS_MODES}")
        if self.initial_guess_mode == "supplied" and (self.supplied_h0 is None or self.supplied_t_final is None):
            raise ValueError("supplied mode needs supplied_h0 and supplied_t_final")


@dataclass
class ShootingResult:
    h0: PauliCoefficients
    length: float
    boundary_error: float
    path: GeodesicPath | None
    converged: bool
    restart: int = 0
    guess_length: float = 0.0
    history: list[float] = field(default_factory=list)
    evaluations: int = 0

    def to_json(self, stride: int = 10) -> dict:
        return {
            "h0": self.h0.to_json(),
            "length": self.length,
            "boundary_error": self.boundary_error,
            "converged": self.converged,
            "restart": self.restart,
            "guess_length": self.guess_length,
            "evaluations": self.evaluations,
            "history": self.history,
            "path": self.path.to_json(stride) if self.path is not None else None,
        }


class InitialGuess(NamedTuple):
    h0: PauliCoefficients
    t_final: float
    branch_ambiguous: bool


def boundary_error(path: GeodesicPath, target: np.ndarray, phase_invariant: bool = False) -> float:
    """Distance from the path's endpoint to ``target``."""
    target = np.asarray(target)
    end = path.final_unitary
    if end.shape != target.shape:
        raise ValueError(f"dimension mismatch: {end.shape} vs {target.shape}")
    if phase_invariant:
        return phase_distance(end, target)
    return operator_norm(end - target)


def initial_guess(target, g: PenaltyMetric) -> InitialGuess:
    """Unit-speed constant generator from the determinant-one logarithm of ``target``."""
    log = unitary_log(special_unitary(check_unitary(target)), special=True)
    gen = log.generator
    length = g.cost(gen) if len(gen) else 0.0
    if length == 0.0:
        return InitialGuess(PauliCoefficients(g.n), 0.0, log.branch_ambiguous)
    return InitialGuess(gen / length, length, log.branch_ambiguous)


def _random_direction(g: PenaltyMetric, rng: np.random.Generator) -> np.ndarray:
    # isotropic in the metric: penalized coordinates shrink by 1/p
    v = rng.standard_normal(len(g.diagonal)) / np.sqrt(g.diagonal)
    return v / g.cost_vec(v)


class _Problem:
    def __init__(self, g: PenaltyMetric, target: np.ndarray, step: float):
        self.g = g
        self.target = target
        self.step = step
        self.evaluations = 0
        self.best = _FAILED

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, float] | None:
        v = np.asarray(x[:-1], dtype=float)
        speed = float(self.g.cost_vec(v))
        if not math.isfinite(speed) or speed <= 1e-12 or not math.isfinite(x[-1]) or x[-1] > 5.0:
            return None
        return v / speed, math.exp(x[-1])

    def endpoint(self, x: np.ndarray) -> np.ndarray | None:
        self.evaluations += 1
        unpacked = self.unpack(x)
        if unpacked is None:
            return None
        h0, t_final = unpacked
        try:
            path = integrate_ivp(self.g, PauliCoefficients.from_vector(h0, self.g.n), t_final,
                                 min(self.step, t_final), check_speed=False)
        except (IntegrationError, FloatingPointError, np.linalg.LinAlgError, ValueError):
            return None
        u = path.final_unitary
        return u if np.all(np.isfinite(u)) else None

    def objective(self, x: np.ndarray) -> float:
        u = self.endpoint(x)
        f = _FAILED if u is None else operator_norm(u - self.target)
        self.best = min(self.best, f)
        return f

    def residuals(self, x: np.ndarray) -> np.ndarray:
        u = self.endpoint(x)
        if u is None:
            return np.full(2 * self.target.size, _FAILED)
        diff = (u - self.target).ravel()
        return np.concatenate([diff.real, diff.imag])


def _simplex_search(problem: _Problem, x0: np.ndarray, config: ShootingConfig,
                    scale: float) -> tuple[np.ndarray, float, list[float]]:
    best_x = np.array(x0, dtype=float)
    best_f = problem.objective(best_x)
    history = [best_f]
    budget = config.max_iterations
    for _ in range(config.simplex_rounds):
        if best_f <= config.objective_tolerance or budget <= 0:
            break
        dim = len(best_x)
        simplex = np.vstack([best_x, best_x + scale * np.eye(dim)])
        trace = []

        def callback(xk):
            trace.append(problem.best)

        res = minimize(problem.objective, best_x, method="Nelder-Mead", callback=callback,
                       options={"maxiter": budget, "initial_simplex": simplex, "adaptive": dim > 4,
                                "xatol": 1e-12, "fatol": 0.1 * config.objective_tolerance})
        budget -= res.nit
        for f in trace:
            history.append(min(history[-1], f))
        if res.fun < best_f:
            best_x, best_f = np.array(res.x), float(res.fun)
        history.append(min(history[-1], best_f))
        scale *= 0.5
    return best_x, best_f, history


def _refine(problem: _Problem, x: np.ndarray, f: float, config: ShootingConfig) -> tuple[np.ndarray, float]:
    if config.max_iterations <= 0:
        return x, f
    try:
        res = least_squares(problem.residuals, x, method="trf", diff_step=1e-7,
                            max_nfev=max(10, min(config.max_iterations, 200)), xtol=1e-14, ftol=1e-14)
    except (ValueError, np.linalg.LinAlgError):
        return x, f
    f_new = problem.objective(res.x)
    return (np.array(res.x), f_new) if f_new < f else (x, f)


def _trivial_result(g: PenaltyMetric, target: np.ndarray) -> ShootingResult:
    dim = 1 << g.n
    path = GeodesicPath(g, np.zeros(1), np.zeros((1, len(g.diagonal))),
                        np.eye(dim, dtype=complex)[None], 0.0)
    err = operator_norm(np.eye(dim) - target)
    return ShootingResult(PauliCoefficients(g.n), 0.0, err, path, True, history=[err])


def solve(g: PenaltyMetric, target, config: ShootingConfig | None = None) -> ShootingResult:
    """Best geodesic found from ``I`` towards ``target`` over all restarts.

    Converged restarts compete on length; if none converged the smallest
    boundary error wins.  Ties go to the lowest restart index.
    """
    config = config or ShootingConfig()
    target = check_unitary(target)
    n = qubit_count(target)
    if n != g.n:
        raise ValueError("target and metric have different qubit counts")
    if n > MAX_SHOOTING_QUBITS:
        raise ValueError(f"shooting is limited to n <= {MAX_SHOOTING_QUBITS}")
    target = special_unitary(target)
    if operator_norm(target - np.eye(1 << n)) <= config.objective_tolerance:
        return _trivial_result(g, target)

    rng = np.random.default_rng(config.seed)
    guess = initial_guess(target, g)
    if guess.branch_ambiguous:
        logger.warning("initial guess comes from a branch-ambiguous logarithm")
    guess_t = guess.t_final if guess.t_final > 0 else 1.0
    candidates: list[ShootingResult] = []

    for restart in range(config.restarts):
        if restart == 0 and config.initial_guess_mode == "supplied":
            h_start = config.supplied_h0.to_vector()
            t_start = float(config.supplied_t_final)
        elif restart == 0 and config.initial_guess_mode == "log" and guess.t_final > 0:
            h_start, t_start = guess.h0.to_vector(), guess.t_final
        else:
            h_start = _random_direction(g, rng)
            t_start = guess_t * math.exp(rng.uniform(-0.5, 0.5))
        candidates.append(_run_restart(g, target, config, h_start, t_start, restart, guess.t_final))
        last = candidates[-1]
        logger.info("restart %d: error %.3e, length %.6f", restart, last.boundary_error, last.length)
        if last.converged and config.stop_on_convergence:
            break

    converged = [c for c in candidates if c.converged]
    if converged:
        return min(converged, key=lambda c: (c.length, c.restart))
    return min(candidates, key=lambda c: (c.boundary_error, c.restart))


def _run_restart(g, target, config, h_start, t_start, restart, guess_length) -> ShootingResult:
    final_step = config.step
    x0 = np.concatenate([h_start, [math.log(t_start)]])
    search = _Problem(g, target, config.search_step)
    exact = _Problem(g, target, final_step or 1e-3)

    f0 = _final_objective(g, target, x0, final_step)
    if f0 <= config.objective_tolerance:
        x, history = x0, [f0]
    else:
        x, f, history = _simplex_search(search, x0, config, scale=0.1)
        if g.n <= 2 and f > config.objective_tolerance:
            x, f = _refine(search, x, f, config)
            history.append(min(history[-1], f))
    unpacked = exact.unpack(x)
    if unpacked is None:
        return ShootingResult(PauliCoefficients.from_vector(h_start, g.n), t_start, _FAILED, None, False,
                              restart, guess_length, history, search.evaluations)
    h0, t_final = unpacked
    h0c = PauliCoefficients.from_vector(h0, g.n)
    step = final_step or default_step(g, h0c)
    try:
        path = integrate_ivp(g, h0c, t_final, min(step, t_final), check_speed=False)
        err = boundary_error(path, target)
    except (IntegrationError, np.linalg.LinAlgError, ValueError):
        path, err = None, _FAILED
    return ShootingResult(h0c, t_final, err, path, err <= config.objective_tolerance, restart,
                          guess_length, history, search.evaluations)


def _final_objective(g, target, x, step) -> float:
    problem = _Problem(g, target, 1.0)
    unpacked = problem.unpack(x)
    if unpacked is None:
        return _FAILED
    h0, t_final = unpacked
    h0c = PauliCoefficients.from_vector(h0, g.n)
    s = step or default_step(g, h0c)
    try:
        path = integrate_ivp(g, h0c, t_final, min(s, t_final), check_speed=False)
    except (IntegrationError, np.linalg.LinAlgError, ValueError):
        return _FAILED
    return boundary_error(path, target)

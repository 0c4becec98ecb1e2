"""Randomized property checks of the norm facts, the three stage bounds and the geodesic flow.

Every check draws its inputs from one seeded generator and reports the worst
observed margin, so a report is reproducible bit for bit for a given seed
and constants file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import load_constants
from .geodesic import finite_difference_velocity, geodesic_rhs_vec, integrate_ivp, residual_vector
from .metric import HamiltonianPath, PenaltyMetric, curve_length, normalize_curve
from .numerics import (
    evolve,
    expm_hermitian_dense,
    operator_norm,
    operator_norms,
    unitarity_defect,
)
from .pauli import PauliCoefficients, PauliString, basis, commutator, multiply, vector_to_matrix
from .synthesis import (
    circuit_to_matrix,
    gate_constant_c1,
    lemma1_bound,
    lemma2_bound,
    lemma3_bound,
    mean_hamiltonian,
    path_unitary,
    project_path,
    trotter_compile,
)

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_matrix(sigma: PauliString) -> np.ndarray:
    """Dense matrix by explicit Kronecker products (independent of the bit-mask path)."""
    out = np.ones((1, 1), dtype=complex)
    for ch in sigma.letters:
        out = np.kron(out, _SINGLE[ch])
    return out


# ---------------------------------------------------------------------------
# random inputs


class FourierHamiltonian:
    """``H(t) = a + b sin(w t) + c cos(w t)`` coefficient-wise, vectorized in ``t``."""

    def __init__(self, n: int, a, b, c, omega: float, scale: float = 1.0):
        self.n = n
        self.a, self.b, self.c = (np.asarray(v, dtype=float) for v in (a, b, c))
        self.omega = omega
        self.scale = scale

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = np.multiply.outer(np.sin(self.omega * t / self.scale), self.b)
        c = np.multiply.outer(np.cos(self.omega * t / self.scale), self.c)
        return self.a + s + c

    def rescaled(self, scale: float) -> "FourierHamiltonian":
        """Same profile stretched so that one unit of time becomes ``scale``."""
        return FourierHamiltonian(self.n, self.a, self.b, self.c, self.omega, scale)


def random_hamiltonian(n: int, rng: np.random.Generator, *, g: PenaltyMetric | None = None,
                       amplitude: float = 1.0) -> FourierHamiltonian:
    dim = 4**n - 1
    weights = np.ones(dim) if g is None else 1.0 / np.sqrt(g.diagonal)
    parts = [amplitude * weights * rng.standard_normal(dim) / math.sqrt(dim) for _ in range(3)]
    return FourierHamiltonian(n, *parts, omega=float(rng.uniform(1.0, 4.0)))


def random_normalized_path(g: PenaltyMetric, rng: np.random.Generator, t_final: float = 1.0,
                           samples: int = 201) -> HamiltonianPath:
    func = random_hamiltonian(g.n, rng, g=g)
    raw = HamiltonianPath(g.n, np.linspace(0.0, t_final, samples), func(np.linspace(0.0, t_final, samples)))
    return normalize_curve(g, raw)


def random_velocity(g: PenaltyMetric, rng: np.random.Generator, mask=None) -> np.ndarray:
    v = rng.standard_normal(len(g.diagonal)) / np.sqrt(g.diagonal)
    if mask is not None:
        v = v * mask
    return v / g.cost_vec(v)


def random_two_body(n: int, rng: np.random.Generator) -> PauliCoefficients:
    strings = [s for s in basis(n) if s.weight <= 2]
    return PauliCoefficients(n, zip(strings, rng.uniform(-1.0, 1.0, len(strings))))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------------------
# checks


@dataclass
class PropertyResult:
    name: str
    passed: bool
    samples: int
    worst_margin: float
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "samples": self.samples,
                "worst_margin": self.worst_margin, "detail": self.detail}


def check_pauli_products(rng, samples: int, n_max: int) -> PropertyResult:
    """Products and commutators against Kronecker-product matrices.

    Exhaustive for ``n <= 2``; ``samples`` random pairs for ``n = 3``.
    """
    mismatches = 0
    count = 0
    pairs = []
    for n in range(1, min(n_max, 2) + 1):
        pairs += [(PauliString.from_index(a, n), PauliString.from_index(b, n))
                  for a in range(4**n) for b in range(4**n)]
    if n_max >= 3:
        idx = rng.integers(0, 64, size=(samples, 2))
        pairs += [(PauliString.from_index(int(a), 3), PauliString.from_index(int(b), 3)) for a, b in idx]
    for s, t in pairs:
        count += 1
        ds, dt = kron_matrix(s), kron_matrix(t)
        phase, rho = multiply(s, t)
        if not np.array_equal(ds @ dt, phase * kron_matrix(rho)):
            mismatches += 1
        sc = commutator(s, t)
        comm = ds @ dt - dt @ ds
        expected = np.zeros_like(comm) if sc.commuting else 2j * sc.sign * kron_matrix(sc.result)
        if not np.array_equal(comm, expected):
            mismatches += 1
    return PropertyResult("pauli_products", mismatches == 0, count, float(-mismatches),
                          {"mismatches": mismatches})


def check_norm_fact3(rng, samples: int, n_max: int) -> PropertyResult:
    """``||H|| <= 2^n ||h||_2``."""
    worst = math.inf
    for i in range(samples):
        n = 1 + i % n_max
        h = rng.standard_normal(4**n - 1)
        margin = 2**n * np.linalg.norm(h) - operator_norm(vector_to_matrix(h, n))
        worst = min(worst, margin)
    return PropertyResult("norm_fact3", bool(worst >= 0), samples, float(worst))


def check_fact1(rng, samples: int, n_max: int, steps: int = 400) -> PropertyResult:
    """``||U - V|| <= integral ||H - J|| dt`` for random time-dependent pairs."""
    worst = math.inf
    for i in range(samples):
        n = 1 + i % n_max
        hf, jf = random_hamiltonian(n, rng), random_hamiltonian(n, rng)
        t_final = float(rng.uniform(0.2, 2.0))
        u = evolve(hf, n, 0.0, t_final, steps)
        v = evolve(jf, n, 0.0, t_final, steps)
        ts = np.linspace(0.0, t_final, 2 * steps + 1)
        diff = operator_norms(vector_to_matrix(hf(ts) - jf(ts), n))
        w = np.ones(len(ts))
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        integral = float(w @ diff) * (ts[1] - ts[0]) / 3.0
        worst = min(worst, integral + 1e-6 - operator_norm(u - v))
    return PropertyResult("fact1_triangle", bool(worst >= 0), samples, float(worst))


def check_lemma1(rng, samples: int, n: int = 3, step: float = 2e-3) -> PropertyResult:
    """Projection error of random unit-speed paths against ``2^n d / p`` with ``p = 4^n``."""
    g = PenaltyMetric(n)
    worst = math.inf
    worst_tight = math.inf
    for _ in range(samples):
        path = random_normalized_path(g, rng, t_final=float(rng.uniform(0.5, 1.5)))
        d = curve_length(g, path)
        u = path_unitary(path, n, path.t_final, step)
        u_p = path_unitary(project_path(path), n, path.t_final, step)
        eps = operator_norm(u - u_p)
        worst = min(worst, lemma1_bound(d, n, g.p) - eps)
        worst_tight = min(worst_tight, d / 2**n - eps)
    ok = bool(worst >= 0 and worst_tight >= 0)
    return PropertyResult("lemma1_projection", ok, samples, float(min(worst, worst_tight)), {"n": n, "p": g.p})


LEMMA2_DELTAS = (0.2, 0.1, 0.05, 0.025)


def lemma2_errors(func: FourierHamiltonian, deltas=LEMMA2_DELTAS, steps: int = 200):
    """Mean-Hamiltonian errors and norm bounds for a profile stretched over each window length."""
    n = func.n
    errors, cs = [], []
    for delta in deltas:
        h = func.rescaled(delta)
        u = evolve(h, n, 0.0, delta, steps)
        mean = mean_hamiltonian(h, 0.0, delta, substeps=steps, n=n)
        u_m = expm_hermitian_dense(vector_to_matrix(mean.to_vector(), n), delta)
        ts = np.linspace(0.0, delta, 4 * steps + 1)
        cs.append(float(operator_norms(vector_to_matrix(h(ts), n)).max()))
        errors.append(operator_norm(u - u_m))
    return np.array(errors), np.array(cs)


def check_lemma2(rng, samples: int, n_max: int) -> PropertyResult:
    worst = math.inf
    slopes = []
    for i in range(samples):
        n = 1 + i % n_max
        func = random_hamiltonian(n, rng)
        errors, cs = lemma2_errors(func)
        for e, c, delta in zip(errors, cs, LEMMA2_DELTAS):
            worst = min(worst, lemma2_bound(c, delta) - e)
        slopes.append(loglog_slope(LEMMA2_DELTAS, errors))
    slope = float(np.median(slopes))
    ok = bool(worst >= 0 and abs(slope - 2.0) <= 0.2)
    return PropertyResult("lemma2_mean_hamiltonian", ok, samples, float(worst),
                          {"median_slope": slope, "min_slope": float(min(slopes)), "max_slope": float(max(slopes))})


LEMMA3_DELTAS = (1 / 4, 1 / 10, 1 / 30, 1 / 100)


def check_lemma3(rng, samples: int, n_max: int, c2: float | None = None) -> PropertyResult:
    c2 = load_constants().c2 if c2 is None else c2
    worst = math.inf
    count_ok = True
    for i in range(samples):
        n = 1 + i % n_max
        delta = LEMMA3_DELTAS[(i // n_max) % len(LEMMA3_DELTAS)]
        h = random_two_body(n, rng)
        circuit = trotter_compile(h, delta)
        err = operator_norm(expm_hermitian_dense(vector_to_matrix(h.to_vector(), n), delta)
                            - circuit_to_matrix(circuit))
        worst = min(worst, lemma3_bound(n, delta, c2) - err)
        expected = len(h) * math.ceil(1 / delta - 1e-12)
        count_ok &= circuit.gate_count == expected and expected <= gate_constant_c1(n) * n**2 / delta + 1e-9
    return PropertyResult("lemma3_trotter", bool(worst >= 0 and count_ok), samples, float(worst),
                          {"c2": c2, "gate_counts_ok": bool(count_ok)})


def check_geodesic_flow(rng, samples: int, n: int, t_final: float = 1.0, step: float = 1e-3,
                        p: float | None = None) -> PropertyResult:
    """Constant speed, unitarity and the coordinate-free residual along integrated geodesics.

    The velocity is differentiated numerically, and the residual is divided by
    the metric component so that penalized directions are measured on the
    same scale as the rest.
    """
    g = PenaltyMetric(n, p)
    worst_res = worst_speed = worst_unit = 0.0
    for _ in range(samples):
        h0 = PauliCoefficients.from_vector(random_velocity(g, rng), n)
        path = integrate_ivp(g, h0, t_final, step)
        idx, hdot = finite_difference_velocity(path)
        res = max(float(np.max(np.abs(residual_vector(g, path.h[i], hd) / g.diagonal)))
                  for i, hd in zip(idx, hdot))
        worst_res = max(worst_res, res)
        worst_speed = max(worst_speed, path.speed_drift())
        worst_unit = max(worst_unit, max(unitarity_defect(u) for u in path.unitaries))
    ok = bool(worst_res <= 1e-7 and worst_speed <= 1e-6 and worst_unit <= 1e-9)
    return PropertyResult(f"geodesic_flow_n{n}_p{g.p:g}", ok, samples, float(1e-7 - worst_res),
                          {"residual": worst_res, "speed_drift": worst_speed, "unitarity": worst_unit})


def check_constant_geodesics(rng, samples: int, n: int, t_final: float = 1.0) -> PropertyResult:
    """Single-penalty-class velocities give stationary geodesics ``U = exp(-i H t)``."""
    g = PenaltyMetric(n)
    worst_rhs = worst_end = 0.0
    for i in range(samples):
        mask = ~g.penalized_mask if i % 2 == 0 or not g.penalized_mask.any() else g.penalized_mask
        h = random_velocity(g, rng, mask)
        worst_rhs = max(worst_rhs, float(np.max(np.abs(geodesic_rhs_vec(g, h)))))
        path = integrate_ivp(g, PauliCoefficients.from_vector(h, n), t_final, 1e-3)
        exact = expm_hermitian_dense(vector_to_matrix(h, n), t_final)
        worst_end = max(worst_end, operator_norm(path.final_unitary - exact))
    ok = bool(worst_rhs <= 1e-12 and worst_end <= 1e-8)
    return PropertyResult(f"constant_geodesics_n{n}", ok, samples, float(1e-8 - worst_end),
                          {"rhs": worst_rhs, "endpoint": worst_end})


def run_all(seed: int = 0, samples: int = 20, n_max: int = 2) -> list[PropertyResult]:
    if samples < 1:
        raise ValueError("samples must be positive")
    if not 1 <= n_max <= 3:
        raise ValueError("n_max must be between 1 and 3")
    rng = np.random.default_rng(seed)
    results = [
        check_pauli_products(rng, samples * 10, n_max),
        check_norm_fact3(rng, samples, n_max),
        check_fact1(rng, samples, n_max),
        check_lemma2(rng, samples, n_max),
        check_lemma3(rng, samples, n_max),
        check_geodesic_flow(rng, max(1, samples // 4), min(n_max, 2)),
        check_constant_geodesics(rng, max(1, samples // 4), n_max),
    ]
    if n_max >= 3:
        # at p = 64 the flow is too fast for a finite-difference velocity at step 1e-3
        results.append(check_geodesic_flow(rng, max(1, samples // 4), 3, p=8.0))
        results.append(check_lemma1(rng, max(1, samples // 4)))
    return results


def format_report(results: list[PropertyResult], seed: int, constants_version: str, fmt: str = "text") -> str:
    passed = all(r.passed for r in results)
    if fmt == "json":
        return json.dumps({"seed": seed, "constants_version": constants_version, "passed": passed,
                           "properties": [r.to_json() for r in results]}, indent=2) + "\n"
    lines = [f"# verify seed={seed} constants={constants_version}"]
    for r in results:
        extra = " ".join(f"{k}={v!r}" for k, v in r.detail.items())
        lines.append(f"{'PASS' if r.passed else 'FAIL'} {r.name} samples={r.samples} "
                     f"worst_margin={r.worst_margin!r} {extra}".rstrip())
    lines.append(f"overall: {'PASS' if passed else 'FAIL'}")
    return "\n".join(lines) + "\n"

"""Compiling a normalized Hamiltonian path into one- and two-qubit rotations.

Three approximation stages, each with an analytic error bound:

1. drop every three- and more-body term (projection);
2. replace the projected evolution over each window of length ``delta`` by
   the evolution under the window's mean Hamiltonian;
3. first-order Trotterize each mean-Hamiltonian evolution.

:func:`compile_geodesic` runs all three, measures every stage error against
finely integrated reference propagators, and reports them in an
:class:`ErrorLedger`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, TextIO

import numpy as np

from .constants import load_constants
from .metric import HamiltonianPath, PenaltyMetric, curve_length
from .numerics import (
    evolve,
    expm_hermitian_dense,
    magnus4_steps,
    operator_norm,
    operator_norms,
    ordered_product,
)
from .pauli import PauliCoefficients, PauliString, basis, check_dense_cap, vector_to_matrix

CIRCUIT_FORMAT = "geodesic-circuit-v1"
DEFAULT_SUBSTEPS = 100


# ---------------------------------------------------------------------------
# circuits


@dataclass(frozen=True)
class Gate:
    """The rotation ``exp(-i * angle * pauli)`` on at most two qubits."""

    pauli: PauliString
    angle: float

    def __post_init__(self):
        if self.pauli.weight not in (1, 2):
            raise ValueError(f"gate {self.pauli} must act on one or two qubits")
        if not math.isfinite(self.angle):
            raise ValueError("gate angle must be finite")

    def to_matrix(self) -> np.ndarray:
        return gate_matrix(self.pauli, self.angle)

    def __str__(self) -> str:
        return f"EXP {self.angle:.17g} {self.pauli}"


def gate_matrix(pauli: PauliString, angle: float) -> np.ndarray:
    # sigma^2 = I, so exp(-i a sigma) = cos(a) I - i sin(a) sigma
    dim = 1 << pauli.n
    return math.cos(angle) * np.eye(dim) - 1j * math.sin(angle) * pauli.to_matrix()


@dataclass(frozen=True)
class CircuitBlock:
    """A gate sequence applied ``repeat`` times in a row."""

    gates: tuple[Gate, ...]
    repeat: int = 1

    def __post_init__(self):
        if self.repeat < 0:
            raise ValueError("repeat must be non-negative")


@dataclass(frozen=True)
class Circuit:
    """Ordered gate sequence, applied left to right in time.

    Stored as run-length blocks because Trotter circuits repeat the same
    step many times; :attr:`gates` yields the flat sequence.
    """

    n: int
    blocks: tuple[CircuitBlock, ...] = ()

    def __post_init__(self):
        for block in self.blocks:
            for gate in block.gates:
                if gate.pauli.n != self.n:
                    raise ValueError("gate acts on a different number of qubits")

    @property
    def gates(self) -> Iterator[Gate]:
        for block in self.blocks:
            for _ in range(block.repeat):
                yield from block.gates

    @property
    def gate_count(self) -> int:
        return sum(len(b.gates) * b.repeat for b in self.blocks)

    def __len__(self) -> int:
        return self.gate_count

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n != self.n:
            raise ValueError("circuits on different qubit counts")
        return Circuit(self.n, self.blocks + other.blocks)

    def pruned(self, tol: float = 1e-15) -> "Circuit":
        """Copy without rotations whose angle magnitude is below ``tol``."""
        blocks = tuple(
            CircuitBlock(tuple(g for g in b.gates if abs(g.angle) >= tol), b.repeat) for b in self.blocks
        )
        return Circuit(self.n, tuple(b for b in blocks if b.gates and b.repeat))

    def write_text(self, fh: TextIO) -> None:
        fh.write(f"# format={CIRCUIT_FORMAT}\n# n={self.n}\n")
        for block in self.blocks:
            lines = "".join(f"{g}\n" for g in block.gates)
            for _ in range(block.repeat):
                fh.write(lines)

    def to_json(self) -> dict:
        return {
            "format": CIRCUIT_FORMAT,
            "n": self.n,
            "blocks": [
                {"repeat": b.repeat, "gates": [{"pauli": str(g.pauli), "angle": g.angle} for g in b.gates]}
                for b in self.blocks
            ],
        }

    @classmethod
    def from_json(cls, data) -> "Circuit":
        n = int(data["n"])
        blocks = tuple(
            CircuitBlock(
                tuple(Gate(PauliString.parse(g["pauli"], n), float(g["angle"])) for g in b["gates"]),
                int(b["repeat"]),
            )
            for b in data["blocks"]
        )
        return cls(n, blocks)


def read_circuit_text(fh: TextIO) -> Circuit:
    n = None
    gates = []
    for raw in fh:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "n":
                n = int(val)
            elif key.strip() == "format" and val.strip() != CIRCUIT_FORMAT:
                raise ValueError(f"unknown circuit format {val.strip()!r}")
            continue
        if n is None:
            raise ValueError("circuit text is missing the '# n=' header")
        op, angle, spec = line.split()
        if op != "EXP":
            raise ValueError(f"unknown gate line {line!r}")
        gates.append(Gate(PauliString.parse(spec, n), float(angle)))
    if n is None:
        raise ValueError("circuit text is missing the '# n=' header")
    return Circuit(n, (CircuitBlock(tuple(gates)),) if gates else ())


def _block_matrix(gates: tuple[Gate, ...], dim: int) -> np.ndarray:
    if not gates:
        return np.eye(dim, dtype=complex)
    return ordered_product(np.stack([g.to_matrix() for g in gates]))


def circuit_to_matrix(circuit: Circuit) -> np.ndarray:
    """Unitary implemented by the circuit (later gates multiply on the left)."""
    check_dense_cap(circuit.n)
    dim = 1 << circuit.n
    u = np.eye(dim, dtype=complex)
    for block in circuit.blocks:
        if block.repeat and block.gates:
            u = np.linalg.matrix_power(_block_matrix(block.gates, dim), block.repeat) @ u
    return u


# ---------------------------------------------------------------------------
# stage 1: projection


def project(h: PauliCoefficients) -> PauliCoefficients:
    """Drop every term acting on three or more qubits."""
    return h.filter(lambda s: s.weight <= 2)


def two_body_mask(n: int) -> np.ndarray:
    return np.array([s.weight <= 2 for s in basis(n)])


def project_path(path: HamiltonianPath) -> HamiltonianPath:
    mask = two_body_mask(path.n)
    return path.map_coeffs(lambda c: c * mask)


def lemma1_bound(d: float, n: int, p: float) -> float:
    """Projection error bound ``2^n d / p``."""
    if d < 0 or p <= 0:
        raise ValueError("need d >= 0 and p > 0")
    return (2**n) * d / p


def _substeps_for(span: float, step: float) -> int:
    return max(1, math.ceil(span / step - 1e-9))


def path_unitary(path, n: int, t_final: float, step: float) -> np.ndarray:
    """Propagator of a (callable) Hamiltonian path by fourth-order Magnus steps."""
    return evolve(path, n, 0.0, t_final, _substeps_for(t_final, step))


def projected_unitary(path: HamiltonianPath, step: float) -> tuple[np.ndarray, float]:
    """Return ``(U_P, ||U - U_P||)`` for the projected and original flows."""
    u = path_unitary(path, path.n, path.t_final, step)
    u_p = path_unitary(project_path(path), path.n, path.t_final, step)
    return u_p, operator_norm(u - u_p)


# ---------------------------------------------------------------------------
# stage 2: mean Hamiltonians


def _simpson_weights(m: int) -> np.ndarray:
    if m % 2:
        raise ValueError("Simpson quadrature needs an even number of intervals")
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * m)


def mean_hamiltonian(path, t_start: float, delta: float, *, substeps: int = DEFAULT_SUBSTEPS,
                     n: int | None = None) -> PauliCoefficients:
    """Time average of ``H(t)`` over ``[t_start, t_start + delta]`` (Simpson rule)."""
    n = path.n if n is None else n
    if delta <= 0:
        raise ValueError("delta must be positive")
    t_final = getattr(path, "t_final", None)
    slack = 1e-12 * max(1.0, abs(t_start) + delta)
    if t_start < -slack or (t_final is not None and t_start + delta > t_final + slack):
        raise ValueError("averaging window lies outside the path domain")
    m = substeps + (substeps % 2)
    ts = np.linspace(t_start, t_start + delta, m + 1)
    vals = np.asarray(path(ts))
    return PauliCoefficients.from_vector(_simpson_weights(m) @ vals, n)


def lemma2_bound(c: float, delta: float) -> float:
    """``2 (exp(c delta) - 1 - c delta)``, evaluated without cancellation."""
    if c < 0 or delta < 0:
        raise ValueError("need c >= 0 and delta >= 0")
    x = c * delta
    return 2.0 * (math.expm1(x) - x)


def projected_norm_bound(n: int) -> float:
    """Constant ``(3 / sqrt 2) n`` bounding ``||H_P||`` when ``F(H_P) <= 1``."""
    if n < 1:
        raise ValueError("n must be positive")
    return 3.0 / math.sqrt(2.0) * n


# ---------------------------------------------------------------------------
# stage 3: Trotter compilation


def max_two_body_terms(n: int) -> int:
    """Number of Pauli strings of weight one or two on ``n`` qubits."""
    return 3 * n + 9 * n * (n - 1) // 2


def gate_constant_c1(n: int) -> float:
    """Constant ``c1`` with ``gate count <= c1 n^2 / delta``."""
    return 3.0 + 9.0 * (n - 1) / 2.0


def trotter_reps(delta: float) -> int:
    return max(1, math.ceil(1.0 / delta - 1e-12))


def _trotter_terms(h: PauliCoefficients, tol: float) -> list[tuple[PauliString, float]]:
    terms = []
    for s, v in h.items():
        if s.weight > 2:
            raise ValueError(f"term {s} acts on {s.weight} qubits; Trotter compilation needs a two-body Hamiltonian")
        if abs(v) > 1.0 + tol:
            raise ValueError(f"|h_{s}| = {abs(v):.6g} > 1 violates the coefficient bound |h_sigma| <= 1")
        terms.append((s, v))
    terms.sort(key=lambda kv: kv[0].sort_key())
    return terms


def trotter_compile(h: PauliCoefficients, delta: float, *, tol: float = 1e-9) -> Circuit:
    """First-order product formula for ``exp(-i H delta)``.

    ``N = ceil(1/delta)`` repetitions of one rotation per nonzero term, each by
    ``h_j * delta / N``, so the total evolution time is exactly ``delta``.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    terms = _trotter_terms(h, tol)
    reps = trotter_reps(delta)
    tau = delta / reps
    gates = tuple(Gate(s, v * tau) for s, v in terms)
    return Circuit(h.n, (CircuitBlock(gates, reps),) if gates else ())


def lemma3_bound(n: int, delta: float, c2: float) -> float:
    """``c2 n^4 delta^3``."""
    return c2 * n**4 * delta**3


# ---------------------------------------------------------------------------
# whole pipeline


@dataclass
class ErrorLedger:
    """Measured stage errors against their analytic bounds for one compilation."""

    n: int
    p: float
    d: float
    delta: float
    windows: int
    trotter_reps: int
    c: float
    c2: float
    epsilon1: float
    bound1: float
    epsilon2: float
    bound2: float
    epsilon3: float
    bound3: float
    total_error: float
    total_bound: float
    telescoped_error: float
    gate_count: int
    gate_budget: float
    reference_error: float
    constants_version: str = ""
    violations: list[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.violations)

    def to_json(self) -> dict:
        out = asdict(self)
        out["flagged"] = self.flagged
        return out


def _window_propagators(hfunc, n: int, t_final: float, windows: int, substeps: int) -> np.ndarray:
    """Propagator of each window, shape ``(windows, 2^n, 2^n)``."""
    dim = 1 << n
    out = np.empty((windows, dim, dim), dtype=complex)
    edges = np.linspace(0.0, t_final, windows + 1)
    chunk = max(1, 400_000 // (substeps * dim * dim))
    for start in range(0, windows, chunk):
        stop = min(windows, start + chunk)
        grid = np.concatenate(
            [np.linspace(edges[j], edges[j + 1], substeps + 1)[:-1] for j in range(start, stop)]
            + [edges[stop : stop + 1]]
        )
        steps = magnus4_steps(hfunc, n, grid).reshape(stop - start, substeps, dim, dim)
        out[start:stop] = ordered_product(steps)
    return out


def _window_means(hfunc, n: int, t_final: float, windows: int, substeps: int) -> np.ndarray:
    m = substeps + (substeps % 2)
    w = _simpson_weights(m)
    edges = np.linspace(0.0, t_final, windows + 1)
    out = np.empty((windows, 4**n - 1))
    chunk = 4096
    for start in range(0, windows, chunk):
        stop = min(windows, start + chunk)
        ts = np.stack([np.linspace(edges[j], edges[j + 1], m + 1) for j in range(start, stop)])
        vals = np.asarray(hfunc(ts.ravel())).reshape(stop - start, m + 1, -1)
        out[start:stop] = np.einsum("k,jkd->jd", w, vals)
    return out


def compile_geodesic(path: HamiltonianPath, g: PenaltyMetric, delta: float, *,
                     c2: float | None = None, substeps: int = DEFAULT_SUBSTEPS,
                     normalization_tol: float = 1e-6) -> tuple[Circuit, ErrorLedger]:
    """Compile a unit-speed path into a circuit and account for every error stage.

    The path is cut into ``N = ceil(d / delta)`` windows of length exactly
    ``d / N``.  Reference propagators are integrated with ``substeps`` Magnus
    steps per window.
    """
    if path.n != g.n:
        raise ValueError("path and metric have different qubit counts")
    if not delta > 0:
        raise ValueError("delta must be positive")
    speeds = g.cost_vec(path.coeffs)
    if np.max(np.abs(speeds - 1.0)) > normalization_tol:
        raise ValueError("path is not normalized (F(H(t)) must equal 1); use normalize_curve first")
    constants = load_constants()
    if c2 is None:
        c2 = constants.c2
    n = g.n
    dim = 1 << n
    t_final = path.t_final
    d = curve_length(g, path)
    windows = max(1, math.ceil(t_final / delta - 1e-9))
    dw = t_final / windows
    reps = trotter_reps(dw)
    substeps = substeps + (substeps % 2)

    mask = two_body_mask(n)
    has_penalized = bool(np.any(path.coeffs[:, ~mask]))

    def projected(t):
        return path(t) * mask

    # stage 1 and the window propagators of the projected flow
    win_p = _window_propagators(projected, n, t_final, windows, substeps)
    u_p = ordered_product(win_p)
    if has_penalized:
        u_exact = ordered_product(_window_propagators(path, n, t_final, windows, substeps))
    else:
        u_exact = u_p
    epsilon1 = operator_norm(u_exact - u_p)
    coarse = ordered_product(_window_propagators(path, n, t_final, windows, substeps // 2 or 1))
    reference_error = operator_norm(coarse - u_exact)

    # stage 2
    means = _window_means(projected, n, t_final, windows, substeps)
    u_m = expm_hermitian_dense(vector_to_matrix(means, n), dw)
    epsilon2 = float(operator_norms(win_p - u_m).sum())
    fine_t = np.linspace(0.0, t_final, windows * substeps + 1)
    max_f = float(np.max(g.cost_vec(projected(fine_t))))
    c = projected_norm_bound(n) * max(1.0, max_f)

    # stage 3
    strings = basis(n)
    blocks = []
    term_idx = [i for i in np.flatnonzero(np.any(means != 0.0, axis=0))]
    term_idx.sort(key=lambda i: strings[i].sort_key())
    tau = dw / reps
    for j in range(windows):
        h_j = PauliCoefficients.from_vector(means[j], n)
        _trotter_terms(h_j, 1e-9)
        gates = tuple(Gate(strings[i], means[j, i] * tau) for i in term_idx if means[j, i] != 0.0)
        blocks.append(CircuitBlock(gates, reps))
    circuit = Circuit(n, tuple(blocks))
    if term_idx:
        sig = np.stack([strings[i].to_matrix() for i in term_idx])
        ang = means[:, term_idx] * tau
        gm = (np.cos(ang)[..., None, None] * np.eye(dim)
              - 1j * np.sin(ang)[..., None, None] * sig[None])
        u_a = np.linalg.matrix_power(ordered_product(gm), reps)
    else:
        u_a = np.broadcast_to(np.eye(dim, dtype=complex), (windows, dim, dim))
    epsilon3 = float(operator_norms(u_m - u_a).sum())
    telescoped = float(operator_norms(win_p - u_a).sum())

    total_error = operator_norm(u_exact - circuit_to_matrix(circuit))
    bound1 = lemma1_bound(d, n, g.p)
    bound2 = windows * lemma2_bound(c, dw)
    bound3 = windows * lemma3_bound(n, dw, c2)
    gate_budget = gate_constant_c1(n) * n**2 * windows / dw
    ledger = ErrorLedger(
        n=n, p=g.p, d=d, delta=dw, windows=windows, trotter_reps=reps, c=c, c2=c2,
        epsilon1=epsilon1, bound1=bound1, epsilon2=epsilon2, bound2=bound2,
        epsilon3=epsilon3, bound3=bound3, total_error=total_error,
        total_bound=bound1 + bound2 + bound3, telescoped_error=telescoped,
        gate_count=circuit.gate_count, gate_budget=gate_budget,
        reference_error=reference_error, constants_version=constants.version,
    )
    checks = [
        ("epsilon1", epsilon1, bound1),
        ("epsilon2", epsilon2, bound2),
        ("epsilon3", epsilon3, bound3),
        ("total_error", total_error, epsilon1 + epsilon2 + epsilon3 + 1e-9),
        ("gate_count", circuit.gate_count, gate_budget),
    ]
    for name, value, limit in checks:
        if value > limit + 1e-12:
            ledger.violations.append(f"{name}={value:.6g} exceeds {limit:.6g}")
    return circuit, ledger


def step_schedule(n: int, d: float, target_error: float, k: float | None = None) -> float:
    """Window length ``min(target, 1) / (K n^2 max(d, 1))``."""
    if n < 1 or d < 0 or target_error <= 0:
        raise ValueError("need n >= 1, d >= 0 and target_error > 0")
    if k is None:
        k = load_constants().schedule_k
    return min(target_error, 1.0) / (k * n**2 * max(d, 1.0))


def predicted_bound(n: int, d: float, delta: float, c2: float, p: float | None = None) -> float:
    """Sum of the stage bounds for a path of length ``d``.

    The projection term is only included when ``p`` is given; it does not
    depend on ``delta``.
    """
    windows = max(1, math.ceil(d / delta - 1e-9)) if d > 0 else 0
    dw = d / windows if windows else delta
    total = windows * (lemma2_bound(projected_norm_bound(n), dw) + lemma3_bound(n, dw, c2))
    if p is not None:
        total += lemma1_bound(d, n, p)
    return total


def planned_gate_count(n: int, d: float, delta: float, terms_per_window: int | None = None) -> int:
    """Gate count of :func:`compile_geodesic` without building the circuit."""
    windows = max(1, math.ceil(d / delta - 1e-9))
    terms = max_two_body_terms(n) if terms_per_window is None else terms_per_window
    return windows * terms * trotter_reps(d / windows)

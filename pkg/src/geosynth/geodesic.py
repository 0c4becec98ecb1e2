"""Geodesic flow of the penalty metric on SU(2^n).

The velocity ``h`` obeys ``p_s^2 dh_s/dt = i sum_t p_t^2 h_t htilde_[s,t]`` with
``htilde_[s,t] = tr(H [s, t]) / 2^n`` and ``p_s^2`` the metric component of
``s``.  Substituting ``[s, t] = 2i sign rho`` turns this into the real system

    dh_s/dt = -(2 / p_s^2) * sum_t p_t^2 h_t h_rho sign(s, t)

which is integrated jointly with ``dU/dt = -i H U``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .metric import HamiltonianPath, PenaltyMetric
from .numerics import polar_unitary_projection
from .pauli import PauliCoefficients, pauli_traces, structure_table, vector_to_matrix

SPEED_DRIFT_LIMIT = 1e-3


class IntegrationError(RuntimeError):
    pass


@lru_cache(maxsize=32)
def _rhs_table(n: int, p: float):
    s_idx, t_idx, r_idx, sign = structure_table(n)
    g = PenaltyMetric(n, p).diagonal
    weights = -2.0 * sign * g[t_idx] / g[s_idx]
    return s_idx, t_idx, r_idx, weights


def geodesic_rhs_vec(g: PenaltyMetric, h: np.ndarray) -> np.ndarray:
    s_idx, t_idx, r_idx, weights = _rhs_table(g.n, g.p)
    return np.bincount(s_idx, weights=weights * h[t_idx] * h[r_idx], minlength=len(h))


def geodesic_rhs(g: PenaltyMetric, h: PauliCoefficients) -> PauliCoefficients:
    """Time derivative of the velocity along a geodesic through ``h``."""
    if h.n != g.n:
        raise ValueError("metric and coefficients have different qubit counts")
    return PauliCoefficients.from_vector(geodesic_rhs_vec(g, h.to_vector()), g.n)


def residual_vector(g: PenaltyMetric, h: np.ndarray, hdot: np.ndarray) -> np.ndarray:
    """``<hdot, K> - i <H, [H, K]>`` for every basis direction ``K`` at once.

    Uses ``tr([H, K] G) = tr(K [G, H])`` with ``G = sum g_t h_t t``, so the
    commutator is formed once with dense matrices.
    """
    hm = vector_to_matrix(h, g.n)
    gm = vector_to_matrix(g.diagonal * h, g.n)
    coeffs = pauli_traces(gm @ hm - hm @ gm, g.n)
    return g.diagonal * hdot - (1j * coeffs).real


def residual(g: PenaltyMetric, h: PauliCoefficients, hdot: PauliCoefficients,
             k: PauliCoefficients) -> float:
    """Residual of the coordinate-free geodesic equation in direction ``K``.

    ``[H, K]`` is expanded in the Pauli basis from dense matrices, so this is
    independent of the structure-constant table behind :func:`geodesic_rhs`.
    """
    n = g.n
    hv, kv = h.to_vector(), k.to_vector()
    hm, km = vector_to_matrix(hv, n), vector_to_matrix(kv, n)
    comm = pauli_traces(hm @ km - km @ hm, n)
    value = float(np.dot(g.diagonal * hdot.to_vector(), kv)) - 1j * np.dot(g.diagonal * hv, comm)
    return float(value.real)


@dataclass
class GeodesicPath:
    """States ``(t, h(t), U(t))`` of an integrated geodesic, ``U(0) = I``."""

    metric: PenaltyMetric
    times: np.ndarray
    h: np.ndarray
    unitaries: np.ndarray
    step: float

    @property
    def n(self) -> int:
        return self.metric.n

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def final_unitary(self) -> np.ndarray:
        return self.unitaries[-1]

    @property
    def h0(self) -> PauliCoefficients:
        return PauliCoefficients.from_vector(self.h[0], self.n)

    def speeds(self) -> np.ndarray:
        return self.metric.cost_vec(self.h)

    def speed_drift(self) -> float:
        f = self.speeds()
        return float(np.max(np.abs(f - f[0])) / f[0]) if f[0] > 0 else 0.0

    def hamiltonian_path(self) -> HamiltonianPath:
        return HamiltonianPath(self.n, self.times, self.h)

    def to_json(self, stride: int = 1) -> dict:
        idx = list(range(0, len(self.times), stride))
        if idx[-1] != len(self.times) - 1:
            idx.append(len(self.times) - 1)
        states = []
        for i in idx:
            u = self.unitaries[i]
            states.append({
                "t": float(self.times[i]),
                "terms": PauliCoefficients.from_vector(self.h[i], self.n).to_json()["terms"],
                "re": u.real.tolist(),
                "im": u.imag.tolist(),
            })
        return {
            "format": "geodesic-path-v1",
            "n": self.n,
            "p": self.metric.p,
            "step": self.step,
            "stride": stride,
            "states": states,
        }


def default_step(g: PenaltyMetric, h0: PauliCoefficients) -> float:
    speed = g.cost(h0)
    return 1e-3 * min(1.0, 1.0 / speed) if speed > 0 else 1e-3


def integrate_ivp(g: PenaltyMetric, h0: PauliCoefficients, t_final: float,
                  step: float | None = None, *, check_speed: bool = True) -> GeodesicPath:
    """RK4 on the coupled ``(h, U)`` system with polar re-unitarization per step.

    The number of steps is ``ceil(t_final / step)``; the step is shrunk so the
    grid ends exactly at ``t_final``.
    """
    if h0.n != g.n:
        raise ValueError("metric and initial velocity have different qubit counts")
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    if step is None:
        step = default_step(g, h0)
    if not step > 0:
        raise ValueError("step must be positive")
    n = g.n
    steps = max(1, math.ceil(t_final / step - 1e-9))
    dt = t_final / steps
    s_idx, t_idx, r_idx, weights = _rhs_table(n, g.p)
    dim = len(g.diagonal)

    def f(h):
        return np.bincount(s_idx, weights=weights * h[t_idx] * h[r_idx], minlength=dim)

    def hmat(h):
        return vector_to_matrix(h, n)

    hs = np.empty((steps + 1, dim))
    us = np.empty((steps + 1, 1 << n, 1 << n), dtype=complex)
    h = h0.to_vector()
    u = np.eye(1 << n, dtype=complex)
    hs[0], us[0] = h, u
    speed0 = g.cost(h0)
    for i in range(steps):
        k1 = f(h)
        m1 = -1j * hmat(h) @ u
        ha = h + 0.5 * dt * k1
        k2 = f(ha)
        m2 = -1j * hmat(ha) @ (u + 0.5 * dt * m1)
        hb = h + 0.5 * dt * k2
        k3 = f(hb)
        m3 = -1j * hmat(hb) @ (u + 0.5 * dt * m2)
        hc = h + dt * k3
        k4 = f(hc)
        m4 = -1j * hmat(hc) @ (u + dt * m3)
        h = h + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        u = polar_unitary_projection(u + dt / 6 * (m1 + 2 * m2 + 2 * m3 + m4))
        hs[i + 1], us[i + 1] = h, u
        if check_speed and speed0 > 0:
            drift = abs(math.sqrt(float(np.dot(g.diagonal * h, h))) - speed0) / speed0
            if drift > SPEED_DRIFT_LIMIT:
                raise IntegrationError(
                    f"speed drifted by {drift:.2e} at t={dt * (i + 1):.4g}; use a smaller step than {dt:.3g}"
                )
    times = np.linspace(0.0, t_final, steps + 1)
    return GeodesicPath(g, times, hs, us, dt)


def finite_difference_velocity(path: GeodesicPath) -> tuple[np.ndarray, np.ndarray]:
    """Fourth-order central differences of ``h(t)`` at interior states.

    Returns ``(indices, hdot)`` for the states that have two neighbours on
    each side.
    """
    h = path.h
    dt = path.step
    if len(h) < 5:
        raise ValueError("need at least 5 states for the 5-point stencil")
    hdot = (-h[4:] + 8 * h[3:-1] - 8 * h[1:-3] + h[:-4]) / (12 * dt)
    return np.arange(2, len(h) - 2), hdot

"""Penalty metric on su(2^n): cost, inner product, curve length and normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline

from .pauli import PauliCoefficients, PauliString, basis

UNPENALIZED = "unpenalized"
PENALIZED = "penalized"


def weight_class(sigma: PauliString) -> str:
    if sigma.is_identity():
        raise ValueError("the identity has no metric weight class")
    return UNPENALIZED if sigma.weight <= 2 else PENALIZED


@dataclass(frozen=True)
class PenaltyMetric:
    """Diagonal metric: weight 1 on one- and two-body strings, ``p**2`` otherwise."""

    n: int
    p: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.p is None:
            object.__setattr__(self, "p", float(4**self.n))
        if not self.p >= 1:
            raise ValueError(f"penalty must satisfy p >= 1, got {self.p}")
        object.__setattr__(self, "p", float(self.p))

    @cached_property
    def penalized_mask(self) -> np.ndarray:
        mask = np.array([s.weight > 2 for s in basis(self.n)])
        mask.setflags(write=False)
        return mask

    @cached_property
    def diagonal(self) -> np.ndarray:
        """Metric components ``g_ss`` in canonical basis order."""
        g = np.where(self.penalized_mask, self.p**2, 1.0)
        g.setflags(write=False)
        return g

    def component(self, sigma: PauliString) -> float:
        return 1.0 if weight_class(sigma) == UNPENALIZED else self.p**2

    def _check(self, h: PauliCoefficients) -> None:
        if h.n != self.n:
            raise ValueError(f"coefficients on n={h.n} used with a metric on n={self.n}")

    def inner_product(self, h: PauliCoefficients, k: PauliCoefficients) -> float:
        self._check(h)
        self._check(k)
        return float(sum(self.component(s) * v * k.get(s, 0.0) for s, v in h.items()))

    def cost(self, h: PauliCoefficients) -> float:
        self._check(h)
        return math.sqrt(sum(self.component(s) * v * v for s, v in h.items()))

    def cost_vec(self, vec: np.ndarray) -> np.ndarray:
        """Cost of dense coefficient vectors; works row-wise on stacks."""
        vec = np.asarray(vec)
        return np.sqrt(np.einsum("...i,i,...i->...", vec, self.diagonal, vec))

    def to_json(self) -> dict:
        return {"n": self.n, "p": self.p}


def inner_product(g: PenaltyMetric, h: PauliCoefficients, k: PauliCoefficients) -> float:
    return g.inner_product(h, k)


def cost(g: PenaltyMetric, h: PauliCoefficients) -> float:
    return g.cost(h)


class HamiltonianPath:
    """Time-sampled Hamiltonian ``H(t)`` with a cubic-spline interpolant.

    Coefficients are stored densely, one row per sample, in canonical basis
    order.  Calling the path evaluates the interpolant at one or many times.
    """

    def __init__(self, n: int, times, coeffs):
        times = np.asarray(times, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)
        if times.ndim != 1 or len(times) < 2:
            raise ValueError("a path needs at least 2 samples")
        if coeffs.shape != (len(times), 4**n - 1):
            raise ValueError(f"coefficient array must have shape {(len(times), 4**n - 1)}")
        if times[0] != 0.0:
            raise ValueError("path times must start at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("path times must be strictly increasing")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("path coefficients must be finite")
        self.n = n
        self.times = times
        self.coeffs = coeffs
        times.setflags(write=False)
        coeffs.setflags(write=False)

    @classmethod
    def from_samples(cls, samples: Iterable[tuple[float, PauliCoefficients]]) -> "HamiltonianPath":
        samples = list(samples)
        if len(samples) < 2:
            raise ValueError("a path needs at least 2 samples")
        n = samples[0][1].n
        if any(h.n != n for _, h in samples):
            raise ValueError("all samples must share n")
        return cls(n, [t for t, _ in samples], np.stack([h.to_vector() for _, h in samples]))

    @classmethod
    def constant(cls, h: PauliCoefficients, t_final: float, samples: int = 2) -> "HamiltonianPath":
        times = np.linspace(0.0, t_final, samples)
        return cls(h.n, times, np.tile(h.to_vector(), (samples, 1)))

    @classmethod
    def from_function(cls, func, n: int, t_final: float, samples: int) -> "HamiltonianPath":
        """Sample ``func(t) -> coefficient vector`` on a uniform grid."""
        times = np.linspace(0.0, t_final, samples)
        return cls(n, times, np.stack([np.asarray(func(t), dtype=float) for t in times]))

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def samples(self) -> list[tuple[float, PauliCoefficients]]:
        return [(float(t), PauliCoefficients.from_vector(c, self.n)) for t, c in zip(self.times, self.coeffs)]

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.times, self.coeffs, axis=0)

    def __call__(self, t):
        return self._spline(t)

    def at(self, t: float) -> PauliCoefficients:
        return PauliCoefficients.from_vector(self(float(t)), self.n)

    def map_coeffs(self, func) -> "HamiltonianPath":
        return HamiltonianPath(self.n, self.times, func(np.array(self.coeffs)))

    def to_json(self, metric: PenaltyMetric | None = None) -> dict:
        out = {"n": self.n}
        if metric is not None:
            out["p"] = metric.p
        out["samples"] = [
            {"t": float(t), "terms": PauliCoefficients.from_vector(c, self.n).to_json()["terms"]}
            for t, c in zip(self.times, self.coeffs)
        ]
        return out

    @classmethod
    def from_json(cls, data) -> "HamiltonianPath":
        n = int(data["n"])
        rows = data.get("samples", data.get("states"))
        if rows is None:
            raise ValueError("path file needs a 'samples' list")
        return cls.from_samples(
            (float(r["t"]), PauliCoefficients.from_json({"n": n, "terms": r["terms"]})) for r in rows
        )


def _simpson(y: np.ndarray, x: np.ndarray) -> float:
    if len(x) == 2:
        return float(0.5 * (y[0] + y[1]) * (x[1] - x[0]))
    return float(simpson(y, x=x))


def curve_length(g: PenaltyMetric, path: HamiltonianPath) -> float:
    """``integral F(H(t)) dt`` by composite Simpson on the sample grid."""
    if path.n != g.n:
        raise ValueError("path and metric have different qubit counts")
    return _simpson(g.cost_vec(path.coeffs), path.times)


def curve_length_error(g: PenaltyMetric, path: HamiltonianPath) -> float:
    """Richardson estimate of the quadrature error of :func:`curve_length`."""
    if len(path.times) < 5:
        return 0.0
    f = g.cost_vec(path.coeffs)
    fine = _simpson(f, path.times)
    coarse = _simpson(f[::2], path.times[::2])
    return abs(fine - coarse) / 15.0


def normalize_curve(g: PenaltyMetric, path: HamiltonianPath) -> HamiltonianPath:
    """Reparameterize by arc length so that ``F(H(s)) == 1`` at every sample.

    The sample at time ``t`` moves to ``s(t) = integral_0^t F`` and its
    Hamiltonian is divided by ``F``; since ``ds = F dt`` the generated
    unitary is unchanged.
    """
    f = g.cost_vec(path.coeffs)
    if np.any(f <= 1e-300):
        raise ValueError("cost vanishes on the path; a stationary curve cannot be normalized")
    if len(path.times) >= 3:
        s = cumulative_simpson(f, x=path.times, initial=0.0)
    else:
        s = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(path.times))])
    if np.any(np.diff(s) <= 0):
        raise ValueError("arc-length reparameterization is not monotone")
    return HamiltonianPath(path.n, s, path.coeffs / f[:, None])


def concatenate(a: HamiltonianPath, b: HamiltonianPath) -> HamiltonianPath:
    """Path ``a`` followed by ``b`` (the shared junction sample is taken from ``b``)."""
    if a.n != b.n:
        raise ValueError("paths have different qubit counts")
    times = np.concatenate([a.times[:-1], b.times + a.t_final])
    coeffs = np.concatenate([a.coeffs[:-1], b.coeffs])
    return HamiltonianPath(a.n, times, coeffs)

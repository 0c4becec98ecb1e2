"""Pauli strings, their products and commutators, and Pauli-basis coefficient vectors.

A Pauli string on ``n`` qubits is stored as a pair of ``n``-bit masks
``(x, z)``.  Site ``k`` (0-based, leftmost tensor factor) lives at bit
``n - 1 - k`` so that the bit pattern of a computational basis index lines
up with the masks.  Per site, ``(x, z)`` = ``(0, 0)`` is I, ``(1, 0)`` is X,
``(0, 1)`` is Z and ``(1, 1)`` is Y, and ``Y = i X Z``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

import numpy as np

logger = logging.getLogger(__name__)

#: Largest qubit count for which dense 2^n x 2^n matrices are built.
DENSE_QUBIT_CAP = 6

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}
# Digit used by the canonical basis ordering: I=0, X=1, Y=2, Z=3.
_LETTER_DIGIT = {"I": 0, "X": 1, "Y": 2, "Z": 3}
_DIGIT_LETTER = "IXYZ"
_PHASES = (1, 1j, -1, -1j)

_SPARSE_RE = re.compile(r"([XYZ])(\d+)")


class DenseCapError(MemoryError):
    """Raised when a dense matrix would exceed the configured qubit cap."""


def _popcount(v: int) -> int:
    return bin(v).count("1")


def check_dense_cap(n: int, cap: int | None = None) -> None:
    cap = DENSE_QUBIT_CAP if cap is None else cap
    if n > cap:
        raise DenseCapError(f"dense matrices for n={n} exceed the cap n <= {cap}")


@dataclass(frozen=True, order=True)
class PauliString:
    """Tensor product of single-qubit Pauli factors, encoded as bit masks."""

    n: int
    x: int
    z: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a Pauli string needs at least one qubit")
        full = (1 << self.n) - 1
        if self.x & ~full or self.z & ~full:
            raise ValueError("mask bits outside the qubit range")

    @classmethod
    def from_letters(cls, letters: str) -> "PauliString":
        """Build from a dense letter word such as ``"XIZ"`` (site 0 first)."""
        letters = letters.upper()
        n = len(letters)
        x = z = 0
        for k, ch in enumerate(letters):
            try:
                bx, bz = _LETTER_BITS[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {ch!r}") from None
            bit = n - 1 - k
            x |= bx << bit
            z |= bz << bit
        return cls(n, x, z)

    @classmethod
    def parse(cls, text: str, n: int) -> "PauliString":
        """Parse the sparse text form, e.g. ``"X0"``, ``"Z0Z1"`` or ``"I"``."""
        text = text.strip()
        if text == "I":
            return cls.identity(n)
        pos = 0
        letters = ["I"] * n
        last = -1
        for m in _SPARSE_RE.finditer(text):
            if m.start() != pos:
                break
            site = int(m.group(2))
            if site >= n:
                raise ValueError(f"site {site} out of range for n={n} in {text!r}")
            if site <= last:
                raise ValueError(f"sites must be strictly ascending in {text!r}")
            letters[site] = m.group(1)
            last = site
            pos = m.end()
        if pos != len(text) or not text:
            raise ValueError(f"malformed Pauli string {text!r}")
        return cls.from_letters("".join(letters))

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0)

    @classmethod
    def from_index(cls, index: int, n: int) -> "PauliString":
        """Inverse of :attr:`index` (base-4 digits, site 0 most significant)."""
        if not 0 <= index < 4**n:
            raise ValueError("index out of range")
        letters = []
        for k in range(n):
            letters.append(_DIGIT_LETTER[(index >> (2 * (n - 1 - k))) & 3])
        return cls.from_letters("".join(letters))

    @property
    def letters(self) -> str:
        out = []
        for k in range(self.n):
            bit = self.n - 1 - k
            out.append(_BITS_LETTER[((self.x >> bit) & 1, (self.z >> bit) & 1)])
        return "".join(out)

    @property
    def index(self) -> int:
        idx = 0
        for ch in self.letters:
            idx = 4 * idx + _LETTER_DIGIT[ch]
        return idx

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(k for k, ch in enumerate(self.letters) if ch != "I")

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def sort_key(self) -> tuple:
        """Lexicographic order by site indices, then by letters on those sites."""
        sites = self.support
        letters = self.letters
        return (sites, tuple(_LETTER_DIGIT[letters[k]] for k in sites))

    def __str__(self) -> str:
        if self.is_identity():
            return "I"
        letters = self.letters
        return "".join(f"{letters[k]}{k}" for k in self.support)

    def __repr__(self) -> str:
        return f"PauliString({self.letters!r})"

    def to_matrix(self) -> np.ndarray:
        check_dense_cap(self.n)
        return _dense_pauli(self.n, self.x, self.z).copy()


@lru_cache(maxsize=8192)
def _dense_pauli(n: int, x: int, z: int) -> np.ndarray:
    dim = 1 << n
    cols = np.arange(dim)
    rows = cols ^ x
    parity = np.array([_popcount(z & c) & 1 for c in range(dim)])
    vals = (1j) ** _popcount(x & z) * (1 - 2 * parity)
    m = np.zeros((dim, dim), dtype=complex)
    m[rows, cols] = vals
    m.setflags(write=False)
    return m


def _check_lengths(sigma: PauliString, tau: PauliString) -> None:
    if sigma.n != tau.n:
        raise ValueError(f"Pauli strings of different lengths ({sigma.n} vs {tau.n})")


def _phase_exponent(sigma: PauliString, tau: PauliString) -> int:
    """Power of i in sigma * tau = i^k * rho."""
    # Write P = i^{|x&z|} X^x Z^z; moving Z^z1 past X^x2 costs (-1)^{|z1&x2|}.
    k = (
        _popcount(sigma.x & sigma.z)
        + _popcount(tau.x & tau.z)
        + 2 * _popcount(sigma.z & tau.x)
        - _popcount((sigma.x ^ tau.x) & (sigma.z ^ tau.z))
    )
    return k % 4


def multiply(sigma: PauliString, tau: PauliString) -> tuple[complex, PauliString]:
    """Return ``(phase, rho)`` with ``sigma @ tau == phase * rho``."""
    _check_lengths(sigma, tau)
    rho = PauliString(sigma.n, sigma.x ^ tau.x, sigma.z ^ tau.z)
    return _PHASES[_phase_exponent(sigma, tau)], rho


def anticommutes(sigma: PauliString, tau: PauliString) -> bool:
    _check_lengths(sigma, tau)
    return bool((_popcount(sigma.x & tau.z) + _popcount(sigma.z & tau.x)) & 1)


@dataclass(frozen=True)
class StructureConstant:
    """``[sigma, tau] = 2i * sign * result``; ``sign == 0`` marks commuting strings."""

    sign: int
    result: PauliString | None

    @property
    def commuting(self) -> bool:
        return self.sign == 0


COMMUTING = StructureConstant(0, None)


def commutator(sigma: PauliString, tau: PauliString) -> StructureConstant:
    _check_lengths(sigma, tau)
    if not anticommutes(sigma, tau):
        return COMMUTING
    phase, rho = multiply(sigma, tau)
    # anticommuting => sigma tau = +-i rho and [sigma, tau] = 2 sigma tau
    return StructureConstant(1 if phase == 1j else -1, rho)


@lru_cache(maxsize=None)
def basis(n: int) -> tuple[PauliString, ...]:
    """All ``4^n - 1`` non-identity strings in canonical (index) order."""
    return tuple(PauliString.from_index(i, n) for i in range(1, 4**n))


def basis_position(sigma: PauliString) -> int:
    """Position of a non-identity string inside :func:`basis`."""
    if sigma.is_identity():
        raise ValueError("the identity is not part of the traceless basis")
    return sigma.index - 1


class PauliCoefficients(Mapping):
    """Real Pauli-expansion coefficients of a traceless Hermitian operator.

    Behaves as a read-only mapping from :class:`PauliString` to float.
    Absent keys mean a zero coefficient; the identity is never a key.
    """

    __slots__ = ("_n", "_terms")

    def __init__(self, n: int, terms: Mapping[PauliString, float] | Iterable = ()):
        if n < 1:
            raise ValueError("n must be positive")
        items = terms.items() if isinstance(terms, Mapping) else terms
        clean: dict[PauliString, float] = {}
        for key, val in items:
            if isinstance(key, str):
                key = PauliString.parse(key, n)
            if key.n != n:
                raise ValueError(f"term {key} has n={key.n}, expected {n}")
            if key.is_identity():
                raise ValueError("the identity cannot carry a coefficient")
            val = float(val)
            if not math.isfinite(val):
                raise ValueError(f"non-finite coefficient for {key}")
            if val != 0.0:
                clean[key] = clean.get(key, 0.0) + val
        self._n = n
        self._terms = MappingProxyType(dict(sorted(clean.items(), key=lambda kv: kv[0].index)))

    @property
    def n(self) -> int:
        return self._n

    @property
    def dim(self) -> int:
        return 4**self._n - 1

    def __getitem__(self, key) -> float:
        if isinstance(key, str):
            key = PauliString.parse(key, self._n)
        return self._terms[key]

    def get(self, key, default=0.0):
        try:
            return self[key]
        except KeyError:
            return default

    def __iter__(self) -> Iterator[PauliString]:
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        body = ", ".join(f"{k}: {v:.6g}" for k, v in self._terms.items())
        return f"PauliCoefficients(n={self._n}, {{{body}}})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliCoefficients):
            return NotImplemented
        return self._n == other._n and dict(self._terms) == dict(other._terms)

    __hash__ = None

    # -- dense vector view ------------------------------------------------
    def to_vector(self) -> np.ndarray:
        vec = np.zeros(self.dim)
        for key, val in self._terms.items():
            vec[key.index - 1] = val
        return vec

    @classmethod
    def from_vector(cls, vec, n: int) -> "PauliCoefficients":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (4**n - 1,):
            raise ValueError(f"expected a vector of length {4**n - 1}, got {vec.shape}")
        strings = basis(n)
        return cls(n, ((strings[i], vec[i]) for i in np.flatnonzero(vec)))

    # -- arithmetic -------------------------------------------------------
    def _combine(self, other: "PauliCoefficients", sign: float) -> "PauliCoefficients":
        if other.n != self._n:
            raise ValueError("coefficient sets of different qubit counts")
        out = dict(self._terms)
        for key, val in other.items():
            out[key] = out.get(key, 0.0) + sign * val
        return PauliCoefficients(self._n, out)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        return PauliCoefficients(self._n, {k: scalar * v for k, v in self._terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __neg__(self):
        return self * -1.0

    def filter(self, predicate) -> "PauliCoefficients":
        return PauliCoefficients(self._n, {k: v for k, v in self._terms.items() if predicate(k)})

    # -- serialization ----------------------------------------------------
    def to_json(self) -> dict:
        return {
            "n": self._n,
            "terms": [{"pauli": str(k), "coeff": v} for k, v in self._terms.items()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "PauliCoefficients":
        n = int(data["n"])
        return cls(n, ((PauliString.parse(t["pauli"], n), t["coeff"]) for t in data["terms"]))


def to_matrix(h: PauliCoefficients) -> np.ndarray:
    """Dense Hermitian matrix ``sum_sigma h_sigma sigma``."""
    check_dense_cap(h.n)
    dim = 1 << h.n
    m = np.zeros((dim, dim), dtype=complex)
    for key, val in h.items():
        m += val * _dense_pauli(h.n, key.x, key.z)
    return m


def vector_to_matrix(vec: np.ndarray, n: int) -> np.ndarray:
    """Dense matrix from coefficient vectors; accepts a stack ``(..., 4^n - 1)``."""
    check_dense_cap(n)
    return np.tensordot(np.asarray(vec), dense_basis(n), axes=(-1, 0))


@lru_cache(maxsize=None)
def dense_basis(n: int) -> np.ndarray:
    """Stack of dense matrices of :func:`basis`, shape ``(4^n - 1, 2^n, 2^n)``."""
    check_dense_cap(n)
    out = np.stack([_dense_pauli(n, s.x, s.z) for s in basis(n)])
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _trace_tables(n: int):
    """Index/phase tables so that tr(M sigma) is a gather-and-sum."""
    dim = 1 << n
    strings = basis(n)
    b = np.arange(dim)
    rows = np.empty((len(strings), dim), dtype=np.intp)
    phases = np.empty((len(strings), dim), dtype=complex)
    for i, s in enumerate(strings):
        rows[i] = b ^ s.x
        parity = np.array([_popcount(s.z & c) & 1 for c in range(dim)])
        phases[i] = (1j) ** _popcount(s.x & s.z) * (1 - 2 * parity)
    return rows, phases


def pauli_traces(m: np.ndarray, n: int) -> np.ndarray:
    """``tr(M sigma) / 2^n`` for every basis string; complex, supports stacks."""
    check_dense_cap(n)
    rows, phases = _trace_tables(n)
    cols = np.arange(1 << n)
    # tr(M sigma) = sum_b M[b, b^x] * sigma[b^x, b]
    gathered = m[..., cols[None, :], rows]
    return (gathered * phases).sum(axis=-1) / (1 << n)


def from_matrix(m: np.ndarray, n: int, *, atol: float = 1e-10) -> PauliCoefficients:
    """Pauli expansion of a Hermitian matrix; the identity component is dropped."""
    m = np.asarray(m, dtype=complex)
    dim = 1 << n
    if m.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(m - m.conj().T)) > atol:
        raise ValueError("matrix is not Hermitian within tolerance")
    trace_part = np.trace(m).real / dim
    if trace_part != 0.0:
        logger.debug("dropping identity component %.3e", trace_part)
    coeffs = pauli_traces(m, n)
    return PauliCoefficients.from_vector(coeffs.real, n)


def tilde_coefficient(h: PauliCoefficients, sigma: PauliString, tau: PauliString) -> complex:
    """``tr(H [sigma, tau]) / 2^n``, evaluated symbolically."""
    _check_lengths(sigma, tau)
    if sigma.n != h.n:
        raise ValueError("Pauli string and coefficients have different qubit counts")
    if sigma.is_identity() or tau.is_identity():
        raise ValueError("sigma and tau must be non-identity strings")
    sc = commutator(sigma, tau)
    if sc.commuting:
        return 0j
    return 2j * sc.sign * h.get(sc.result, 0.0)


@lru_cache(maxsize=None)
def structure_table(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """All anticommuting basis pairs as arrays ``(sigma_pos, tau_pos, rho_pos, sign)``."""
    strings = basis(n)
    s_idx, t_idx, r_idx, signs = [], [], [], []
    for i, s in enumerate(strings):
        for j, t in enumerate(strings):
            sc = commutator(s, t)
            if not sc.commuting:
                s_idx.append(i)
                t_idx.append(j)
                r_idx.append(sc.result.index - 1)
                signs.append(sc.sign)
    arrays = tuple(np.array(a, dtype=np.intp if k < 3 else float) for k, a in
                   enumerate((s_idx, t_idx, r_idx, signs)))
    for a in arrays:
        a.setflags(write=False)
    return arrays

"""Dense matrix kernels for Hermitian generators and unitaries."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .pauli import PauliCoefficients, check_dense_cap, from_matrix, to_matrix, vector_to_matrix

logger = logging.getLogger(__name__)

UNITARY_ATOL = 1e-9
LOG_CHOP = 1e-13


class NumericalError(RuntimeError):
    pass


def operator_norm(m) -> float:
    """Largest singular value."""
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def operator_norms(stack: np.ndarray) -> np.ndarray:
    """Operator norms of a stack of matrices."""
    return np.linalg.svd(np.asarray(stack), compute_uv=False)[..., 0]


def coeff_norm2(h: PauliCoefficients) -> float:
    return math.sqrt(sum(v * v for v in h.values()))


def unitarity_defect(u: np.ndarray) -> float:
    u = np.asarray(u)
    return operator_norm(u.conj().T @ u - np.eye(u.shape[0]))


def check_unitary(u, atol: float = UNITARY_ATOL) -> np.ndarray:
    """Validate and return ``u`` as a complex square unitary array."""
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("matrix has non-finite entries")
    defect = unitarity_defect(u)
    if defect > atol:
        raise ValueError(f"matrix is not unitary (||U^dag U - I|| = {defect:.3e})")
    return u


def qubit_count(u: np.ndarray) -> int:
    dim = u.shape[0]
    n = dim.bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def special_unitary(u: np.ndarray) -> np.ndarray:
    """Rescale by a global phase so the determinant is exactly 1 (principal root)."""
    u = np.asarray(u, dtype=complex)
    det = np.linalg.det(u)
    return u * np.exp(-1j * np.angle(det) / u.shape[0])


def expm_hermitian(h: PauliCoefficients, t: float) -> np.ndarray:
    """``exp(-i H t)`` via the eigendecomposition of the dense Hermitian form."""
    check_dense_cap(h.n)
    return expm_hermitian_dense(to_matrix(h), t)


def expm_hermitian_dense(hm: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(-i H t)`` for a dense Hermitian matrix or a stack of them."""
    if not np.all(np.isfinite(hm)) or not math.isfinite(t):
        raise NumericalError("non-finite Hamiltonian or time in matrix exponential")
    try:
        w, v = np.linalg.eigh(hm)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed for a {np.shape(hm)} Hermitian input "
            f"(max |H| = {np.max(np.abs(hm)):.3e})"
        ) from exc
    phases = np.exp(-1j * t * w)
    return (v * phases[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


@dataclass(frozen=True)
class UnitaryLog:
    """Principal-branch generator of a unitary.

    ``expm_hermitian(generator, 1) == exp(1j * global_phase) * U``.
    """

    generator: PauliCoefficients
    global_phase: float
    branch_ambiguous: bool


def _eigenphases(u: np.ndarray):
    # complex Schur form of a normal matrix is diagonal, with unitary Schur vectors
    t, q = scipy.linalg.schur(u, output="complex")
    vals = np.diag(t)
    return np.angle(vals), q


def unitary_log(u, *, special: bool = False, branch_tol: float = 1e-8) -> UnitaryLog:
    """Traceless Hermitian ``H`` with ``exp(-i H) = U`` up to global phase.

    Eigenphases are taken in ``(-pi, pi]``.  With ``special=True`` the branch
    is shifted by multiples of 2*pi on the extreme eigenphases so that the
    phases sum to zero, which makes ``exp(-i H) == U`` exactly for determinant-one
    ``U``.
    """
    u = check_unitary(u)
    n = qubit_count(u)
    dim = u.shape[0]
    phi, q = _eigenphases(u)
    phi = np.where(phi <= -math.pi, math.pi, phi)
    ambiguous = bool(np.any(np.abs(np.abs(phi) - math.pi) < branch_tol))
    if special:
        m = int(round(phi.sum() / (2 * math.pi)))
        if abs(phi.sum() - 2 * math.pi * m) < 1e-6 * dim and m != 0:
            order = np.argsort(phi, kind="stable")
            if m > 0:
                phi[order[-m:]] -= 2 * math.pi
            else:
                phi[order[: -m]] += 2 * math.pi
    # U = Q diag(e^{i phi}) Q^dag = exp(-i H) with H = -Q diag(phi) Q^dag
    hm = -(q * phi) @ q.conj().T
    hm = 0.5 * (hm + hm.conj().T)
    shift = float(np.trace(hm).real / dim)
    if abs(shift) > 1e-12:
        logger.debug("log of unitary: dropping identity component %.3e", shift)
    vec = from_matrix(hm, n, atol=1e-8).to_vector()
    # eigenvector rounding leaves ~1e-16 debris on absent strings
    vec[np.abs(vec) < LOG_CHOP * max(1.0, np.abs(vec).max(initial=0.0))] = 0.0
    gen = PauliCoefficients.from_vector(vec, n)
    if ambiguous:
        logger.warning("eigenvalue at -1: logarithm branch is ambiguous")
    return UnitaryLog(gen, shift, ambiguous)


def logm_unitary(u) -> PauliCoefficients:
    """Principal traceless logarithm; see :func:`unitary_log` for branch details."""
    return unitary_log(u).generator


def polar_unitary_projection(m) -> np.ndarray:
    """Unitary polar factor of ``m`` (the Frobenius-nearest unitary)."""
    m = np.asarray(m, dtype=complex)
    w, s, vh = np.linalg.svd(m)
    if s[..., -1].min() <= 1e-14 * max(s[..., 0].max(), 1.0):
        raise ValueError("matrix is singular; polar factor is not unique")
    return w @ vh


def strict_distance(u: np.ndarray, v: np.ndarray) -> float:
    return operator_norm(np.asarray(u) - np.asarray(v))


def phase_distance(u: np.ndarray, v: np.ndarray) -> float:
    """``min_phi ||U - exp(i phi) V||`` computed exactly.

    With ``W = U^dag V`` having eigenphases ``theta_k`` the distance is
    ``max_k |1 - exp(i(phi + theta_k))|``; the optimum centres the shortest
    arc covering all eigenphases.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    theta, _ = _eigenphases(u.conj().T @ v)
    theta = np.sort(np.mod(theta, 2 * math.pi))
    gaps = np.diff(np.concatenate([theta, theta[:1] + 2 * math.pi]))
    half_arc = (2 * math.pi - gaps.max()) / 2
    return float(2 * math.sin(half_arc / 2))


def ordered_product(stack: np.ndarray) -> np.ndarray:
    """Time-ordered product ``stack[-1] @ ... @ stack[0]`` along axis ``-3``.

    Leading axes before ``-3`` are batch axes.  Uses pairwise reduction.
    """
    stack = np.asarray(stack)
    if stack.shape[-3] == 0:
        dim = stack.shape[-1]
        return np.broadcast_to(np.eye(dim, dtype=complex), stack.shape[:-3] + (dim, dim)).copy()
    while stack.shape[-3] > 1:
        if stack.shape[-3] % 2:
            head, last = stack[..., :-1, :, :], stack[..., -1:, :, :]
            paired = head[..., 1::2, :, :] @ head[..., 0::2, :, :]
            stack = np.concatenate([paired, last], axis=-3)
        else:
            stack = stack[..., 1::2, :, :] @ stack[..., 0::2, :, :]
    return stack[..., 0, :, :]


_GAUSS_OFFSETS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)


def magnus4_steps(hfunc, n: int, grid: np.ndarray) -> np.ndarray:
    """One fourth-order Magnus propagator per interval of ``grid``.

    ``hfunc`` maps an array of times to coefficient vectors of shape
    ``(len(t), 4^n - 1)``.  Returns exactly unitary step propagators
    (up to rounding) with shape ``(len(grid) - 1, 2^n, 2^n)``.
    """
    grid = np.asarray(grid, dtype=float)
    dt = np.diff(grid)
    t1 = grid[:-1] + _GAUSS_OFFSETS[0] * dt
    t2 = grid[:-1] + _GAUSS_OFFSETS[1] * dt
    h1 = vector_to_matrix(hfunc(t1), n)
    h2 = vector_to_matrix(hfunc(t2), n)
    comm = h2 @ h1 - h1 @ h2
    dtc = dt[:, None, None]
    # exp(Omega) with Omega = -i dt/2 (H1 + H2) - sqrt(3)/12 dt^2 [H2, H1] = -i K
    k = 0.5 * dtc * (h1 + h2) - 1j * (math.sqrt(3) / 12) * dtc**2 * comm
    k = 0.5 * (k + np.swapaxes(k.conj(), -1, -2))
    return expm_hermitian_dense(k)


def evolve(hfunc, n: int, t0: float, t1: float, steps: int, *, chunk: int = 20000) -> np.ndarray:
    """Propagator of ``dU/dt = -i H(t) U`` from ``t0`` to ``t1``."""
    if steps < 1:
        raise ValueError("steps must be positive")
    grid = np.linspace(t0, t1, steps + 1)
    u = np.eye(1 << n, dtype=complex)
    for start in range(0, steps, chunk):
        sub = grid[start : start + chunk + 1]
        u = ordered_product(magnus4_steps(hfunc, n, sub)) @ u
    return u

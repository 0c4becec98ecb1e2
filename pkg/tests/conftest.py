import numpy as np
import pytest
from scipy.linalg import expm

SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_letters(letters: str) -> np.ndarray:
    """Dense oracle for a letter word, site 0 as the leftmost factor."""
    out = np.eye(1, dtype=complex)
    for ch in letters:
        out = np.kron(out, SINGLE[ch])
    return out


def dense_from_terms(n: int, terms: dict) -> np.ndarray:
    """Oracle for ``sum h_sigma sigma`` with terms keyed by letter words."""
    m = np.zeros((2**n, 2**n), dtype=complex)
    for letters, val in terms.items():
        m += val * kron_letters(letters)
    return m


def exact_rotation(letters: str, theta: float) -> np.ndarray:
    return expm(-1j * theta * kron_letters(letters))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

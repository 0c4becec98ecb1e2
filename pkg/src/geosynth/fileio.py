"""JSON file formats and atomic writes."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .metric import HamiltonianPath
from .numerics import check_unitary, qubit_count
from .pauli import PauliCoefficients


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_with(path, writer) -> None:
    """Write through ``writer(fh)`` into a temp file, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, data) -> None:
    atomic_write_text(path, json.dumps(data, indent=2) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def unitary_to_json(u: np.ndarray, special: bool = False) -> dict:
    u = np.asarray(u)
    return {"n": qubit_count(u), "re": u.real.tolist(), "im": u.imag.tolist(), "special": special}


def unitary_from_json(data, atol: float = 1e-9) -> np.ndarray:
    n = int(data["n"])
    u = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
    if u.shape != (1 << n, 1 << n):
        raise ValueError(f"unitary entries must be {1 << n}x{1 << n} for n={n}")
    return check_unitary(u, atol)


def coefficients_from_json(data) -> PauliCoefficients:
    return PauliCoefficients.from_json(data)


def path_from_json(data) -> HamiltonianPath:
    return HamiltonianPath.from_json(data)

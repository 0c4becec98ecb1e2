"""Brute-force calibration of the Trotter error constant ``c2``.

Run ``python -m geosynth.calibration --out src/geosynth/data/constants.json``
to regenerate the shipped constants file.
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from .numerics import expm_hermitian_dense, operator_norm
from .pauli import PauliCoefficients, basis, to_matrix
from .synthesis import circuit_to_matrix, trotter_compile

CALIBRATION_DELTAS = (1 / 1000, 1 / 300, 1 / 100, 1 / 30, 1 / 10, 1 / 4)
CALIBRATION_QUBITS = (1, 2, 3)
CALIBRATION_SAMPLES = 200
SAFETY_FACTOR = 1.5
CONSTANTS_VERSION = "c2-v1"


def random_two_body(n: int, rng: np.random.Generator) -> PauliCoefficients:
    """Two-body Hamiltonian with every allowed coefficient uniform in [-1, 1]."""
    strings = [s for s in basis(n) if s.weight <= 2]
    return PauliCoefficients(n, zip(strings, rng.uniform(-1.0, 1.0, len(strings))))


def trotter_error(h: PauliCoefficients, delta: float) -> float:
    exact = expm_hermitian_dense(to_matrix(h), delta)
    return operator_norm(exact - circuit_to_matrix(trotter_compile(h, delta)))


def sweep(seed: int, qubits=CALIBRATION_QUBITS, deltas=CALIBRATION_DELTAS,
          samples: int = CALIBRATION_SAMPLES) -> list[dict]:
    """Normalized Trotter errors ``error / (n^4 delta^3)`` for random Hamiltonians."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in qubits:
        for delta in deltas:
            for _ in range(samples):
                h = random_two_body(n, rng)
                err = trotter_error(h, delta)
                rows.append({"n": n, "delta": delta, "error": err, "ratio": err / (n**4 * delta**3)})
    return rows


def calibrate_c2(seed: int = 20061, samples: int = CALIBRATION_SAMPLES) -> dict:
    rows = sweep(seed, samples=samples)
    worst = max(r["ratio"] for r in rows)
    return {
        "version": CONSTANTS_VERSION,
        "c2": SAFETY_FACTOR * worst,
        "schedule_k": 10.0,
        "calibration": {
            "seed": seed,
            "qubits": list(CALIBRATION_QUBITS),
            "deltas": list(CALIBRATION_DELTAS),
            "samples_per_cell": samples,
            "max_ratio": worst,
            "safety_factor": SAFETY_FACTOR,
            "distribution": "uniform[-1,1] on every weight<=2 string",
        },
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Calibrate the Trotter error constant c2.")
    parser.add_argument("--seed", type=int, default=20061)
    parser.add_argument("--samples", type=int, default=CALIBRATION_SAMPLES)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)
    result = calibrate_c2(args.seed, args.samples)
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

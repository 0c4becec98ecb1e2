"""Geodesic-based quantum circuit synthesis on SU(2^n)."""

from .geodesic import GeodesicPath, IntegrationError, integrate_ivp
from .metric import HamiltonianPath, PenaltyMetric, curve_length, normalize_curve
from .pauli import PauliCoefficients, PauliString, basis, commutator, multiply
from .shooting import ShootingConfig, ShootingResult, solve
from .synthesis import Circuit, ErrorLedger, Gate, compile_geodesic, step_schedule

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "ErrorLedger",
    "Gate",
    "GeodesicPath",
    "HamiltonianPath",
    "IntegrationError",
    "PauliCoefficients",
    "PauliString",
    "PenaltyMetric",
    "ShootingConfig",
    "ShootingResult",
    "basis",
    "commutator",
    "compile_geodesic",
    "curve_length",
    "integrate_ivp",
    "multiply",
    "normalize_curve",
    "solve",
    "step_schedule",
]

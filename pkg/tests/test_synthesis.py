import io
import math

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import exact_rotation
from geosynth.constants import load_constants
from geosynth.geodesic import integrate_ivp
from geosynth.metric import HamiltonianPath, PenaltyMetric
from geosynth.numerics import expm_hermitian, operator_norm
from geosynth.pauli import PauliCoefficients, PauliString, basis, to_matrix
from geosynth.synthesis import (
    Circuit,
    CircuitBlock,
    Gate,
    circuit_to_matrix,
    compile_geodesic,
    gate_constant_c1,
    lemma1_bound,
    lemma2_bound,
    lemma3_bound,
    max_two_body_terms,
    mean_hamiltonian,
    planned_gate_count,
    predicted_bound,
    project,
    projected_norm_bound,
    projected_unitary,
    read_circuit_text,
    step_schedule,
    trotter_compile,
)

C2 = load_constants().c2


def P(text, n):
    return PauliString.parse(text, n)


def unit_velocity(g, rng):
    v = rng.standard_normal(len(g.diagonal)) / np.sqrt(g.diagonal)
    return PauliCoefficients.from_vector(v / g.cost_vec(v), g.n)


class TestCircuit:
    def test_gate_validation(self):
        with pytest.raises(ValueError):
            Gate(P("X0Y1Z2", 3), 0.1)
        with pytest.raises(ValueError):
            Gate(P("X0", 1), float("inf"))

    def test_empty_is_identity(self):
        np.testing.assert_array_equal(circuit_to_matrix(Circuit(2, ())), np.eye(4))

    def test_single_gate(self):
        c = Circuit(2, (CircuitBlock((Gate(P("X0Z1", 2), 0.4),), 1),))
        np.testing.assert_allclose(circuit_to_matrix(c), expm_hermitian(PauliCoefficients(2, {"X0Z1": 1}), 0.4),
                                   atol=1e-15)

    def test_inverse_cancels(self):
        g = (Gate(P("Y1", 2), 0.7), Gate(P("Y1", 2), -0.7))
        np.testing.assert_allclose(circuit_to_matrix(Circuit(2, (CircuitBlock(g, 1),))), np.eye(4), atol=1e-12)

    def test_time_order(self):
        # the first gate acts first, so it stands rightmost in the product
        a, b = Gate(P("X0", 1), 0.3), Gate(P("Z0", 1), 0.5)
        m = circuit_to_matrix(Circuit(1, (CircuitBlock((a, b), 1),)))
        np.testing.assert_allclose(m, exact_rotation("Z", 0.5) @ exact_rotation("X", 0.3), atol=1e-14)

    def test_repeat_and_count(self):
        a = Gate(P("X0", 1), 0.1)
        c = Circuit(1, (CircuitBlock((a,), 7), CircuitBlock((a, a), 2)))
        assert c.gate_count == 11 == len(list(c.gates))
        np.testing.assert_allclose(circuit_to_matrix(c), exact_rotation("X", 1.1), atol=1e-13)

    def test_text_round_trip(self):
        c = Circuit(2, (CircuitBlock((Gate(P("X0Y1", 2), 0.1234567890123), Gate(P("Z1", 2), -1e-17)), 3),))
        buf = io.StringIO()
        c.write_text(buf)
        text = buf.getvalue()
        assert text.startswith("# format=geodesic-circuit-v1\n# n=2\n")
        assert "EXP 0.1234567890123" in text.splitlines()[2]
        back = read_circuit_text(io.StringIO(text))
        assert back.gate_count == 6
        assert [str(gt) for gt in back.gates] == [str(gt) for gt in c.gates]
        np.testing.assert_allclose(circuit_to_matrix(back), circuit_to_matrix(c), atol=1e-15)

    def test_text_rejects_garbage(self):
        with pytest.raises(ValueError):
            read_circuit_text(io.StringIO("# n=1\nROT X0 0.1\n"))
        with pytest.raises(ValueError):
            read_circuit_text(io.StringIO("EXP 0.1 X0\n"))

    def test_json_round_trip(self):
        c = Circuit(1, (CircuitBlock((Gate(P("X0", 1), 0.1),), 4),))
        assert Circuit.from_json(c.to_json()) == c

    def test_pruned(self):
        c = Circuit(1, (CircuitBlock((Gate(P("X0", 1), 0.0), Gate(P("Z0", 1), 0.2)), 2),))
        assert c.pruned().gate_count == 2


class TestProjection:
    def test_examples(self):
        h = PauliCoefficients(3, {"X0": 1.0, "X0Y1Z2": 5.0})
        assert project(h) == PauliCoefficients(3, {"X0": 1.0})
        two = PauliCoefficients(3, {"X0Y1": 1.0, "Z2": 2.0})
        assert project(two) == two

    def test_orthogonal_split(self, rng):
        h = PauliCoefficients.from_vector(rng.standard_normal(63), 3)
        hp = project(h)
        total = np.sum(h.to_vector() ** 2)
        assert np.sum((h - hp).to_vector() ** 2) + np.sum(hp.to_vector() ** 2) == pytest.approx(total, abs=1e-12)

    def test_lemma1_bound(self):
        assert lemma1_bound(2, 2, 16) == 0.5
        assert lemma1_bound(3.0, 3, 4**3) == pytest.approx(3.0 / 8)
        assert lemma1_bound(0, 3, 64) == 0

    def test_unpenalized_path(self, rng):
        path = HamiltonianPath.constant(PauliCoefficients.from_vector(rng.standard_normal(15), 2), 0.5)
        _, eps1 = projected_unitary(path, 1e-2)
        assert eps1 <= 1e-8

    def test_two_flow_oracle(self):
        eps = 0.05
        h = PauliCoefficients(3, {"X0": 1.0, "X0Y1Z2": eps})
        u_p, eps1 = projected_unitary(HamiltonianPath.constant(h, 1.0), 1e-2)
        exact = expm(-1j * to_matrix(h))
        np.testing.assert_allclose(u_p, exact_rotation("XII", 1.0), atol=1e-12)
        assert eps1 == pytest.approx(np.linalg.norm(exact - exact_rotation("XII", 1.0), 2), abs=1e-12)


class TestMeanHamiltonian:
    def test_constant(self, rng):
        h = PauliCoefficients.from_vector(rng.standard_normal(15), 2)
        np.testing.assert_allclose(mean_hamiltonian(HamiltonianPath.constant(h, 1.0), 0.2, 0.5).to_vector(),
                                   h.to_vector(), atol=1e-14)

    def test_linear(self):
        path = HamiltonianPath.from_function(lambda t: [t, 0, 0], 1, 1.0, 11)
        assert mean_hamiltonian(path, 0.0, 1.0)["X0"] == pytest.approx(0.5, abs=1e-14)

    def test_window_outside_domain(self):
        path = HamiltonianPath.constant(PauliCoefficients(1, {"X0": 1}), 1.0)
        with pytest.raises(ValueError):
            mean_hamiltonian(path, 0.8, 0.5)

    def test_normalized_mean_coefficients_bounded(self, rng):
        g = PenaltyMetric(2)
        path = integrate_ivp(g, unit_velocity(g, rng), 1.0, 1e-2).hamiltonian_path()
        assert np.max(np.abs(mean_hamiltonian(path, 0.0, 0.25).to_vector())) <= 1.0

    def test_lemma2_bound(self):
        assert lemma2_bound(1.0, 0.0) == 0.0
        assert lemma2_bound(1.0, 1.0) == pytest.approx(2 * (math.e - 2))
        assert lemma2_bound(3.0, 1e-6) / (9e-12) == pytest.approx(1.0, rel=1e-5)

    def test_projected_norm_bound(self, rng):
        assert projected_norm_bound(1) == pytest.approx(2.1213203435596424)
        assert projected_norm_bound(2) == pytest.approx(4.242640687119285)
        for n in (1, 2, 3):
            mask = [s.weight <= 2 for s in basis(n)]
            for _ in range(20):
                v = rng.standard_normal(4**n - 1) * mask
                h = PauliCoefficients.from_vector(v / np.linalg.norm(v), n)
                assert np.linalg.norm(to_matrix(h), 2) <= projected_norm_bound(n)


class TestTrotter:
    def test_single_term_exact(self):
        h = PauliCoefficients(2, {"Z0Z1": 0.3})
        for delta in (0.07, 0.5, 1.0):
            c = trotter_compile(h, delta)
            np.testing.assert_allclose(circuit_to_matrix(c), expm_hermitian(h, delta), atol=1e-14)

    def test_commuting_exact(self):
        h = PauliCoefficients(2, {"Z0": 0.4, "Z1": -0.9})
        np.testing.assert_allclose(circuit_to_matrix(trotter_compile(h, 0.3)), expm_hermitian(h, 0.3), atol=1e-12)

    def test_dense_product_oracle(self):
        h = PauliCoefficients(1, {"X0": 1.0, "Z0": 1.0})
        delta = 0.1
        c = trotter_compile(h, delta)
        step = exact_rotation("Z", delta / 10) @ exact_rotation("X", delta / 10)
        oracle = np.linalg.matrix_power(step, 10)
        np.testing.assert_allclose(circuit_to_matrix(c), oracle, atol=1e-14)
        err = np.linalg.norm(expm(-1j * delta * to_matrix(h)) - oracle, 2)
        assert 0 < err <= lemma3_bound(1, delta, C2)

    def test_structure(self):
        h = PauliCoefficients(2, {"X0": 0.5, "Y0Z1": -0.25, "Z1": 1.0})
        c = trotter_compile(h, 0.3)
        assert c.blocks[0].repeat == 4
        assert [str(gt.pauli) for gt in c.blocks[0].gates] == ["X0", "Y0Z1", "Z1"]
        assert c.gate_count == 12
        assert c.gate_count <= gate_constant_c1(2) * 4 / 0.3

    def test_rejects(self):
        with pytest.raises(ValueError):
            trotter_compile(PauliCoefficients(3, {"X0X1X2": 0.1}), 0.1)
        with pytest.raises(ValueError):
            trotter_compile(PauliCoefficients(1, {"X0": 1.5}), 0.1)
        with pytest.raises(ValueError):
            trotter_compile(PauliCoefficients(1, {"X0": 0.5}), 1.5)

    def test_lemma3_bound(self):
        assert lemma3_bound(2, 0.0, C2) == 0.0
        assert lemma3_bound(2, 0.2, C2) == pytest.approx(8 * lemma3_bound(2, 0.1, C2))

    def test_bound_holds_on_sweep(self, rng):
        strings = [s for s in basis(2) if s.weight <= 2]
        for _ in range(10):
            h = PauliCoefficients(2, zip(strings, rng.uniform(-1, 1, len(strings))))
            for delta in (0.25, 0.1, 0.01):
                err = np.linalg.norm(expm_hermitian(h, delta) - circuit_to_matrix(trotter_compile(h, delta)), 2)
                assert err <= lemma3_bound(2, delta, C2)

    def test_term_counts(self):
        assert [max_two_body_terms(n) for n in (1, 2, 3)] == [3, 15, 36]
        for n in (1, 2, 3):
            assert max_two_body_terms(n) <= gate_constant_c1(n) * n**2


class TestCompile:
    def test_single_rotation(self):
        path = HamiltonianPath.constant(PauliCoefficients(1, {"X0": 1.0}), math.pi / 4)
        circuit, ledger = compile_geodesic(path, PenaltyMetric(1), math.pi / 64)
        assert ledger.total_error <= 1e-10
        assert not ledger.flagged
        assert {str(gt.pauli) for gt in circuit.gates} == {"X0"}
        np.testing.assert_allclose(circuit_to_matrix(circuit), exact_rotation("X", math.pi / 4), atol=1e-10)

    def test_stagewise_isolation(self):
        h = PauliCoefficients(2, {"X0": 0.6, "Z0Z1": 0.8})
        g = PenaltyMetric(2)
        circuit, ledger = compile_geodesic(HamiltonianPath.constant(h, 1.0), g, 0.25)
        assert ledger.epsilon1 == 0.0
        assert ledger.epsilon2 < 1e-12
        window = circuit_to_matrix(trotter_compile(h, 0.25))
        assert ledger.epsilon3 == pytest.approx(4 * np.linalg.norm(expm_hermitian(h, 0.25) - window, 2), rel=1e-8)
        assert ledger.epsilon3 > 1e-6

    def test_unnormalized_rejected(self):
        path = HamiltonianPath.constant(PauliCoefficients(1, {"X0": 2.0}), 1.0)
        with pytest.raises(ValueError):
            compile_geodesic(path, PenaltyMetric(1), 0.1)

    def test_random_geodesic_n2(self, rng):
        g = PenaltyMetric(2)
        geo = integrate_ivp(g, unit_velocity(g, rng), 1.0, 1e-3)
        delta = 1 / (4 * 1.0 * 10)
        circuit, ledger = compile_geodesic(geo.hamiltonian_path(), g, delta)
        assert ledger.total_error <= 0.1
        assert not ledger.flagged
        assert ledger.gate_count == planned_gate_count(2, 1.0, delta, 15)
        assert operator_norm(circuit_to_matrix(circuit) - geo.final_unitary) <= 0.1

    def test_penalized_geodesic_n3(self, rng):
        g = PenaltyMetric(3, 8.0)
        geo = integrate_ivp(g, unit_velocity(g, rng), 0.5, 5e-4)
        circuit, ledger = compile_geodesic(geo.hamiltonian_path(), g, 0.05)
        assert not ledger.flagged, ledger.violations
        assert ledger.epsilon1 > 1e-4
        assert ledger.epsilon1 <= ledger.bound1
        assert ledger.total_error <= ledger.epsilon1 + ledger.epsilon2 + ledger.epsilon3 + 1e-9
        assert operator_norm(circuit_to_matrix(circuit) - geo.final_unitary) == pytest.approx(ledger.total_error,
                                                                                           abs=1e-7)

    def test_coarse_delta_bounds_still_hold(self, rng):
        g = PenaltyMetric(2)
        geo = integrate_ivp(g, unit_velocity(g, rng), 1.0, 1e-3)
        _, ledger = compile_geodesic(geo.hamiltonian_path(), g, 1.0)
        assert ledger.windows == 1 and not ledger.flagged
        assert ledger.epsilon3 > 1e-3

    def test_ledger_json(self):
        path = HamiltonianPath.constant(PauliCoefficients(1, {"Z0": 1.0}), 0.5)
        _, ledger = compile_geodesic(path, PenaltyMetric(1), 0.1)
        data = ledger.to_json()
        assert data["flagged"] is False and data["constants_version"] == load_constants().version


class TestSchedule:
    def test_substitution(self):
        assert step_schedule(2, 1.0, 0.1) == pytest.approx(1 / 400)

    def test_linear_in_target(self):
        assert step_schedule(3, 1.5, 0.05) == pytest.approx(step_schedule(3, 1.5, 0.1) / 2)

    def test_bounds_fit_target(self):
        for n in (1, 2, 3):
            for d in (0.5, 1.0, 2.0, 4.0):
                delta = step_schedule(n, d, 0.1)
                assert predicted_bound(n, d, delta, C2) <= 0.1

    def test_gate_growth(self):
        counts = [planned_gate_count(2, d, step_schedule(2, d, 0.1)) for d in (1.0, 2.0, 4.0)]
        slopes = np.diff(np.log(counts)) / np.log(2.0)
        assert np.all(slopes <= 3.3)

    def test_rejects(self):
        with pytest.raises(ValueError):
            step_schedule(2, 1.0, 0.0)

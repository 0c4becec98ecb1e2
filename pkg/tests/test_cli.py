import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import dense_from_terms, exact_rotation
from geosynth import cli
from geosynth.constants import ENV_VAR, load_constants
from geosynth.fileio import read_json, unitary_from_json, unitary_to_json, write_json
from geosynth.geodesic import integrate_ivp
from geosynth.metric import HamiltonianPath, PenaltyMetric
from geosynth.pauli import PauliCoefficients
from geosynth.synthesis import circuit_to_matrix, read_circuit_text


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_target(path, u):
    write_json(path, unitary_to_json(u))
    return path


class TestFileIO:
    def test_unitary_round_trip(self, tmp_path):
        u = exact_rotation("XZ", 0.3)
        write_target(tmp_path / "u.json", u)
        np.testing.assert_array_equal(unitary_from_json(read_json(tmp_path / "u.json")), u)

    def test_unitary_validation(self):
        with pytest.raises(ValueError):
            unitary_from_json({"n": 1, "re": [[1, 0], [0, 1], [0, 0]], "im": [[0, 0], [0, 0], [0, 0]]})
        with pytest.raises(ValueError):
            unitary_from_json({"n": 1, "re": [[2, 0], [0, 1]], "im": [[0, 0], [0, 0]]})

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        write_json(tmp_path / "a.json", {"x": 1})
        assert [p.name for p in tmp_path.iterdir()] == ["a.json"]


class TestConstants:
    def test_packaged(self):
        c = load_constants()
        assert c.c2 > 0 and c.version == "c2-v1"

    def test_env_override(self, tmp_path, monkeypatch):
        write_json(tmp_path / "c.json", {"version": "test", "c2": 9.0})
        monkeypatch.setenv(ENV_VAR, str(tmp_path / "c.json"))
        c = load_constants()
        assert (c.version, c.c2, c.schedule_k) == ("test", 9.0, 10.0)


class TestShoot:
    def test_constant_path(self, tmp_path, capsys):
        write_json(tmp_path / "h.json", {"n": 1, "terms": [{"pauli": "X0", "coeff": 1.0}], "t_f": 1.0})
        code, out, err = run(capsys, "shoot", tmp_path / "h.json", "--out", tmp_path / "g.json")
        assert (code, out, err) == (0, "", "")
        data = read_json(tmp_path / "g.json")
        assert data["states"][-1]["t"] == pytest.approx(1.0)
        assert all(s["terms"] == [{"pauli": "X0", "coeff": 1.0}] for s in data["states"])

    def test_zero_time_rejected(self, tmp_path, capsys):
        write_json(tmp_path / "h.json", {"n": 1, "terms": [{"pauli": "X0", "coeff": 1.0}], "t_f": 0.0})
        code, _, err = run(capsys, "shoot", tmp_path / "h.json")
        assert code == 2 and "t_f" in err

    @pytest.mark.parametrize("payload", ['{"n": 1}', "not json", '{"n": 1, "terms": [{"pauli": "Q0", "coeff": 1}], "t_f": 1}'])
    def test_malformed(self, tmp_path, capsys, payload):
        (tmp_path / "h.json").write_text(payload)
        assert run(capsys, "shoot", tmp_path / "h.json")[0] == 2

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "shoot", tmp_path / "nope.json")[0] == 2

    def test_integration_failure(self, tmp_path, capsys):
        terms = [{"pauli": "X0", "coeff": 30.0}, {"pauli": "Y0Z1Z2", "coeff": 1.0}, {"pauli": "Z1", "coeff": 20.0}]
        write_json(tmp_path / "h.json", {"n": 3, "terms": terms, "t_f": 1.0})
        code, _, _ = run(capsys, "shoot", tmp_path / "h.json", "--step", "0.05")
        assert code == 3

    def test_random_h0_constant_speed(self, tmp_path, capsys, rng):
        g = PenaltyMetric(3, 4.0)
        v = rng.standard_normal(63) / np.sqrt(g.diagonal)
        h0 = PauliCoefficients.from_vector(v / g.cost_vec(v), 3)
        write_json(tmp_path / "h.json", {**h0.to_json(), "t_f": 0.5})
        code, _, _ = run(capsys, "shoot", tmp_path / "h.json", "--p", 4, "--out", tmp_path / "g.json")
        assert code == 0
        path = HamiltonianPath.from_json(read_json(tmp_path / "g.json"))
        np.testing.assert_allclose(g.cost_vec(path.coeffs), 1.0, atol=1e-9)


class TestConnect:
    def test_rotation(self, tmp_path, capsys):
        write_target(tmp_path / "t.json", exact_rotation("X", math.pi / 4))
        code, _, err = run(capsys, "connect", tmp_path / "t.json", "--out", tmp_path / "r.json")
        data = read_json(tmp_path / "r.json")
        assert (code, err) == (0, "")
        assert data["converged"] and data["length"] == pytest.approx(math.pi / 4, abs=1e-3)

    def test_identity(self, tmp_path, capsys):
        write_target(tmp_path / "t.json", np.eye(2))
        code, out, _ = run(capsys, "connect", tmp_path / "t.json")
        assert code == 0 and json.loads(out)["length"] == 0.0

    def test_budget_exhaustion(self, tmp_path, capsys):
        write_target(tmp_path / "t.json", expm(-1j * dense_from_terms(3, {"XII": 0.5, "ZZZ": 0.02})))
        code, _, _ = run(capsys, "connect", tmp_path / "t.json", "--max-iterations", 2, "--restarts", 1,
                         "--out", tmp_path / "r.json")
        assert code == 4
        assert read_json(tmp_path / "r.json")["converged"] is False

    def test_non_unitary(self, tmp_path, capsys):
        write_json(tmp_path / "t.json", {"n": 1, "re": [[1, 0], [0, 1.1]], "im": [[0, 0], [0, 0]]})
        assert run(capsys, "connect", tmp_path / "t.json")[0] == 2

    def test_bad_flag(self, tmp_path, capsys):
        write_target(tmp_path / "t.json", np.eye(2))
        assert run(capsys, "connect", tmp_path / "t.json", "--p", "-3")[0] == 2


class TestDistance:
    def test_identity(self, tmp_path, capsys):
        write_target(tmp_path / "t.json", np.eye(4))
        code, out, _ = run(capsys, "distance", tmp_path / "t.json", "--format", "json")
        data = json.loads(out)
        assert code == 0 and data["constant_path_bound"] == 0 and data["shooting_estimate"] == 0

    def test_constant_geodesic(self, tmp_path, capsys):
        write_target(tmp_path / "t.json", exact_rotation("ZZ", 0.6))
        _, out, _ = run(capsys, "distance", tmp_path / "t.json", "--format", "json")
        data = json.loads(out)
        assert data["constant_path_bound"] == pytest.approx(0.6)
        assert data["shooting_estimate"] == pytest.approx(0.6)

    def test_generic_target(self, tmp_path, capsys, rng):
        h = dense_from_terms(2, {"XY": 0.3, "ZI": -0.5, "IY": 0.2})
        write_target(tmp_path / "t.json", expm(-1j * h))
        code, out, _ = run(capsys, "distance", tmp_path / "t.json", "--format", "json")
        data = json.loads(out)
        assert code == 0
        assert data["shooting_estimate"] <= data["constant_path_bound"] + 1e-6

    def test_text_report(self, tmp_path, capsys):
        write_target(tmp_path / "t.json", exact_rotation("X", 0.2))
        _, out, _ = run(capsys, "distance", tmp_path / "t.json")
        assert "shooting_estimate" in out and "gap" in out


class TestCompile:
    def test_constant_single_string(self, tmp_path, capsys):
        path = HamiltonianPath.constant(PauliCoefficients(1, {"X0": 1.0}), math.pi / 4)
        write_json(tmp_path / "p.json", path.to_json())
        prefix = tmp_path / "out"
        code, out, err = run(capsys, "compile", tmp_path / "p.json", "--out", prefix)
        assert (code, err) == (0, "")
        ledger = read_json(f"{prefix}.ledger.json")
        assert ledger["total_error"] <= 1e-10
        with open(f"{prefix}.circuit") as fh:
            circuit = read_circuit_text(fh)
        np.testing.assert_allclose(circuit_to_matrix(circuit), exact_rotation("X", math.pi / 4), atol=1e-10)
        assert "projection" in out and "trotter" in out

    def test_geodesic_target(self, tmp_path, capsys, rng):
        g = PenaltyMetric(2)
        v = rng.standard_normal(15)
        geo = integrate_ivp(g, PauliCoefficients.from_vector(v / np.linalg.norm(v), 2), 1.0, 1e-2)
        write_json(tmp_path / "g.json", geo.to_json(stride=10))
        code, _, _ = run(capsys, "compile", tmp_path / "g.json", "--target-error", 0.1, "--out", tmp_path / "c")
        ledger = read_json(tmp_path / "c.ledger.json")
        assert code == 0 and ledger["total_error"] <= 0.1 and ledger["flagged"] is False

    def test_unnormalized_input_is_normalized(self, tmp_path, capsys):
        path = HamiltonianPath.constant(PauliCoefficients(1, {"Z0": 2.0}), 0.5, samples=5)
        write_json(tmp_path / "p.json", path.to_json())
        code, _, _ = run(capsys, "compile", tmp_path / "p.json", "--out", tmp_path / "c", "--format", "json")
        assert code == 0
        assert read_json(tmp_path / "c.ledger.json")["d"] == pytest.approx(1.0)

    def test_absurd_delta(self, tmp_path, capsys, rng):
        g = PenaltyMetric(2)
        v = rng.standard_normal(15)
        geo = integrate_ivp(g, PauliCoefficients.from_vector(v / np.linalg.norm(v), 2), 1.0, 1e-2)
        write_json(tmp_path / "g.json", geo.to_json(stride=10))
        args = ("compile", tmp_path / "g.json", "--delta", 1.0, "--out", tmp_path / "c")
        code_tight = run(capsys, *args, "--target-error", 1e-6)[0]
        ledger = read_json(tmp_path / "c.ledger.json")
        assert ledger["flagged"] is False and ledger["epsilon3"] > 1e-3
        assert code_tight == 5
        assert run(capsys, *args, "--target-error", 10.0)[0] == 0


class TestVerify:
    def test_passes_and_is_deterministic(self, tmp_path, capsys):
        code_a, a, err = run(capsys, "verify", "--seed", 5, "--samples", 4)
        code_b, b, _ = run(capsys, "verify", "--seed", 5, "--samples", 4)
        assert code_a == code_b == 0 and err == ""
        assert a == b and "overall: PASS" in a

    def test_json_to_file(self, tmp_path, capsys):
        code, out, _ = run(capsys, "verify", "--samples", 2, "--format", "json", "--out", tmp_path / "r.json")
        data = read_json(tmp_path / "r.json")
        assert code == 0 and out == "" and data["passed"] and data["seed"] == 0

    def test_zero_samples(self, capsys):
        assert run(capsys, "verify", "--samples", 0)[0] == 2

    def test_no_command(self, capsys):
        assert run(capsys)[0] == 2

"""Unit tests for named gates, Bell measurements and the swap test."""

import numpy as np
import pytest

from qproof_sim.gates import (
    BELL_VECTORS,
    H,
    T_MATRIX,
    X,
    Z,
    BellOutcome,
    WGateParam,
    WSign,
    bell_measurement,
    bell_state,
    chi_vector,
    cj_state,
    cj_vector,
    controlled_swap_matrix,
    gate_names,
    named_gate,
    phase_flip,
    swap_test,
    swap_test_vector,
    t_transform,
    t_transform_circuit,
    w_gate,
    w_matrix,
)
from qproof_sim.quantum_core import (
    DimensionMismatchError,
    InvalidOperatorError,
    InvalidParameterError,
    RegisterLayout,
    StateVector,
    tensor,
)


class TestWGate:
    """Tests for the W_a rotation family."""

    def test_endpoints(self) -> None:
        """Test that W_0 is Z and W_1 is X."""
        np.testing.assert_allclose(w_matrix(0.0), Z)
        np.testing.assert_allclose(w_matrix(1.0), X)

    @pytest.mark.parametrize("a", [0.0, 0.3, 0.5, 0.9, 1.0])
    @pytest.mark.parametrize("sign", [WSign.PLUS, WSign.MINUS])
    def test_self_inverse(self, a: float, sign: WSign) -> None:
        """Test that W^±_a is unitary and squares to the identity."""
        w = w_gate(WGateParam(a, sign)).matrix
        np.testing.assert_allclose(w @ w, np.eye(2), atol=1e-12)

    def test_minus_sign(self) -> None:
        """Test that W⁻_a = Z W_a Z flips the off-diagonal signs."""
        np.testing.assert_allclose(w_matrix(0.25, "-"), Z @ w_matrix(0.25) @ Z)
        assert w_matrix(0.25, "-")[0, 1] == pytest.approx(-0.5)

    def test_out_of_range(self) -> None:
        """Test the [0, 1] range check."""
        with pytest.raises(InvalidParameterError, match="outside"):
            w_matrix(1.5)

    def test_chi_is_first_column(self) -> None:
        """Test χ_a = W_a|0⟩."""
        np.testing.assert_allclose(chi_vector(0.36), [0.8, 0.6])


class TestBellAndCJ:
    """Tests for Bell states, CJ states and the T transform."""

    def test_t_maps_bell_basis(self) -> None:
        """Test T on each Bell vector."""
        targets = {
            BellOutcome.PHI_MINUS: 0,
            BellOutcome.PSI_MINUS: 1,
            BellOutcome.PSI_PLUS: 2,
            BellOutcome.PHI_PLUS: 3,
        }
        for outcome, index in targets.items():
            image = T_MATRIX @ BELL_VECTORS[outcome]
            assert abs(image[index]) == pytest.approx(1.0)

    def test_t_circuit_matches_up_to_phase(self) -> None:
        """Test that the CNOT/H/X/CNOT circuit realizes T column by column up to phases."""
        circuit = t_transform_circuit()
        overlaps = np.abs(np.sum(circuit.conj() * T_MATRIX, axis=0))
        np.testing.assert_allclose(overlaps, np.ones(4), atol=1e-12)

    def test_t_transform_operator(self) -> None:
        """Test that the operator form carries T and its targets."""
        t = t_transform(("S", "Sp"))
        assert t.targets == ("S", "Sp")
        image = t.matrix @ BELL_VECTORS[BellOutcome.PHI_PLUS]
        np.testing.assert_allclose(image, [0, 0, 0, 1], atol=1e-12)

    def test_cj_of_w_lies_in_phi_minus_psi_plus(self) -> None:
        """Test that J(W_q) is √(1−q)Φ− + √q Ψ+."""
        state = cj_state(w_matrix(0.3)).amplitudes
        expected = np.sqrt(0.7) * BELL_VECTORS[BellOutcome.PHI_MINUS] + np.sqrt(
            0.3
        ) * BELL_VECTORS[BellOutcome.PSI_PLUS]
        np.testing.assert_allclose(state, expected, atol=1e-12)

    def test_bell_measurement_of_bell_state(self) -> None:
        """Test that measuring a Bell state returns it with certainty."""
        pair = bell_state("Psi+", RegisterLayout.of(A=1, B=1))
        state = tensor(pair, StateVector.zero(RegisterLayout.of(C=1)))
        assert state.layout == RegisterLayout.of(A=1, B=1, C=1)
        branches = bell_measurement(state, ["A", "B"])
        probabilities = {b.outcome: b.probability for b in branches}
        assert probabilities[BellOutcome.PSI_PLUS] == pytest.approx(1.0)
        assert probabilities[BellOutcome.PHI_PLUS] == pytest.approx(0.0)

    def test_bell_measurement_needs_single_qubits(self) -> None:
        """Test width validation of Bell measurements."""
        state = StateVector.zero(RegisterLayout.of(A=2, B=1))
        with pytest.raises(InvalidOperatorError, match="single qubit"):
            bell_measurement(state, ["A", "B"])

    def test_phase_flip(self) -> None:
        """Test −Π₀ + Π₁."""
        np.testing.assert_allclose(phase_flip(np.diag([1.0, 0.0])), Z)


class TestNamedGates:
    """Tests for gate lookup."""

    def test_lookup_is_case_insensitive(self) -> None:
        """Test names in any case."""
        np.testing.assert_allclose(named_gate("h"), H)

    def test_w_needs_parameter(self) -> None:
        """Test that W requires ``a``."""
        with pytest.raises(InvalidParameterError, match="needs a parameter"):
            named_gate("W")

    def test_unknown_gate(self) -> None:
        """Test that unknown names list the known ones."""
        with pytest.raises(InvalidParameterError, match="Unknown gate"):
            named_gate("FOO")
        assert "W" in gate_names()


class TestSwapTest:
    """Tests for the swap test."""

    def test_identical_states_pass(self) -> None:
        """Test that equal blocks always pass."""
        layout = RegisterLayout.of(anc=1, A=1, B=1)
        plus = np.array([1, 1]) / np.sqrt(2)
        state = StateVector(np.kron(np.kron([1, 0], plus), plus), layout)
        assert swap_test(state, ["A"], ["B"], "anc").pass_probability == pytest.approx(1.0)

    def test_orthogonal_states(self) -> None:
        """Test that orthogonal blocks pass with probability 1/2."""
        state = StateVector.basis(RegisterLayout.of(anc=1, A=1, B=1), "001")
        result = swap_test(state, ["A"], ["B"], "anc")
        assert result.pass_probability == pytest.approx(0.5)
        assert result.failed is not None

    def test_ancilla_must_be_zero(self) -> None:
        """Test the ancilla precondition."""
        state = StateVector.basis(RegisterLayout.of(anc=1, A=1, B=1), "100")
        with pytest.raises(InvalidParameterError, match="not in"):
            swap_test(state, ["A"], ["B"], "anc")

    def test_controlled_swap_is_permutation(self) -> None:
        """Test the controlled swap matrix for two-qubit blocks."""
        matrix = controlled_swap_matrix(2)
        assert matrix.shape == (32, 32)
        np.testing.assert_allclose(matrix @ matrix, np.eye(32))

    def test_swap_test_blocks_must_match(self) -> None:
        """Test that both blocks need the same width."""
        layout = RegisterLayout.of(anc=1, A=1, B=2)
        vector = StateVector.zero(layout).amplitudes
        with pytest.raises(DimensionMismatchError, match="differ in width"):
            swap_test_vector(vector, layout, ["A"], ["B"], "anc")

    def test_swap_test_ancilla_width(self) -> None:
        """Test that the control must be a single qubit."""
        layout = RegisterLayout.of(anc=2, A=1, B=1)
        vector = StateVector.zero(layout).amplitudes
        with pytest.raises(InvalidOperatorError, match="must be one qubit"):
            swap_test_vector(vector, layout, ["A"], ["B"], "anc")

    def test_controlled_swap_needs_a_qubit(self) -> None:
        """Test that empty blocks are refused."""
        with pytest.raises(InvalidParameterError):
            controlled_swap_matrix(0)


class TestArgumentChecks:
    """Tests for argument validation of the Bell and CJ helpers."""

    def test_bell_measurement_needs_two_registers(self) -> None:
        """Test that the two registers must differ."""
        state = StateVector.zero(RegisterLayout.of(A=1, B=1))
        with pytest.raises(InvalidParameterError, match="two distinct"):
            bell_measurement(state, ["A", "A"])
        with pytest.raises(InvalidParameterError, match="two distinct"):
            bell_measurement(state, ["A"])

    def test_cj_needs_one_qubit_unitary(self) -> None:
        """Test the size check of CJ vectors."""
        with pytest.raises(DimensionMismatchError):
            cj_vector(np.eye(4))

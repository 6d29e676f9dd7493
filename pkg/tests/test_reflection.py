"""Unit tests for the reflection procedures and the simulation test."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qproof_sim.gates import WSign, cj_state, w_matrix
from qproof_sim.outcome import MonteCarlo, Verdict
from qproof_sim.qma import chi_state
from qproof_sim.quantum_core import (
    DensityOperator,
    DimensionMismatchError,
    InvalidParameterError,
    RegisterLayout,
    StateVector,
    random_state,
    tensor,
)
from qproof_sim.reflection import (
    ReflectionSpec,
    check_reflection_soundness,
    eigen_inputs,
    gap_applicable,
    modified_reflection_procedure,
    mrp_max_accept,
    product_spec,
    random_search_max_accept,
    reflection_procedure,
    reflection_simulation_test,
    two_level_spec,
)

HONEST_Q_GRID = [float(q) for q in np.linspace(0.5, 1.0, 9)]
CHEAT_Q_GRID = [float(q) for q in np.linspace(0.0, 1.0, 9)]


def _rst_input(p: float, q: float, sign: WSign = WSign.PLUS) -> StateVector:
    pair = w_matrix(q, sign)
    return tensor(
        chi_state(p, "R1"),
        chi_state(p, "R2"),
        cj_state(pair, RegisterLayout.of(S1=1, S1p=1)),
        cj_state(pair, RegisterLayout.of(S2=1, S2p=1)),
    )


class TestReflectionSpec:
    """Tests for reflection triples."""

    def test_product_top_eigenvalue(self) -> None:
        """Test that W_p⊗W_q has top eigenvalue pq on |00⟩."""
        pairs = eigen_inputs(product_spec(0.6, 0.5))
        assert len(pairs) == 1
        assert pairs[0][0] == pytest.approx(0.3)

    def test_two_level_eigenvalues(self) -> None:
        """Test the two-level spec's spectrum."""
        values = [value for value, _ in eigen_inputs(two_level_spec(0.2, 0.9))]
        assert values == pytest.approx([0.9, 0.2])

    def test_dimension_mismatch(self) -> None:
        """Test that the three operators share one dimension."""
        with pytest.raises(DimensionMismatchError):
            ReflectionSpec.from_matrices(np.eye(4), np.eye(2), np.eye(2))

    def test_input_dimension_checked(self) -> None:
        """Test that the input must match the spec."""
        with pytest.raises(DimensionMismatchError):
            reflection_procedure(product_spec(0.5, 1.0), StateVector.zero(RegisterLayout.of(Q=3)))


class TestReflectionProcedure:
    """Tests for the Reflection Procedure."""

    @pytest.mark.parametrize(("p", "q"), [(0.5, 1.0), (1.0, 0.5), (0.8, 0.625)])
    def test_half_eigenvalue_accepted(self, p: float, q: float) -> None:
        """Test that pq = 1/2 is accepted with certainty."""
        spec = product_spec(p, q)
        outcome = reflection_procedure(spec, eigen_inputs(spec)[0][1])
        assert outcome.acceptance == pytest.approx(1.0)

    @pytest.mark.parametrize("value", [0.0, 0.1, 0.25, 0.7, 1.0])
    def test_reject_formula(self, value: float) -> None:
        """Test rejection (1 − 2λ)² on an eigenvector."""
        spec = two_level_spec(value, 0.5)
        state = next(s for v, s in eigen_inputs(spec) if v == pytest.approx(value))
        assert reflection_procedure(spec, state).reject == pytest.approx((1 - 2 * value) ** 2)

    def test_illegal_input_rejected(self) -> None:
        """Test that inputs outside Δ₀ are rejected in the first step."""
        spec = product_spec(0.5, 1.0)
        outcome = reflection_procedure(spec, StateVector.basis(spec.layout, "11"))
        assert outcome.reject == pytest.approx(1.0)
        assert outcome.mass(Verdict.REJECT, "legal-initial") == pytest.approx(1.0)

    def test_mixed_input_by_linearity(self) -> None:
        """Test that a mixture is the weighted average of its components."""
        spec = two_level_spec(0.0, 0.5)
        (_, s1), (_, s0) = eigen_inputs(spec)
        rho = DensityOperator.mixture([0.5, 0.5], [s0, s1])
        assert reflection_procedure(spec, rho).reject == pytest.approx(0.5)

    def test_checkpoints_recorded(self) -> None:
        """Test that the trace records the state entering each step."""
        spec = product_spec(0.5, 1.0)
        outcome = reflection_procedure(spec, eigen_inputs(spec)[0][1])
        assert [point.step for point in outcome.checkpoints] == ["legal-initial", "reflect"]


class TestReflectionSoundness:
    """Tests for the 4ε² soundness check."""

    def test_bound_holds_with_gap(self) -> None:
        """Test the bound on a gapped spectrum."""
        report = check_reflection_soundness(
            two_level_spec(0.25, 0.75), 0.25, np.random.default_rng(3), samples=50
        )
        assert report.applicable
        assert report.bound == pytest.approx(0.25)
        assert report.holds

    def test_inapplicable_without_gap(self) -> None:
        """Test that an eigenvalue inside the gap makes the check inapplicable."""
        report = check_reflection_soundness(two_level_spec(0.45, 0.9), 0.1)
        assert not report.applicable
        assert report.min_reject is None

    def test_epsilon_range(self) -> None:
        """Test the ε range."""
        with pytest.raises(InvalidParameterError):
            check_reflection_soundness(two_level_spec(0.0, 1.0), 0.6)

    def test_gap_applicable(self) -> None:
        """Test the open-interval gap condition."""
        assert gap_applicable([0.2, 0.8], 0.3)
        assert not gap_applicable([0.45], 0.1)

    @given(
        st.floats(min_value=0.0, max_value=0.3),
        st.floats(min_value=0.7, max_value=1.0),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=20, deadline=None)
    def test_bound_on_random_spectra(self, a0: float, a1: float, seed: int) -> None:
        """Test 4ε² on random gapped two-level spectra."""
        epsilon = min(0.5 - a0, a1 - 0.5)
        report = check_reflection_soundness(
            two_level_spec(a0, a1), epsilon, np.random.default_rng(seed), samples=10
        )
        assert report.holds


class TestReflectionSimulationTest:
    """Tests for the Reflection Simulation Test."""

    @pytest.mark.parametrize("q", HONEST_Q_GRID)
    def test_honest_input(self, q: float) -> None:
        """Test that χ_p⊗χ_p⊗J(W_q)⊗J(W_q) with pq = 1/2 is never rejected."""
        outcome = reflection_simulation_test(_rst_input(1 / (2 * q), q))
        assert outcome.reject == pytest.approx(0.0, abs=1e-12)
        assert outcome.give_up_accept == pytest.approx(15 / 16)

    @pytest.mark.parametrize("q", CHEAT_Q_GRID)
    @pytest.mark.parametrize("sign", [WSign.PLUS, WSign.MINUS])
    def test_zero_registers_reject_one_sixteenth(self, q: float, sign: WSign) -> None:
        """Test that |0⟩|0⟩ with any CJ pair is rejected with probability 1/16."""
        outcome = reflection_simulation_test(_rst_input(0.0, q, sign))
        assert outcome.reject == pytest.approx(1 / 16)

    def test_register_check(self) -> None:
        """Test that the six registers are required."""
        with pytest.raises(InvalidParameterError, match="needs registers"):
            reflection_simulation_test(StateVector.zero(RegisterLayout.of(R1=1, R2=1)))

    def test_register_width_check(self) -> None:
        """Test that every register must be a single qubit."""
        layout = RegisterLayout.of(R1=2, R2=1, S1=1, S1p=1, S2=1, S2p=1)
        with pytest.raises(InvalidParameterError, match="single qubit"):
            reflection_simulation_test(StateVector.zero(layout))

    def test_extra_registers_need_non_strict(self) -> None:
        """Test that extra registers are refused unless the check is relaxed."""
        state = tensor(_rst_input(0.0, 0.5), StateVector.zero(RegisterLayout.of(E=1)))
        with pytest.raises(InvalidParameterError, match="needs registers"):
            reflection_simulation_test(state)
        relaxed = reflection_simulation_test(state, strict=False)
        assert relaxed.reject == pytest.approx(1 / 16)

    def test_monte_carlo(self) -> None:
        """Test sampled frequencies of the cheating input."""
        outcome = reflection_simulation_test(
            _rst_input(0.0, 0.3), MonteCarlo(seed=2, shots=3000)
        )
        assert outcome.reject == pytest.approx(1 / 16, abs=0.02)
        assert outcome.shots == 3000


class TestModifiedReflectionProcedure:
    """Tests for the Modified Reflection Procedure."""

    def test_rotated_half_eigenvector_accepted(self) -> None:
        """Test that U applied to an eigenvalue-1/2 state is accepted with certainty."""
        spec = product_spec(1.0, 0.5)
        _, state = eigen_inputs(spec)[0]
        rotated = StateVector(spec.u.matrix @ state.amplitudes, spec.layout)
        outcome = modified_reflection_procedure(spec, rotated)
        assert outcome.acceptance == pytest.approx(1.0)

    def test_max_accept_of_gapped_spec(self) -> None:
        """Test the supremum acceptance for eigenvalues {0, 1}."""
        assert mrp_max_accept(two_level_spec(0.0, 1.0)) == pytest.approx(0.5)

    def test_acceptance_below_supremum(self) -> None:
        """Test random inputs stay below the supremum."""
        spec = two_level_spec(0.1, 0.95)
        bound = mrp_max_accept(spec)
        rng = np.random.default_rng(8)
        for _ in range(20):
            state = random_state(spec.layout, rng)
            assert modified_reflection_procedure(spec, state).acceptance <= bound + 1e-9

    @pytest.mark.parametrize(
        "spec",
        [two_level_spec(0.1, 0.95), two_level_spec(0.3, 0.6), product_spec(0.8, 0.4)],
        ids=["gapped", "narrow", "product"],
    )
    def test_random_search_agrees(self, spec: ReflectionSpec) -> None:
        """Test a 10^4-sample search against the closed form."""
        estimate = random_search_max_accept(spec, np.random.default_rng(4), samples=10_000)
        assert estimate <= mrp_max_accept(spec) + 1e-9
        assert estimate == pytest.approx(mrp_max_accept(spec), abs=1e-6)

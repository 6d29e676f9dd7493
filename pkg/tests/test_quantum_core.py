"""Unit tests for registers, states, operators and measurements."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qproof_sim.gates import CNOT, KET_0, KET_1, H, X
from qproof_sim.quantum_core import (
    BudgetExceededError,
    DensityOperator,
    DimensionMismatchError,
    HermitianOperator,
    InvalidOperatorError,
    InvalidParameterError,
    InvalidStateError,
    Projector,
    RegisterLayout,
    StateVector,
    UnitaryOperator,
    UnknownRegisterError,
    append_register,
    apply_local,
    apply_local_density,
    apply_unitary,
    contract_registers,
    eig_hermitian,
    embed_operator,
    fidelity,
    max_qubits,
    maximize_over_states,
    partial_trace,
    preparation_unitary,
    projective_measure,
    random_density,
    random_projector,
    random_state,
    random_unitary,
    swap_registers,
    tensor,
    trace_distance,
)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator."""
    return np.random.default_rng(1234)


class TestRegisterLayout:
    """Tests for register layouts."""

    def test_widths_and_offsets(self) -> None:
        """Test qubit counts, offsets and indices follow declaration order."""
        layout = RegisterLayout.of(A=2, M=1, S=3)
        assert layout.n_qubits == 6
        assert layout.dim == 64
        assert layout.offset("M") == 2
        assert layout.qubit_indices(["S", "A"]) == [3, 4, 5, 0, 1]
        assert str(layout) == "A[2] M[1] S[3]"

    def test_unknown_register(self) -> None:
        """Test that naming a missing register raises."""
        layout = RegisterLayout.of(A=1)
        with pytest.raises(UnknownRegisterError, match="Unknown register 'B'"):
            layout.width("B")

    def test_duplicate_names_rejected(self) -> None:
        """Test that a register cannot be declared twice."""
        with pytest.raises(InvalidParameterError, match="Duplicate"):
            RegisterLayout((("A", 1), ("A", 2)))

    def test_zero_width_rejected(self) -> None:
        """Test that registers need at least one qubit."""
        with pytest.raises(InvalidParameterError, match="at least one qubit"):
            RegisterLayout.of(A=0)

    def test_repeated_targets_rejected(self) -> None:
        """Test that targets must be distinct."""
        with pytest.raises(InvalidParameterError, match="distinct"):
            RegisterLayout.of(A=1, B=1).qubit_indices(["A", "A"])

    def test_budget(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test that the qubit budget comes from the environment."""
        monkeypatch.setenv("QPROOF_MAX_QUBITS", "4")
        assert max_qubits() == 4
        with pytest.raises(BudgetExceededError, match="budget is 4"):
            RegisterLayout.of(A=3, B=2)

    def test_without_and_select(self) -> None:
        """Test dropping and reordering registers."""
        layout = RegisterLayout.of(A=1, B=2, C=1)
        assert layout.without(["B"]).names == ("A", "C")
        assert layout.select(["C", "A"]).names == ("C", "A")


class TestStateVector:
    """Tests for pure states."""

    def test_basis_is_big_endian(self) -> None:
        """Test that the first qubit is the most significant bit."""
        state = StateVector.basis(RegisterLayout.of(A=1, B=2), "100")
        assert state.amplitudes[4] == 1.0

    def test_norm_checked(self) -> None:
        """Test that unnormalized amplitudes are refused."""
        with pytest.raises(InvalidStateError, match="norm"):
            StateVector(np.array([1.0, 1.0]), RegisterLayout.of(Q=1))

    def test_dimension_checked(self) -> None:
        """Test that amplitudes must match the layout."""
        with pytest.raises(DimensionMismatchError):
            StateVector(np.array([1.0, 0.0, 0.0, 0.0]), RegisterLayout.of(Q=1))

    def test_zero_vector_cannot_normalize(self) -> None:
        """Test that the zero vector has no normalization."""
        with pytest.raises(InvalidStateError, match="zero vector"):
            StateVector.normalized(np.zeros(2), RegisterLayout.of(Q=1))

    def test_bad_bits(self) -> None:
        """Test that basis strings must match the qubit count."""
        with pytest.raises(InvalidParameterError):
            StateVector.basis(RegisterLayout.of(Q=2), "1")

    def test_tensor_concatenates_layouts(self) -> None:
        """Test the product of two states."""
        a = StateVector.basis(RegisterLayout.of(A=1), "1")
        b = StateVector.basis(RegisterLayout.of(B=1), "0")
        product = tensor(a, b)
        assert product.layout.names == ("A", "B")
        assert product.amplitudes[2] == 1.0


class TestOperators:
    """Tests for operator validation and application."""

    def test_non_unitary_rejected(self) -> None:
        """Test unitarity validation."""
        with pytest.raises(InvalidOperatorError, match="not unitary"):
            UnitaryOperator(np.array([[1, 1], [0, 1]]))

    def test_non_power_of_two_rejected(self) -> None:
        """Test that operator dimensions are powers of two."""
        with pytest.raises(DimensionMismatchError, match="power of two"):
            UnitaryOperator(np.eye(3))

    def test_projector_validation(self) -> None:
        """Test idempotence validation."""
        with pytest.raises(InvalidOperatorError, match="idempotent"):
            Projector(np.diag([1.0, 0.5]))

    def test_projector_complement_and_rank(self) -> None:
        """Test the complement of a projector."""
        p = Projector(np.diag([1.0, 0.0, 1.0, 0.0]))
        assert p.rank == 2
        np.testing.assert_allclose(p.complement.matrix, np.diag([0.0, 1.0, 0.0, 1.0]))

    def test_apply_unitary_on_named_register(self) -> None:
        """Test that a gate acts on the named register only."""
        state = StateVector.zero(RegisterLayout.of(A=1, B=1))
        flipped = apply_unitary(state, UnitaryOperator(X), ["B"])
        assert isinstance(flipped, StateVector)
        assert flipped.amplitudes[1] == pytest.approx(1.0)

    def test_target_order_matters(self) -> None:
        """Test that the matrix qubit order follows the target list."""
        layout = RegisterLayout.of(A=1, B=1)
        vector = StateVector.basis(layout, "01").amplitudes
        # control B, target A
        result = apply_local(vector, layout, ["B", "A"], CNOT)
        assert abs(result[3]) == pytest.approx(1.0)

    def test_wrong_operator_size(self) -> None:
        """Test that the operator must match the targets."""
        layout = RegisterLayout.of(A=1, B=1)
        with pytest.raises(DimensionMismatchError):
            apply_local(StateVector.zero(layout).amplitudes, layout, ["A"], CNOT)

    def test_embed_matches_kron(self) -> None:
        """Test embedding against an explicit Kronecker product."""
        layout = RegisterLayout.of(A=1, B=1, C=1)
        embedded = embed_operator(H, layout, ["B"])
        np.testing.assert_allclose(embedded, np.kron(np.kron(np.eye(2), H), np.eye(2)))

    def test_density_application(self, rng: np.random.Generator) -> None:
        """Test that a unitary on a density operator matches the pure case."""
        state = random_state(RegisterLayout.of(A=1, B=1), rng)
        pure = apply_unitary(state, UnitaryOperator(H), ["A"])
        mixed = apply_unitary(state.density, UnitaryOperator(H), ["A"])
        assert isinstance(pure, StateVector) and isinstance(mixed, DensityOperator)
        np.testing.assert_allclose(pure.density.matrix, mixed.matrix, atol=1e-12)

    def test_swap_registers(self) -> None:
        """Test exchanging register contents."""
        layout = RegisterLayout.of(A=1, B=1)
        swapped = swap_registers(StateVector.basis(layout, "10").amplitudes, layout, "A", "B")
        assert swapped[1] == 1.0

    def test_contract_registers(self) -> None:
        """Test projecting a register out of a product state."""
        layout = RegisterLayout.of(A=1, B=1)
        vector = StateVector.basis(layout, "10").amplitudes
        rest, remaining = contract_registers(vector, layout, ["A"], np.array([0, 1.0 + 0j]))
        assert remaining is not None and remaining.names == ("B",)
        np.testing.assert_allclose(rest, [1.0, 0.0])

    def test_preparation_unitary(self, rng: np.random.Generator) -> None:
        """Test that the first column is the requested vector."""
        vector = random_state(RegisterLayout.of(Q=2), rng).amplitudes
        u = preparation_unitary(vector)
        UnitaryOperator(u)
        np.testing.assert_allclose(u[:, 0], vector, atol=1e-12)


class TestDensityOperator:
    """Tests for mixed states and partial traces."""

    def test_invalid_trace(self) -> None:
        """Test the unit-trace invariant."""
        with pytest.raises(InvalidStateError, match="trace"):
            DensityOperator(np.eye(2), RegisterLayout.of(Q=1))

    def test_negative_rejected(self) -> None:
        """Test positivity."""
        with pytest.raises(InvalidStateError, match="positive"):
            DensityOperator(np.diag([1.5, -0.5]), RegisterLayout.of(Q=1))

    def test_bell_reduces_to_maximally_mixed(self) -> None:
        """Test the partial trace of a Bell pair."""
        layout = RegisterLayout.of(A=1, B=1)
        bell = StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2), layout)
        reduced = partial_trace(bell, ["B"])
        assert isinstance(reduced, DensityOperator)
        np.testing.assert_allclose(reduced.matrix, np.eye(2) / 2, atol=1e-12)

    def test_trace_everything(self, rng: np.random.Generator) -> None:
        """Test that tracing every register leaves the scalar trace on the empty layout."""
        rho = random_density(RegisterLayout.of(A=1), rng)
        result = partial_trace(rho, ["A"])
        assert isinstance(result, DensityOperator)
        assert result.layout.n_qubits == 0
        assert result.matrix[0, 0] == pytest.approx(1.0)

    def test_trace_everything_of_pure_state(self, rng: np.random.Generator) -> None:
        """Test the full trace of a pure state."""
        result = partial_trace(random_state(RegisterLayout.of(A=1, B=1), rng), ["A", "B"])
        assert isinstance(result, DensityOperator)
        assert result.layout.dim == 1
        assert result.matrix[0, 0] == pytest.approx(1.0)

    def test_trace_nothing(self, rng: np.random.Generator) -> None:
        """Test that an empty traced set returns the input as a density operator."""
        rho = random_density(RegisterLayout.of(A=1, B=1), rng)
        assert partial_trace(rho, []) is rho
        state = random_state(RegisterLayout.of(A=1), rng)
        unchanged = partial_trace(state, [])
        assert isinstance(unchanged, DensityOperator)
        assert unchanged.layout == state.layout
        np.testing.assert_allclose(unchanged.matrix, state.density.matrix, atol=1e-12)

    def test_unknown_traced_register(self, rng: np.random.Generator) -> None:
        """Test that tracing a missing register fails."""
        with pytest.raises(UnknownRegisterError):
            partial_trace(random_state(RegisterLayout.of(A=1), rng), ["Z"])

    def test_pure_and_mixed_paths_agree(self, rng: np.random.Generator) -> None:
        """Test that reducing a pure state matches reducing its density."""
        state = random_state(RegisterLayout.of(A=1, B=2), rng)
        from_pure = partial_trace(state, ["A"])
        from_mixed = partial_trace(state.density, ["A"])
        assert isinstance(from_pure, DensityOperator)
        assert isinstance(from_mixed, DensityOperator)
        np.testing.assert_allclose(from_pure.matrix, from_mixed.matrix, atol=1e-12)

    def test_mixture_and_eigen_ensemble(self) -> None:
        """Test mixing two basis states and decomposing the result."""
        layout = RegisterLayout.of(Q=1)
        rho = DensityOperator.mixture(
            [0.25, 0.75], [StateVector.basis(layout, "0"), StateVector.basis(layout, "1")]
        )
        weights = [w for w, _ in rho.eigen_ensemble()]
        assert weights == pytest.approx([0.75, 0.25])


class TestMetrics:
    """Tests for trace distance and fidelity."""

    def test_orthogonal_states(self) -> None:
        """Test the extreme values on orthogonal states."""
        layout = RegisterLayout.of(Q=1)
        zero, one = StateVector.basis(layout, "0"), StateVector.basis(layout, "1")
        assert trace_distance(zero, one) == pytest.approx(1.0)
        assert fidelity(zero, one) == pytest.approx(0.0)

    def test_pure_fidelity_is_overlap(self) -> None:
        """Test the pure fast path."""
        layout = RegisterLayout.of(Q=1)
        plus = StateVector(np.array([1, 1]) / np.sqrt(2), layout)
        assert fidelity(plus, StateVector.basis(layout, "0")) == pytest.approx(np.sqrt(0.5))

    def test_dimension_mismatch(self) -> None:
        """Test that metrics need equal dimensions."""
        with pytest.raises(DimensionMismatchError):
            trace_distance(
                StateVector.zero(RegisterLayout.of(Q=1)), StateVector.zero(RegisterLayout.of(Q=2))
            )

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_fuchs_van_de_graaf(self, seed: int) -> None:
        """Test 1 − F ≤ D ≤ √(1 − F²) on random mixed states."""
        rng = np.random.default_rng(seed)
        layout = RegisterLayout.of(Q=2)
        rho, sigma = random_density(layout, rng), random_density(layout, rng)
        d, f = trace_distance(rho, sigma), fidelity(rho, sigma)
        assert 1 - f <= d + 1e-9
        assert d <= np.sqrt(max(0.0, 1 - f**2)) + 1e-9

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_mixed_fidelity_matches_pure(self, seed: int) -> None:
        """Test that the general formula agrees with the pure-state path."""
        rng = np.random.default_rng(seed)
        layout = RegisterLayout.of(Q=2)
        psi, phi = random_state(layout, rng), random_state(layout, rng)
        assert fidelity(psi.density, phi.density) == pytest.approx(fidelity(psi, phi), abs=1e-6)


class TestEigenAndMeasurement:
    """Tests for eigendecomposition, projective measurement and search."""

    def test_descending_order(self) -> None:
        """Test eigenvalues are sorted descending and reconstruct the matrix."""
        matrix = np.diag([0.2, 0.9, 0.5]).astype(np.complex128)
        decomposition = eig_hermitian(matrix)
        assert list(decomposition.eigenvalues) == pytest.approx([0.9, 0.5, 0.2])
        np.testing.assert_allclose(decomposition.reconstruct(), matrix, atol=1e-12)

    def test_non_hermitian_rejected(self) -> None:
        """Test Hermiticity validation."""
        with pytest.raises(InvalidOperatorError, match="Hermitian"):
            eig_hermitian(np.array([[0, 1], [0, 0]], dtype=np.complex128))

    def test_measure_plus_state(self) -> None:
        """Test a computational-basis measurement of |+⟩."""
        layout = RegisterLayout.of(A=1, B=1)
        state = StateVector(np.array([1, 0, 1, 0]) / np.sqrt(2), layout)
        result = projective_measure(state, Projector(np.diag([1.0, 0.0])), ["A"])
        assert result.probability == pytest.approx(0.5)
        assert isinstance(result.inside, StateVector)
        assert result.inside.amplitudes[0] == pytest.approx(1.0)

    def test_measure_density_branch_pruned(self) -> None:
        """Test that a null branch comes back as None."""
        layout = RegisterLayout.of(Q=1)
        rho = StateVector.basis(layout, "0").density
        result = projective_measure(rho, Projector(np.diag([1.0, 0.0])))
        assert result.probability == pytest.approx(1.0)
        assert result.outside is None

    def test_random_unitary_is_unitary(self, rng: np.random.Generator) -> None:
        """Test Haar sampling produces unitaries."""
        u = random_unitary(4, rng)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-10)

    def test_maximize_over_states(self, rng: np.random.Generator) -> None:
        """Test that the search finds the top eigenvalue of a diagonal form."""
        weights = np.array([0.1, 0.7, 0.3, 0.2])

        def objective(batch: np.ndarray) -> np.ndarray:
            return np.sum(weights[:, None] * np.abs(batch) ** 2, axis=0)

        value, _ = maximize_over_states(objective, 4, rng, samples=500)
        assert value == pytest.approx(0.7, abs=1e-3)


class TestValidation:
    """Tests for the error paths and small accessors of the core types."""

    def test_layout_lookups_reject_unknown_names(self) -> None:
        """Test offset and without on a register that does not exist."""
        layout = RegisterLayout.of(A=1, B=2)
        assert layout.offset("B") == 1
        with pytest.raises(UnknownRegisterError):
            layout.offset("C")
        with pytest.raises(UnknownRegisterError):
            layout.without(["C"])

    def test_local_shape_errors(self) -> None:
        """Test that vectors and densities must match the layout."""
        layout = RegisterLayout.of(A=1, B=1)
        with pytest.raises(DimensionMismatchError):
            apply_local(np.ones(2, dtype=np.complex128), layout, ["A"], H)
        with pytest.raises(DimensionMismatchError):
            apply_local_density(np.eye(2, dtype=np.complex128), layout, ["A"], H)

    def test_contract_everything(self) -> None:
        """Test that contracting every register leaves one amplitude."""
        layout = RegisterLayout.of(A=1)
        rest, remaining = contract_registers(np.array([0.6, 0.8j]), layout, ["A"], KET_1)
        assert remaining is None
        np.testing.assert_allclose(rest, [0.8j])

    def test_contract_ket_size(self) -> None:
        """Test that the ket must span the contracted registers."""
        layout = RegisterLayout.of(A=1, B=1)
        vector = StateVector.zero(layout).amplitudes
        with pytest.raises(DimensionMismatchError):
            contract_registers(vector, layout, ["A"], np.ones(4, dtype=np.complex128) / 2)

    def test_swap_edge_cases(self) -> None:
        """Test swapping a register with itself and with a wider one."""
        layout = RegisterLayout.of(A=1, B=2)
        vector = StateVector.basis(layout, "100").amplitudes
        assert swap_registers(vector, layout, "A", "A") is vector
        with pytest.raises(DimensionMismatchError):
            swap_registers(vector, layout, "A", "B")

    def test_append_register_content(self) -> None:
        """Test appending a register with explicit content."""
        layout = RegisterLayout.of(A=1)
        vector, extended = append_register(KET_1, layout, "B", content=KET_0)
        assert extended.names == ("A", "B")
        np.testing.assert_allclose(vector, [0, 0, 1, 0])

    def test_operator_shapes(self) -> None:
        """Test square and power-of-two checks on operator matrices."""
        with pytest.raises(DimensionMismatchError, match="square"):
            UnitaryOperator(np.ones((2, 4)))
        with pytest.raises(DimensionMismatchError, match="power of two"):
            UnitaryOperator(np.eye(3))
        with pytest.raises(DimensionMismatchError):
            HermitianOperator(np.ones(4))

    def test_unitary_dagger_and_retarget(self) -> None:
        """Test the inverse operator and rebinding targets."""
        u = UnitaryOperator(CNOT @ np.kron(H, np.eye(2)), ("A", "B"))
        np.testing.assert_allclose(u.dagger.matrix @ u.matrix, np.eye(4), atol=1e-12)
        assert u.dagger.targets == ("A", "B")
        assert u.on("B", "A").targets == ("B", "A")
        assert u.n_qubits == 2

    def test_projector_constructors(self) -> None:
        """Test projectors onto spans and the identity projector."""
        plus = Projector.onto([np.array([1.0, 1.0]) / np.sqrt(2)])
        np.testing.assert_allclose(plus.matrix, np.full((2, 2), 0.5))
        assert Projector.identity(4).rank == 4
        with pytest.raises(InvalidOperatorError, match="idempotent"):
            Projector(np.diag([0.5, 1.0]))

    def test_state_helpers(self, rng: np.random.Generator) -> None:
        """Test random states and overlaps."""
        layout = RegisterLayout.of(A=2)
        state = StateVector.random(layout, rng)
        assert state.overlap(state) == pytest.approx(1.0)
        with pytest.raises(DimensionMismatchError):
            state.overlap(StateVector.zero(RegisterLayout.of(A=1)))
        with pytest.raises(InvalidStateError):
            StateVector.normalized(np.zeros(4), layout)
        with pytest.raises(InvalidParameterError):
            StateVector.basis(layout, "2")

    def test_density_helpers(self, rng: np.random.Generator) -> None:
        """Test density constructors and their validation."""
        layout = RegisterLayout.of(A=1)
        mixed = DensityOperator.maximally_mixed(layout)
        np.testing.assert_allclose(mixed.matrix, np.eye(2) / 2)
        pure = DensityOperator.from_state(StateVector.zero(layout))
        assert pure.matrix[0, 0] == pytest.approx(1.0)
        rank_one = DensityOperator.random(RegisterLayout.of(A=2), rng, rank=1)
        assert np.linalg.matrix_rank(rank_one.matrix, tol=1e-10) == 1
        with pytest.raises(InvalidStateError, match="Hermitian"):
            DensityOperator(np.array([[0.5, 0.5], [0.0, 0.5]]), layout)
        with pytest.raises(DimensionMismatchError):
            DensityOperator(np.eye(4) / 4, layout)
        with pytest.raises(InvalidParameterError):
            DensityOperator.mixture([0.5], [])

    def test_eigen_accessors(self) -> None:
        """Test the accessors of an eigendecomposition."""
        eig = eig_hermitian(HermitianOperator(np.diag([0.2, 0.9])))
        assert len(eig) == 2
        np.testing.assert_allclose(np.abs(eig.top_vector), [0.0, 1.0])
        assert [value for value, _ in eig.pairs()] == pytest.approx([0.9, 0.2])
        np.testing.assert_allclose(eig.reconstruct(), np.diag([0.2, 0.9]), atol=1e-12)

    def test_measurement_errors(self) -> None:
        """Test measurement with a mismatched or raw projector."""
        state = StateVector.zero(RegisterLayout.of(A=1, B=1))
        with pytest.raises(DimensionMismatchError):
            projective_measure(state, Projector(np.diag([1.0, 0.0])))
        result = projective_measure(state, np.diag([1.0, 0.0]), ["A"])
        assert result.probability == pytest.approx(1.0)
        assert result.complement_probability == pytest.approx(0.0)

    def test_builder_errors(self, rng: np.random.Generator) -> None:
        """Test the argument checks of the state and operator builders."""
        with pytest.raises(InvalidParameterError):
            tensor()
        with pytest.raises(InvalidParameterError, match="No target"):
            apply_unitary(StateVector.zero(RegisterLayout.of(A=1)), UnitaryOperator(X))
        with pytest.raises(InvalidParameterError):
            random_density(RegisterLayout.of(A=1), rng, rank=3)
        with pytest.raises(InvalidParameterError):
            random_projector(2, 3, rng)
        assert random_projector(4, 2, rng).rank == 2
        with pytest.raises(InvalidStateError):
            preparation_unitary(np.zeros(2))

    def test_flat_objective_keeps_sample(self, rng: np.random.Generator) -> None:
        """Test that a constant objective returns the best sampled state."""

        def objective(batch: np.ndarray) -> np.ndarray:
            return np.ones(batch.shape[1])

        value, state = maximize_over_states(objective, 2, rng, samples=4)
        assert value == pytest.approx(1.0)
        assert np.linalg.norm(state) == pytest.approx(1.0)

"""The perfect-completeness QMA protocol with N pre-shared EPR pairs.

The verifier holds S₁..S_N, the prover holds S′₁..S′_N. Steps: two
distillations, a random choice of (r₁, r₂) with swaps, the Space
Restriction Test, a swap test and the Reflection Simulation Test.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from qproof_sim.gates import (
    CNOT,
    CZ,
    I2,
    KET_0,
    KET_1,
    SQRT_HALF,
    SWAP,
    T_MATRIX,
    H,
    X,
    swap_test_vector,
    w_matrix,
)
from qproof_sim.outcome import (
    Branch,
    MonteCarlo,
    ProtocolOutcome,
    ProtocolStep,
    StepFunction,
    Verdict,
    branch_from,
    run_steps,
    verdict_from,
)
from qproof_sim.qma import VerifierCircuit, distillation_vectors, max_accept
from qproof_sim.quantum_core import (
    BudgetExceededError,
    ComplexArray,
    DensityOperator,
    InvalidParameterError,
    PreconditionError,
    RegisterLayout,
    StateVector,
    UnitaryOperator,
    apply_local,
    apply_local_density,
    embed_operator,
    max_qubits,
    preparation_unitary,
    random_unitary,
    reduced_density,
    swap_registers,
)
from qproof_sim.reflection import RST_REGISTERS, rst_steps

logger = logging.getLogger(__name__)

PAIR_QUBITS = 2
ANCILLA = "anc"
SWAP_TEST_ANCILLA = "B"
PROVER_PRESETS = ("honest", "product-witness", "wrong-q", "raw-zero", "haar", "explicit")

_ONE = np.outer(KET_1, KET_1)
_ZERO = np.outer(KET_0, KET_0)

_ORACLE_EPR = SQRT_HALF * np.array(  # first column |Φ+⟩
    [[1, 0, 1, 0], [0, 1, 0, 1], [0, 1, 0, -1], [1, 0, -1, 0]], dtype=np.complex128
)
_ORACLE_T = np.kron(X, X) @ CNOT @ np.kron(H, I2) @ CNOT
_ORACLE_FREDKIN = np.eye(8, dtype=np.complex128)[[0, 1, 2, 3, 4, 6, 5, 7]]
_ORACLE_PHI_PLUS = SQRT_HALF * np.array([1, 0, 0, 1], dtype=np.complex128)


def pair_names(index: int) -> tuple[str, str]:
    """Return the (verifier, prover) register names of the 1-based pair ``index``."""
    return f"S{index}", f"S{index}p"


@dataclass(frozen=True, eq=False)
class ProtocolConfig:
    """Parameters of one protocol run.

    Attributes:
        verifier: The underlying QMA verifier.
        n_pairs: Number N of pre-shared EPR pairs, at least 2.
        ancilla_width: Prover ancilla qubits; ``None`` means m + N and 0 means
            no ancilla.
        monte_carlo: Sample paths instead of enumerating them exactly.
        keep_states: Record the state entering every step.
    """

    verifier: VerifierCircuit
    n_pairs: int = 2
    ancilla_width: int | None = None
    monte_carlo: MonteCarlo | None = None
    keep_states: bool = False

    def __post_init__(self) -> None:
        """Check N, the ancilla width and the qubit budget."""
        if self.n_pairs < 2:
            raise InvalidParameterError(f"The protocol needs N >= 2 pairs, got {self.n_pairs}")
        if self.ancilla_width is not None and self.ancilla_width < 0:
            raise InvalidParameterError("Ancilla width must be non-negative")
        needed = self.layout.n_qubits + 1  # R2p is added by the simulation test
        if needed > max_qubits():
            raise BudgetExceededError(
                f"Protocol with N={self.n_pairs} needs {needed} qubits, budget is {max_qubits()}"
            )

    @property
    def mode(self) -> str:
        """``exact`` or ``mc``."""
        return "exact" if self.monte_carlo is None else "mc"

    @property
    def prover_ancilla(self) -> int:
        """Resolved prover ancilla width."""
        if self.ancilla_width is None:
            return self.verifier.m_width + self.n_pairs
        return self.ancilla_width

    @property
    def pairs(self) -> list[tuple[str, str]]:
        """Pair registers in order."""
        return [pair_names(i) for i in range(1, self.n_pairs + 1)]

    @property
    def prover_registers(self) -> tuple[str, ...]:
        """Registers the prover may act on: M, S′₁..S′_N and the ancilla."""
        registers = ("M", *(prover for _, prover in self.pairs))
        return (*registers, ANCILLA) if self.prover_ancilla else registers

    @cached_property
    def layout(self) -> RegisterLayout:
        """Full register layout: A, M, (S_i, S′_i)…, anc, B, R1, R2."""
        registers: list[tuple[str, int]] = [
            ("A", self.verifier.a_width),
            ("M", self.verifier.m_width),
        ]
        for verifier_side, prover_side in self.pairs:
            registers += [(verifier_side, 1), (prover_side, 1)]
        if self.prover_ancilla:
            registers.append((ANCILLA, self.prover_ancilla))
        registers += [(SWAP_TEST_ANCILLA, 1), ("R1", 1), ("R2", 1)]
        return RegisterLayout(tuple(registers))


ProverOperation = tuple[tuple[str, ...], ComplexArray]


@dataclass(frozen=True)
class EPRProverStrategy:
    """A prover: unitaries on (M, S′₁..S′_N, ancilla) applied after the EPR pairs are shared.

    ``build`` maps a config to ``(targets, matrix)`` operations, applied in order.
    """

    name: str
    build: Callable[[ProtocolConfig], Sequence[ProverOperation]] = field(repr=False)

    def operations(self, config: ProtocolConfig) -> list[ProverOperation]:
        """Return the validated operations for ``config``.

        Raises:
            InvalidParameterError: If an operation touches a verifier register.
            InvalidOperatorError: If a matrix is not unitary.
        """
        allowed = set(config.prover_registers)
        operations = []
        for targets, matrix in self.build(config):
            targets = tuple(targets)
            forbidden = [t for t in targets if t not in allowed]
            if forbidden:
                raise InvalidParameterError(
                    f"Prover '{self.name}' acts on verifier registers {forbidden}"
                )
            operations.append((targets, UnitaryOperator(matrix).matrix))
        return operations


def _witness_and_rotations(
    config: ProtocolConfig, witness: ComplexArray, q: float
) -> list[ProverOperation]:
    operations: list[ProverOperation] = [(("M",), preparation_unitary(witness))]
    rotation = w_matrix(q)
    operations += [((prover,), rotation) for _, prover in config.pairs]
    return operations


def honest_prover() -> EPRProverStrategy:
    """Return the honest prover: optimal witness in M and W_q on every S′_i.

    Building its operations raises :class:`PreconditionError` when p_x < 1/2.
    """

    def build(config: ProtocolConfig) -> list[ProverOperation]:
        params = max_accept(config.verifier)
        if params.q is None:
            raise PreconditionError(
                f"Honest prover needs p_x >= 1/2, verifier '{config.verifier.name}' has "
                f"p_x={params.p_x:.6f}"
            )
        logger.info("Honest prover: p_x=%.6f p=%.6f q=%.6f", params.p_x, params.p, params.q)
        return _witness_and_rotations(config, params.witness.amplitudes, params.q)

    return EPRProverStrategy("honest", build)


def product_witness_prover(witness: StateVector | ComplexArray, q: float) -> EPRProverStrategy:
    """Return a prover sending a fixed witness and W_q on every S′_i."""
    amplitudes = witness.amplitudes if isinstance(witness, StateVector) else np.asarray(witness)

    def build(config: ProtocolConfig) -> list[ProverOperation]:
        return _witness_and_rotations(config, amplitudes, q)

    return EPRProverStrategy(f"product-witness(q={q:g})", build)


def wrong_q_prover(q: float) -> EPRProverStrategy:
    """Return a prover sending the optimal witness but W_q for a chosen q."""

    def build(config: ProtocolConfig) -> list[ProverOperation]:
        witness = max_accept(config.verifier).witness
        return _witness_and_rotations(config, witness.amplitudes, q)

    return EPRProverStrategy(f"wrong-q(q={q:g})", build)


def _exchange_with_ancilla(n_pairs: int, ancilla_width: int) -> ComplexArray:
    names = [(f"p{i}", 1) for i in range(n_pairs)] + [(f"a{i}", 1) for i in range(ancilla_width)]
    layout = RegisterLayout(tuple(names))
    matrix = np.eye(layout.dim, dtype=np.complex128)
    for i in range(n_pairs):
        matrix = embed_operator(SWAP, layout, [f"p{i}", f"a{i}"]) @ matrix
    return matrix


def raw_zero_prover() -> EPRProverStrategy:
    """Return a prover that leaves |0⟩ in every S′_i by moving its EPR halves to the ancilla."""

    def build(config: ProtocolConfig) -> list[ProverOperation]:
        if config.prover_ancilla < config.n_pairs:
            raise PreconditionError(
                f"Raw-zero prover needs at least {config.n_pairs} ancilla qubits"
            )
        targets = (*(prover for _, prover in config.pairs), ANCILLA)
        return [(targets, _exchange_with_ancilla(config.n_pairs, config.prover_ancilla))]

    return EPRProverStrategy("raw-zero", build)


def haar_prover(rng: np.random.Generator) -> EPRProverStrategy:
    """Return a prover applying one Haar-random unitary to its whole space.

    The unitary is drawn when operations are first built for a config.
    """
    drawn: dict[int, ComplexArray] = {}

    def build(config: ProtocolConfig) -> list[ProverOperation]:
        targets = config.prover_registers
        dim = config.layout.subspace_dim(targets)
        if dim not in drawn:
            drawn[dim] = random_unitary(dim, rng)
        return [(targets, drawn[dim])]

    return EPRProverStrategy("haar", build)


def explicit_prover(matrix: ComplexArray, name: str = "explicit") -> EPRProverStrategy:
    """Return a prover applying ``matrix`` to (M, S′₁..S′_N, ancilla)."""

    def build(config: ProtocolConfig) -> list[ProverOperation]:
        return [(config.prover_registers, np.asarray(matrix, dtype=np.complex128))]

    return EPRProverStrategy(name, build)


def initial_state(config: ProtocolConfig, prover: EPRProverStrategy) -> StateVector:
    """Return the state after EPR sharing and the prover's operations."""
    layout = config.layout
    vector = StateVector.zero(layout).amplitudes
    for verifier_side, prover_side in config.pairs:
        vector = apply_local(vector, layout, [verifier_side], H)
        vector = apply_local(vector, layout, [verifier_side, prover_side], CNOT)
    for targets, matrix in prover.operations(config):
        vector = apply_local(vector, layout, targets, matrix)
    return StateVector(vector, layout)


def _distillation_step(v: VerifierCircuit, register: str) -> StepFunction:
    def run(state: StateVector) -> list[Branch]:
        success, failure = distillation_vectors(
            v, state.amplitudes, state.layout, (register, "A", "M")
        )
        return [
            verdict_from(f"{register}:failed", failure, Verdict.GIVE_UP),
            branch_from(f"{register}:distilled", success, state.layout),
        ]

    return run


def choice_swaps(r1: int, r2: int) -> list[tuple[int, int]]:
    """Return the pair swaps made for the random choice (r₁, r₂), r₂ ≠ 1."""
    swaps = []
    if r1 >= 2:
        swaps.append((1, r1))
    if r2 >= 3:
        swaps.append((2, r2))
    return swaps


def swap_pairs(
    vector: ComplexArray, layout: RegisterLayout, first: int, second: int
) -> ComplexArray:
    """Exchange the contents of two EPR-pair slots."""
    for a, b in zip(pair_names(first), pair_names(second), strict=True):
        vector = swap_registers(vector, layout, a, b)
    return vector


def _choice_step(n_pairs: int) -> StepFunction:
    weight = 1.0 / n_pairs**2

    def run(state: StateVector) -> list[Branch]:
        branches = []
        for r1 in range(1, n_pairs + 1):
            for r2 in range(1, n_pairs + 1):
                label = f"r1={r1},r2={r2}"
                if r2 == 1:
                    branches.append(Branch(label, weight, verdict=Verdict.GIVE_UP))
                    continue
                vector = state.amplitudes
                for first, second in choice_swaps(r1, r2):
                    vector = swap_pairs(vector, state.layout, first, second)
                branches.append(Branch(label, weight, StateVector(vector, state.layout)))
        return branches

    return run


def space_restriction_test(
    state: StateVector, pairs: Sequence[tuple[str, str]] = (("S1", "S1p"), ("S2", "S2p"))
) -> list[Branch]:
    """Check that each pair lies in span{|Φ−⟩, |Ψ+⟩}.

    Per pair: apply T, reject on S′_j = 1, apply T† to the rest.

    Returns:
        One reject branch per pair followed by the continuation branch.
    """
    vector, layout = state.amplitudes, state.layout
    branches = []
    for verifier_side, prover_side in pairs:
        vector = apply_local(vector, layout, [verifier_side, prover_side], T_MATRIX)
        rejected = apply_local(vector, layout, [prover_side], _ONE)
        branches.append(verdict_from(f"space:{verifier_side}", rejected, Verdict.REJECT))
        vector = apply_local(
            vector - rejected, layout, [verifier_side, prover_side], T_MATRIX.conj().T
        )
    branches.append(branch_from("space:passed", vector, layout))
    return branches


def _swap_test_step(state: StateVector) -> list[Branch]:
    passed, failed = swap_test_vector(
        state.amplitudes, state.layout, ["S1", "S1p"], ["S2", "S2p"], SWAP_TEST_ANCILLA
    )
    return [
        verdict_from("swap:failed", failed, Verdict.REJECT),
        branch_from("swap:passed", passed, state.layout),
    ]


def tail_steps() -> list[ProtocolStep]:
    """Return the steps from the Space Restriction Test to the end."""
    return [
        ProtocolStep("space-restriction", space_restriction_test),
        ProtocolStep("swap-test", _swap_test_step),
        *rst_steps(),
    ]


def protocol_steps(config: ProtocolConfig) -> list[ProtocolStep]:
    """Return all protocol steps for ``config``."""
    v = config.verifier
    return [
        ProtocolStep("distillation-1", _distillation_step(v, "R1")),
        ProtocolStep("distillation-2", _distillation_step(v, "R2")),
        ProtocolStep("choice", _choice_step(config.n_pairs)),
        *tail_steps(),
    ]


def run_protocol(config: ProtocolConfig, prover: EPRProverStrategy) -> ProtocolOutcome:
    """Run the EPR-QMA protocol against a prover.

    Args:
        config: Verifier, N and simulation mode.
        prover: The prover strategy.

    Returns:
        Exact outcome over all N² choices and measurement branches, or
        sampled frequencies in Monte Carlo mode.

    Raises:
        PreconditionError: For the honest prover when p_x < 1/2.
    """
    logger.info(
        "EPR protocol: verifier=%s N=%d prover=%s mode=%s qubits=%d",
        config.verifier.name,
        config.n_pairs,
        prover.name,
        config.mode,
        config.layout.n_qubits + 1,
    )
    outcome = run_steps(
        initial_state(config, prover),
        protocol_steps(config),
        config.monte_carlo,
        config.keep_states,
    )
    logger.info(
        "EPR protocol: accept=%.12f give-up=%.12f reject=%.12f",
        outcome.accept,
        outcome.give_up_accept,
        outcome.reject,
    )
    return outcome


def give_up_breakdown(outcome: ProtocolOutcome) -> dict[str, float]:
    """Split give-up mass by the step that caused it."""
    return {
        "distillation": outcome.mass(Verdict.GIVE_UP, "distillation-1")
        + outcome.mass(Verdict.GIVE_UP, "distillation-2"),
        "choice": outcome.mass(Verdict.GIVE_UP, "choice"),
        "simulation": outcome.mass(Verdict.GIVE_UP, "rst-bell"),
    }


def simulation_inputs(outcome: ProtocolOutcome) -> list[tuple[float, DensityOperator]]:
    """Return (weight, reduced state on the six test registers) entering the simulation test.

    Needs an outcome computed with ``keep_states``.
    """
    inputs = []
    for point in outcome.checkpoints_at("rst-prepare"):
        layout = point.state.layout.select(RST_REGISTERS)
        rho = reduced_density(point.state.amplitudes, point.state.layout, RST_REGISTERS)
        inputs.append((point.probability, DensityOperator(rho, layout)))
    return inputs


def _trace(rho: ComplexArray) -> float:
    return float(np.trace(rho).real)


def _project(
    rho: ComplexArray, layout: RegisterLayout, targets: Sequence[str], projector: ComplexArray
) -> tuple[ComplexArray, ComplexArray]:
    inside = apply_local_density(rho, layout, targets, projector)
    outside = apply_local_density(
        rho, layout, targets, np.eye(projector.shape[0], dtype=np.complex128) - projector
    )
    return inside, outside


def oracle_protocol(config: ProtocolConfig, prover: EPRProverStrategy) -> ProtocolOutcome:
    """Simulate the whole protocol as one density matrix.

    Every step is rebuilt from elementary gates: the EPR pairs, distillation
    as V, a controlled X and V†, T as a CNOT, H, CNOT and X⊗X circuit, and
    the swap test as two Fredkin gates. The prover ancilla is traced out after
    preparation; random choices become mixtures and measurements become
    projector pairs. Only N = 2 fits the budget.

    Returns:
        Accept, give-up-accept and reject probabilities without branch records.

    Raises:
        InvalidParameterError: If the protocol uses more than two pairs.
    """
    if config.n_pairs != 2:
        raise InvalidParameterError(f"The oracle supports N = 2 only, got {config.n_pairs}")
    full = config.layout
    vector = StateVector.zero(full).amplitudes
    for verifier_side, prover_side in config.pairs:
        vector = apply_local(vector, full, [verifier_side, prover_side], _ORACLE_EPR)
    for targets, matrix in prover.operations(config):
        vector = apply_local(vector, full, targets, matrix)
    keep = [name for name in full.names if name != ANCILLA]
    layout = full.select(keep).concat(RegisterLayout.of(R2p=1))
    rho = np.kron(reduced_density(vector, full, keep), _ZERO)
    give_up = reject = 0.0

    v = config.verifier
    a_zero = np.zeros((1 << v.a_width, 1 << v.a_width), dtype=np.complex128)
    a_zero[0, 0] = 1.0
    flip = np.kron(X, v.accept) + np.kron(I2, v.pi_reject)
    for register in ("R1", "R2"):
        rho = apply_local_density(rho, layout, ["A", "M"], v.unitary)
        rho = apply_local_density(rho, layout, [register, "A", "M"], flip)
        rho = apply_local_density(rho, layout, ["A", "M"], v.unitary.conj().T)
        rho, failed = _project(rho, layout, ["A"], a_zero)
        give_up += _trace(failed)

    # (r1, r2) with r2 = 1 gives up; r1 = 2, r2 = 2 exchanges the pairs
    exchanged = apply_local_density(rho, layout, ["S1", "S2"], SWAP)
    exchanged = apply_local_density(exchanged, layout, ["S1p", "S2p"], SWAP)
    give_up += _trace(rho) / 2
    rho = (rho + exchanged) / 4

    for verifier_side, prover_side in (("S1", "S1p"), ("S2", "S2p")):
        rho = apply_local_density(rho, layout, [verifier_side, prover_side], _ORACLE_T)
        failed, rho = _project(rho, layout, [prover_side], _ONE)
        reject += _trace(failed)
        rho = apply_local_density(rho, layout, [verifier_side, prover_side], _ORACLE_T.conj().T)

    rho = apply_local_density(rho, layout, [SWAP_TEST_ANCILLA], H)
    rho = apply_local_density(rho, layout, [SWAP_TEST_ANCILLA, "S1", "S2"], _ORACLE_FREDKIN)
    rho = apply_local_density(rho, layout, [SWAP_TEST_ANCILLA, "S1p", "S2p"], _ORACLE_FREDKIN)
    rho = apply_local_density(rho, layout, [SWAP_TEST_ANCILLA], H)
    failed, rho = _project(rho, layout, [SWAP_TEST_ANCILLA], _ONE)
    reject += _trace(failed)

    rho = apply_local_density(rho, layout, ["S1", "S1p"], _ORACLE_T)
    rho = apply_local_density(rho, layout, ["R1", "S1"], CZ)
    rho = apply_local_density(rho, layout, ["R2", "R2p"], _ORACLE_T.conj().T)
    phi_plus = np.outer(_ORACLE_PHI_PLUS, _ORACLE_PHI_PLUS)
    before = _trace(rho)
    rho = apply_local_density(rho, layout, ["R1", "R2"], phi_plus)
    rho = apply_local_density(rho, layout, ["S1", "S2"], phi_plus)
    give_up += before - _trace(rho)
    rejected, accepted = _project(rho, layout, ["R2p", "S2p"], np.kron(_ZERO, _ZERO))
    reject += _trace(rejected)
    accept = _trace(accepted)
    logger.info(
        "Oracle: accept=%.12f give-up=%.12f reject=%.12f", accept, give_up, reject
    )
    return ProtocolOutcome(accept, give_up, reject)


def parallel_repeat(
    config: ProtocolConfig, provers: Sequence[EPRProverStrategy], t: int
) -> ProtocolOutcome:
    """Run t independent instances and accept iff every instance accepts.

    Args:
        config: Shared configuration.
        provers: One prover per instance, or a single prover reused.
        t: Number of instances.

    Returns:
        The combined outcome; give-up-accept is the probability that every
        instance accepts but at least one gave up.
    """
    if t < 1:
        raise InvalidParameterError(f"Repetition count must be at least 1, got {t}")
    if len(provers) not in (1, t):
        raise InvalidParameterError(f"Expected 1 or {t} provers, got {len(provers)}")
    outcomes = [run_protocol(config, provers[i % len(provers)]) for i in range(t)]
    if t == 1:
        return outcomes[0]
    acceptance = float(np.prod([o.acceptance for o in outcomes]))
    genuine = float(np.prod([o.accept for o in outcomes]))
    return ProtocolOutcome(genuine, acceptance - genuine, 1.0 - acceptance)

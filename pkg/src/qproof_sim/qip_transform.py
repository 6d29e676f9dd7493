"""From two-sided-error interactive proofs to perfect completeness.

An m-message system alternates prover and verifier unitaries over a verifier
layout (private and message registers) and a prover register ``P``. The
transformation rescales the error, makes the system perfectly rewindable,
and replaces the final decision with a coin-flip between a Reflection Test
and an Invertibility Test run by backward simulation.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from qproof_sim.gates import KET_0, KET_1, X, phase_flip, w_matrix
from qproof_sim.outcome import (
    Branch,
    MonteCarlo,
    ProtocolOutcome,
    ProtocolStep,
    StepFunction,
    Verdict,
    run_steps,
    verdict_from,
)
from qproof_sim.qma import VerifierCircuit
from qproof_sim.quantum_core import (
    TOLERANCE,
    ComplexArray,
    DimensionMismatchError,
    InvalidParameterError,
    PreconditionError,
    Projector,
    RegisterLayout,
    StateVector,
    UnitaryOperator,
    append_register,
    apply_local,
    contract_registers,
    eig_hermitian,
    embed_operator,
    preparation_unitary,
    random_unitary,
)
from qproof_sim.reflection import ReflectionSpec, eigen_inputs

logger = logging.getLogger(__name__)

PROVER_REGISTER = "P"
RESCALE_REGISTER = "D"
REWIND_REGISTER = "B"
COIN_REGISTER = "coin"
_RESERVED = (PROVER_REGISTER, COIN_REGISTER)

REFLECTION_TEST = "reflection"
INVERTIBILITY_TEST = "invertibility"


def _controlled_rotation(a0: float, a1: float) -> ComplexArray:
    # target first, control second
    zero, one = np.outer(KET_0, KET_0), np.outer(KET_1, KET_1)
    return np.kron(w_matrix(a0), zero) + np.kron(w_matrix(a1), one)


@dataclass(frozen=True, eq=False)
class QIPSystemSpec:
    """An m-message verifier with declared completeness c and soundness s.

    Attributes:
        messages: Number of messages m.
        verifier_unitaries: V_1..V_{⌈(m+1)/2⌉} over ``layout``.
        accept: Accept projector over ``layout``.
        layout: Verifier registers, private and message.
        completeness: Declared c.
        soundness: Declared s < c.
        message: The message registers.
        exchanges: Registers travelling to and from the prover in each prover
            round; defaults to ``message`` every round.
        name: Label for logs and reports.
    """

    messages: int
    verifier_unitaries: tuple[ComplexArray, ...]
    accept: ComplexArray
    layout: RegisterLayout
    completeness: float
    soundness: float
    message: tuple[str, ...] = ("M",)
    exchanges: tuple[tuple[str, ...], ...] = ()
    name: str = "qip"

    def __post_init__(self) -> None:
        """Validate round counts, dimensions, registers and the declared gap."""
        if self.messages < 1:
            raise InvalidParameterError(f"Message count must be positive, got {self.messages}")
        unitaries = tuple(UnitaryOperator(u).matrix for u in self.verifier_unitaries)
        object.__setattr__(self, "verifier_unitaries", unitaries)
        object.__setattr__(self, "accept", Projector(self.accept).matrix)
        object.__setattr__(self, "message", tuple(self.message))
        if len(unitaries) != self.verifier_rounds:
            raise InvalidParameterError(
                f"{self.messages}-message system needs {self.verifier_rounds} verifier "
                f"unitaries, got {len(unitaries)}"
            )
        dim = self.layout.dim
        for matrix in (*unitaries, self.accept):
            if matrix.shape != (dim, dim):
                raise DimensionMismatchError(
                    f"Operator of shape {matrix.shape} does not match layout {self.layout}"
                )
        for name in _RESERVED:
            if name in self.layout:
                raise InvalidParameterError(f"Register name '{name}' is reserved")
        exchanges = tuple(tuple(e) for e in self.exchanges) or (self.message,) * self.prover_rounds
        object.__setattr__(self, "exchanges", exchanges)
        if len(exchanges) != self.prover_rounds:
            raise InvalidParameterError(
                f"Expected {self.prover_rounds} exchanges, got {len(exchanges)}"
            )
        for registers in (self.message, *exchanges):
            self.layout.qubit_indices(registers)
        if not 0.0 <= self.soundness < self.completeness <= 1.0:
            raise InvalidParameterError(
                f"Need 0 <= s < c <= 1, got c={self.completeness}, s={self.soundness}"
            )

    @classmethod
    def from_verifier(
        cls, v: VerifierCircuit, completeness: float, soundness: float
    ) -> QIPSystemSpec:
        """Wrap a QMA verifier as a one-message system."""
        return cls(
            1,
            (v.unitary,),
            v.accept,
            v.layout,
            completeness,
            soundness,
            name=v.name,
        )

    @property
    def odd(self) -> bool:
        """Whether the prover sends the first message."""
        return self.messages % 2 == 1

    @property
    def verifier_rounds(self) -> int:
        """⌈(m+1)/2⌉."""
        return self.messages // 2 + 1

    @property
    def prover_rounds(self) -> int:
        """⌊(m+1)/2⌋."""
        return (self.messages + 1) // 2

    @property
    def init_free(self) -> tuple[str, ...]:
        """Verifier registers the prover prepares before the first verifier move."""
        return self.exchanges[0] if self.odd else ()

    @property
    def backward_rounds(self) -> list[int]:
        """Forward prover rounds (0-based) in the order a backward simulation undoes them."""
        first = 1 if self.odd else 0
        return list(range(self.prover_rounds - 1, first - 1, -1))

    def preceding_verifier(self, prover_round: int) -> int:
        """Index of the verifier unitary applied just before a prover round."""
        return prover_round - 1 if self.odd else prover_round

    def full_layout(self, p_width: int) -> RegisterLayout:
        """Verifier layout followed by the prover register."""
        return self.layout.concat(RegisterLayout(((PROVER_REGISTER, p_width),)))

    def exchange_targets(self, prover_round: int) -> list[str]:
        """Registers a prover unitary of this round acts on, in matrix order."""
        return [*self.exchanges[prover_round], PROVER_REGISTER]


def _check_prover_unitaries(
    spec: QIPSystemSpec, p_width: int, unitaries: Sequence[ComplexArray], rounds: Sequence[int]
) -> tuple[ComplexArray, ...]:
    if len(unitaries) != len(rounds):
        raise InvalidParameterError(
            f"Expected {len(rounds)} prover unitaries for '{spec.name}', got {len(unitaries)}"
        )
    layout = spec.full_layout(p_width)
    checked = []
    for matrix, k in zip(unitaries, rounds, strict=True):
        matrix = UnitaryOperator(matrix).matrix
        expected = layout.subspace_dim(spec.exchange_targets(k))
        if matrix.shape != (expected, expected):
            raise DimensionMismatchError(
                f"Prover unitary for round {k + 1} has shape {matrix.shape}, expected {expected}"
            )
        checked.append(matrix)
    return tuple(checked)


@dataclass(frozen=True, eq=False)
class QIPProverSpec:
    """A forward prover: one unitary per prover round over (exchange, P).

    ``initial_state`` is the prover's starting state over (P,) for even m,
    or over the first exchange followed by P for odd m.
    """

    p_width: int
    unitaries: tuple[ComplexArray, ...]
    initial_state: ComplexArray | None = None

    def __post_init__(self) -> None:
        """Check the prover width."""
        if self.p_width < 1:
            raise InvalidParameterError("Prover register needs at least one qubit")
        object.__setattr__(self, "unitaries", tuple(self.unitaries))


@dataclass(frozen=True, eq=False)
class BackwardProver:
    """The prover's replies during a backward simulation, in the order they are used.

    ``unitaries`` answer the Reflection Test; ``invertibility_unitaries``
    answer the Invertibility Test and default to the same sequence.
    """

    p_width: int
    unitaries: tuple[ComplexArray, ...]
    invertibility_unitaries: tuple[ComplexArray, ...] | None = None

    def __post_init__(self) -> None:
        """Coerce the reply sequences."""
        object.__setattr__(self, "unitaries", tuple(self.unitaries))
        if self.invertibility_unitaries is not None:
            object.__setattr__(
                self, "invertibility_unitaries", tuple(self.invertibility_unitaries)
            )

    @property
    def branch_independent(self) -> bool:
        """Whether both tests receive the same replies."""
        other = self.invertibility_unitaries
        if other is None:
            return True
        return len(other) == len(self.unitaries) and all(
            np.array_equal(a, b) for a, b in zip(self.unitaries, other, strict=True)
        )

    def replies(self, test: str) -> tuple[ComplexArray, ...]:
        """Return the reply sequence for the Reflection or the Invertibility Test."""
        if test == INVERTIBILITY_TEST and self.invertibility_unitaries is not None:
            return self.invertibility_unitaries
        return self.unitaries


@dataclass(frozen=True, eq=False)
class CompositeSystem:
    """Q_x for a fixed verifier and prover, with M_x = Π_init Q_x† Π_acc Q_x Π_init."""

    q: ComplexArray
    init_projector: ComplexArray
    accept: ComplexArray
    layout: RegisterLayout

    @cached_property
    def m_operator(self) -> ComplexArray:
        """M_x."""
        pi = self.init_projector
        return pi @ self.q.conj().T @ self.accept @ self.q @ pi

    @property
    def max_acceptance(self) -> float:
        """Top eigenvalue of M_x: the best acceptance over legal initial states."""
        m = self.m_operator
        return float(np.clip(eig_hermitian((m + m.conj().T) / 2).top_value, 0.0, 1.0))

    def acceptance(self, state: StateVector) -> float:
        """Return ‖Π_acc Q_x ψ‖² for an initial state."""
        accepted = self.accept @ self.q @ state.amplitudes
        return float(np.vdot(accepted, accepted).real)


def init_projector(spec: QIPSystemSpec, p_width: int) -> ComplexArray:
    """Return Π_init: all-zero on every verifier register the prover does not prepare."""
    layout = spec.full_layout(p_width)
    mask = np.ones([2] * layout.n_qubits)
    constrained = [n for n in spec.layout.names if n not in spec.init_free]
    for axis in layout.qubit_indices(constrained):
        index: list[slice | int] = [slice(None)] * layout.n_qubits
        index[axis] = 1
        mask[tuple(index)] = 0.0
    return np.diag(mask.reshape(-1)).astype(np.complex128)


def _lift(p_width: int) -> Callable[[ComplexArray], ComplexArray]:
    identity = np.eye(1 << p_width, dtype=np.complex128)
    return lambda matrix: np.kron(matrix, identity)


def composite_unitary(spec: QIPSystemSpec, prover: QIPProverSpec) -> CompositeSystem:
    """Interleave prover and verifier unitaries into Q_x.

    Odd m: P_1, V_1, P_2, …, P_{r+1}, V_{r+1}. Even m: V_1, P_1, …, P_r, V_{r+1}.

    Raises:
        InvalidParameterError: If the prover has the wrong number of rounds.
        DimensionMismatchError: If a prover unitary does not fit its exchange.
    """
    unitaries = _check_prover_unitaries(
        spec, prover.p_width, prover.unitaries, range(spec.prover_rounds)
    )
    layout = spec.full_layout(prover.p_width)
    lift = _lift(prover.p_width)
    q = np.eye(layout.dim, dtype=np.complex128)

    def prover_move(k: int) -> ComplexArray:
        return embed_operator(unitaries[k], layout, spec.exchange_targets(k))

    if spec.odd:
        for k in range(spec.verifier_rounds):
            q = lift(spec.verifier_unitaries[k]) @ prover_move(k) @ q
    else:
        q = lift(spec.verifier_unitaries[0]) @ q
        for k in range(spec.prover_rounds):
            q = lift(spec.verifier_unitaries[k + 1]) @ prover_move(k) @ q
    return CompositeSystem(q, init_projector(spec, prover.p_width), lift(spec.accept), layout)


def initial_vector(spec: QIPSystemSpec, prover: QIPProverSpec) -> StateVector:
    """Place the prover's initial state in a legal initial state of the full layout."""
    layout = spec.full_layout(prover.p_width)
    vector = StateVector.zero(layout).amplitudes
    if prover.initial_state is not None:
        targets = [*spec.init_free, PROVER_REGISTER]
        vector = apply_local(vector, layout, targets, preparation_unitary(prover.initial_state))
    return StateVector(vector, layout)


def forward_acceptance(spec: QIPSystemSpec, prover: QIPProverSpec) -> float:
    """Return the acceptance of the original system with the prover's initial state."""
    return composite_unitary(spec, prover).acceptance(initial_vector(spec, prover))


def error_rescale(spec: QIPSystemSpec) -> QIPSystemSpec:
    """Damp acceptance or rejection so the bounds become ½ ± (c−s)/4.

    A private qubit ``D`` is rotated by W_a after the last verifier unitary,
    controlled on the decision. If c+s ≥ 1, acceptance is kept with
    probability 1/(c+s); otherwise rejection is kept with probability
    1/(2−c−s).

    Raises:
        InvalidParameterError: If c ≤ s.
    """
    c, s = spec.completeness, spec.soundness
    if c <= s:
        raise InvalidParameterError(f"Rescaling needs c > s, got c={c}, s={s}")
    layout = spec.layout.concat(RegisterLayout(((RESCALE_REGISTER, 1),)))
    accept, reject = spec.accept, np.eye(spec.layout.dim, dtype=np.complex128) - spec.accept
    identity = np.eye(2, dtype=np.complex128)
    if c + s >= 1.0:
        a = 1.0 / (c + s)
        damping = np.kron(accept, w_matrix(a)) + np.kron(reject, identity)
        new_accept = np.kron(accept, np.outer(KET_1, KET_1))
    else:
        a = 1.0 / (2.0 - c - s)
        damping = np.kron(reject, w_matrix(a)) + np.kron(accept, identity)
        new_accept = np.kron(accept, identity) + np.kron(reject, np.outer(KET_0, KET_0))
    unitaries = [np.kron(u, identity) for u in spec.verifier_unitaries]
    unitaries[-1] = damping @ unitaries[-1]
    gap = (c - s) / 4
    logger.info(
        "Rescaled '%s' with damping %.6f to (%.6f, %.6f)", spec.name, a, 0.5 + gap, 0.5 - gap
    )
    return QIPSystemSpec(
        spec.messages,
        tuple(unitaries),
        new_accept,
        layout,
        0.5 + gap,
        0.5 - gap,
        spec.message,
        spec.exchanges,
        f"rescaled({spec.name})",
    )


def rewindable_verifier(spec: QIPSystemSpec) -> QIPSystemSpec:
    """Add the qubit ``B``, sent in the last exchange, and require B = 1 to accept."""
    if spec.messages < 2:
        raise InvalidParameterError("Rewinding needs at least two messages")
    layout = spec.layout.concat(RegisterLayout(((REWIND_REGISTER, 1),)))
    identity = np.eye(2, dtype=np.complex128)
    exchanges = list(spec.exchanges)
    exchanges[-1] = (*exchanges[-1], REWIND_REGISTER)
    return QIPSystemSpec(
        spec.messages,
        tuple(np.kron(u, identity) for u in spec.verifier_unitaries),
        np.kron(spec.accept, np.outer(KET_1, KET_1)),
        layout,
        spec.completeness,
        spec.soundness,
        spec.message,
        tuple(exchanges),
        f"rewindable({spec.name})",
    )


@dataclass(frozen=True, eq=False)
class RewindableSystem:
    """A rewindable verifier with the honest prover's B rotation W_a, a = 1/(2 p_max)."""

    system: QIPSystemSpec
    p_max: float
    rotation: float = field(init=False)

    def __post_init__(self) -> None:
        """Derive the rotation parameter."""
        object.__setattr__(self, "rotation", min(1.0, 1.0 / (2.0 * self.p_max)))


def make_rewindable(
    spec: QIPSystemSpec, honest: QIPProverSpec
) -> tuple[RewindableSystem, QIPProverSpec]:
    """Make the system perfectly rewindable for the honest prover.

    Returns:
        The rewindable system and the honest prover augmented with W_a on B
        in its last round, whose maximum acceptance is exactly 1/2.

    Raises:
        PreconditionError: If the honest maximum acceptance is below 1/2.
    """
    p_max = composite_unitary(spec, honest).max_acceptance
    if p_max < 0.5 - TOLERANCE:
        raise PreconditionError(
            f"Honest prover on '{spec.name}' reaches only {p_max:.6f} < 1/2"
        )
    rewindable = RewindableSystem(rewindable_verifier(spec), p_max)
    last = spec.prover_rounds - 1
    old_exchange = spec.exchanges[last]
    local = RegisterLayout(
        (
            ("X", len(spec.layout.qubit_indices(old_exchange))),
            (REWIND_REGISTER, 1),
            (PROVER_REGISTER, honest.p_width),
        )
    )
    rotation = embed_operator(w_matrix(rewindable.rotation), local, [REWIND_REGISTER])
    unitaries = list(honest.unitaries)
    unitaries[last] = rotation @ embed_operator(unitaries[last], local, ["X", PROVER_REGISTER])
    logger.info("Rewinding '%s': p_max=%.6f rotation=%.6f", spec.name, p_max, rewindable.rotation)
    return rewindable, QIPProverSpec(honest.p_width, tuple(unitaries), honest.initial_state)


def backward_prover(spec: QIPSystemSpec, prover: QIPProverSpec) -> BackwardProver:
    """Return the honest backward prover: the inverses of the forward rounds, last first."""
    _check_prover_unitaries(spec, prover.p_width, prover.unitaries, range(spec.prover_rounds))
    return BackwardProver(
        prover.p_width, tuple(prover.unitaries[k].conj().T for k in spec.backward_rounds)
    )


def haar_backward_prover(
    spec: QIPSystemSpec, rng: np.random.Generator, p_width: int = 1
) -> BackwardProver:
    """Return a backward prover with a Haar-random reply each round."""
    layout = spec.full_layout(p_width)
    return BackwardProver(
        p_width,
        tuple(
            random_unitary(layout.subspace_dim(spec.exchange_targets(k)), rng)
            for k in spec.backward_rounds
        ),
    )


def _backward_sequence(spec: QIPSystemSpec, backward: BackwardProver) -> ComplexArray:
    replies = _check_prover_unitaries(
        spec, backward.p_width, backward.unitaries, spec.backward_rounds
    )
    layout = spec.full_layout(backward.p_width)
    lift = _lift(backward.p_width)
    sequence = np.eye(layout.dim, dtype=np.complex128)
    for reply, k in zip(replies, spec.backward_rounds, strict=True):
        undo = lift(spec.verifier_unitaries[spec.preceding_verifier(k)].conj().T)
        sequence = undo @ embed_operator(reply, layout, spec.exchange_targets(k)) @ sequence
    return sequence


def reflection_reduction(spec: QIPSystemSpec, backward: BackwardProver) -> ReflectionSpec:
    """Return the Modified Reflection Procedure instance the protocol reduces to.

    U is the inverse of the backward simulation, Δ₀ = Π_init and
    Π₀ = V_{r+1}† Π_acc V_{r+1}.

    Raises:
        InvalidParameterError: If the prover answers the two tests differently.
    """
    if not backward.branch_independent:
        raise InvalidParameterError("Test-dependent replies have no single reflection instance")
    lift = _lift(backward.p_width)
    last = lift(spec.verifier_unitaries[-1])
    u = _backward_sequence(spec, backward).conj().T
    pi0 = last.conj().T @ lift(spec.accept) @ last
    delta0 = init_projector(spec, backward.p_width)
    return ReflectionSpec.from_matrices(u, delta0, (pi0 + pi0.conj().T) / 2)


def honest_protocol_state(spec: QIPSystemSpec, prover: QIPProverSpec) -> StateVector:
    """Return U|φ*⟩, the optimal state the honest prover hands over."""
    reduction = reflection_reduction(spec, backward_prover(spec, prover))
    _, top = eigen_inputs(reduction)[0]
    layout = spec.full_layout(prover.p_width)
    return StateVector.normalized(reduction.u.matrix @ top.amplitudes, layout)


def _toss(state: StateVector) -> list[Branch]:
    branches = []
    for test, ket in ((REFLECTION_TEST, KET_0), (INVERTIBILITY_TEST, KET_1)):
        vector, layout = append_register(state.amplitudes, state.layout, COIN_REGISTER, 1, ket)
        branches.append(Branch(test, 0.5, StateVector(vector, layout)))
    return branches


def _test_of(state: StateVector) -> str:
    zero, _ = contract_registers(state.amplitudes, state.layout, [COIN_REGISTER], KET_0)
    return REFLECTION_TEST if np.vdot(zero, zero).real > 0.5 else INVERTIBILITY_TEST


def _unitary_step(label: str, targets: Sequence[str], matrix: ComplexArray) -> StepFunction:
    def run(state: StateVector) -> list[Branch]:
        vector = apply_local(state.amplitudes, state.layout, targets, matrix)
        return [Branch(label, 1.0, StateVector(vector, state.layout))]

    return run


def protocol_steps(spec: QIPSystemSpec, backward: BackwardProver) -> list[ProtocolStep]:
    """Return the perfect-completeness protocol as explicit steps.

    A coin step appends the ``coin`` register: 0 picks the Reflection Test, 1
    the Invertibility Test. The Reflection Test then applies V_{r+1}, the
    phase flip on acceptance and V_{r+1}†. Every backward round applies the
    prover's reply for the current test and then V_j† of the verifier move
    that preceded the round. The last step measures Π_init.

    Raises:
        InvalidParameterError: If a reply sequence has the wrong length.
        DimensionMismatchError: If a reply does not fit its exchange.
    """
    replies = {
        test: _check_prover_unitaries(
            spec, backward.p_width, backward.replies(test), spec.backward_rounds
        )
        for test in (REFLECTION_TEST, INVERTIBILITY_TEST)
    }
    verifier = list(spec.layout.names)
    last = spec.verifier_unitaries[-1]
    reflect_step = _unitary_step(
        "phase-flip", verifier, last.conj().T @ phase_flip(spec.accept) @ last
    )
    legal_projector = init_projector(spec, backward.p_width)

    def reflect(state: StateVector) -> list[Branch]:
        if _test_of(state) == REFLECTION_TEST:
            return reflect_step(state)
        return [Branch("skipped", 1.0, state)]

    def reply(position: int, k: int) -> StepFunction:
        by_test = {
            test: _unitary_step(test, spec.exchange_targets(k), sequence[position])
            for test, sequence in replies.items()
        }
        return lambda state: by_test[_test_of(state)](state)

    def decide(state: StateVector) -> list[Branch]:
        targets = [*verifier, PROVER_REGISTER]
        legal = apply_local(state.amplitudes, state.layout, targets, legal_projector)
        illegal = state.amplitudes - legal
        if _test_of(state) == REFLECTION_TEST:
            return [
                verdict_from("reflection:returned", legal, Verdict.REJECT),
                verdict_from("reflection:left", illegal, Verdict.ACCEPT),
            ]
        return [
            verdict_from("invertibility:legal", legal, Verdict.ACCEPT),
            verdict_from("invertibility:illegal", illegal, Verdict.REJECT),
        ]

    steps = [ProtocolStep("coin", _toss), ProtocolStep("reflection", reflect)]
    for position, k in enumerate(spec.backward_rounds):
        j = spec.preceding_verifier(k)
        undo = spec.verifier_unitaries[j].conj().T
        steps += [
            ProtocolStep(f"reply-{k + 1}", reply(position, k)),
            ProtocolStep(f"undo-V{j + 1}", _unitary_step("undone", verifier, undo)),
        ]
    steps.append(ProtocolStep("decide", decide))
    return steps


def perfect_completeness_protocol(
    spec: QIPSystemSpec,
    backward: BackwardProver,
    state: StateVector,
    monte_carlo: MonteCarlo | None = None,
) -> ProtocolOutcome:
    """Run the perfect-completeness protocol on a rewindable system.

    The prover hands over ``state`` on (verifier registers, P). A fair coin
    picks the Reflection Test (V_{r+1}, phase flip on acceptance, V_{r+1}†,
    backward rounds, reject on a legal initial state) or the Invertibility
    Test (backward rounds, accept on a legal initial state). For even m the
    legal initial states have every verifier register zero, adding one message.

    Args:
        spec: The rewindable system.
        backward: The prover's replies during the backward rounds.
        state: The state handed over by the prover.
        monte_carlo: Sample instead of enumerating when given.

    Raises:
        InvalidParameterError: If a reply sequence has the wrong length.
        DimensionMismatchError: If a reply or the state does not fit.
    """
    layout = spec.full_layout(backward.p_width)
    if state.layout.dim != layout.dim:
        raise DimensionMismatchError(f"Handed-over state does not match layout {layout}")
    steps = protocol_steps(spec, backward)
    outcome = run_steps(StateVector(state.amplitudes, layout), steps, monte_carlo)
    logger.info(
        "Perfect-completeness protocol on '%s': accept=%.12f reject=%.12f",
        spec.name,
        outcome.accept,
        outcome.reject,
    )
    return outcome


@dataclass(frozen=True)
class SoundnessCheck:
    """Reject probability of one prover against the (c−s)²/16 bound."""

    reject: float
    bound: float
    top_eigenvalue: float
    applicable: bool

    @property
    def epsilon(self) -> float:
        """½ minus the top eigenvalue of the reduced operator."""
        return 0.5 - self.top_eigenvalue

    @property
    def holds(self) -> bool:
        """Whether the bound holds; only meaningful when applicable."""
        return self.applicable and self.reject >= self.bound - TOLERANCE


def perfect_completeness_soundness_bound(
    spec: QIPSystemSpec,
    backward: BackwardProver,
    state: StateVector,
    c: float,
    s: float,
) -> SoundnessCheck:
    """Measure one prover's reject probability against (c−s)²/16.

    The bound applies when the prover answers both tests alike and its reduced
    operator has top eigenvalue at most ½ − (c−s)/4, which the original
    soundness guarantees. For test-dependent replies the top eigenvalue is
    that of the Reflection-Test replies and the bound is reported inapplicable.
    """
    reject = perfect_completeness_protocol(spec, backward, state).reject
    uniform = BackwardProver(backward.p_width, backward.unitaries)
    top = eigen_inputs(reflection_reduction(spec, uniform))[0][0]
    applicable = backward.branch_independent and top <= 0.5 - (c - s) / 4 + TOLERANCE
    if not applicable:
        logger.warning(
            "Soundness bound inapplicable on '%s': top eigenvalue %.6f, test-independent %s",
            spec.name,
            top,
            backward.branch_independent,
        )
    return SoundnessCheck(reject, (c - s) ** 2 / 16, top, applicable)


def controlled_rotation_system(
    a0: float,
    a1: float,
    messages: int = 3,
    completeness: float | None = None,
    soundness: float = 0.0,
) -> tuple[QIPSystemSpec, QIPProverSpec]:
    """Return a toy system accepting with probability a_M and its honest prover.

    The last verifier unitary rotates the private qubit ``V`` by W_{a0} or
    W_{a1} depending on ``M``; acceptance is V = 1, so the best prover reaches
    max(a0, a1). With an even message count the honest prover writes the
    better M value in its single round.
    """
    if messages not in (2, 3):
        raise InvalidParameterError(f"Toy systems have 2 or 3 messages, got {messages}")
    layout = RegisterLayout.of(V=1, M=1)
    accept = np.kron(np.outer(KET_1, KET_1), np.eye(2))
    identity = np.eye(4, dtype=np.complex128)
    unitaries = (identity, _controlled_rotation(a0, a1))
    best = max(a0, a1)
    spec = QIPSystemSpec(
        messages,
        unitaries,
        accept,
        layout,
        best if completeness is None else completeness,
        soundness,
        name=f"controlled-rotation({a0:g},{a1:g})",
    )
    choice = X if a1 >= a0 else np.eye(2)
    pick = np.kron(choice, np.eye(2)).astype(np.complex128)
    if messages == 3:
        prover = QIPProverSpec(1, (pick, np.eye(4)))
    else:
        prover = QIPProverSpec(1, (pick,))
    return spec, prover


def flip_system(
    a0: float, a1: float, completeness: float | None = None, soundness: float = 0.0
) -> tuple[QIPSystemSpec, QIPProverSpec]:
    """Return a 3-message toy where V_1 flips M and the honest prover flips it back."""
    layout = RegisterLayout.of(V=1, M=1)
    accept = np.kron(np.outer(KET_1, KET_1), np.eye(2))
    flip = np.kron(np.eye(2), X)
    spec = QIPSystemSpec(
        3,
        (flip, _controlled_rotation(a0, a1)),
        accept,
        layout,
        max(a0, a1) if completeness is None else completeness,
        soundness,
        name=f"flip({a0:g},{a1:g})",
    )
    pick = np.kron(X if a1 >= a0 else np.eye(2), np.eye(2)).astype(np.complex128)
    undo = np.kron(X, np.eye(2)).astype(np.complex128)
    return spec, QIPProverSpec(1, (pick, undo))


QIP_TOYS: dict[str, Callable[..., tuple[QIPSystemSpec, QIPProverSpec]]] = {
    "controlled-rotation": controlled_rotation_system,
    "flip": flip_system,
}

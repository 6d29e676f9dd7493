"""QMA verifiers, acceptance operators, distillation and CJ teleportation."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from itertools import product

import numpy as np

from qproof_sim.gates import (
    BellOutcome,
    H,
    I2,
    X,
    bell_measurement,
    chi_vector,
    named_gate,
    w_matrix,
)
from qproof_sim.quantum_core import (
    TOLERANCE,
    ZERO_PROBABILITY,
    ComplexArray,
    HermitianOperator,
    InvalidParameterError,
    InvalidStateError,
    Projector,
    RegisterLayout,
    StateVector,
    UnitaryOperator,
    apply_local,
    eig_hermitian,
    embed_operator,
)

logger = logging.getLogger(__name__)

NAMED_ACCEPT_PROJECTORS = ("a-all-one", "a-first-one")


def _zero_projector(width: int) -> ComplexArray:
    projector = np.zeros((1 << width, 1 << width), dtype=np.complex128)
    projector[0, 0] = 1.0
    return projector


def qubit_layout(a_width: int, m_width: int) -> RegisterLayout:
    """Return the per-qubit layout ``A0..A{v-1}, M0..M{m-1}`` used by gate lists."""
    names = [(f"A{i}", 1) for i in range(a_width)]
    names += [(f"M{i}", 1) for i in range(m_width)]
    return RegisterLayout(tuple(names))


def pattern_projector(patterns: Sequence[str], n_qubits: int) -> ComplexArray:
    """Return the projector onto basis states matching any ``0/1/*`` pattern.

    Raises:
        InvalidParameterError: If a pattern has the wrong length or characters.
    """
    diagonal = np.zeros(1 << n_qubits)
    for pattern in patterns:
        pattern = pattern.replace(" ", "")
        if len(pattern) != n_qubits or set(pattern) - {"0", "1", "*"}:
            raise InvalidParameterError(
                f"Accept pattern '{pattern}' does not describe {n_qubits} qubits"
            )
        choices = [("0", "1") if c == "*" else (c,) for c in pattern]
        for bits in product(*choices):
            diagonal[int("".join(bits), 2)] = 1.0
    return np.diag(diagonal).astype(np.complex128)


@dataclass(frozen=True, eq=False)
class VerifierCircuit:
    """A QMA verifier: unitary and accept projector over (A, M).

    ``A`` is the private register initialized to all-zero, ``M`` holds the
    witness; ``A`` is the more significant block of qubits.
    """

    unitary: ComplexArray
    accept: ComplexArray
    a_width: int
    m_width: int
    name: str = "verifier"

    def __post_init__(self) -> None:
        """Check unitarity, the projector and the register partition."""
        unitary = UnitaryOperator(self.unitary).matrix
        accept = Projector(self.accept).matrix
        object.__setattr__(self, "unitary", unitary)
        object.__setattr__(self, "accept", accept)
        if unitary.shape != (self.layout.dim, self.layout.dim) or accept.shape != unitary.shape:
            raise InvalidParameterError(
                f"Verifier '{self.name}' operators do not match layout {self.layout}"
            )

    @property
    def layout(self) -> RegisterLayout:
        """The (A, M) layout."""
        return RegisterLayout.of(A=self.a_width, M=self.m_width)

    @property
    def pi_init(self) -> ComplexArray:
        """Projector onto A = |0…0⟩."""
        return np.kron(_zero_projector(self.a_width), np.eye(1 << self.m_width))

    @property
    def pi_reject(self) -> ComplexArray:
        """Π_rej = I − Π_acc."""
        return np.eye(self.layout.dim, dtype=np.complex128) - self.accept

    @classmethod
    def from_gates(
        cls,
        a_width: int,
        m_width: int,
        gates: Sequence[tuple[ComplexArray, Sequence[str]]],
        accept: Sequence[str] | str,
        name: str = "verifier",
    ) -> VerifierCircuit:
        """Compose a verifier from gates on named qubits.

        Args:
            a_width: Qubits in A.
            m_width: Qubits in M.
            gates: ``(matrix, targets)`` pairs applied in order; targets are
                qubit names ``A0``, ``M1``, … or ``A``/``M`` for one-qubit
                registers.
            accept: Accept patterns over the A then M bits, or the name of a
                projector from ``NAMED_ACCEPT_PROJECTORS``.
            name: Label used in logs and reports.

        Returns:
            The verifier.
        """
        layout = qubit_layout(a_width, m_width)
        unitary = np.eye(layout.dim, dtype=np.complex128)
        for matrix, targets in gates:
            qubits = [_qubit_name(t, a_width, m_width) for t in targets]
            gate = np.asarray(matrix, dtype=np.complex128)
            unitary = embed_operator(gate, layout, qubits) @ unitary
        if isinstance(accept, str):
            accept_matrix = named_accept_projector(accept, a_width, m_width)
        else:
            accept_matrix = pattern_projector(accept, a_width + m_width)
        return cls(unitary, accept_matrix, a_width, m_width, name)


def _qubit_name(target: str, a_width: int, m_width: int) -> str:
    if target == "A" and a_width == 1:
        return "A0"
    if target == "M" and m_width == 1:
        return "M0"
    return target


def named_accept_projector(name: str, a_width: int, m_width: int) -> ComplexArray:
    """Return a named accept projector over (A, M).

    Raises:
        InvalidParameterError: For unknown names.
    """
    if name == "a-all-one":
        pattern = "1" * a_width + "*" * m_width
    elif name == "a-first-one":
        pattern = "1" + "*" * (a_width - 1 + m_width)
    else:
        raise InvalidParameterError(
            f"Unknown accept projector '{name}'; known: {list(NAMED_ACCEPT_PROJECTORS)}"
        )
    return pattern_projector([pattern], a_width + m_width)


@dataclass(frozen=True, eq=False)
class HonestWitnessParams:
    """Optimal witness and the honest prover's CJ parameter.

    ``q`` is ``None`` when p_x < 1/2: no q in [0, 1] makes pq equal 1/2.
    """

    p_x: float
    p: float
    q: float | None
    witness: StateVector

    @property
    def q_exists(self) -> bool:
        """Whether an honest CJ parameter exists."""
        return self.q is not None


@dataclass(frozen=True, eq=False)
class DistillationOutcome:
    """Result of the distillation step; the failure branch is the ⊥ output."""

    success_probability: float
    success_state: StateVector | None
    failure_probability: float
    failure_state: StateVector | None = None

    def __post_init__(self) -> None:
        """Check normalization."""
        total = self.success_probability + self.failure_probability
        if abs(total - 1.0) > TOLERANCE:
            raise InvalidParameterError(f"Distillation probabilities sum to {total:.12f}")


def accept_operator(v: VerifierCircuit) -> HermitianOperator:
    """Return M_x = Π_init V† Π_acc V Π_init."""
    pi = v.pi_init
    return HermitianOperator(pi @ v.unitary.conj().T @ v.accept @ v.unitary @ pi)


def honest_cj_parameters(p_x: float) -> tuple[float, float | None]:
    """Return (p, q) with p = p_x²/(2p_x²−2p_x+1) and q = 1/(2p) when p_x ≥ 1/2."""
    p_x = float(np.clip(p_x, 0.0, 1.0))
    p = p_x**2 / (2 * p_x**2 - 2 * p_x + 1)
    if p_x < 0.5 - TOLERANCE:
        return p, None
    return p, min(1.0, 1.0 / (2 * p))


def max_accept(v: VerifierCircuit) -> HonestWitnessParams:
    """Return the maximum acceptance probability and its optimal witness.

    The top eigenpair is taken on the M-block with A fixed to |0…0⟩, where
    every eigenvector of M_x with nonzero eigenvalue lives.
    """
    dm = 1 << v.m_width
    block = (v.unitary.conj().T @ v.accept @ v.unitary)[:dm, :dm]
    decomposition = eig_hermitian(HermitianOperator((block + block.conj().T) / 2))
    p_x = float(np.clip(decomposition.top_value, 0.0, 1.0))
    p, q = honest_cj_parameters(p_x)
    witness = StateVector.normalized(decomposition.top_vector, RegisterLayout.of(M=v.m_width))
    if q is None:
        logger.info("Verifier '%s' has p_x=%.6f < 1/2; no honest q exists", v.name, p_x)
    return HonestWitnessParams(p_x, p, q, witness)


def chi_state(p: float, register: str = "R") -> StateVector:
    """Return χ_p = √(1−p)|0⟩ + √p|1⟩ on a one-qubit register."""
    return StateVector(chi_vector(p), RegisterLayout(((register, 1),)))


def distillation_unitary(v: VerifierCircuit) -> ComplexArray:
    """Return (I⊗V†)(X⊗Π_acc + I⊗Π_rej)(I⊗V) over (R, A, M)."""
    lifted = np.kron(I2, v.unitary)
    flip = np.kron(X, v.accept) + np.kron(I2, v.pi_reject)
    return lifted.conj().T @ flip @ lifted


def distillation_vectors(
    v: VerifierCircuit,
    vector: ComplexArray,
    layout: RegisterLayout,
    registers: tuple[str, str, str] = ("R", "A", "M"),
) -> tuple[ComplexArray, ComplexArray]:
    """Return the unnormalized (success, ⊥) vectors of distillation on a larger state."""
    r, a, _ = registers
    if layout.width(r) != 1:
        raise InvalidParameterError(f"Distillation register '{r}' must be one qubit")
    vector = apply_local(vector, layout, list(registers), distillation_unitary(v))
    success = apply_local(vector, layout, [a], _zero_projector(layout.width(a)))
    return success, vector - success


def distillation(
    v: VerifierCircuit,
    state: StateVector,
    registers: tuple[str, str, str] = ("R", "A", "M"),
) -> DistillationOutcome:
    """Run the distillation procedure.

    Applies V, flips R on the accepting subspace, applies V† and measures A;
    the all-zero outcome is success, anything else outputs ⊥.

    Args:
        v: The verifier.
        state: State containing the R, A and M registers.
        registers: Names of (R, A, M) in ``state``'s layout.

    Returns:
        Success and ⊥ probabilities with their normalized post-states.
    """
    success, failure = distillation_vectors(v, state.amplitudes, state.layout, registers)
    p_success = float(np.vdot(success, success).real)
    p_failure = float(np.vdot(failure, failure).real)
    logger.debug("Distillation with '%s': success %.12f", v.name, p_success)
    return DistillationOutcome(
        p_success,
        StateVector.normalized(success, state.layout) if p_success > ZERO_PROBABILITY else None,
        p_failure,
        StateVector.normalized(failure, state.layout) if p_failure > ZERO_PROBABILITY else None,
    )


def distillation_input(v: VerifierCircuit, witness: StateVector) -> StateVector:
    """Return |0⟩_R ⊗ |0…0⟩_A ⊗ witness over (R, A, M)."""
    if witness.layout.dim != 1 << v.m_width:
        raise InvalidStateError("Witness does not match the verifier's M register")
    head = np.zeros(2 << v.a_width, dtype=np.complex128)
    head[0] = 1.0
    layout = RegisterLayout.of(R=1, A=v.a_width, M=v.m_width)
    return StateVector(np.kron(head, witness.amplitudes), layout)


@dataclass(frozen=True, eq=False)
class TeleportBranch:
    """One Bell outcome of a CJ teleportation."""

    outcome: BellOutcome
    probability: float
    state: StateVector | None

    @property
    def success(self) -> bool:
        """The Φ+ outcome is the successful simulation."""
        return self.outcome is BellOutcome.PHI_PLUS


def teleport_apply(
    state: StateVector, target: str, cj: tuple[str, str]
) -> list[TeleportBranch]:
    """Apply the unitary encoded in a CJ pair to ``target`` by teleportation.

    Bell-measures ``(target, cj[0])``; on Φ+ the second CJ register holds
    W applied to the target's former content.

    Returns:
        Four branches; post-states live on the remaining registers.
    """
    return [
        TeleportBranch(branch.outcome, branch.probability, branch.state)
        for branch in bell_measurement(state, (target, cj[0]))
    ]


def cnot_verifier() -> VerifierCircuit:
    """Accept iff the witness is |1⟩ (p_x = 1)."""
    return VerifierCircuit.from_gates(1, 1, [(named_gate("CNOT"), ["M", "A"])], ["1*"], "cnot")


def hadamard_coin_verifier() -> VerifierCircuit:
    """Accept on a fair coin, ignoring the witness (p_x = 1/2)."""
    return VerifierCircuit.from_gates(1, 1, [(H, ["A"])], ["1*"], "hadamard-coin")


def rotation_verifier(theta: float) -> VerifierCircuit:
    """Apply W_θ to A and accept on |1⟩ (p_x = θ for every witness)."""
    return VerifierCircuit.from_gates(
        1, 1, [(w_matrix(theta), ["A"])], ["1*"], f"rotation({theta:g})"
    )


def controlled_rotation_verifier(theta: float) -> VerifierCircuit:
    """Apply W_θ to A when M is |1⟩; p_x = θ with the unique witness |1⟩."""
    controlled = np.kron(np.diag([1, 0]), I2) + np.kron(np.diag([0, 1]), w_matrix(theta))
    return VerifierCircuit.from_gates(
        1, 1, [(controlled, ["M", "A"])], ["1*"], f"controlled-rotation({theta:g})"
    )


def product_verifier(p: float, q: float) -> VerifierCircuit:
    """Apply W_p and W_q to two A qubits and accept on |11⟩ (p_x = pq)."""
    return VerifierCircuit.from_gates(
        2,
        1,
        [(w_matrix(p), ["A0"]), (w_matrix(q), ["A1"])],
        "a-all-one",
        f"product({p:g},{q:g})",
    )


def never_accept_verifier() -> VerifierCircuit:
    """Reject every witness (p_x = 0)."""
    return VerifierCircuit.from_gates(1, 1, [], ["1*"], "never-accept")


VerifierFactory = Callable[..., VerifierCircuit]

# Singleton instance for the toy verifier catalog
_verifier_catalog: dict[str, VerifierFactory] | None = None


def get_verifier_catalog() -> dict[str, VerifierFactory]:
    """Get or create the toy verifier catalog.

    Returns:
        Catalog name to factory; factories take the parameters listed in
        ``CATALOG_PARAMETERS``.
    """
    global _verifier_catalog
    if _verifier_catalog is None:
        _verifier_catalog = {
            "cnot": cnot_verifier,
            "hadamard-coin": hadamard_coin_verifier,
            "rotation": rotation_verifier,
            "controlled-rotation": controlled_rotation_verifier,
            "product": product_verifier,
            "never-accept": never_accept_verifier,
        }
    return _verifier_catalog


CATALOG_PARAMETERS: dict[str, tuple[str, ...]] = {
    "cnot": (),
    "hadamard-coin": (),
    "rotation": ("theta",),
    "controlled-rotation": ("theta",),
    "product": ("p", "q"),
    "never-accept": (),
}


def build_catalog_verifier(name: str, params: Mapping[str, float] | None = None) -> VerifierCircuit:
    """Instantiate a catalog verifier.

    Raises:
        InvalidParameterError: For unknown names or missing parameters.
    """
    catalog = get_verifier_catalog()
    if name not in catalog:
        raise InvalidParameterError(f"Unknown verifier '{name}'; known: {sorted(catalog)}")
    params = dict(params or {})
    needed = CATALOG_PARAMETERS[name]
    missing = [key for key in needed if key not in params]
    if missing:
        raise InvalidParameterError(f"Verifier '{name}' needs parameters {missing}")
    return catalog[name](*(float(params[key]) for key in needed))

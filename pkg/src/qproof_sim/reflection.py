"""Reflection Procedure, Reflection Simulation Test, Modified Reflection Procedure.

Each procedure is a list of :class:`~qproof_sim.outcome.ProtocolStep` run by
the branch engine, so the same code serves exact enumeration and Monte Carlo
sampling. Phase flips are applied as the matrix −Π₀ + Π₁; a gate-level
realization would use an ancilla in |−⟩ and a CNOT.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from qproof_sim.gates import (
    BELL_VECTORS,
    CZ,
    KET_0,
    KET_1,
    T_MATRIX,
    BellOutcome,
    WSign,
    phase_flip,
    w_matrix,
)
from qproof_sim.outcome import (
    Branch,
    MonteCarlo,
    ProtocolOutcome,
    ProtocolStep,
    Verdict,
    branch_from,
    mix_outcomes,
    run_steps,
    verdict_from,
)
from qproof_sim.quantum_core import (
    TOLERANCE,
    ComplexArray,
    DensityOperator,
    DimensionMismatchError,
    HermitianOperator,
    InvalidParameterError,
    Projector,
    RealArray,
    RegisterLayout,
    StateVector,
    UnitaryOperator,
    append_register,
    apply_local,
    contract_registers,
    eig_hermitian,
    maximize_over_states,
)

logger = logging.getLogger(__name__)

RST_REGISTERS = ("R1", "R2", "S1", "S1p", "S2", "S2p")
DEFAULT_SOUNDNESS_SAMPLES = 100
BELL_ORDER = (
    BellOutcome.PHI_PLUS,
    BellOutcome.PHI_MINUS,
    BellOutcome.PSI_PLUS,
    BellOutcome.PSI_MINUS,
)


@dataclass(frozen=True, eq=False)
class ReflectionSpec:
    """The triple (U, Δ₀, Π₀) driving the reflection procedures.

    Δ₀ is the legal-initial subspace and Π₀ the phase-flipped subspace.
    """

    u: UnitaryOperator
    delta0: Projector
    pi0: Projector

    def __post_init__(self) -> None:
        """Check that all operators share one dimension."""
        dims = {self.u.matrix.shape[0], self.delta0.dim, self.pi0.dim}
        if len(dims) != 1:
            raise DimensionMismatchError(f"Reflection operators have dimensions {dims}")

    @classmethod
    def from_matrices(
        cls, u: ComplexArray, delta0: ComplexArray, pi0: ComplexArray
    ) -> ReflectionSpec:
        """Wrap raw matrices, validating each role."""
        return cls(UnitaryOperator(u), Projector(delta0), Projector(pi0))

    @property
    def dim(self) -> int:
        """Hilbert space dimension."""
        return self.delta0.dim

    @property
    def layout(self) -> RegisterLayout:
        """A single register ``Q`` spanning the space."""
        return RegisterLayout.of(Q=self.dim.bit_length() - 1)

    @property
    def delta1(self) -> ComplexArray:
        """Δ₁ = I − Δ₀."""
        return self.delta0.complement.matrix

    @property
    def pi1(self) -> ComplexArray:
        """Π₁ = I − Π₀."""
        return self.pi0.complement.matrix

    @cached_property
    def flip(self) -> ComplexArray:
        """The phase flip −Π₀ + Π₁."""
        return phase_flip(self.pi0.matrix)

    @cached_property
    def m_operator(self) -> HermitianOperator:
        """M = Δ₀U†Π₀UΔ₀."""
        d, u = self.delta0.matrix, self.u.matrix
        return HermitianOperator(d @ u.conj().T @ self.pi0.matrix @ u @ d)

    @cached_property
    def v_operator(self) -> ComplexArray:
        """V = U†(−Π₀ + Π₁)."""
        return self.u.matrix.conj().T @ self.flip


def product_spec(
    p: float, q: float, sign_p: WSign | str = WSign.PLUS, sign_q: WSign | str = WSign.PLUS
) -> ReflectionSpec:
    """Return (W_p⊗W_q, |00⟩⟨00|, |11⟩⟨11|); M has top eigenvalue pq."""
    u = np.kron(w_matrix(p, sign_p), w_matrix(q, sign_q))
    delta0 = np.zeros((4, 4), dtype=np.complex128)
    delta0[0, 0] = 1.0
    pi0 = np.zeros((4, 4), dtype=np.complex128)
    pi0[3, 3] = 1.0
    return ReflectionSpec.from_matrices(u, delta0, pi0)


def two_level_spec(a0: float, a1: float) -> ReflectionSpec:
    """Return a spec whose M has eigenvalues {a0, a1} on a two-dimensional Δ₀.

    The second qubit selects W_{a0} or W_{a1} on the first; Δ₀ fixes the
    first qubit to |0⟩ and Π₀ to |1⟩.
    """
    zero, one = np.outer(KET_0, KET_0), np.outer(KET_1, KET_1)
    u = np.kron(w_matrix(a0), zero) + np.kron(w_matrix(a1), one)
    return ReflectionSpec.from_matrices(u, np.kron(zero, np.eye(2)), np.kron(one, np.eye(2)))


def eigen_inputs(spec: ReflectionSpec) -> list[tuple[float, StateVector]]:
    """Return the eigenpairs of M restricted to the range of Δ₀, descending."""
    values, vectors = np.linalg.eigh(spec.delta0.matrix)
    basis = vectors[:, values > 0.5]
    restricted = basis.conj().T @ spec.m_operator.matrix @ basis
    decomposition = eig_hermitian((restricted + restricted.conj().T) / 2)
    return [
        (value, StateVector.normalized(basis @ vector, spec.layout))
        for value, vector in decomposition.pairs()
    ]


def _check_input(spec: ReflectionSpec, state: StateVector | DensityOperator) -> None:
    if state.layout.dim != spec.dim:
        raise DimensionMismatchError(
            f"Input dimension {state.layout.dim} does not match spec dimension {spec.dim}"
        )


def _by_linearity(
    state: StateVector | DensityOperator,
    run: Callable[[StateVector], ProtocolOutcome],
) -> ProtocolOutcome:
    if isinstance(state, StateVector):
        return run(state)
    return mix_outcomes([(weight, run(pure)) for weight, pure in state.eigen_ensemble()])


def reflection_steps(spec: ReflectionSpec) -> list[ProtocolStep]:
    """Return the two steps of the Reflection Procedure."""

    def legal_initial(state: StateVector) -> list[Branch]:
        inside = spec.delta0.matrix @ state.amplitudes
        return [
            verdict_from("illegal-initial", state.amplitudes - inside, Verdict.REJECT),
            branch_from("legal-initial", inside, state.layout),
        ]

    def reflect(state: StateVector) -> list[Branch]:
        u = spec.u.matrix
        reflected = u.conj().T @ (spec.flip @ (u @ state.amplitudes))
        returned = spec.delta0.matrix @ reflected
        return [
            verdict_from("returned", returned, Verdict.REJECT),
            verdict_from("left", reflected - returned, Verdict.ACCEPT),
        ]

    return [ProtocolStep("legal-initial", legal_initial), ProtocolStep("reflect", reflect)]


def reflection_procedure(
    spec: ReflectionSpec,
    state: StateVector | DensityOperator,
    monte_carlo: MonteCarlo | None = None,
) -> ProtocolOutcome:
    """Run the Reflection Procedure.

    Rejects on Δ₁, then applies U, the phase flip and U†, and rejects on Δ₀.
    An eigenvector of M with eigenvalue λ is rejected with probability
    (1 − 2λ)².

    Args:
        spec: The reflection triple.
        state: Input state of the spec's dimension.
        monte_carlo: Sample instead of enumerating when given.

    Returns:
        The outcome; checkpoints hold the state entering each step.
    """
    _check_input(spec, state)
    steps = reflection_steps(spec)
    return _by_linearity(
        state, lambda pure: run_steps(pure, steps, monte_carlo, keep_states=True)
    )


@dataclass(frozen=True)
class SoundnessReport:
    """Result of a reflection soundness check."""

    applicable: bool
    epsilon: float
    bound: float
    min_eigen_reject: float | None = None
    min_random_reject: float | None = None

    @property
    def min_reject(self) -> float | None:
        """Smallest reject probability observed."""
        observed = [v for v in (self.min_eigen_reject, self.min_random_reject) if v is not None]
        return min(observed) if observed else None

    @property
    def holds(self) -> bool:
        """Whether every observed reject probability meets the bound."""
        return self.applicable and self.min_reject is not None and (
            self.min_reject >= self.bound - TOLERANCE
        )


def gap_applicable(eigenvalues: Sequence[float], epsilon: float) -> bool:
    """Return whether no eigenvalue lies in the open interval (½−ε, ½+ε)."""
    return all(abs(value - 0.5) >= epsilon - TOLERANCE for value in eigenvalues)


def check_reflection_soundness(
    spec: ReflectionSpec,
    epsilon: float,
    rng: np.random.Generator | None = None,
    samples: int = DEFAULT_SOUNDNESS_SAMPLES,
) -> SoundnessReport:
    """Check that the Reflection Procedure rejects with probability ≥ 4ε².

    Args:
        spec: The reflection triple.
        epsilon: Spectral gap of M around 1/2.
        rng: Generator for the random Δ₀-supported inputs.
        samples: Number of random inputs.

    Returns:
        The report; ``applicable`` is False when M has an eigenvalue inside
        (½−ε, ½+ε), in which case nothing is simulated.
    """
    if not 0.0 < epsilon <= 0.5:
        raise InvalidParameterError(f"epsilon={epsilon} outside (0, 1/2]")
    bound = 4 * epsilon**2
    pairs = eigen_inputs(spec)
    if not gap_applicable([value for value, _ in pairs], epsilon):
        logger.warning("Reflection soundness check inapplicable at epsilon=%g", epsilon)
        return SoundnessReport(False, epsilon, bound)
    eigen_reject = min(reflection_procedure(spec, state).reject for _, state in pairs)
    rng = rng or np.random.default_rng()
    random_reject = None
    if samples > 0:
        basis = np.column_stack([state.amplitudes for _, state in pairs])
        coefficients = rng.normal(size=(basis.shape[1], samples)) + 1j * rng.normal(
            size=(basis.shape[1], samples)
        )
        random_reject = min(
            reflection_procedure(
                spec, StateVector.normalized(basis @ coefficients[:, k], spec.layout)
            ).reject
            for k in range(samples)
        )
    return SoundnessReport(True, epsilon, bound, eigen_reject, random_reject)


def _rst_prepare(state: StateVector) -> list[Branch]:
    vector, layout = state.amplitudes, state.layout
    vector = apply_local(vector, layout, ["S1", "S1p"], T_MATRIX)
    vector, layout = append_register(vector, layout, "R2p")
    vector = apply_local(vector, layout, ["R1", "S1"], CZ)
    vector = apply_local(vector, layout, ["R2", "R2p"], T_MATRIX.conj().T)
    return [branch_from("prepared", vector, layout)]


def _rst_bell(state: StateVector) -> list[Branch]:
    branches = []
    for r_outcome in BELL_ORDER:
        r_rest, r_layout = contract_registers(
            state.amplitudes, state.layout, ["R1", "R2"], BELL_VECTORS[r_outcome]
        )
        assert r_layout is not None
        for s_outcome in BELL_ORDER:
            rest, layout = contract_registers(
                r_rest, r_layout, ["S1", "S2"], BELL_VECTORS[s_outcome]
            )
            assert layout is not None
            label = f"bell:{r_outcome.value},{s_outcome.value}"
            if r_outcome is BellOutcome.PHI_PLUS and s_outcome is BellOutcome.PHI_PLUS:
                branches.append(branch_from(label, rest, layout))
            else:
                branches.append(verdict_from(label, rest, Verdict.GIVE_UP))
    return branches


def _rst_decide(state: StateVector) -> list[Branch]:
    zero_zero = np.zeros((4, 4), dtype=np.complex128)
    zero_zero[0, 0] = 1.0
    rejected = apply_local(state.amplitudes, state.layout, ["R2p", "S2p"], zero_zero)
    return [
        verdict_from("R2p,S2p=00", rejected, Verdict.REJECT),
        verdict_from("R2p,S2p!=00", state.amplitudes - rejected, Verdict.ACCEPT),
    ]


def rst_steps() -> list[ProtocolStep]:
    """Return the Reflection Simulation Test as protocol steps.

    The steps work on any layout that contains ``RST_REGISTERS``.
    """
    return [
        ProtocolStep("rst-prepare", _rst_prepare),
        ProtocolStep("rst-bell", _rst_bell),
        ProtocolStep("rst-decide", _rst_decide),
    ]


def reflection_simulation_test(
    state: StateVector | DensityOperator,
    monte_carlo: MonteCarlo | None = None,
    strict: bool = True,
) -> ProtocolOutcome:
    """Run the Reflection Simulation Test on (R₁, R₂, S₁, S′₁, S₂, S′₂).

    T on (S₁,S′₁), fresh R′₂, phase flip on (R₁,S₁)=11, T† on (R₂,R′₂), Bell
    measurements on (R₁,R₂) and (S₁,S₂). Any non-Φ+ outcome gives up and
    accepts; otherwise reject iff (R′₂,S′₂) is 00.

    Args:
        state: State over the six single-qubit registers ``RST_REGISTERS``.
        monte_carlo: Sample instead of enumerating when given.
        strict: Reject layouts carrying registers beyond the six.

    Returns:
        Exact accept, give-up-accept and reject probabilities.

    Raises:
        InvalidParameterError: On a wrong register count or width.
    """
    names = set(state.layout.names)
    missing = [name for name in RST_REGISTERS if name not in names]
    if missing or (strict and len(names) != len(RST_REGISTERS)):
        raise InvalidParameterError(
            f"Reflection Simulation Test needs registers {RST_REGISTERS}, got {state.layout}"
        )
    for name in RST_REGISTERS:
        if state.layout.width(name) != 1:
            raise InvalidParameterError(f"Register '{name}' must be a single qubit")
    steps = rst_steps()
    return _by_linearity(state, lambda pure: run_steps(pure, steps, monte_carlo))


def _coin(state: StateVector) -> list[Branch]:
    heads, layout = append_register(state.amplitudes, state.layout, "coin", 1, KET_1)
    tails, _ = append_register(state.amplitudes, state.layout, "coin", 1, KET_0)
    return [
        Branch("heads", 0.5, StateVector(heads, layout)),
        Branch("tails", 0.5, StateVector(tails, layout)),
    ]


def mrp_steps(spec: ReflectionSpec) -> list[ProtocolStep]:
    """Return the Modified Reflection Procedure as a coin step and a test step."""

    def test(state: StateVector) -> list[Branch]:
        heads, _ = contract_registers(state.amplitudes, state.layout, ["coin"], KET_1)
        tails, _ = contract_registers(state.amplitudes, state.layout, ["coin"], KET_0)
        branches = []
        if np.vdot(heads, heads).real > 0.5:
            reflected = spec.v_operator @ heads
            returned = spec.delta0.matrix @ reflected
            branches += [
                verdict_from("reflection:returned", returned, Verdict.REJECT),
                verdict_from("reflection:left", reflected - returned, Verdict.ACCEPT),
            ]
        else:
            rewound = spec.u.matrix.conj().T @ tails
            legal = spec.delta0.matrix @ rewound
            branches += [
                verdict_from("invertibility:legal", legal, Verdict.ACCEPT),
                verdict_from("invertibility:illegal", rewound - legal, Verdict.REJECT),
            ]
        return branches

    return [ProtocolStep("coin", _coin), ProtocolStep("test", test)]


def modified_reflection_procedure(
    spec: ReflectionSpec,
    state: StateVector | DensityOperator,
    monte_carlo: MonteCarlo | None = None,
) -> ProtocolOutcome:
    """Run the Modified Reflection Procedure.

    A fair coin chooses the Reflection Test (phase flip, U†, reject on Δ₀) or
    the Invertibility Test (U†, accept on Δ₀).
    """
    _check_input(spec, state)
    steps = mrp_steps(spec)
    return _by_linearity(state, lambda pure: run_steps(pure, steps, monte_carlo))


def mrp_acceptance_batch(spec: ReflectionSpec, states: ComplexArray) -> RealArray:
    """Return MRP acceptance for each column of ``states`` by direct simulation."""
    reflected = spec.v_operator @ states
    left = reflected - spec.delta0.matrix @ reflected
    legal = spec.delta0.matrix @ (spec.u.matrix.conj().T @ states)
    return 0.5 * (np.sum(np.abs(left) ** 2, axis=0) + np.sum(np.abs(legal) ** 2, axis=0))


def mrp_max_accept(spec: ReflectionSpec) -> float:
    """Return the top eigenvalue of ½(V†Δ₁V + UΔ₀U†), the supremum MRP acceptance."""
    v, u = spec.v_operator, spec.u.matrix
    operator = 0.5 * (v.conj().T @ spec.delta1 @ v + u @ spec.delta0.matrix @ u.conj().T)
    return float(np.clip(eig_hermitian((operator + operator.conj().T) / 2).top_value, 0.0, 1.0))


def random_search_max_accept(
    spec: ReflectionSpec, rng: np.random.Generator, samples: int = 10_000
) -> float:
    """Estimate the supremum MRP acceptance by random search and local refinement."""
    value, _ = maximize_over_states(
        lambda batch: mrp_acceptance_batch(spec, batch), spec.dim, rng, samples
    )
    return value

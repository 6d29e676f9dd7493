"""Named gates and states: W_a, Bell and Choi-Jamiołkowski states, T, swap test.

Simulation is exact, so every gate is an explicit matrix. The exact-gate-set
realizations (ancilla-based phase flips, Shor-basis rotations) are not
modelled.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from functools import reduce

import numpy as np

from qproof_sim.quantum_core import (
    ZERO_PROBABILITY,
    ComplexArray,
    DimensionMismatchError,
    InvalidOperatorError,
    InvalidParameterError,
    RegisterLayout,
    StateVector,
    UnitaryOperator,
    apply_local,
    contract_registers,
)

logger = logging.getLogger(__name__)

SQRT_HALF = 1 / np.sqrt(2)

I2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
H = np.array([[1, 1], [1, -1]], dtype=np.complex128) * SQRT_HALF
S = np.array([[1, 0], [0, 1j]], dtype=np.complex128)
CNOT = np.array(  # control on the first qubit
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)
CZ = np.diag([1, 1, 1, -1]).astype(np.complex128)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=np.complex128
)
TOFFOLI = np.eye(8, dtype=np.complex128)[[0, 1, 2, 3, 4, 5, 7, 6]]

KET_0 = np.array([1, 0], dtype=np.complex128)
KET_1 = np.array([0, 1], dtype=np.complex128)


class BellOutcome(str, Enum):
    """Outcomes of a measurement in the Bell basis."""

    PHI_PLUS = "Phi+"
    PHI_MINUS = "Phi-"
    PSI_PLUS = "Psi+"
    PSI_MINUS = "Psi-"


BELL_VECTORS: dict[BellOutcome, ComplexArray] = {
    BellOutcome.PHI_PLUS: np.array([1, 0, 0, 1], dtype=np.complex128) * SQRT_HALF,
    BellOutcome.PHI_MINUS: np.array([1, 0, 0, -1], dtype=np.complex128) * SQRT_HALF,
    BellOutcome.PSI_PLUS: np.array([0, 1, 1, 0], dtype=np.complex128) * SQRT_HALF,
    BellOutcome.PSI_MINUS: np.array([0, 1, -1, 0], dtype=np.complex128) * SQRT_HALF,
}


class WSign(str, Enum):
    """Selects W⁺_a = W_a or W⁻_a = Z W_a Z."""

    PLUS = "+"
    MINUS = "-"


@dataclass(frozen=True)
class WGateParam:
    """Parameter of the W_a rotation family."""

    a: float
    sign: WSign = WSign.PLUS

    def __post_init__(self) -> None:
        """Check the range of ``a`` and coerce the sign."""
        object.__setattr__(self, "sign", WSign(self.sign))
        if not 0.0 <= float(self.a) <= 1.0:
            raise InvalidParameterError(f"W parameter a={self.a} outside [0, 1]")
        object.__setattr__(self, "a", float(self.a))


def w_matrix(a: float, sign: WSign | str = WSign.PLUS) -> ComplexArray:
    """Return the 2x2 matrix of W^±_a."""
    param = WGateParam(a, WSign(sign))
    c, s = np.sqrt(1.0 - param.a), np.sqrt(param.a)
    matrix = np.array([[c, s], [s, -c]], dtype=np.complex128)
    if param.sign is WSign.MINUS:
        matrix = Z @ matrix @ Z
    return matrix


def w_gate(p: WGateParam | float, targets: Sequence[str] = ()) -> UnitaryOperator:
    """Return W_a = √(1−a)Z + √a X, or Z W_a Z for the minus sign.

    Args:
        p: The parameter, or a bare ``a`` for the plus sign.
        targets: Optional default target register.

    Returns:
        The self-inverse 2x2 unitary.

    Raises:
        InvalidParameterError: If ``a`` is outside [0, 1].
    """
    param = p if isinstance(p, WGateParam) else WGateParam(float(p))
    return UnitaryOperator(w_matrix(param.a, param.sign), tuple(targets))


def chi_vector(a: float) -> ComplexArray:
    """Return χ_a = √(1−a)|0⟩ + √a|1⟩ = W_a|0⟩."""
    return w_matrix(a)[:, 0].copy()


def bell_state(outcome: BellOutcome | str, layout: RegisterLayout | None = None) -> StateVector:
    """Return a Bell state on a two-qubit layout (default ``S``, ``Sp``)."""
    layout = layout or RegisterLayout.of(S=1, Sp=1)
    return StateVector(BELL_VECTORS[BellOutcome(outcome)], layout)


def cj_vector(u: ComplexArray) -> ComplexArray:
    """Return the amplitudes of (I⊗u)|Φ+⟩."""
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (2, 2):
        raise DimensionMismatchError(f"CJ states need a 2x2 unitary, got {u.shape}")
    return np.kron(I2, u) @ BELL_VECTORS[BellOutcome.PHI_PLUS]


def cj_state(
    u: UnitaryOperator | ComplexArray, layout: RegisterLayout | None = None
) -> StateVector:
    """Return the Choi-Jamiołkowski state (I⊗u)|Φ+⟩.

    Args:
        u: A single-qubit unitary.
        layout: Two single-qubit registers; defaults to ``S``, ``Sp``.

    Returns:
        The two-qubit state.

    Raises:
        DimensionMismatchError: If ``u`` is not 2x2.
    """
    matrix = u.matrix if isinstance(u, UnitaryOperator) else UnitaryOperator(u).matrix
    return StateVector(cj_vector(matrix), layout or RegisterLayout.of(S=1, Sp=1))


_T_ROWS = (
    BellOutcome.PHI_MINUS,  # -> |00>
    BellOutcome.PSI_MINUS,  # -> |01>
    BellOutcome.PSI_PLUS,  # -> |10>
    BellOutcome.PHI_PLUS,  # -> |11>
)

T_MATRIX = np.array([BELL_VECTORS[b].conj() for b in _T_ROWS], dtype=np.complex128)


def t_transform(targets: Sequence[str] = ()) -> UnitaryOperator:
    """Return T: Φ−→|00⟩, Ψ−→|01⟩, Ψ+→|10⟩, Φ+→|11⟩."""
    return UnitaryOperator(T_MATRIX, tuple(targets))


def t_transform_circuit() -> ComplexArray:
    """Return T as the gate sequence CNOT, then H and X on the first qubit, then CNOT."""
    return CNOT @ np.kron(X @ H, I2) @ CNOT


def phase_flip(projector: ComplexArray) -> ComplexArray:
    """Return −Π₀ + Π₁ = I − 2Π₀ for the flipped subspace Π₀."""
    projector = np.asarray(projector, dtype=np.complex128)
    return np.eye(projector.shape[0], dtype=np.complex128) - 2 * projector


def controlled_swap_matrix(width: int) -> ComplexArray:
    """Return the controlled swap of two ``width``-qubit blocks (control first)."""
    if width < 1:
        raise InvalidParameterError("Swap blocks need at least one qubit")
    block = 1 << width
    dim = 2 * block * block
    permutation = np.arange(dim)
    for a in range(block):
        for b in range(block):
            permutation[block * block + a * block + b] = block * block + b * block + a
    return np.eye(dim, dtype=np.complex128)[permutation]


_NAMED_GATES: dict[str, ComplexArray] = {
    "I": I2,
    "X": X,
    "Y": Y,
    "Z": Z,
    "H": H,
    "S": S,
    "CNOT": CNOT,
    "CZ": CZ,
    "SWAP": SWAP,
    "TOFFOLI": TOFFOLI,
    "T": T_MATRIX,
}


def gate_names() -> list[str]:
    """Return the names accepted by :func:`named_gate`."""
    return sorted([*_NAMED_GATES, "W"])


def named_gate(name: str, a: float | None = None, sign: WSign | str = WSign.PLUS) -> ComplexArray:
    """Look up a gate by name.

    Args:
        name: A standard gate name, ``T`` for the Bell transform, or ``W``.
        a: The W parameter; required for ``W`` only.
        sign: The W sign.

    Returns:
        The gate matrix.

    Raises:
        InvalidParameterError: For unknown names or a missing W parameter.
    """
    key = name.upper()
    if key == "W":
        if a is None:
            raise InvalidParameterError("Gate 'W' needs a parameter")
        return w_matrix(a, sign)
    if key not in _NAMED_GATES:
        raise InvalidParameterError(f"Unknown gate '{name}'; known: {gate_names()}")
    return _NAMED_GATES[key]


@dataclass(frozen=True, eq=False)
class BellBranch:
    """One Bell-measurement branch."""

    outcome: BellOutcome
    probability: float
    state: StateVector | None


def bell_measurement(state: StateVector, regs: Sequence[str]) -> list[BellBranch]:
    """Measure two single-qubit registers in the Bell basis.

    Args:
        state: The pure state.
        regs: Two distinct single-qubit registers.

    Returns:
        Four branches in the order Φ+, Φ−, Ψ+, Ψ−; each post-state lives on the
        remaining registers and is ``None`` when nothing remains or the branch
        has zero probability.

    Raises:
        InvalidParameterError: If the registers are not distinct.
        InvalidOperatorError: If a register is wider than one qubit.
    """
    regs = tuple(regs)
    if len(regs) != 2 or regs[0] == regs[1]:
        raise InvalidParameterError(f"Bell measurement needs two distinct registers, got {regs}")
    for name in regs:
        if state.layout.width(name) != 1:
            raise InvalidOperatorError(f"Register '{name}' is not a single qubit")
    branches = []
    for outcome in (
        BellOutcome.PHI_PLUS,
        BellOutcome.PHI_MINUS,
        BellOutcome.PSI_PLUS,
        BellOutcome.PSI_MINUS,
    ):
        rest, layout = contract_registers(
            state.amplitudes, state.layout, regs, BELL_VECTORS[outcome]
        )
        probability = float(np.vdot(rest, rest).real)
        post = None
        if layout is not None and probability > ZERO_PROBABILITY:
            post = StateVector.normalized(rest, layout)
        branches.append(BellBranch(outcome, probability, post))
    return branches


@dataclass(frozen=True, eq=False)
class SwapTestResult:
    """Pass probability and post-states of a swap test; the ancilla stays in the layout."""

    pass_probability: float
    passed: StateVector | None
    failed: StateVector | None


def _block_width(layout: RegisterLayout, regs: Sequence[str]) -> int:
    return sum(layout.width(name) for name in regs)


def swap_test_vector(
    vector: ComplexArray,
    layout: RegisterLayout,
    regs_a: Sequence[str],
    regs_b: Sequence[str],
    ancilla: str,
) -> tuple[ComplexArray, ComplexArray]:
    """Return the unnormalized pass and fail vectors of a swap test."""
    width = _block_width(layout, regs_a)
    if width != _block_width(layout, regs_b):
        raise DimensionMismatchError(
            f"Swap test blocks {list(regs_a)} and {list(regs_b)} differ in width"
        )
    if layout.width(ancilla) != 1:
        raise InvalidOperatorError(f"Swap test ancilla '{ancilla}' must be one qubit")
    targets = [ancilla, *regs_a, *regs_b]
    vector = apply_local(vector, layout, [ancilla], H)
    vector = apply_local(vector, layout, targets, controlled_swap_matrix(width))
    vector = apply_local(vector, layout, [ancilla], H)
    passed = apply_local(vector, layout, [ancilla], np.outer(KET_0, KET_0))
    return passed, vector - passed


def swap_test(
    state: StateVector,
    regs_a: Sequence[str],
    regs_b: Sequence[str],
    ancilla: str,
) -> SwapTestResult:
    """Run H, controlled swap, H on the ancilla and measure it.

    Args:
        state: State with the ancilla in |0⟩.
        regs_a: First block of registers.
        regs_b: Second block, same total width.
        ancilla: Single-qubit control register.

    Returns:
        The probability the ancilla reads 0, with both post-states.

    Raises:
        DimensionMismatchError: If the blocks differ in width.
        InvalidParameterError: If the ancilla is not in |0⟩.
    """
    idle = apply_local(state.amplitudes, state.layout, [ancilla], np.outer(KET_1, KET_1))
    if np.vdot(idle, idle).real > ZERO_PROBABILITY:
        raise InvalidParameterError(f"Swap test ancilla '{ancilla}' is not in |0⟩")
    passed, failed = swap_test_vector(
        state.amplitudes, state.layout, regs_a, regs_b, ancilla
    )
    probability = float(np.clip(np.vdot(passed, passed).real, 0.0, 1.0))
    return SwapTestResult(
        probability,
        StateVector.normalized(passed, state.layout) if probability > ZERO_PROBABILITY else None,
        StateVector.normalized(failed, state.layout)
        if 1.0 - probability > ZERO_PROBABILITY
        else None,
    )


def kron_all(matrices: Sequence[ComplexArray]) -> ComplexArray:
    """Return the Kronecker product of a sequence of matrices or vectors."""
    return reduce(np.kron, matrices)

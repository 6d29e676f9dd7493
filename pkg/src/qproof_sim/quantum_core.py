"""Exact dense linear algebra over named multi-qubit registers.

Qubit order is big-endian over a layout's declaration order: the first qubit
of the first register is the most significant bit of a basis index. Every
embedding, partial trace and register permutation in the package derives
from that single convention.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from typing import TypeAlias

import numpy as np
from dotenv import load_dotenv
from numpy.typing import NDArray
from scipy.optimize import minimize
from scipy.stats import unitary_group

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()

TOLERANCE = 1e-9  # equality-class checks
RECONSTRUCTION_TOLERANCE = 1e-8  # eigendecomposition round trips
ZERO_PROBABILITY = 1e-14  # branches lighter than this are pruned
DEFAULT_MAX_QUBITS = 18
DEFAULT_SEARCH_SAMPLES = 10_000

ComplexArray: TypeAlias = NDArray[np.complex128]
RealArray: TypeAlias = NDArray[np.float64]


class QProofError(Exception):
    """Base exception for simulation and verification errors.

    This is the parent class for all exceptions raised by the package.
    """


class DimensionMismatchError(QProofError):
    """Raised when operator, state or register dimensions disagree."""


class UnknownRegisterError(QProofError):
    """Raised when an operation names a register missing from the layout."""


class InvalidStateError(QProofError):
    """Raised when amplitudes or a density matrix violate state invariants."""


class InvalidOperatorError(QProofError):
    """Raised when a matrix is not unitary, Hermitian or a projector as required."""


class InvalidParameterError(QProofError):
    """Raised when a numeric or structural parameter is out of range."""


class BudgetExceededError(QProofError):
    """Raised when a layout exceeds the configured qubit budget."""


class PreconditionError(QProofError):
    """Raised when an operation's documented precondition does not hold."""


def max_qubits() -> int:
    """Return the qubit budget.

    Returns:
        ``QPROOF_MAX_QUBITS`` from the environment, or the built-in default.
    """
    return int(os.getenv("QPROOF_MAX_QUBITS", str(DEFAULT_MAX_QUBITS)))


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered named registers with their qubit counts.

    The empty layout has no qubits and dimension 1; it carries scalars such as
    the trace left after tracing out every register.
    """

    registers: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        """Validate names, widths and the qubit budget."""
        object.__setattr__(
            self, "registers", tuple((str(n), int(w)) for n, w in self.registers)
        )
        names = [name for name, _ in self.registers]
        if len(set(names)) != len(names):
            raise InvalidParameterError(f"Duplicate register names in layout: {names}")
        for name, width in self.registers:
            if width < 1:
                raise InvalidParameterError(
                    f"Register '{name}' must have at least one qubit, got {width}"
                )
        budget = max_qubits()
        if self.n_qubits > budget:
            raise BudgetExceededError(
                f"Layout needs {self.n_qubits} qubits, budget is {budget}"
            )

    @classmethod
    def of(cls, **widths: int) -> RegisterLayout:
        """Build a layout from keyword widths in declaration order.

        Args:
            **widths: Register name to qubit count.

        Returns:
            The layout.
        """
        return cls(tuple(widths.items()))

    @property
    def names(self) -> tuple[str, ...]:
        """Register names in declaration order."""
        return tuple(name for name, _ in self.registers)

    @property
    def n_qubits(self) -> int:
        """Total number of qubits."""
        return sum(width for _, width in self.registers)

    @property
    def dim(self) -> int:
        """Dimension of the full Hilbert space."""
        return 1 << self.n_qubits

    def __contains__(self, name: object) -> bool:
        """Return whether a register of this name exists."""
        return name in self.names

    def __str__(self) -> str:
        """Render as ``A[1] M[2]``."""
        return " ".join(f"{name}[{width}]" for name, width in self.registers)

    def width(self, name: str) -> int:
        """Return a register's qubit count.

        Raises:
            UnknownRegisterError: If the register does not exist.
        """
        for register, width in self.registers:
            if register == name:
                return width
        raise UnknownRegisterError(f"Unknown register '{name}' in layout {self}")

    def offset(self, name: str) -> int:
        """Return the index of a register's first qubit."""
        position = 0
        for register, width in self.registers:
            if register == name:
                return position
            position += width
        raise UnknownRegisterError(f"Unknown register '{name}' in layout {self}")

    def qubit_indices(self, names: Iterable[str]) -> list[int]:
        """Return the qubit indices of the given registers, in the given order.

        Args:
            names: Distinct register names.

        Returns:
            Concatenated qubit indices.

        Raises:
            UnknownRegisterError: If a register does not exist.
            InvalidParameterError: If a register is named twice.
        """
        names = list(names)
        if len(set(names)) != len(names):
            raise InvalidParameterError(f"Target registers must be distinct: {names}")
        indices: list[int] = []
        for name in names:
            start = self.offset(name)
            indices.extend(range(start, start + self.width(name)))
        return indices

    def subspace_dim(self, names: Iterable[str]) -> int:
        """Return the dimension spanned by the given registers."""
        return 1 << len(self.qubit_indices(names))

    def without(self, names: Iterable[str]) -> RegisterLayout:
        """Return the layout with the given registers removed."""
        dropped = set(names)
        for name in dropped:
            self.width(name)
        return RegisterLayout(
            tuple((n, w) for n, w in self.registers if n not in dropped)
        )

    def concat(self, other: RegisterLayout) -> RegisterLayout:
        """Return this layout followed by ``other``."""
        return RegisterLayout(self.registers + other.registers)

    def select(self, names: Sequence[str]) -> RegisterLayout:
        """Return a layout of the given registers in the given order."""
        return RegisterLayout(tuple((name, self.width(name)) for name in names))


def _contract(
    tensor: ComplexArray, matrix: ComplexArray, axes: Sequence[int]
) -> ComplexArray:
    k = len(axes)
    operator = matrix.reshape([2] * (2 * k))
    moved = np.tensordot(operator, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(moved, list(range(k)), list(axes))


def _check_local(layout: RegisterLayout, targets: Sequence[str], matrix: NDArray) -> list[int]:
    axes = layout.qubit_indices(targets)
    expected = 1 << len(axes)
    if matrix.shape != (expected, expected):
        raise DimensionMismatchError(
            f"Operator of shape {matrix.shape} does not match targets {list(targets)} "
            f"({expected}x{expected})"
        )
    return axes


def apply_local(
    vector: ComplexArray,
    layout: RegisterLayout,
    targets: Sequence[str],
    matrix: ComplexArray,
) -> ComplexArray:
    """Apply a register-local matrix to a state vector.

    The matrix need not be unitary; projectors and Kraus-like maps go through
    the same contraction.

    Args:
        vector: Amplitudes over ``layout``.
        layout: Register layout of ``vector``.
        targets: Registers the matrix acts on, in the matrix's qubit order.
        matrix: Square matrix over the target registers.

    Returns:
        The transformed (possibly unnormalized) vector.

    Raises:
        DimensionMismatchError: If the matrix or vector has the wrong size.
    """
    axes = _check_local(layout, targets, matrix)
    if vector.shape != (layout.dim,):
        raise DimensionMismatchError(
            f"Vector of shape {vector.shape} does not match layout {layout}"
        )
    tensor = vector.reshape([2] * layout.n_qubits)
    return _contract(tensor, matrix, axes).reshape(-1)


def apply_local_density(
    rho: ComplexArray,
    layout: RegisterLayout,
    targets: Sequence[str],
    matrix: ComplexArray,
) -> ComplexArray:
    """Return ``K rho K†`` for a register-local matrix ``K``."""
    axes = _check_local(layout, targets, matrix)
    if rho.shape != (layout.dim, layout.dim):
        raise DimensionMismatchError(
            f"Matrix of shape {rho.shape} does not match layout {layout}"
        )
    n = layout.n_qubits
    tensor = rho.reshape([2] * (2 * n))
    tensor = _contract(tensor, matrix, axes)
    tensor = _contract(tensor, matrix.conj(), [n + axis for axis in axes])
    return tensor.reshape(layout.dim, layout.dim)


def embed_operator(
    matrix: ComplexArray, layout: RegisterLayout, targets: Sequence[str]
) -> ComplexArray:
    """Return the full-space matrix ``I ⊗ matrix ⊗ I`` in layout order."""
    axes = _check_local(layout, targets, matrix)
    n = layout.n_qubits
    identity = np.eye(layout.dim, dtype=np.complex128).reshape([2] * (2 * n))
    return _contract(identity, matrix, axes).reshape(layout.dim, layout.dim)


def contract_registers(
    vector: ComplexArray,
    layout: RegisterLayout,
    registers: Sequence[str],
    ket: ComplexArray,
) -> tuple[ComplexArray, RegisterLayout | None]:
    """Project registers onto ``ket`` and drop them.

    Args:
        vector: Amplitudes over ``layout``.
        layout: Register layout of ``vector``.
        registers: Registers to project out.
        ket: Normalized vector over ``registers``.

    Returns:
        The unnormalized remaining vector and its layout; the layout is
        ``None`` when no register remains (the vector then holds one scalar).
    """
    axes = layout.qubit_indices(registers)
    if ket.shape != (1 << len(axes),):
        raise DimensionMismatchError(
            f"Ket of shape {ket.shape} does not match registers {list(registers)}"
        )
    tensor = vector.reshape([2] * layout.n_qubits)
    bra = ket.conj().reshape([2] * len(axes))
    rest = np.tensordot(bra, tensor, axes=(list(range(len(axes))), axes))
    if len(axes) == layout.n_qubits:
        return np.asarray(rest, dtype=np.complex128).reshape(1), None
    return rest.reshape(-1), layout.without(registers)


def swap_registers(
    vector: ComplexArray, layout: RegisterLayout, first: str, second: str
) -> ComplexArray:
    """Exchange the contents of two registers of equal width."""
    if first == second:
        return vector
    if layout.width(first) != layout.width(second):
        raise DimensionMismatchError(
            f"Cannot swap '{first}' and '{second}': widths differ"
        )
    permutation = list(range(layout.n_qubits))
    a = layout.qubit_indices([first])
    b = layout.qubit_indices([second])
    for i, j in zip(a, b, strict=True):
        permutation[i], permutation[j] = j, i
    tensor = vector.reshape([2] * layout.n_qubits)
    return np.transpose(tensor, permutation).reshape(-1)


def append_register(
    vector: ComplexArray,
    layout: RegisterLayout,
    name: str,
    width: int = 1,
    content: ComplexArray | None = None,
) -> tuple[ComplexArray, RegisterLayout]:
    """Append a register holding ``content`` (default all-zero) to a vector."""
    extended = layout.concat(RegisterLayout(((name, width),)))
    if content is None:
        content = np.zeros(1 << width, dtype=np.complex128)
        content[0] = 1.0
    return np.kron(vector, content), extended


def reduced_density(
    vector: ComplexArray, layout: RegisterLayout, keep: Sequence[str]
) -> ComplexArray:
    """Return the reduced density matrix of a pure vector on ``keep``."""
    keep_axes = layout.qubit_indices(keep)
    rest = [axis for axis in range(layout.n_qubits) if axis not in keep_axes]
    tensor = vector.reshape([2] * layout.n_qubits).transpose(keep_axes + rest)
    amplitudes = tensor.reshape(1 << len(keep_axes), -1)
    return amplitudes @ amplitudes.conj().T


def _trace_out(
    matrix: ComplexArray, layout: RegisterLayout, keep: Sequence[str]
) -> ComplexArray:
    n = layout.n_qubits
    kept = layout.qubit_indices(keep)
    dropped = [axis for axis in range(n) if axis not in kept]
    dk, dd = 1 << len(kept), 1 << len(dropped)
    tensor = matrix.reshape([2] * (2 * n))
    permutation = kept + dropped + [n + a for a in kept] + [n + a for a in dropped]
    blocks = tensor.transpose(permutation).reshape(dk, dd, dk, dd)
    return np.trace(blocks, axis1=1, axis2=3)


def _is_hermitian(matrix: NDArray) -> bool:
    return bool(np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= TOLERANCE)


def _square_power_of_two(matrix: NDArray, what: str) -> int:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"{what} must be square, got shape {matrix.shape}")
    dim = matrix.shape[0]
    if dim < 2 or dim & (dim - 1):
        raise DimensionMismatchError(f"{what} dimension {dim} is not a power of two")
    return dim


@dataclass(frozen=True, eq=False)
class StateVector:
    """A normalized pure state over a register layout."""

    amplitudes: ComplexArray
    layout: RegisterLayout

    def __post_init__(self) -> None:
        """Coerce amplitudes and check dimension and norm."""
        amplitudes = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        object.__setattr__(self, "amplitudes", amplitudes)
        if amplitudes.shape != (self.layout.dim,):
            raise DimensionMismatchError(
                f"{amplitudes.shape[0]} amplitudes do not match layout {self.layout}"
            )
        norm = float(np.linalg.norm(amplitudes))
        if abs(norm - 1.0) > TOLERANCE:
            raise InvalidStateError(f"State norm is {norm:.12f}, expected 1")

    @classmethod
    def normalized(cls, vector: ComplexArray, layout: RegisterLayout) -> StateVector:
        """Normalize ``vector`` and wrap it.

        Raises:
            InvalidStateError: If the vector is zero.
        """
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            raise InvalidStateError("Cannot normalize the zero vector")
        return cls(np.asarray(vector) / norm, layout)

    @classmethod
    def zero(cls, layout: RegisterLayout) -> StateVector:
        """Return the all-zero basis state."""
        return cls.basis(layout, "0" * layout.n_qubits)

    @classmethod
    def basis(cls, layout: RegisterLayout, bits: str) -> StateVector:
        """Return a computational basis state from a big-endian bit string."""
        bits = bits.replace(" ", "")
        if len(bits) != layout.n_qubits or set(bits) - {"0", "1"}:
            raise InvalidParameterError(
                f"Bit string '{bits}' does not describe {layout.n_qubits} qubits"
            )
        amplitudes = np.zeros(layout.dim, dtype=np.complex128)
        amplitudes[int(bits, 2)] = 1.0
        return cls(amplitudes, layout)

    @classmethod
    def random(cls, layout: RegisterLayout, rng: np.random.Generator) -> StateVector:
        """Return a Haar-random pure state."""
        return random_state(layout, rng)

    @property
    def density(self) -> DensityOperator:
        """The projector onto this state."""
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()), self.layout)

    def overlap(self, other: StateVector) -> complex:
        """Return ``<self|other>``."""
        if other.layout.dim != self.layout.dim:
            raise DimensionMismatchError("Overlap of states with different dimensions")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A mixed state: Hermitian, positive semidefinite, unit trace."""

    matrix: ComplexArray
    layout: RegisterLayout

    def __post_init__(self) -> None:
        """Coerce the matrix and check the state invariants."""
        matrix = np.asarray(self.matrix, dtype=np.complex128)
        object.__setattr__(self, "matrix", matrix)
        if matrix.shape != (self.layout.dim, self.layout.dim):
            raise DimensionMismatchError(
                f"Matrix of shape {matrix.shape} does not match layout {self.layout}"
            )
        if not _is_hermitian(matrix):
            raise InvalidStateError("Density matrix is not Hermitian")
        trace = complex(np.trace(matrix))
        if abs(trace - 1.0) > TOLERANCE:
            raise InvalidStateError(f"Density matrix trace is {trace.real:.12f}")
        if float(np.linalg.eigvalsh(matrix)[0]) < -TOLERANCE:
            raise InvalidStateError("Density matrix is not positive semidefinite")

    @classmethod
    def from_state(cls, state: StateVector) -> DensityOperator:
        """Return ``|ψ><ψ|``."""
        return state.density

    @classmethod
    def maximally_mixed(cls, layout: RegisterLayout) -> DensityOperator:
        """Return ``I / d``."""
        return cls(np.eye(layout.dim, dtype=np.complex128) / layout.dim, layout)

    @classmethod
    def random(
        cls, layout: RegisterLayout, rng: np.random.Generator, rank: int | None = None
    ) -> DensityOperator:
        """Return a random density operator of the given rank."""
        return random_density(layout, rng, rank)

    @classmethod
    def mixture(
        cls, weights: Sequence[float], states: Sequence[DensityOperator | StateVector]
    ) -> DensityOperator:
        """Return ``Σ w_j ρ_j`` over a common layout."""
        if not states or len(weights) != len(states):
            raise InvalidParameterError("Mixture needs one weight per state")
        layout = states[0].layout
        total = np.zeros((layout.dim, layout.dim), dtype=np.complex128)
        for weight, state in zip(weights, states, strict=True):
            total += weight * as_density(state).matrix
        return cls(total, layout)

    def eigen_ensemble(self) -> list[tuple[float, StateVector]]:
        """Decompose into weighted orthogonal pure states, dropping null weights."""
        values, vectors = np.linalg.eigh(self.matrix)
        ensemble = []
        for value, vector in zip(values[::-1], vectors.T[::-1], strict=True):
            if value > ZERO_PROBABILITY:
                ensemble.append((float(value), StateVector.normalized(vector, self.layout)))
        return ensemble


def as_density(state: StateVector | DensityOperator) -> DensityOperator:
    """Return ``state`` as a density operator."""
    if isinstance(state, StateVector):
        return state.density
    return state


@dataclass(frozen=True, eq=False)
class UnitaryOperator:
    """A unitary matrix with optional default target registers."""

    matrix: ComplexArray
    targets: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        """Check shape and unitarity."""
        matrix = np.asarray(self.matrix, dtype=np.complex128)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "targets", tuple(self.targets))
        dim = _square_power_of_two(matrix, "Unitary")
        deviation = np.max(np.abs(matrix.conj().T @ matrix - np.eye(dim)))
        if deviation > TOLERANCE:
            raise InvalidOperatorError(f"Matrix is not unitary (deviation {deviation:.3e})")

    @property
    def n_qubits(self) -> int:
        """Number of qubits the matrix acts on."""
        return int(self.matrix.shape[0]).bit_length() - 1

    @property
    def dagger(self) -> UnitaryOperator:
        """The inverse operator on the same targets."""
        return UnitaryOperator(self.matrix.conj().T, self.targets)

    def on(self, *targets: str) -> UnitaryOperator:
        """Return the same matrix bound to other target registers."""
        return UnitaryOperator(self.matrix, targets)


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A Hermitian matrix."""

    matrix: ComplexArray

    def __post_init__(self) -> None:
        """Check shape and Hermiticity."""
        matrix = np.asarray(self.matrix, dtype=np.complex128)
        object.__setattr__(self, "matrix", matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"Operator must be square, got {matrix.shape}")
        if not _is_hermitian(matrix):
            raise InvalidOperatorError("Matrix is not Hermitian")

    @property
    def dim(self) -> int:
        """Matrix dimension."""
        return int(self.matrix.shape[0])


@dataclass(frozen=True, eq=False)
class Projector(HermitianOperator):
    """An orthogonal projector: Hermitian and idempotent."""

    def __post_init__(self) -> None:
        """Check idempotence on top of Hermiticity."""
        super().__post_init__()
        if np.max(np.abs(self.matrix @ self.matrix - self.matrix)) > TOLERANCE:
            raise InvalidOperatorError("Matrix is not idempotent")

    @classmethod
    def onto(cls, vectors: Sequence[ComplexArray] | ComplexArray) -> Projector:
        """Return the projector onto the span of orthonormal ``vectors``."""
        columns = np.atleast_2d(np.asarray(vectors, dtype=np.complex128))
        return cls(columns.T @ columns.conj())

    @classmethod
    def identity(cls, dim: int) -> Projector:
        """Return the identity projector."""
        return cls(np.eye(dim, dtype=np.complex128))

    @property
    def complement(self) -> Projector:
        """The projector ``I - P``."""
        return Projector(np.eye(self.dim, dtype=np.complex128) - self.matrix)

    @property
    def rank(self) -> int:
        """Dimension of the projected subspace."""
        return round(float(np.trace(self.matrix).real))


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Eigenpairs of a Hermitian matrix sorted by descending eigenvalue.

    ``eigenvectors`` holds one eigenvector per column.
    """

    eigenvalues: RealArray
    eigenvectors: ComplexArray

    @property
    def top_value(self) -> float:
        """The largest eigenvalue."""
        return float(self.eigenvalues[0])

    @property
    def top_vector(self) -> ComplexArray:
        """An eigenvector of the largest eigenvalue."""
        return self.eigenvectors[:, 0]

    def __len__(self) -> int:
        """Number of eigenpairs."""
        return len(self.eigenvalues)

    def pairs(self) -> list[tuple[float, ComplexArray]]:
        """Return ``(eigenvalue, eigenvector)`` pairs."""
        return [
            (float(value), self.eigenvectors[:, i])
            for i, value in enumerate(self.eigenvalues)
        ]

    def reconstruct(self) -> ComplexArray:
        """Return ``Σ λ v v†``."""
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T


@dataclass(frozen=True, eq=False)
class MeasurementResult:
    """Outcome of a two-outcome projective measurement."""

    probability: float
    inside: StateVector | DensityOperator | None
    outside: StateVector | DensityOperator | None

    @property
    def complement_probability(self) -> float:
        """Probability of landing outside the projector's range."""
        return 1.0 - self.probability


def tensor(*states: StateVector) -> StateVector:
    """Return the product state, concatenating layouts left to right."""
    if not states:
        raise InvalidParameterError("tensor() needs at least one state")
    amplitudes = states[0].amplitudes
    layout = states[0].layout
    for state in states[1:]:
        amplitudes = np.kron(amplitudes, state.amplitudes)
        layout = layout.concat(state.layout)
    return StateVector(amplitudes, layout)


def apply_unitary(
    state: StateVector | DensityOperator,
    u: UnitaryOperator,
    targets: Sequence[str] | None = None,
) -> StateVector | DensityOperator:
    """Apply a unitary to the named registers of a state.

    Args:
        state: Pure or mixed state.
        u: The unitary.
        targets: Registers in the matrix's qubit order; defaults to ``u.targets``.

    Returns:
        A state of the same kind over the same layout.

    Raises:
        DimensionMismatchError: If ``u`` does not match the targets.
        UnknownRegisterError: If a target is not in the layout.
    """
    names = tuple(targets) if targets is not None else u.targets
    if not names:
        raise InvalidParameterError("No target registers given for the unitary")
    if isinstance(state, StateVector):
        return StateVector(
            apply_local(state.amplitudes, state.layout, names, u.matrix), state.layout
        )
    return DensityOperator(
        apply_local_density(state.matrix, state.layout, names, u.matrix), state.layout
    )


def partial_trace(state: DensityOperator | StateVector, traced: Iterable[str]) -> DensityOperator:
    """Trace out registers.

    Args:
        state: The state; a pure state is reduced without forming its density.
        traced: Registers to trace out.

    Returns:
        The reduced density operator over the remaining registers in layout
        order. Tracing nothing returns the state itself as a density operator;
        tracing every register returns the 1x1 trace over the empty layout.

    Raises:
        UnknownRegisterError: If a traced register does not exist.
    """
    traced = tuple(traced)
    layout = state.layout
    layout.qubit_indices(traced)
    if not traced:
        return as_density(state)
    keep = [name for name in layout.names if name not in traced]
    if not keep:
        if isinstance(state, StateVector):
            total = np.vdot(state.amplitudes, state.amplitudes)
        else:
            total = np.trace(state.matrix)
        return DensityOperator(np.array([[total]], dtype=np.complex128), RegisterLayout(()))
    remaining = layout.select(keep)
    if isinstance(state, StateVector):
        return DensityOperator(reduced_density(state.amplitudes, layout, keep), remaining)
    return DensityOperator(_trace_out(state.matrix, layout, keep), remaining)


def _pair_matrices(
    rho: StateVector | DensityOperator, sigma: StateVector | DensityOperator
) -> tuple[ComplexArray, ComplexArray]:
    if rho.layout.dim != sigma.layout.dim:
        raise DimensionMismatchError(
            f"States have dimensions {rho.layout.dim} and {sigma.layout.dim}"
        )
    return as_density(rho).matrix, as_density(sigma).matrix


def trace_distance(
    rho: StateVector | DensityOperator, sigma: StateVector | DensityOperator
) -> float:
    """Return ``½ Σ|eigenvalues of ρ−σ|``, clipped to [0, 1]."""
    a, b = _pair_matrices(rho, sigma)
    values = np.linalg.eigvalsh(a - b)
    return float(np.clip(0.5 * np.sum(np.abs(values)), 0.0, 1.0))


def _psd_sqrt(matrix: ComplexArray) -> ComplexArray:
    values, vectors = np.linalg.eigh(matrix)
    roots = np.sqrt(np.clip(values, 0.0, None))
    return (vectors * roots) @ vectors.conj().T


def fidelity(
    rho: StateVector | DensityOperator, sigma: StateVector | DensityOperator
) -> float:
    """Return ``tr √(√ρ σ √ρ)``, clipped to [0, 1].

    Pure inputs take the fast paths ``|<ψ|φ>|`` and ``√<ψ|σ|ψ>``.
    """
    if rho.layout.dim != sigma.layout.dim:
        raise DimensionMismatchError(
            f"States have dimensions {rho.layout.dim} and {sigma.layout.dim}"
        )
    if isinstance(rho, StateVector) and isinstance(sigma, StateVector):
        value = abs(np.vdot(rho.amplitudes, sigma.amplitudes))
    elif isinstance(rho, StateVector) or isinstance(sigma, StateVector):
        pure, mixed = (rho, sigma) if isinstance(rho, StateVector) else (sigma, rho)
        assert isinstance(pure, StateVector) and isinstance(mixed, DensityOperator)
        overlap = np.vdot(pure.amplitudes, mixed.matrix @ pure.amplitudes).real
        value = np.sqrt(max(float(overlap), 0.0))
    else:
        root = _psd_sqrt(rho.matrix)
        product = root @ sigma.matrix @ root
        product = (product + product.conj().T) / 2
        value = np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(product), 0.0, None)))
    return float(np.clip(value, 0.0, 1.0))


def eig_hermitian(m: HermitianOperator | ComplexArray) -> EigenDecomposition:
    """Diagonalize a Hermitian operator.

    Args:
        m: The operator, or a raw matrix validated as Hermitian.

    Returns:
        The full spectrum in descending order with orthonormal eigenvectors.

    Raises:
        InvalidOperatorError: If the matrix is not Hermitian within tolerance.
    """
    matrix = m.matrix if isinstance(m, HermitianOperator) else HermitianOperator(m).matrix
    values, vectors = np.linalg.eigh(matrix)
    return EigenDecomposition(values[::-1].copy(), vectors[:, ::-1].copy())


def projective_measure(
    state: StateVector | DensityOperator,
    p: Projector,
    targets: Sequence[str] | None = None,
) -> MeasurementResult:
    """Measure ``{P, I−P}`` and return both renormalized branches.

    Args:
        state: Pure or mixed state.
        p: Projector on the full space, or on ``targets`` when given.
        targets: Registers a register-local projector acts on.

    Returns:
        Probability of the ``P`` outcome and both post-states; a branch whose
        probability is below ``ZERO_PROBABILITY`` is returned as ``None``.

    Raises:
        InvalidOperatorError: If ``p`` is not a projector.
        DimensionMismatchError: If ``p`` does not match the state.
    """
    if not isinstance(p, Projector):
        p = Projector(np.asarray(p))
    layout = state.layout
    if targets is None:
        if p.dim != layout.dim:
            raise DimensionMismatchError(
                f"Projector dimension {p.dim} does not match layout {layout}"
            )
        matrix = p.matrix
    else:
        matrix = embed_operator(p.matrix, layout, targets)
    if isinstance(state, StateVector):
        inside = matrix @ state.amplitudes
        outside = state.amplitudes - inside
        probability = float(np.clip(np.vdot(inside, inside).real, 0.0, 1.0))

        def wrap(vector: ComplexArray, weight: float) -> StateVector | None:
            if weight <= ZERO_PROBABILITY:
                return None
            return StateVector.normalized(vector, layout)

        return MeasurementResult(
            probability, wrap(inside, probability), wrap(outside, 1.0 - probability)
        )
    complement = np.eye(layout.dim) - matrix
    inside_rho = matrix @ state.matrix @ matrix
    outside_rho = complement @ state.matrix @ complement
    probability = float(np.clip(np.trace(inside_rho).real, 0.0, 1.0))

    def wrap_density(rho: ComplexArray, weight: float) -> DensityOperator | None:
        if weight <= ZERO_PROBABILITY:
            return None
        return DensityOperator(rho / np.trace(rho).real, layout)

    return MeasurementResult(
        probability,
        wrap_density(inside_rho, probability),
        wrap_density(outside_rho, 1.0 - probability),
    )


def random_state(layout: RegisterLayout, rng: np.random.Generator) -> StateVector:
    """Return a Haar-random pure state over ``layout``."""
    vector = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return StateVector.normalized(vector, layout)


def random_density(
    layout: RegisterLayout, rng: np.random.Generator, rank: int | None = None
) -> DensityOperator:
    """Return a Ginibre-random density operator of the given rank."""
    rank = layout.dim if rank is None else rank
    if not 1 <= rank <= layout.dim:
        raise InvalidParameterError(f"Rank {rank} outside [1, {layout.dim}]")
    ginibre = rng.normal(size=(layout.dim, rank)) + 1j * rng.normal(size=(layout.dim, rank))
    matrix = ginibre @ ginibre.conj().T
    return DensityOperator(matrix / np.trace(matrix).real, layout)


def random_unitary(dim: int, rng: np.random.Generator) -> ComplexArray:
    """Return a Haar-random unitary matrix."""
    return np.asarray(unitary_group.rvs(dim, random_state=rng), dtype=np.complex128)


def random_projector(dim: int, rank: int, rng: np.random.Generator) -> Projector:
    """Return a projector onto a Haar-random ``rank``-dimensional subspace."""
    if not 0 <= rank <= dim:
        raise InvalidParameterError(f"Rank {rank} outside [0, {dim}]")
    columns = random_unitary(dim, rng)[:, :rank]
    return Projector(columns @ columns.conj().T)


def maximize_over_states(
    objective: Callable[[ComplexArray], RealArray],
    dim: int,
    rng: np.random.Generator,
    samples: int = DEFAULT_SEARCH_SAMPLES,
) -> tuple[float, ComplexArray]:
    """Maximize a state functional by random search plus local refinement.

    Args:
        objective: Maps a ``dim x k`` batch of normalized column states to
            ``k`` real values.
        dim: Dimension of the search space.
        rng: Random generator for the initial samples.
        samples: Number of random starting states.

    Returns:
        The best value found and the state achieving it.
    """
    batch = rng.normal(size=(dim, samples)) + 1j * rng.normal(size=(dim, samples))
    batch /= np.linalg.norm(batch, axis=0)
    values = objective(batch)
    best = int(np.argmax(values))
    best_value, best_state = float(values[best]), batch[:, best]

    def negative(x: RealArray) -> float:
        vector = x[:dim] + 1j * x[dim:]
        norm = np.linalg.norm(vector)
        if norm == 0.0:  # pragma: no cover
            return 0.0
        return -float(objective((vector / norm)[:, None])[0])

    start = np.concatenate([best_state.real, best_state.imag])
    result = minimize(negative, start, method="BFGS", options={"gtol": 1e-10})
    refined = result.x[:dim] + 1j * result.x[dim:]
    refined_value = -negative(result.x)
    logger.debug(
        "State search: sampled %.12f, refined %.12f", best_value, refined_value
    )
    if refined_value > best_value and np.linalg.norm(refined) > 0.0:
        return refined_value, refined / np.linalg.norm(refined)
    return best_value, best_state


def preparation_unitary(vector: ComplexArray) -> ComplexArray:
    """Return a unitary whose first column is the normalized ``vector``."""
    vector = np.asarray(vector, dtype=np.complex128)
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise InvalidStateError("Cannot prepare the zero vector")
    vector = vector / norm
    dim = vector.shape[0]
    q, r = np.linalg.qr(np.column_stack([vector, np.eye(dim, dtype=np.complex128)]))
    q = q[:, :dim].copy()
    q[:, 0] *= r[0, 0]
    return q

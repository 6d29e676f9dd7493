"""Checkers for the soundness analysis of the EPR-QMA protocol.

Ensembles of pair states in W = span{|Φ−⟩, |Ψ+⟩}, the rounding of their
two-fold mixtures to Choi-Jamiołkowski products, a de Finetti distance
estimator and the closed-form bounds that chain them together.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from itertools import permutations
from math import factorial

import numpy as np
from scipy.optimize import nnls

from qproof_sim.epr_protocol import (
    PAIR_QUBITS,
    SWAP_TEST_ANCILLA,
    choice_swaps,
    tail_steps,
)
from qproof_sim.gates import BELL_VECTORS, KET_0, BellOutcome, cj_vector, w_matrix
from qproof_sim.outcome import ProtocolOutcome, mix_outcomes, run_steps
from qproof_sim.quantum_core import (
    TOLERANCE,
    ComplexArray,
    DensityOperator,
    InvalidParameterError,
    RegisterLayout,
    StateVector,
    append_register,
    partial_trace,
    trace_distance,
)
from qproof_sim.reflection import RST_REGISTERS

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 0.05
DEFAULT_SUBGRADIENT_STEPS = 500
MAX_EXACT_SYMMETRIZATION_PAIRS = 4
_VERTEX_CHUNK = 2048

FOUR_PAIR_LAYOUT = RegisterLayout.of(S1=1, S1p=1, S2=1, S2p=1)
TAIL_LAYOUT = RegisterLayout(tuple((name, 1) for name in RST_REGISTERS))

_W_BASIS = np.column_stack(
    [BELL_VECTORS[BellOutcome.PHI_MINUS], BELL_VECTORS[BellOutcome.PSI_PLUS]]
)


@dataclass(frozen=True)
class WEnsemble:
    """Weighted pure pair states ζ_j = α_j|Φ−⟩ + β_j e^{iθ_j}|Ψ+⟩.

    ``entries`` holds (μ_j, α_j, β_j, θ_j) with α_j, β_j ≥ 0.
    """

    entries: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self) -> None:
        """Check weights and amplitudes."""
        entries = tuple(tuple(float(x) for x in entry) for entry in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise InvalidParameterError("An ensemble needs at least one entry")
        weights = [mu for mu, *_ in entries]
        if min(weights) < 0.0 or abs(sum(weights) - 1.0) > TOLERANCE:
            raise InvalidParameterError(f"Ensemble weights {weights} are not a distribution")
        for _, alpha, beta, _ in entries:
            if alpha < 0.0 or beta < 0.0 or abs(alpha**2 + beta**2 - 1.0) > TOLERANCE:
                raise InvalidParameterError(
                    f"Amplitudes ({alpha}, {beta}) must be non-negative with unit norm"
                )

    @classmethod
    def random(cls, rng: np.random.Generator, size: int) -> WEnsemble:
        """Draw Dirichlet weights, uniform mixing angles and uniform phases."""
        weights = rng.dirichlet(np.ones(size))
        angles = rng.uniform(0.0, np.pi / 2, size)
        phases = rng.uniform(0.0, 2 * np.pi, size)
        return cls(
            tuple(
                (float(mu), float(np.cos(t)), float(np.sin(t)), float(theta))
                for mu, t, theta in zip(weights, angles, phases, strict=True)
            )
        )

    def zeta(self, index: int) -> ComplexArray:
        """Return the amplitudes of ζ_j over (S, S′)."""
        _, alpha, beta, theta = self.entries[index]
        return _W_BASIS @ np.array([alpha, beta * np.exp(1j * theta)])

    def density(self) -> DensityOperator:
        """Return ρ = Σ μ_j |ζ_j⟩⟨ζ_j|^⊗2 over (S₁, S′₁, S₂, S′₂)."""
        matrices = []
        for j, (mu, *_) in enumerate(self.entries):
            pair = np.kron(self.zeta(j), self.zeta(j))
            matrices.append(mu * np.outer(pair, pair.conj()))
        return DensityOperator(sum(matrices), FOUR_PAIR_LAYOUT)

    def rotation_parameters(self) -> list[tuple[float, float, bool]]:
        """Return (μ_j, a_j = β_j², plus-sign class) per entry."""
        return [
            (mu, beta**2, is_plus_class(theta)) for mu, _, beta, theta in self.entries
        ]


def is_plus_class(theta: float) -> bool:
    """Return whether θ mod 2π lies in [0, π/2] ∪ [3π/2, 2π), the W⁺ class."""
    theta = float(np.mod(theta, 2 * np.pi))
    return theta <= np.pi / 2 or theta >= 3 * np.pi / 2


def _maximally_mixed_pair_halves() -> DensityOperator:
    return DensityOperator.maximally_mixed(RegisterLayout.of(S1=1, S2=1))


def verifier_side_distance(rho: DensityOperator) -> float:
    """Return δ = D(tr_{S′₁S′₂} ρ, (I/2)^⊗2)."""
    reduced = partial_trace(rho, ["S1p", "S2p"])
    return trace_distance(reduced, _maximally_mixed_pair_halves())


@dataclass(frozen=True)
class ClaimCheck:
    """Both sides of the claim D(tr_{S′}ρ, (I/2)^⊗2) ≥ 2Σμα²β² sin²θ."""

    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        """Whether lhs ≥ rhs within tolerance."""
        return self.lhs >= self.rhs - TOLERANCE

    @property
    def margin(self) -> float:
        """lhs − rhs."""
        return self.lhs - self.rhs


def claim_lower_bound_check(e: WEnsemble) -> ClaimCheck:
    """Evaluate the claim with the left side taken from the explicit ρ."""
    rhs = 2 * sum(
        mu * alpha**2 * beta**2 * np.sin(theta) ** 2 for mu, alpha, beta, theta in e.entries
    )
    return ClaimCheck(verifier_side_distance(e.density()), float(rhs))


def claim_exact_distance(e: WEnsemble) -> float:
    """Return the closed form X + max(X, |Y|) of the claim's left side.

    X = Σμα²β² sin²θ and Y = Σμαβ sinθ.
    """
    x = sum(mu * (alpha * beta * np.sin(theta)) ** 2 for mu, alpha, beta, theta in e.entries)
    y = sum(mu * alpha * beta * np.sin(theta) for mu, alpha, beta, theta in e.entries)
    return float(x + max(x, abs(y)))


@dataclass(frozen=True, eq=False)
class RoundingResult:
    """The rounded CJ mixture σ with δ, D(ρ, σ) and the bound (π/2)√δ."""

    sigma: DensityOperator
    delta: float
    distance: float

    @property
    def bound(self) -> float:
        """(π/2)√δ."""
        return float(np.pi / 2 * np.sqrt(self.delta))

    @property
    def bound_holds(self) -> bool:
        """Whether D(ρ, σ) ≤ (π/2)√δ within tolerance."""
        return self.distance <= self.bound + TOLERANCE


def cj_mixture_rounding(e: WEnsemble) -> RoundingResult:
    """Round ρ to σ = Σμ_j |J(W^±_{a_j})⟩⟨J(W^±_{a_j})|^⊗2.

    The sign of W^± is + when θ_j mod 2π lies in [0, π/2] ∪ [3π/2, 2π).
    """
    rho = e.density()
    components = []
    for mu, a, plus in e.rotation_parameters():
        pair = cj_vector(w_matrix(min(max(a, 0.0), 1.0), "+" if plus else "-"))
        doubled = np.kron(pair, pair)
        components.append(mu * np.outer(doubled, doubled.conj()))
    sigma = DensityOperator(sum(components), FOUR_PAIR_LAYOUT)
    return RoundingResult(sigma, verifier_side_distance(rho), trace_distance(rho, sigma))


@dataclass(frozen=True, eq=False)
class IIDMixture:
    """Σ μ_j ξ_j^⊗m for single-pair states ξ_j."""

    weights: tuple[float, ...]
    states: tuple[DensityOperator, ...]
    m: int

    def __post_init__(self) -> None:
        """Check the weights, the fold count and the pair dimension."""
        if len(self.weights) != len(self.states) or not self.states:
            raise InvalidParameterError("Mixture needs one weight per state")
        if min(self.weights) < 0.0 or abs(sum(self.weights) - 1.0) > TOLERANCE:
            raise InvalidParameterError("Mixture weights are not a distribution")
        if self.m < 1:
            raise InvalidParameterError(f"Fold count must be positive, got {self.m}")
        for state in self.states:
            if state.layout.n_qubits != PAIR_QUBITS:
                raise InvalidParameterError("Mixture components must be single-pair states")

    @property
    def layout(self) -> RegisterLayout:
        """Pair registers P1..Pm."""
        return RegisterLayout(tuple((f"P{i}", PAIR_QUBITS) for i in range(1, self.m + 1)))

    def density(self) -> DensityOperator:
        """Return the mixture as a density operator over m pairs."""
        total = np.zeros((self.layout.dim, self.layout.dim), dtype=np.complex128)
        for weight, state in zip(self.weights, self.states, strict=True):
            power = state.matrix
            for _ in range(self.m - 1):
                power = np.kron(power, state.matrix)
            total += weight * power
        return DensityOperator(total, self.layout)


@dataclass(frozen=True, eq=False)
class PairFamily:
    """Single-pair states supported on W, stored compressed as 2x2 matrices.

    ``isometry`` maps the compressed space into (S, S′).
    """

    compressed: ComplexArray
    isometry: ComplexArray

    def __len__(self) -> int:
        """Number of family members."""
        return int(self.compressed.shape[0])

    def member(self, index: int) -> DensityOperator:
        """Return a member as a density operator over (S, S′)."""
        matrix = self.isometry @ self.compressed[index] @ self.isometry.conj().T
        return DensityOperator(matrix, RegisterLayout.of(S=1, Sp=1))


def w_subspace_family(resolution: float = DEFAULT_RESOLUTION) -> PairFamily:
    """Return W-supported pair states on a cubic grid of the Bloch ball.

    Raises:
        InvalidParameterError: If the resolution is outside (0, 1].
    """
    if not 0.0 < resolution <= 1.0:
        raise InvalidParameterError(f"Resolution {resolution} outside (0, 1]")
    ticks = np.arange(-1.0, 1.0 + resolution / 2, resolution)
    x, y, z = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    points = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    points = points[np.sum(points**2, axis=1) <= 1.0 + 1e-12]
    pauli = np.array(
        [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=np.complex128
    )
    compressed = 0.5 * (np.eye(2) + np.einsum("ki,ijl->kjl", points, pauli))
    return PairFamily(compressed, _W_BASIS)


def _tensor_power(matrices: ComplexArray, m: int) -> ComplexArray:
    power = matrices
    for _ in range(m - 1):
        power = np.einsum("kij,kab->kiajb", power, matrices).reshape(
            matrices.shape[0], power.shape[1] * matrices.shape[1], -1
        )
    return power


def _simplex_projection(w: np.ndarray) -> np.ndarray:
    ordered = np.sort(w)[::-1]
    cumulative = np.cumsum(ordered) - 1.0
    index = np.arange(1, len(w) + 1)
    rho = index[ordered - cumulative / index > 0][-1]
    return np.maximum(w - cumulative[rho - 1] / rho, 0.0)


def _vertex_distances(
    rho: ComplexArray, isometry: ComplexArray, candidates: ComplexArray
) -> np.ndarray:
    full = np.einsum("ai,kij,bj->kab", isometry, candidates, isometry.conj())
    return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho[None, :, :] - full)), axis=1)


def definetti_distance_estimate(
    rho: DensityOperator,
    family: PairFamily | None = None,
    resolution: float = DEFAULT_RESOLUTION,
    steps: int = DEFAULT_SUBGRADIENT_STEPS,
) -> float:
    """Upper-bound the distance from ρ to mixtures of m-fold products.

    Minimizes D(ρ, Σ μ_j ξ_j^⊗m) over weights on the family: the best single
    member and a Hilbert-Schmidt NNLS fit seed a projected subgradient
    descent. Every iterate is a valid mixture, so the smallest distance seen
    is an upper bound on the true minimum.

    Args:
        rho: State over m pairs (2m qubits).
        family: Candidate single-pair states; defaults to the W Bloch grid.
        resolution: Grid spacing of the default family.
        steps: Subgradient iterations.

    Returns:
        The estimated distance.
    """
    if family is None:
        family = w_subspace_family(resolution)
    if len(family) == 0:
        raise InvalidParameterError("Family is empty")
    n_qubits = rho.layout.n_qubits
    if n_qubits % PAIR_QUBITS:
        raise InvalidParameterError(f"State on {n_qubits} qubits is not a set of pairs")
    m = n_qubits // PAIR_QUBITS
    isometry = family.isometry
    for _ in range(m - 1):
        isometry = np.kron(isometry, family.isometry)
    candidates = _tensor_power(family.compressed, m)

    def embed(weights: np.ndarray) -> ComplexArray:
        compressed = np.tensordot(weights, candidates, axes=1)
        return isometry @ compressed @ isometry.conj().T

    def distance_and_gradient(weights: np.ndarray) -> tuple[float, np.ndarray]:
        values, vectors = np.linalg.eigh(rho.matrix - embed(weights))
        sign = (vectors * np.sign(values)) @ vectors.conj().T
        projected = isometry.conj().T @ sign @ isometry
        gradient = -0.5 * np.einsum("ij,kji->k", projected, candidates).real
        return 0.5 * float(np.sum(np.abs(values))), gradient

    vertex_distances = np.concatenate(
        [
            _vertex_distances(rho.matrix, isometry, chunk)
            for chunk in np.array_split(candidates, max(1, len(family) // _VERTEX_CHUNK))
        ]
    )
    best_index = int(np.argmin(vertex_distances))
    weights = np.zeros(len(family))
    weights[best_index] = 1.0
    best = float(vertex_distances[best_index])

    target = isometry.conj().T @ rho.matrix @ isometry
    flat = candidates.reshape(len(family), -1)
    system = np.vstack([flat.real.T, flat.imag.T, 10.0 * np.ones((1, len(family)))])
    rhs = np.concatenate([target.real.ravel(), target.imag.ravel(), [10.0]])
    fitted, _ = nnls(system, rhs, maxiter=50 * system.shape[0])
    if fitted.sum() > 0.0:
        fitted = fitted / fitted.sum()
        fitted_distance, _ = distance_and_gradient(fitted)
        if fitted_distance < best:
            weights, best = fitted, fitted_distance

    for k in range(1, steps + 1):
        value, gradient = distance_and_gradient(weights)
        best = min(best, value)
        norm = np.linalg.norm(gradient)
        if value <= TOLERANCE or norm == 0.0:
            break
        weights = _simplex_projection(weights - (0.1 / np.sqrt(k)) * gradient / norm)
    logger.debug("de Finetti estimate over %d candidates: %.3e", len(family), best)
    return best


def definetti_theorem_bound(k: int, m: int, n: int) -> float:
    """Return 2^{2k+1} m / n for n-partite symmetric states of k-qubit parts."""
    if not 0 < m < n:
        raise InvalidParameterError(f"Need 0 < m < n, got m={m}, n={n}")
    return float(2 ** (2 * k + 1) * m / n)


def _permute_pairs(matrix: ComplexArray, n_pairs: int, order: Sequence[int]) -> ComplexArray:
    n = n_pairs * PAIR_QUBITS
    axes = [PAIR_QUBITS * p + i for p in order for i in range(PAIR_QUBITS)]
    tensor = matrix.reshape([2] * (2 * n))
    return tensor.transpose(axes + [n + a for a in axes]).reshape(matrix.shape)


def _swap_family_orders(n_pairs: int) -> list[list[int]]:
    orders = []
    for r1 in range(1, n_pairs + 1):
        for r2 in range(2, n_pairs + 1):
            order = list(range(n_pairs))
            for first, second in choice_swaps(r1, r2):
                order[first - 1], order[second - 1] = order[second - 1], order[first - 1]
            orders.append(order)
    return orders


def symmetrize(rho: DensityOperator, swap_family: bool = False) -> DensityOperator:
    """Average ρ over permutations of its pairs.

    The pairs are consecutive two-qubit blocks in layout order.

    Args:
        rho: State over N pairs.
        swap_family: Average over the protocol's (r₁, r₂ ≠ 1) swaps instead
            of all N! permutations.

    Returns:
        The averaged state over the same layout.

    Raises:
        InvalidParameterError: If the qubit count is odd, or N exceeds the
            exact-permutation limit without ``swap_family``.
    """
    n_qubits = rho.layout.n_qubits
    if n_qubits % PAIR_QUBITS:
        raise InvalidParameterError(f"State on {n_qubits} qubits is not a set of pairs")
    n_pairs = n_qubits // PAIR_QUBITS
    if swap_family:
        orders = _swap_family_orders(n_pairs)
    elif n_pairs > MAX_EXACT_SYMMETRIZATION_PAIRS:
        raise InvalidParameterError(
            f"Exact symmetrization over {factorial(n_pairs)} permutations is not supported; "
            "use the swap family"
        )
    else:
        orders = [list(order) for order in permutations(range(n_pairs))]
    total = sum(_permute_pairs(rho.matrix, n_pairs, order) for order in orders)
    return DensityOperator(total / len(orders), rho.layout)


def step4_tail(state: StateVector | DensityOperator) -> ProtocolOutcome:
    """Run the protocol from the Space Restriction Test to the end.

    Args:
        state: State over (R₁, R₂, S₁, S′₁, S₂, S′₂), in that order.

    Returns:
        The outcome; mixed inputs are handled through their eigen-ensemble.
    """
    if state.layout.dim != TAIL_LAYOUT.dim:
        raise InvalidParameterError(f"Tail input must live on {TAIL_LAYOUT}")
    steps = tail_steps()

    def run(pure: StateVector) -> ProtocolOutcome:
        vector, layout = append_register(
            pure.amplitudes, TAIL_LAYOUT, SWAP_TEST_ANCILLA, 1, KET_0
        )
        return run_steps(StateVector(vector, layout), steps)

    if isinstance(state, StateVector):
        return run(state)
    ensemble = DensityOperator(state.matrix, TAIL_LAYOUT).eigen_ensemble()
    return mix_outcomes([(weight, run(pure)) for weight, pure in ensemble])


def with_zero_registers(tau: DensityOperator) -> DensityOperator:
    """Return |00⟩⟨00|_{R₁R₂} ⊗ τ for τ over (S₁, S′₁, S₂, S′₂)."""
    zero = np.zeros((4, 4), dtype=np.complex128)
    zero[0, 0] = 1.0
    return DensityOperator(np.kron(zero, tau.matrix), TAIL_LAYOUT)


def cj_product_bound(delta: float) -> float:
    """Return 1/16 − (π/2)√δ."""
    return float(1 / 16 - np.pi / 2 * np.sqrt(delta))


def pure_w_bound(delta: float) -> float:
    """Return min{2δ, 1/16 − 10δ^{1/4}}."""
    return float(min(2 * delta, 1 / 16 - 10 * delta**0.25))


def general_bound(delta: float) -> float:
    """Return min{2δ, 1/16 − 15δ^{1/8}}."""
    return float(min(2 * delta, 1 / 16 - 15 * delta**0.125))


def epr_soundness_bound(n_pairs: float) -> float:
    """Return (1 − 1/N)·min{2⁶/N, 1/16 − 2⁶/N − 15(2⁶/N)^{1/8}}."""
    ratio = 2.0**6 / n_pairs
    return float((1 - 1 / n_pairs) * min(ratio, 1 / 16 - ratio - 15 * ratio**0.125))

"""Protocol outcomes and the branch engine that produces them.

A protocol is a list of named steps. Each step maps a normalized state to
weighted child branches, either a continuation state or a terminal verdict.
The engine expands the tree exactly or samples root-to-leaf paths.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from dotenv import load_dotenv

from qproof_sim.quantum_core import (
    TOLERANCE,
    ZERO_PROBABILITY,
    ComplexArray,
    InvalidParameterError,
    RegisterLayout,
    StateVector,
)

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()

DEFAULT_SEED = 20240917
DEFAULT_SHOTS = 2000


class Verdict(str, Enum):
    """Terminal decisions of a verifier."""

    ACCEPT = "accept"
    GIVE_UP = "give-up-accept"
    REJECT = "reject"


@dataclass(frozen=True, eq=False)
class Branch:
    """A child of a protocol step: a continuation or a verdict."""

    label: str
    probability: float
    state: StateVector | None = None
    verdict: Verdict | None = None


def branch_from(label: str, vector: ComplexArray, layout: RegisterLayout) -> Branch:
    """Wrap an unnormalized continuation vector, its squared norm being the weight."""
    probability = float(np.vdot(vector, vector).real)
    if probability <= ZERO_PROBABILITY:
        return Branch(label, probability)
    return Branch(label, probability, StateVector.normalized(vector, layout))


def verdict_from(label: str, vector: ComplexArray, verdict: Verdict) -> Branch:
    """Wrap an unnormalized terminal vector as a verdict branch."""
    return Branch(label, float(np.vdot(vector, vector).real), verdict=verdict)


StepFunction = Callable[[StateVector], list[Branch]]


@dataclass(frozen=True)
class ProtocolStep:
    """A named protocol step."""

    name: str
    run: StepFunction


@dataclass(frozen=True)
class BranchRecord:
    """A terminal branch: its label path, the step that decided it, and its weight."""

    path: tuple[str, ...]
    step: str
    verdict: Verdict
    probability: float


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """The normalized state entering a step along one branch path."""

    path: tuple[str, ...]
    step: str
    probability: float
    state: StateVector


@dataclass(frozen=True, eq=False)
class ProtocolOutcome:
    """Exact (or sampled) distribution over accept, give-up-accept and reject.

    Give-up-accept counts toward acceptance but is kept apart from genuine
    acceptance in every trace.
    """

    accept: float
    give_up_accept: float
    reject: float
    branches: tuple[BranchRecord, ...] = ()
    checkpoints: tuple[Checkpoint, ...] = ()
    shots: int | None = None

    def __post_init__(self) -> None:
        """Check that the distribution is normalized."""
        total = self.accept + self.give_up_accept + self.reject
        if abs(total - 1.0) > TOLERANCE:
            raise InvalidParameterError(f"Outcome probabilities sum to {total:.12f}")

    @property
    def acceptance(self) -> float:
        """Headline acceptance: genuine plus give-up acceptance."""
        return self.accept + self.give_up_accept

    def probability(self, verdict: Verdict) -> float:
        """Return the total probability of a verdict."""
        return {
            Verdict.ACCEPT: self.accept,
            Verdict.GIVE_UP: self.give_up_accept,
            Verdict.REJECT: self.reject,
        }[verdict]

    def mass(self, verdict: Verdict, step: str | None = None) -> float:
        """Sum branch probabilities for a verdict, optionally from one step only."""
        return sum(
            record.probability
            for record in self.branches
            if record.verdict is verdict and (step is None or record.step == step)
        )

    def checkpoints_at(self, step: str) -> list[Checkpoint]:
        """Return the checkpoints recorded on entry to ``step``."""
        return [point for point in self.checkpoints if point.step == step]

    def summary(self) -> dict[str, float]:
        """Return verdict masses and the branch count."""
        return {
            "accept": self.accept,
            "give_up": self.give_up_accept,
            "reject": self.reject,
            "branches": float(len(self.branches)),
        }


ReflectionTrace = ProtocolOutcome


def _totals(records: Sequence[BranchRecord]) -> tuple[float, float, float]:
    sums = dict.fromkeys(Verdict, 0.0)
    for record in records:
        sums[record.verdict] += record.probability
    return sums[Verdict.ACCEPT], sums[Verdict.GIVE_UP], sums[Verdict.REJECT]


def enumerate_protocol(
    initial: StateVector,
    steps: Sequence[ProtocolStep],
    keep_states: bool = False,
) -> ProtocolOutcome:
    """Expand every branch of a protocol exactly.

    Args:
        initial: The normalized state entering the first step.
        steps: The protocol steps in order.
        keep_states: Record a checkpoint for every non-terminal node.

    Returns:
        The exact outcome with one record per terminal branch, in depth-first
        order of the step outputs.

    Raises:
        InvalidParameterError: If a branch survives the last step.
    """
    records: list[BranchRecord] = []
    checkpoints: list[Checkpoint] = []

    def walk(state: StateVector, index: int, path: tuple[str, ...], weight: float) -> None:
        if index == len(steps):
            raise InvalidParameterError(f"Branch {path} survived the final step")
        step = steps[index]
        if keep_states:
            checkpoints.append(Checkpoint(path, step.name, weight, state))
        for branch in step.run(state):
            probability = weight * branch.probability
            label_path = (*path, branch.label)
            if branch.verdict is not None:
                if probability > 0.0:
                    records.append(
                        BranchRecord(label_path, step.name, branch.verdict, probability)
                    )
            elif branch.state is not None and probability > ZERO_PROBABILITY:
                walk(branch.state, index + 1, label_path, probability)

    walk(initial, 0, (), 1.0)
    accept, give_up, reject = _totals(records)
    logger.debug(
        "Enumerated %d branches: accept=%.12f give-up=%.12f reject=%.12f",
        len(records),
        accept,
        give_up,
        reject,
    )
    return ProtocolOutcome(accept, give_up, reject, tuple(records), tuple(checkpoints))


@dataclass(frozen=True)
class MonteCarlo:
    """Seeded sampling configuration for demonstration runs."""

    seed: int = field(default_factory=lambda: int(os.getenv("QPROOF_SEED", str(DEFAULT_SEED))))
    shots: int = field(
        default_factory=lambda: int(os.getenv("QPROOF_SHOTS", str(DEFAULT_SHOTS)))
    )

    def __post_init__(self) -> None:
        """Check the shot count."""
        if self.shots < 1:
            raise InvalidParameterError(f"Monte Carlo needs at least one shot, got {self.shots}")

    def generator(self) -> np.random.Generator:
        """Return a fresh generator for this seed."""
        return np.random.default_rng(self.seed)


def sample_protocol(
    initial: StateVector, steps: Sequence[ProtocolStep], monte_carlo: MonteCarlo
) -> ProtocolOutcome:
    """Sample root-to-leaf paths and report empirical verdict frequencies."""
    rng = monte_carlo.generator()
    counts = dict.fromkeys(Verdict, 0)
    for _ in range(monte_carlo.shots):
        state = initial
        for step in steps:
            children = [
                b
                for b in step.run(state)
                if b.probability > 0.0 and (b.verdict is not None or b.state is not None)
            ]
            weights = np.array([b.probability for b in children])
            chosen = children[int(rng.choice(len(children), p=weights / weights.sum()))]
            if chosen.verdict is not None:
                counts[chosen.verdict] += 1
                break
            assert chosen.state is not None
            state = chosen.state
        else:
            raise InvalidParameterError("Sampled path survived the final step")
    shots = monte_carlo.shots
    logger.info("Sampled %d shots with seed %d", shots, monte_carlo.seed)
    return ProtocolOutcome(
        counts[Verdict.ACCEPT] / shots,
        counts[Verdict.GIVE_UP] / shots,
        counts[Verdict.REJECT] / shots,
        shots=shots,
    )


def run_steps(
    initial: StateVector,
    steps: Sequence[ProtocolStep],
    monte_carlo: MonteCarlo | None = None,
    keep_states: bool = False,
) -> ProtocolOutcome:
    """Run a protocol exactly, or by sampling when ``monte_carlo`` is given."""
    if monte_carlo is not None:
        return sample_protocol(initial, steps, monte_carlo)
    return enumerate_protocol(initial, steps, keep_states)


def mix_outcomes(weighted: Sequence[tuple[float, ProtocolOutcome]]) -> ProtocolOutcome:
    """Return the probability-weighted mixture of outcomes.

    Branch records are kept with their weights scaled; checkpoints are dropped.
    """
    total = sum(weight for weight, _ in weighted)
    if total <= 0.0:
        raise InvalidParameterError("Mixture weights must have positive total")
    accept = sum(w * o.accept for w, o in weighted) / total
    give_up = sum(w * o.give_up_accept for w, o in weighted) / total
    reject = sum(w * o.reject for w, o in weighted) / total
    records = tuple(
        BranchRecord(
            (f"component-{i}", *record.path),
            record.step,
            record.verdict,
            record.probability * weight / total,
        )
        for i, (weight, outcome) in enumerate(weighted)
        for record in outcome.branches
    )
    return ProtocolOutcome(accept, give_up, reject, records)

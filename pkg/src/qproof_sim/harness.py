"""Scenario files, runners and deterministic reports for the command line."""

from __future__ import annotations

import csv
import fnmatch
import io
import json
import logging
import os
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
from dotenv import load_dotenv
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    ValidationError,
    model_validator,
)

from qproof_sim.epr_protocol import (
    PROVER_PRESETS,
    EPRProverStrategy,
    ProtocolConfig,
    explicit_prover,
    give_up_breakdown,
    haar_prover,
    honest_prover,
    oracle_protocol,
    parallel_repeat,
    product_witness_prover,
    raw_zero_prover,
    run_protocol,
    wrong_q_prover,
)
from qproof_sim.epr_soundness import (
    WEnsemble,
    claim_exact_distance,
    claim_lower_bound_check,
    cj_mixture_rounding,
)
from qproof_sim.gates import WSign, cj_state, named_gate, w_matrix
from qproof_sim.outcome import DEFAULT_SEED, DEFAULT_SHOTS, MonteCarlo, ProtocolOutcome
from qproof_sim.qip_transform import (
    QIP_TOYS,
    QIPProverSpec,
    QIPSystemSpec,
    backward_prover,
    composite_unitary,
    error_rescale,
    haar_backward_prover,
    honest_protocol_state,
    make_rewindable,
    perfect_completeness_protocol,
    perfect_completeness_soundness_bound,
    rewindable_verifier,
)
from qproof_sim.qma import VerifierCircuit, build_catalog_verifier, chi_state, get_verifier_catalog
from qproof_sim.quantum_core import (
    TOLERANCE,
    BudgetExceededError,
    ComplexArray,
    QProofError,
    RegisterLayout,
    StateVector,
    fidelity,
    random_density,
    random_projector,
    random_state,
    tensor,
    trace_distance,
)
from qproof_sim.reflection import (
    ReflectionSpec,
    check_reflection_soundness,
    eigen_inputs,
    modified_reflection_procedure,
    mrp_max_accept,
    product_spec,
    reflection_procedure,
    reflection_simulation_test,
    two_level_spec,
)

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()

DEFAULT_SCENARIO_DIR = "scenarios"
GENERATOR_NAME = "PCG64"


class ScenarioError(QProofError):
    """Base exception for scenario loading and running."""


class ScenarioParseError(ScenarioError):
    """Raised when a scenario file is not valid JSON or does not match the schema."""

    def __init__(self, message: str, location: str | None = None) -> None:
        """Initialize with the offending line/column or field path."""
        self.location = location
        super().__init__(f"{message} at {location}" if location else message)


class ScenarioValidationError(ScenarioError):
    """Raised when a parsed scenario references something that does not resolve."""


class EmptySuiteError(ScenarioError):
    """Raised when a suite directory and filter select no scenario."""


def parse_rational(value: Any) -> Any:
    """Parse ``"num/den"`` or decimal strings exactly before converting to float."""
    if isinstance(value, bool):
        raise ValueError("expected a number, got a boolean")
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"'{value}' is not a rational number") from e
    return value


def parse_complex(value: Any) -> complex:
    """Parse a real rational or a ``[re, im]`` pair into a complex number."""
    if isinstance(value, list | tuple):
        if len(value) != 2:
            raise ValueError("complex entries are [re, im] pairs")
        return complex(float(parse_rational(value[0])), float(parse_rational(value[1])))
    parsed = parse_rational(value)
    if not isinstance(parsed, int | float):
        raise ValueError(f"'{value}' is not a number")
    return complex(parsed)


Rational = Annotated[float, BeforeValidator(parse_rational)]
Probability = Annotated[float, BeforeValidator(parse_rational), Field(ge=0.0, le=1.0)]
ComplexEntry = Annotated[complex, BeforeValidator(parse_complex)]


def _complex_vector(entries: list[complex]) -> ComplexArray:
    return np.array(entries, dtype=np.complex128)


def _complex_matrix(rows: list[list[complex]]) -> ComplexArray:
    return np.array(rows, dtype=np.complex128)


class ScenarioKind(str, Enum):
    """Protocol or checker a scenario runs."""

    REFLECTION = "reflection"
    RST = "rst"
    MRP = "mrp"
    EPR_QMA = "epr-qma"
    QIP_TRANSFORM = "qip-transform"
    CHECKER = "checker"


class Mode(str, Enum):
    """Exact enumeration or seeded Monte Carlo sampling."""

    EXACT = "exact"
    MONTE_CARLO = "mc"


class Relation(str, Enum):
    """Comparison between a measured and a claimed value."""

    EQ = "eq"
    GE = "ge"
    LE = "le"
    GT = "gt"


KIND_QUANTITIES: dict[ScenarioKind, tuple[str, ...]] = {
    ScenarioKind.REFLECTION: ("accept", "reject", "min_reject", "bound", "applicable"),
    ScenarioKind.RST: ("acceptance", "accept", "give_up", "reject"),
    ScenarioKind.MRP: ("accept", "reject", "max_accept"),
    ScenarioKind.EPR_QMA: (
        "acceptance",
        "accept",
        "give_up",
        "reject",
        "give_up_distillation",
        "give_up_choice",
        "give_up_simulation",
        "oracle_reject",
        "oracle_gap",
    ),
    ScenarioKind.QIP_TRANSFORM: ("acceptance", "reject", "max_accept", "bound", "applicable"),
    ScenarioKind.CHECKER: ("violations", "worst_margin", "samples"),
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GateStep(_Section):
    """One named gate on named qubits."""

    gate: str
    targets: list[str] = Field(min_length=1)
    a: Probability | None = None
    sign: WSign = WSign.PLUS


class VerifierSection(_Section):
    """A catalog verifier, or a gate list with register widths and accept patterns."""

    catalog: str | None = None
    params: dict[str, Rational] = Field(default_factory=dict)
    a_width: int | None = Field(default=None, ge=1)
    m_width: int | None = Field(default=None, ge=1)
    gates: list[GateStep] = Field(default_factory=list)
    accept: list[str] | str | None = None
    name: str = "custom"

    @model_validator(mode="after")
    def check_source(self) -> VerifierSection:
        if self.catalog is None:
            if self.a_width is None or self.m_width is None or self.accept is None:
                raise ValueError("give 'catalog' or all of 'a_width', 'm_width' and 'accept'")
        elif self.gates:
            raise ValueError("'catalog' and 'gates' are exclusive")
        return self

    def build(self) -> VerifierCircuit:
        """Instantiate the verifier."""
        if self.catalog is not None:
            return build_catalog_verifier(self.catalog, self.params)
        assert self.a_width is not None and self.m_width is not None and self.accept is not None
        gates = [(named_gate(g.gate, g.a, g.sign), g.targets) for g in self.gates]
        return VerifierCircuit.from_gates(self.a_width, self.m_width, gates, self.accept, self.name)


class ProverSection(_Section):
    """An EPR-QMA prover preset or an explicit unitary."""

    preset: Literal["honest", "product-witness", "wrong-q", "raw-zero", "haar", "explicit"] = (
        "honest"
    )
    q: Probability | None = None
    witness: list[ComplexEntry] | None = None
    matrix: list[list[ComplexEntry]] | None = None

    @model_validator(mode="after")
    def check_preset_fields(self) -> ProverSection:
        if self.preset in ("product-witness", "wrong-q") and self.q is None:
            raise ValueError(f"prover '{self.preset}' needs 'q'")
        if self.preset == "product-witness" and not self.witness:
            raise ValueError("prover 'product-witness' needs 'witness'")
        if self.preset == "explicit" and not self.matrix:
            raise ValueError("prover 'explicit' needs 'matrix'")
        return self

    def build(self, rng: np.random.Generator) -> EPRProverStrategy:
        """Instantiate the strategy."""
        if self.preset == "honest":
            return honest_prover()
        if self.preset == "product-witness":
            assert self.witness is not None and self.q is not None
            return product_witness_prover(_complex_vector(self.witness), self.q)
        if self.preset == "wrong-q":
            assert self.q is not None
            return wrong_q_prover(self.q)
        if self.preset == "raw-zero":
            return raw_zero_prover()
        if self.preset == "haar":
            return haar_prover(rng)
        assert self.matrix is not None
        return explicit_prover(_complex_matrix(self.matrix))


class ReflectionSection(_Section):
    """A reflection triple: W_p⊗W_q product, two-level, or explicit matrices."""

    preset: Literal["product", "two-level", "explicit"] = "product"
    p: Probability | None = None
    q: Probability | None = None
    sign_p: WSign = WSign.PLUS
    sign_q: WSign = WSign.PLUS
    a0: Probability | None = None
    a1: Probability | None = None
    u: list[list[ComplexEntry]] | None = None
    delta0: list[list[ComplexEntry]] | None = None
    pi0: list[list[ComplexEntry]] | None = None

    @model_validator(mode="after")
    def check_preset_fields(self) -> ReflectionSection:
        needed = {
            "product": ("p", "q"),
            "two-level": ("a0", "a1"),
            "explicit": ("u", "delta0", "pi0"),
        }[self.preset]
        missing = [key for key in needed if getattr(self, key) is None]
        if missing:
            raise ValueError(f"reflection preset '{self.preset}' needs {missing}")
        return self

    def build(self) -> ReflectionSpec:
        """Instantiate the triple."""
        if self.preset == "product":
            assert self.p is not None and self.q is not None
            return product_spec(self.p, self.q, self.sign_p, self.sign_q)
        if self.preset == "two-level":
            assert self.a0 is not None and self.a1 is not None
            return two_level_spec(self.a0, self.a1)
        assert self.u is not None and self.delta0 is not None and self.pi0 is not None
        return ReflectionSpec.from_matrices(
            _complex_matrix(self.u), _complex_matrix(self.delta0), _complex_matrix(self.pi0)
        )


class StateSection(_Section):
    """Input state of a reflection or MRP scenario.

    ``eigen`` is the index-th eigenvector of M (descending), ``rotated-eigen``
    is U applied to it, ``basis`` a computational basis state.
    """

    kind: Literal["eigen", "rotated-eigen", "basis", "amplitudes", "random"] = "eigen"
    index: int = Field(default=0, ge=0)
    bits: str | None = None
    amplitudes: list[ComplexEntry] | None = None

    def build(self, spec: ReflectionSpec, rng: np.random.Generator) -> StateVector:
        """Instantiate the state over the reflection layout.

        Raises:
            ScenarioValidationError: If the eigen index or the fields do not resolve.
        """
        layout = spec.layout
        if self.kind in ("eigen", "rotated-eigen"):
            pairs = eigen_inputs(spec)
            if self.index >= len(pairs):
                raise ScenarioValidationError(
                    f"Eigen index {self.index} out of range; M has {len(pairs)} eigenvectors"
                )
            state = pairs[self.index][1]
            if self.kind == "eigen":
                return state
            return StateVector(spec.u.matrix @ state.amplitudes, layout)
        if self.kind == "basis":
            if self.bits is None:
                raise ScenarioValidationError("State kind 'basis' needs 'bits'")
            return StateVector.basis(layout, self.bits)
        if self.kind == "amplitudes":
            if self.amplitudes is None:
                raise ScenarioValidationError("State kind 'amplitudes' needs 'amplitudes'")
            return StateVector.normalized(_complex_vector(self.amplitudes), layout)
        return random_state(layout, rng)


class RSTSection(_Section):
    """Input of the Reflection Simulation Test: two one-qubit states and two CJ pairs.

    ``chi`` puts χ_p in R₁ and R₂ (p defaults to 1/(2q)); ``zero`` puts |0⟩.
    """

    registers: Literal["chi", "zero"] = "chi"
    p: Probability | None = None
    q: Probability
    sign: WSign = WSign.PLUS

    @model_validator(mode="after")
    def default_honest_p(self) -> RSTSection:
        if self.registers == "chi" and self.p is None:
            if self.q < 0.5:
                raise ValueError("p = 1/(2q) needs q >= 1/2")
            self.p = 1.0 / (2.0 * self.q)
        return self

    def build(self) -> StateVector:
        """Instantiate the six-register input."""
        p = 0.0 if self.registers == "zero" else self.p
        assert p is not None
        pair = w_matrix(self.q, self.sign)
        return tensor(
            chi_state(p, "R1"),
            chi_state(p, "R2"),
            cj_state(pair, RegisterLayout.of(S1=1, S1p=1)),
            cj_state(pair, RegisterLayout.of(S2=1, S2p=1)),
        )


class QIPSection(_Section):
    """A toy interactive proof system and its declared completeness and soundness."""

    toy: Literal["controlled-rotation", "flip"]
    a0: Probability
    a1: Probability
    messages: Literal[2, 3] = 3
    completeness: Probability | None = None
    soundness: Probability = 0.0
    rescale: bool = False

    @model_validator(mode="after")
    def check_flip_messages(self) -> QIPSection:
        if self.toy == "flip" and self.messages != 3:
            raise ValueError("the flip toy has three messages")
        return self

    def build(self) -> tuple[QIPSystemSpec, QIPProverSpec]:
        """Instantiate the system and its honest prover."""
        kwargs: dict[str, Any] = {
            "completeness": self.completeness,
            "soundness": self.soundness,
        }
        if self.toy == "controlled-rotation":
            kwargs["messages"] = self.messages
        spec, honest = QIP_TOYS[self.toy](self.a0, self.a1, **kwargs)
        if self.rescale:
            spec = error_rescale(spec)
        return spec, honest


class QIPProverSection(_Section):
    """The prover of the perfect-completeness protocol: honest, or sampled Haar provers."""

    preset: Literal["honest", "haar"] = "honest"
    samples: int = Field(default=20, ge=1)
    p_width: int = Field(default=1, ge=1)


class CheckerSection(_Section):
    """A randomized proposition check."""

    check: Literal[
        "trace-distance-lemma",
        "fidelity-lemma",
        "claim-lower-bound",
        "cj-rounding",
        "claim-exact-distance",
    ]
    samples: int = Field(default=100, ge=1)
    max_size: int = Field(default=5, ge=1)


class AssertionSpec(_Section):
    """A claimed value for one measured quantity."""

    quantity: str
    claimed: Rational
    relation: Relation = Relation.EQ
    tolerance: float = Field(default=TOLERANCE, ge=0.0)

    def judge(self, measured: float) -> bool:
        """Return whether ``measured`` satisfies the relation within tolerance."""
        if self.relation is Relation.EQ:
            return abs(measured - self.claimed) <= self.tolerance
        if self.relation is Relation.GE:
            return measured >= self.claimed - self.tolerance
        if self.relation is Relation.LE:
            return measured <= self.claimed + self.tolerance
        return measured > self.claimed + self.tolerance


_REQUIRED_SECTIONS: dict[ScenarioKind, str] = {
    ScenarioKind.REFLECTION: "reflection",
    ScenarioKind.MRP: "reflection",
    ScenarioKind.RST: "rst",
    ScenarioKind.EPR_QMA: "verifier",
    ScenarioKind.QIP_TRANSFORM: "system",
    ScenarioKind.CHECKER: "checker",
}


class Scenario(_Section):
    """One scenario file."""

    name: str = Field(min_length=1)
    kind: ScenarioKind
    description: str = ""
    mode: Mode = Mode.EXACT
    seed: int | None = Field(default=None, ge=0)
    shots: int | None = Field(default=None, ge=1)
    verifier: VerifierSection | None = None
    prover: ProverSection | None = None
    n_pairs: int = Field(default=2, ge=2)
    ancilla_width: int | None = Field(default=None, ge=0)
    repetitions: int = Field(default=1, ge=1)
    oracle: bool = False
    reflection: ReflectionSection | None = None
    state: StateSection = Field(default_factory=StateSection)
    epsilon: Annotated[float, BeforeValidator(parse_rational), Field(gt=0.0, le=0.5)] | None = None
    rst: RSTSection | None = None
    system: QIPSection | None = None
    qip_prover: QIPProverSection = Field(default_factory=QIPProverSection)
    checker: CheckerSection | None = None
    assertions: list[AssertionSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_references(self) -> Scenario:
        section = _REQUIRED_SECTIONS[self.kind]
        if getattr(self, section) is None:
            raise ValueError(f"kind '{self.kind.value}' needs a '{section}' section")
        if self.oracle and (self.n_pairs != 2 or self.repetitions != 1):
            raise ValueError("the oracle simulation runs single instances with n_pairs = 2")
        known = KIND_QUANTITIES[self.kind]
        for assertion in self.assertions:
            if assertion.quantity not in known:
                raise ValueError(
                    f"quantity '{assertion.quantity}' is not measured by kind "
                    f"'{self.kind.value}'; known: {list(known)}"
                )
        return self


def _validation_location(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "<root>"


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parse and validate scenario JSON.

    Raises:
        ScenarioParseError: With line and column for malformed JSON, or the
            field path for schema violations.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"{source}: {e.msg}", f"line {e.lineno}, column {e.colno}") from e
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        message = e.errors()[0]["msg"]
        raise ScenarioParseError(f"{source}: {message}", _validation_location(e)) from e


def load_scenario(path: str | Path) -> Scenario:
    """Read and parse a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError(f"Cannot read {path}: {e.strerror}") from e
    return parse_scenario(text, str(path))


class AssertionResult(BaseModel):
    """Judgment of one assertion."""

    quantity: str
    relation: Relation
    claimed: float
    measured: float
    tolerance: float
    passed: bool


class BranchSummary(BaseModel):
    """Terminal branch count and verdict masses of one run."""

    branches: int
    accept: float
    give_up_accept: float
    reject: float


class ScenarioReport(BaseModel):
    """Result of one scenario."""

    name: str
    kind: ScenarioKind
    mode: Mode
    generator: str = GENERATOR_NAME
    seed: int
    shots: int | None = None
    quantities: dict[str, float]
    assertions: list[AssertionResult]
    branch_summary: BranchSummary | None = None
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        """Whether every assertion passed."""
        return all(result.passed for result in self.assertions)


class SuiteReport(BaseModel):
    """Reports of a suite, ordered by scenario name."""

    reports: list[ScenarioReport]

    @property
    def passed(self) -> bool:
        """Whether every scenario passed."""
        return all(report.passed for report in self.reports)

    @property
    def failures(self) -> list[ScenarioReport]:
        """Scenarios with at least one failed assertion."""
        return [report for report in self.reports if not report.passed]


@dataclass(frozen=True)
class RunSettings:
    """Command-line overrides; ``None`` keeps the scenario's value."""

    mode: Mode | None = None
    seed: int | None = None
    shots: int | None = None


@dataclass(frozen=True)
class _RunContext:
    mode: Mode
    seed: int
    shots: int

    @property
    def monte_carlo(self) -> MonteCarlo | None:
        if self.mode is Mode.EXACT:
            return None
        return MonteCarlo(self.seed, self.shots)

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def _resolve(scenario: Scenario, settings: RunSettings) -> _RunContext:
    mode = settings.mode or scenario.mode
    seed = settings.seed
    if seed is None:
        seed = scenario.seed
    if seed is None:
        seed = int(os.getenv("QPROOF_SEED", str(DEFAULT_SEED)))
    shots = settings.shots or scenario.shots or int(os.getenv("QPROOF_SHOTS", str(DEFAULT_SHOTS)))
    return _RunContext(mode, seed, shots)


Measurement = tuple[dict[str, float], ProtocolOutcome | None]


def _outcome_quantities(outcome: ProtocolOutcome) -> dict[str, float]:
    return {
        "acceptance": outcome.acceptance,
        "accept": outcome.accept,
        "give_up": outcome.give_up_accept,
        "reject": outcome.reject,
    }


def _run_reflection(scenario: Scenario, context: _RunContext) -> Measurement:
    assert scenario.reflection is not None
    rng = context.generator()
    spec = scenario.reflection.build()
    state = scenario.state.build(spec, rng)
    if scenario.kind is ScenarioKind.MRP:
        outcome = modified_reflection_procedure(spec, state, context.monte_carlo)
        quantities = {
            "accept": outcome.acceptance,
            "reject": outcome.reject,
            "max_accept": mrp_max_accept(spec),
        }
        return quantities, outcome
    outcome = reflection_procedure(spec, state, context.monte_carlo)
    quantities = {"accept": outcome.acceptance, "reject": outcome.reject}
    if scenario.epsilon is not None:
        report = check_reflection_soundness(spec, scenario.epsilon, rng)
        quantities["bound"] = report.bound
        quantities["applicable"] = float(report.applicable)
        if report.min_reject is not None:
            quantities["min_reject"] = report.min_reject
    return quantities, outcome


def _run_rst(scenario: Scenario, context: _RunContext) -> Measurement:
    assert scenario.rst is not None
    outcome = reflection_simulation_test(scenario.rst.build(), context.monte_carlo)
    return _outcome_quantities(outcome), outcome


def _run_epr(scenario: Scenario, context: _RunContext) -> Measurement:
    assert scenario.verifier is not None
    config = ProtocolConfig(
        scenario.verifier.build(),
        scenario.n_pairs,
        scenario.ancilla_width,
        context.monte_carlo,
    )
    prover = (scenario.prover or ProverSection()).build(context.generator())
    if scenario.repetitions > 1:
        outcome = parallel_repeat(config, [prover], scenario.repetitions)
    else:
        outcome = run_protocol(config, prover)
    quantities = _outcome_quantities(outcome)
    if outcome.branches:
        for source, mass in give_up_breakdown(outcome).items():
            quantities[f"give_up_{source}"] = mass
    if scenario.oracle:
        oracle = oracle_protocol(config, prover)
        quantities["oracle_reject"] = oracle.reject
        quantities["oracle_gap"] = abs(oracle.reject - outcome.reject)
    return quantities, outcome


def _run_qip(scenario: Scenario, context: _RunContext) -> Measurement:
    assert scenario.system is not None
    spec, honest = scenario.system.build()
    declared = scenario.system
    c = declared.completeness
    if c is None:
        c = max(declared.a0, declared.a1)
    s = declared.soundness
    bound = (c - s) ** 2 / 16
    if scenario.qip_prover.preset == "honest":
        rewindable, augmented = make_rewindable(spec, honest)
        system = rewindable.system
        state = honest_protocol_state(system, augmented)
        outcome = perfect_completeness_protocol(
            system, backward_prover(system, augmented), state, context.monte_carlo
        )
        quantities = _outcome_quantities(outcome)
        quantities.update(
            max_accept=composite_unitary(system, augmented).max_acceptance, bound=bound
        )
        del quantities["accept"], quantities["give_up"]
        return quantities, outcome
    rng = context.generator()
    system = rewindable_verifier(spec)
    checks = []
    for _ in range(scenario.qip_prover.samples):
        backward = haar_backward_prover(system, rng, scenario.qip_prover.p_width)
        state = random_state(system.full_layout(backward.p_width), rng)
        checks.append(perfect_completeness_soundness_bound(system, backward, state, c, s))
    applicable = [check for check in checks if check.applicable] or checks
    worst = min(applicable, key=lambda check: check.reject)
    quantities = {
        "acceptance": 1.0 - worst.reject,
        "reject": worst.reject,
        "max_accept": max(check.top_eigenvalue for check in checks),
        "bound": bound,
        "applicable": float(sum(check.applicable for check in checks)),
    }
    return quantities, None


def _trace_distance_margins(
    rng: np.random.Generator, samples: int, max_size: int
) -> list[float]:
    layout = RegisterLayout.of(Q=2)
    margins = []
    for _ in range(samples):
        rho, sigma = random_density(layout, rng), random_density(layout, rng)
        projector = random_projector(layout.dim, int(rng.integers(0, layout.dim + 1)), rng)
        gap = abs(np.trace(projector.matrix @ (rho.matrix - sigma.matrix)).real)
        margins.append(trace_distance(rho, sigma) - gap)
    return margins


def _fidelity_margins(rng: np.random.Generator, samples: int, max_size: int) -> list[float]:
    layout = RegisterLayout.of(Q=2)
    margins = []
    for _ in range(samples):
        rho, sigma, xi = (random_density(layout, rng) for _ in range(3))
        slack = 1.0 + fidelity(rho, xi)
        margins.append(slack - fidelity(rho, sigma) ** 2 - fidelity(sigma, xi) ** 2)
    return margins


def _ensembles(rng: np.random.Generator, samples: int, max_size: int) -> list[WEnsemble]:
    return [WEnsemble.random(rng, int(rng.integers(1, max_size + 1))) for _ in range(samples)]


def _claim_margins(rng: np.random.Generator, samples: int, max_size: int) -> list[float]:
    return [claim_lower_bound_check(e).margin for e in _ensembles(rng, samples, max_size)]


def _rounding_margins(rng: np.random.Generator, samples: int, max_size: int) -> list[float]:
    margins = []
    for e in _ensembles(rng, samples, max_size):
        result = cj_mixture_rounding(e)
        margins.append(result.bound - result.distance)
    return margins


def _exact_distance_margins(
    rng: np.random.Generator, samples: int, max_size: int
) -> list[float]:
    return [
        -abs(claim_lower_bound_check(e).lhs - claim_exact_distance(e))
        for e in _ensembles(rng, samples, max_size)
    ]


CheckerFunction = Callable[[np.random.Generator, int, int], list[float]]

CHECKERS: dict[str, CheckerFunction] = {
    "trace-distance-lemma": _trace_distance_margins,
    "fidelity-lemma": _fidelity_margins,
    "claim-lower-bound": _claim_margins,
    "cj-rounding": _rounding_margins,
    "claim-exact-distance": _exact_distance_margins,
}


def _run_checker(scenario: Scenario, context: _RunContext) -> Measurement:
    assert scenario.checker is not None
    checker = scenario.checker
    margins = CHECKERS[checker.check](context.generator(), checker.samples, checker.max_size)
    violations = sum(margin < -TOLERANCE for margin in margins)
    if violations:
        logger.warning(
            "Check '%s' violated on %d of %d samples", checker.check, violations, len(margins)
        )
    return {
        "violations": float(violations),
        "worst_margin": float(min(margins)),
        "samples": float(len(margins)),
    }, None


RUNNERS: dict[ScenarioKind, Callable[[Scenario, _RunContext], Measurement]] = {
    ScenarioKind.REFLECTION: _run_reflection,
    ScenarioKind.MRP: _run_reflection,
    ScenarioKind.RST: _run_rst,
    ScenarioKind.EPR_QMA: _run_epr,
    ScenarioKind.QIP_TRANSFORM: _run_qip,
    ScenarioKind.CHECKER: _run_checker,
}


def run_scenario(
    scenario: Scenario | str | Path, settings: RunSettings | None = None
) -> ScenarioReport:
    """Run one scenario and judge its assertions.

    Args:
        scenario: A parsed scenario or the path of a scenario file.
        settings: Command-line overrides of mode, seed and shots.

    Returns:
        The report.

    Raises:
        ScenarioParseError: If the file does not parse.
        ScenarioValidationError: If a reference does not resolve, a parameter
            is out of range, or an asserted quantity was not measured.
        BudgetExceededError: If the scenario needs more qubits than allowed.
    """
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    context = _resolve(scenario, settings or RunSettings())
    logger.info(
        "Running scenario '%s' (%s, %s, seed %d)",
        scenario.name,
        scenario.kind.value,
        context.mode.value,
        context.seed,
    )
    start = time.perf_counter()
    try:
        quantities, outcome = RUNNERS[scenario.kind](scenario, context)
    except (ScenarioError, BudgetExceededError):
        raise
    except QProofError as e:
        raise ScenarioValidationError(f"Scenario '{scenario.name}': {e}") from e
    elapsed = time.perf_counter() - start
    results = []
    for assertion in scenario.assertions:
        if assertion.quantity not in quantities:
            raise ScenarioValidationError(
                f"Scenario '{scenario.name}' does not measure '{assertion.quantity}' "
                "with its current parameters"
            )
        measured = quantities[assertion.quantity]
        results.append(
            AssertionResult(
                quantity=assertion.quantity,
                relation=assertion.relation,
                claimed=assertion.claimed,
                measured=measured,
                tolerance=assertion.tolerance,
                passed=assertion.judge(measured),
            )
        )
    summary = None
    if outcome is not None and outcome.branches:
        summary = BranchSummary(
            branches=len(outcome.branches),
            accept=outcome.accept,
            give_up_accept=outcome.give_up_accept,
            reject=outcome.reject,
        )
    report = ScenarioReport(
        name=scenario.name,
        kind=scenario.kind,
        mode=context.mode,
        seed=context.seed,
        shots=context.shots if context.mode is Mode.MONTE_CARLO else None,
        quantities=dict(sorted(quantities.items())),
        assertions=results,
        branch_summary=summary,
        elapsed=elapsed,
    )
    logger.info(
        "Finished scenario '%s' in %.3fs: %s",
        scenario.name,
        elapsed,
        "pass" if report.passed else "FAIL",
    )
    return report


def discover_scenarios(directory: str | Path, pattern: str = "*") -> list[Scenario]:
    """Parse every ``*.json`` file in a directory and keep names matching ``pattern``.

    Raises:
        ScenarioParseError: If any file does not parse.
        EmptySuiteError: If nothing matches.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ScenarioValidationError(f"Scenario directory {directory} does not exist")
    scenarios = [load_scenario(path) for path in sorted(directory.glob("*.json"))]
    selected = [s for s in scenarios if fnmatch.fnmatchcase(s.name, pattern)]
    if not selected:
        raise EmptySuiteError(f"No scenario in {directory} matches '{pattern}'")
    names = [s.name for s in selected]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise ScenarioValidationError(f"Duplicate scenario names: {duplicates}")
    return sorted(selected, key=lambda s: s.name)


def run_suite(
    directory: str | Path | None = None,
    pattern: str = "*",
    settings: RunSettings | None = None,
    jobs: int = 1,
) -> SuiteReport:
    """Run every matching scenario, ordered by name.

    Args:
        directory: Scenario directory; defaults to ``QPROOF_SCENARIO_DIR``.
        pattern: Glob on scenario names.
        settings: Command-line overrides.
        jobs: Worker threads.

    Returns:
        The suite report; reports are ordered by scenario name regardless of
        completion order.
    """
    if directory is None:
        directory = os.getenv("QPROOF_SCENARIO_DIR", DEFAULT_SCENARIO_DIR)
    if jobs < 1:
        raise ScenarioValidationError(f"Job count must be positive, got {jobs}")
    scenarios = discover_scenarios(directory, pattern)
    logger.info("Running %d scenarios with %d jobs", len(scenarios), jobs)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        reports = list(pool.map(lambda s: run_scenario(s, settings), scenarios))
    return SuiteReport(reports=reports)


def _format_number(value: float) -> str:
    return f"{value:.12f}"


def render_text(reports: list[ScenarioReport], timing: bool = False) -> str:
    """Render reports as text; elapsed time only with ``timing``."""
    lines: list[str] = []
    for report in reports:
        lines.append(f"scenario: {report.name}")
        lines.append(f"kind: {report.kind.value}")
        mode = report.mode.value
        if report.shots is not None:
            mode += f" ({report.shots} shots)"
        lines.append(f"mode: {mode}")
        lines.append(f"rng: {report.generator} seed={report.seed}")
        lines.append("quantities:")
        for name, value in report.quantities.items():
            lines.append(f"  {name} = {_format_number(value)}")
        if report.assertions:
            lines.append("assertions:")
        for result in report.assertions:
            status = "PASS" if result.passed else "FAIL"
            lines.append(
                f"  {status} {result.quantity} {result.relation.value} "
                f"{_format_number(result.claimed)} measured={_format_number(result.measured)} "
                f"tolerance={result.tolerance:g}"
            )
        if report.branch_summary is not None:
            s = report.branch_summary
            lines.append(
                f"branches: {s.branches} (accept={_format_number(s.accept)} "
                f"give-up={_format_number(s.give_up_accept)} reject={_format_number(s.reject)})"
            )
        if timing:
            lines.append(f"elapsed: {report.elapsed:.3f}s")
        lines.append(f"result: {'PASS' if report.passed else 'FAIL'}")
        lines.append("")
    passed = sum(report.passed for report in reports)
    lines.append(f"{passed}/{len(reports)} scenarios passed")
    return "\n".join(lines) + "\n"


CSV_COLUMNS = ("scenario", "quantity", "relation", "claimed", "measured", "tolerance", "pass")


def render_csv(reports: list[ScenarioReport], timing: bool = False) -> str:
    """Render one CSV row per assertion; an ``elapsed`` column only with ``timing``."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([*CSV_COLUMNS, "elapsed"] if timing else CSV_COLUMNS)
    for report in reports:
        for result in report.assertions:
            row = [
                report.name,
                result.quantity,
                result.relation.value,
                _format_number(result.claimed),
                _format_number(result.measured),
                f"{result.tolerance:g}",
                "true" if result.passed else "false",
            ]
            if timing:
                row.append(f"{report.elapsed:.3f}")
            writer.writerow(row)
    return buffer.getvalue()


RENDERERS: dict[str, Callable[[list[ScenarioReport], bool], str]] = {
    "text": render_text,
    "csv": render_csv,
}


def list_presets() -> dict[str, list[str]]:
    """Return the names usable in scenario files, by category."""
    return {
        "verifiers": sorted(get_verifier_catalog()),
        "provers": list(PROVER_PRESETS),
        "qip-toys": sorted(QIP_TOYS),
        "checkers": sorted(CHECKERS),
        "kinds": [kind.value for kind in ScenarioKind],
    }


def describe(scenario: Scenario) -> str:
    """Return a short summary of a validated scenario."""
    lines = [f"scenario: {scenario.name}", f"kind: {scenario.kind.value}"]
    if scenario.description:
        lines.append(f"description: {scenario.description}")
    lines.append(f"mode: {scenario.mode.value}")
    section = getattr(scenario, _REQUIRED_SECTIONS[scenario.kind])
    fields = section.model_dump(exclude_none=True, exclude_defaults=True, mode="json")
    lines.append(f"{_REQUIRED_SECTIONS[scenario.kind]}: {json.dumps(fields, sort_keys=True)}")
    if scenario.kind is ScenarioKind.EPR_QMA:
        prover = scenario.prover or ProverSection()
        lines.append(f"prover: {prover.preset}")
        lines.append(f"n_pairs: {scenario.n_pairs}")
    lines.append(f"assertions: {len(scenario.assertions)}")
    for assertion in scenario.assertions:
        lines.append(
            f"  {assertion.quantity} {assertion.relation.value} {assertion.claimed:.12g} "
            f"(tolerance {assertion.tolerance:g})"
        )
    return "\n".join(lines) + "\n"

"""Tests for scenario parsing, running and reporting."""

import json
from pathlib import Path

import pytest
from pytest_mock import MockerFixture

from qproof_sim import harness
from qproof_sim.harness import (
    EmptySuiteError,
    Mode,
    RunSettings,
    ScenarioParseError,
    ScenarioValidationError,
    describe,
    discover_scenarios,
    list_presets,
    load_scenario,
    parse_complex,
    parse_rational,
    parse_scenario,
    render_csv,
    render_text,
    run_scenario,
    run_suite,
)
from qproof_sim.quantum_core import BudgetExceededError

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"
BUNDLED = sorted(SCENARIO_DIR.glob("*.json"))

RST_CHEAT = {
    "name": "cheat",
    "kind": "rst",
    "rst": {"registers": "zero", "q": "1/2"},
    "assertions": [{"quantity": "reject", "claimed": "1/16"}],
}


def _scenario_text(**overrides: object) -> str:
    return json.dumps({**RST_CHEAT, **overrides})


def _write(directory: Path, filename: str, **overrides: object) -> Path:
    path = directory / filename
    path.write_text(_scenario_text(**overrides), encoding="utf-8")
    return path


def _epr(**fields: object) -> str:
    return json.dumps({"name": "e", "kind": "epr-qma", "ancilla_width": 0, **fields})


def _reflection(**fields: object) -> str:
    reflection = {"preset": "product", "p": "1/2", "q": 1}
    base = {"name": "r", "kind": "reflection", "reflection": reflection}
    return json.dumps({**base, **fields})


class TestParsing:
    """Tests for value parsing and schema validation."""

    def test_parse_rational(self) -> None:
        """Test exact fractions and decimals."""
        assert parse_rational("3/4") == 0.75
        assert parse_rational(" 0.3 ") == pytest.approx(0.3)
        assert parse_rational(1) == 1
        with pytest.raises(ValueError, match="not a rational"):
            parse_rational("1/0")
        with pytest.raises(ValueError, match="boolean"):
            parse_rational(True)

    def test_parse_complex(self) -> None:
        """Test [re, im] pairs and real values."""
        assert parse_complex([1, "1/2"]) == complex(1, 0.5)
        assert parse_complex("-1/4") == complex(-0.25)
        with pytest.raises(ValueError, match="pairs"):
            parse_complex([1])
        with pytest.raises(ValueError, match="not a number"):
            parse_complex(None)

    def test_valid_scenario(self) -> None:
        """Test that a minimal scenario validates with defaults."""
        scenario = parse_scenario(_scenario_text())
        assert scenario.mode is Mode.EXACT
        assert scenario.assertions[0].claimed == 0.0625

    def test_malformed_json_location(self) -> None:
        """Test that syntax errors report line and column."""
        with pytest.raises(ScenarioParseError) as exc_info:
            parse_scenario('{\n  "name": ', "broken.json")
        assert exc_info.value.location is not None
        assert exc_info.value.location.startswith("line 2")
        assert "broken.json" in str(exc_info.value)

    def test_schema_error_location(self) -> None:
        """Test that schema errors report the field path."""
        with pytest.raises(ScenarioParseError) as exc_info:
            parse_scenario(_scenario_text(kind="nope"))
        assert exc_info.value.location == "kind"

    def test_unknown_field(self) -> None:
        """Test that unknown fields are refused."""
        with pytest.raises(ScenarioParseError) as exc_info:
            parse_scenario(_scenario_text(bogus=1))
        assert exc_info.value.location == "bogus"

    def test_missing_section(self) -> None:
        """Test that each kind requires its section."""
        with pytest.raises(ScenarioParseError, match="needs a 'rst' section"):
            parse_scenario(json.dumps({"name": "x", "kind": "rst"}))

    def test_unknown_quantity(self) -> None:
        """Test that assertions must name quantities the kind measures."""
        text = _scenario_text(assertions=[{"quantity": "max_accept", "claimed": 1}])
        with pytest.raises(ScenarioParseError, match="not measured by kind"):
            parse_scenario(text)

    def test_honest_rst_needs_q_at_least_half(self) -> None:
        """Test that the default p = 1/(2q) needs q ≥ 1/2."""
        with pytest.raises(ScenarioParseError, match="q >= 1/2"):
            parse_scenario(_scenario_text(rst={"q": "0.3"}))

    def test_oracle_restrictions(self) -> None:
        """Test that the oracle runs single N = 2 instances."""
        text = json.dumps(
            {
                "name": "o",
                "kind": "epr-qma",
                "verifier": {"catalog": "cnot"},
                "n_pairs": 3,
                "oracle": True,
            }
        )
        with pytest.raises(ScenarioParseError, match="n_pairs = 2"):
            parse_scenario(text)

    def test_unreadable_file(self, tmp_path: Path) -> None:
        """Test that missing files raise a parse error."""
        with pytest.raises(ScenarioParseError, match="Cannot read"):
            load_scenario(tmp_path / "missing.json")


class TestRunScenario:
    """Tests for running single scenarios."""

    @pytest.mark.parametrize("path", BUNDLED, ids=[path.stem for path in BUNDLED])
    def test_bundled_scenarios_pass(self, path: Path) -> None:
        """Test every bundled scenario's claims."""
        report = run_scenario(path)
        failed = [a.quantity for a in report.assertions if not a.passed]
        assert report.passed, f"{report.name}: {failed} {report.quantities}"

    def test_report_contents(self) -> None:
        """Test quantities, assertions and the branch summary of an exact run."""
        report = run_scenario(parse_scenario(_scenario_text(seed=3)))
        assert report.seed == 3
        assert report.shots is None
        assert report.quantities["reject"] == pytest.approx(1 / 16)
        assert list(report.quantities) == sorted(report.quantities)
        assert report.branch_summary is not None
        assert report.branch_summary.reject == pytest.approx(1 / 16)

    def test_failed_assertion(self) -> None:
        """Test that a wrong claim fails without raising."""
        text = _scenario_text(assertions=[{"quantity": "reject", "claimed": "1/8"}])
        report = run_scenario(parse_scenario(text))
        assert not report.passed
        assert report.assertions[0].measured == pytest.approx(1 / 16)

    def test_relations(self) -> None:
        """Test ge, le and gt judgments."""
        assertions = [
            {"quantity": "reject", "claimed": "1/32", "relation": "ge"},
            {"quantity": "reject", "claimed": "1/8", "relation": "le"},
            {"quantity": "give_up", "claimed": "1/2", "relation": "gt"},
        ]
        report = run_scenario(parse_scenario(_scenario_text(assertions=assertions)))
        assert report.passed

    def test_overrides(self) -> None:
        """Test command-line overrides of mode, seed and shots."""
        settings = RunSettings(mode=Mode.MONTE_CARLO, seed=5, shots=500)
        report = run_scenario(parse_scenario(_scenario_text(assertions=[])), settings)
        assert (report.mode, report.seed, report.shots) == (Mode.MONTE_CARLO, 5, 500)
        assert report.quantities["reject"] == pytest.approx(1 / 16, abs=0.05)

    def test_seed_from_environment(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test the seed default from QPROOF_SEED."""
        monkeypatch.setenv("QPROOF_SEED", "77")
        assert run_scenario(parse_scenario(_scenario_text())).seed == 77

    def test_precondition_becomes_validation_error(self) -> None:
        """Test that simulation preconditions surface as scenario errors."""
        text = json.dumps(
            {
                "name": "weak",
                "kind": "epr-qma",
                "verifier": {"catalog": "rotation", "params": {"theta": "0.3"}},
                "ancilla_width": 0,
            }
        )
        with pytest.raises(ScenarioValidationError, match="p_x >= 1/2"):
            run_scenario(parse_scenario(text))

    def test_budget(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test that budget errors propagate unchanged."""
        monkeypatch.setenv("QPROOF_MAX_QUBITS", "4")
        with pytest.raises(BudgetExceededError):
            run_scenario(SCENARIO_DIR / "honest-epr-n2.json")

    def test_unmeasured_quantity(self) -> None:
        """Test that quantities depending on optional fields must be measured."""
        text = json.dumps(
            {
                "name": "r",
                "kind": "reflection",
                "reflection": {"preset": "product", "p": "1/2", "q": 1},
                "assertions": [{"quantity": "bound", "claimed": 0}],
            }
        )
        with pytest.raises(ScenarioValidationError, match="does not measure"):
            run_scenario(parse_scenario(text))


class TestSuite:
    """Tests for scenario discovery and suites."""

    def test_filter(self) -> None:
        """Test name filtering and ordering."""
        names = [s.name for s in discover_scenarios(SCENARIO_DIR, "rst-*")]
        assert names == ["rst-cheat-minus-q0.6", "rst-cheat-q0.3", "rst-honest-q0.75"]

    def test_empty_suite(self) -> None:
        """Test that an empty selection is an error."""
        with pytest.raises(EmptySuiteError):
            discover_scenarios(SCENARIO_DIR, "nothing-*")

    def test_missing_directory(self, tmp_path: Path) -> None:
        """Test a missing directory."""
        with pytest.raises(ScenarioValidationError, match="does not exist"):
            discover_scenarios(tmp_path / "absent")

    def test_duplicate_names(self, tmp_path: Path) -> None:
        """Test that scenario names must be unique."""
        _write(tmp_path, "a.json")
        _write(tmp_path, "b.json")
        with pytest.raises(ScenarioValidationError, match="Duplicate"):
            discover_scenarios(tmp_path)

    def test_jobs_keep_name_order(self, tmp_path: Path) -> None:
        """Test that parallel suites report in name order."""
        for name in ("c", "a", "b"):
            _write(tmp_path, f"{name}.json", name=name)
        report = run_suite(tmp_path, jobs=3)
        assert [r.name for r in report.reports] == ["a", "b", "c"]
        assert report.passed
        assert report.failures == []

    def test_settings_reach_every_scenario(self, tmp_path: Path, mocker: MockerFixture) -> None:
        """Test that suite overrides are passed to each scenario run."""
        for name in ("a", "b"):
            _write(tmp_path, f"{name}.json", name=name)
        spy = mocker.spy(harness, "run_scenario")
        settings = RunSettings(seed=9)
        report = run_suite(tmp_path, settings=settings)

        assert spy.call_count == 2
        assert all(call.args[1] is settings for call in spy.call_args_list)
        assert [r.seed for r in report.reports] == [9, 9]

    def test_directory_from_environment(
        self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """Test the QPROOF_SCENARIO_DIR default."""
        _write(tmp_path, "only.json", name="only")
        monkeypatch.setenv("QPROOF_SCENARIO_DIR", str(tmp_path))
        assert [r.name for r in run_suite().reports] == ["only"]

    def test_jobs_validated(self) -> None:
        """Test the job count."""
        with pytest.raises(ScenarioValidationError, match="Job count"):
            run_suite(SCENARIO_DIR, jobs=0)


class TestRendering:
    """Tests for report rendering."""

    def test_text_is_deterministic(self) -> None:
        """Test identical text for identical runs, without timing."""
        first = render_text([run_scenario(parse_scenario(_scenario_text()))])
        second = render_text([run_scenario(parse_scenario(_scenario_text()))])
        assert first == second
        assert "elapsed" not in first
        assert "  reject = 0.062500000000" in first
        assert first.endswith("1/1 scenarios passed\n")

    def test_text_timing(self) -> None:
        """Test the elapsed line with timing."""
        report = run_scenario(parse_scenario(_scenario_text()))
        assert "elapsed: " in render_text([report], timing=True)

    def test_text_of_sampled_run(self) -> None:
        """Test shots in the mode line and no branch or assertion block when sampling."""
        settings = RunSettings(mode=Mode.MONTE_CARLO, seed=1, shots=50)
        report = run_scenario(parse_scenario(_scenario_text(assertions=[])), settings)
        text = render_text([report])
        assert "mode: mc (50 shots)" in text
        assert "assertions:" not in text
        assert "branches:" not in text

    def test_text_of_failure(self) -> None:
        """Test FAIL markers for a wrong claim."""
        text = _scenario_text(assertions=[{"quantity": "reject", "claimed": "1/8"}])
        rendered = render_text([run_scenario(parse_scenario(text))])
        assert "  FAIL reject eq" in rendered
        assert rendered.endswith("result: FAIL\n\n0/1 scenarios passed\n")

    def test_csv(self) -> None:
        """Test one CSV row per assertion."""
        report = run_scenario(parse_scenario(_scenario_text()))
        lines = render_csv([report]).splitlines()
        assert lines[0] == "scenario,quantity,relation,claimed,measured,tolerance,pass"
        assert lines[1] == "cheat,reject,eq,0.062500000000,0.062500000000,1e-09,true"
        assert render_csv([report], timing=True).splitlines()[0].endswith(",elapsed")

    def test_list_presets(self) -> None:
        """Test the preset listing."""
        presets = list_presets()
        assert "hadamard-coin" in presets["verifiers"]
        assert "honest" in presets["provers"]
        assert presets["qip-toys"] == ["controlled-rotation", "flip"]
        assert "epr-qma" in presets["kinds"]

    def test_describe(self) -> None:
        """Test the scenario summary."""
        text = describe(load_scenario(SCENARIO_DIR / "honest-epr-n2.json"))
        assert text.startswith("scenario: honest-epr-n2\nkind: epr-qma\n")
        assert 'verifier: {"catalog": "hadamard-coin"}' in text
        assert "prover: honest" in text
        assert "assertions: 2" in text

    def test_describe_without_description(self) -> None:
        """Test the summary of a scenario without description or prover."""
        text = describe(parse_scenario(_scenario_text()))
        assert "description" not in text
        assert "prover" not in text
        assert 'rst: {"q": 0.5, "registers": "zero"}' in text


class TestSections:
    """Tests for the verifier, prover, reflection and state sections."""

    def test_gate_list_verifier(self) -> None:
        """Test a verifier composed from named gates and accept patterns."""
        verifier = {
            "a_width": 1,
            "m_width": 1,
            "gates": [{"gate": "CNOT", "targets": ["M", "A"]}],
            "accept": ["1*"],
        }
        report = run_scenario(parse_scenario(_epr(verifier=verifier)))
        assert report.quantities["acceptance"] == pytest.approx(1.0)

    @pytest.mark.parametrize(
        ("verifier", "message"),
        [
            ({"a_width": 1, "m_width": 1}, "give 'catalog'"),
            (
                {"catalog": "cnot", "gates": [{"gate": "X", "targets": ["A"]}]},
                "exclusive",
            ),
        ],
    )
    def test_verifier_section_checks(self, verifier: dict[str, object], message: str) -> None:
        """Test that a verifier is either a catalog entry or a full gate list."""
        with pytest.raises(ScenarioParseError, match=message):
            parse_scenario(_epr(verifier=verifier))

    @pytest.mark.parametrize(
        ("prover", "message"),
        [
            ({"preset": "wrong-q"}, "needs 'q'"),
            ({"preset": "product-witness", "q": "1/2"}, "needs 'witness'"),
            ({"preset": "explicit"}, "needs 'matrix'"),
        ],
    )
    def test_prover_section_checks(self, prover: dict[str, object], message: str) -> None:
        """Test the fields each prover preset requires."""
        with pytest.raises(ScenarioParseError, match=message):
            parse_scenario(_epr(verifier={"catalog": "cnot"}, prover=prover))

    def test_product_witness_prover(self) -> None:
        """Test the honest witness and q given explicitly."""
        prover = {"preset": "product-witness", "witness": [0, 1], "q": "1/2"}
        text = _epr(verifier={"catalog": "cnot"}, prover=prover)
        assert run_scenario(parse_scenario(text)).quantities["acceptance"] == pytest.approx(1.0)

    def test_haar_prover_matches_oracle(self) -> None:
        """Test that one seeded Haar prover drives both simulations."""
        text = _epr(verifier={"catalog": "hadamard-coin"}, prover={"preset": "haar"}, oracle=True)
        report = run_scenario(parse_scenario(text), RunSettings(seed=4))
        assert report.quantities["oracle_gap"] == pytest.approx(0.0, abs=1e-9)

    def test_explicit_prover(self) -> None:
        """Test a prover unitary given as a matrix."""
        identity = [[1 if i == j else 0 for j in range(8)] for i in range(8)]
        text = _epr(verifier={"catalog": "cnot"}, prover={"preset": "explicit", "matrix": identity})
        report = run_scenario(parse_scenario(text))
        assert report.quantities["acceptance"] + report.quantities["reject"] == pytest.approx(1.0)

    def test_explicit_reflection(self) -> None:
        """Test a reflection triple given as matrices."""
        half = 0.5**0.5
        reflection = {
            "preset": "explicit",
            "u": [[half, half], [half, -half]],
            "delta0": [[1, 0], [0, 0]],
            "pi0": [[1, 0], [0, 0]],
        }
        report = run_scenario(parse_scenario(_reflection(reflection=reflection)))
        assert report.quantities["accept"] == pytest.approx(1.0)

    def test_reflection_preset_fields(self) -> None:
        """Test that an explicit triple needs all three matrices."""
        with pytest.raises(ScenarioParseError, match="needs"):
            parse_scenario(_reflection(reflection={"preset": "explicit"}))

    @pytest.mark.parametrize(
        "state",
        [{"kind": "basis", "bits": "00"}, {"kind": "amplitudes", "amplitudes": [2, 0, 0, 0]}],
    )
    def test_explicit_states(self, state: dict[str, object]) -> None:
        """Test basis and amplitude inputs on the legal eigenvector."""
        report = run_scenario(parse_scenario(_reflection(state=state)))
        assert report.quantities["accept"] == pytest.approx(1.0)

    @pytest.mark.parametrize(
        ("state", "message"),
        [
            ({"kind": "eigen", "index": 5}, "out of range"),
            ({"kind": "basis"}, "needs 'bits'"),
            ({"kind": "amplitudes"}, "needs 'amplitudes'"),
        ],
    )
    def test_state_section_checks(self, state: dict[str, object], message: str) -> None:
        """Test that unresolved state fields fail at run time."""
        with pytest.raises(ScenarioValidationError, match=message):
            run_scenario(parse_scenario(_reflection(state=state)))

    def test_soundness_check_without_gap(self) -> None:
        """Test that an eigenvalue inside the gap reports the check as inapplicable."""
        text = _reflection(
            reflection={"preset": "two-level", "a0": "1/2", "a1": 1}, epsilon="1/4"
        )
        report = run_scenario(parse_scenario(text))
        assert report.quantities["applicable"] == 0.0
        assert "min_reject" not in report.quantities

    def test_flip_toy_messages(self) -> None:
        """Test that the flip toy only comes with three messages."""
        system = {"toy": "flip", "a0": 0, "a1": "5/6", "messages": 2}
        with pytest.raises(ScenarioParseError, match="three messages"):
            parse_scenario(json.dumps({"name": "f", "kind": "qip-transform", "system": system}))

    def test_checker_violations_are_counted(self, mocker: MockerFixture) -> None:
        """Test that negative margins count as violations."""
        mocker.patch.dict(harness.CHECKERS, {"fidelity-lemma": lambda rng, n, k: [0.5, -1.0]})
        text = json.dumps({"name": "c", "kind": "checker", "checker": {"check": "fidelity-lemma"}})
        report = run_scenario(parse_scenario(text))
        assert report.quantities["violations"] == 1.0
        assert report.quantities["worst_margin"] == -1.0

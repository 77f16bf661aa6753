"""
Tests for scenario config validation and report consistency.
"""
from copy import deepcopy

import pytest
from pydantic import ValidationError

from src.catalogue import SEED_SCENARIOS
from src.schemas import (
    CertificationReport,
    Counterexample,
    EpsVerdict,
    HypothesisViolation,
    ScenarioConfig,
)

BASE = {
    "id": "schema-check",
    "theorem": "thm42",
    "space": {"dim": 2, "p": 2},
    "operator": {"family": "shift", "q": [0.5, 0.0], "theta": "t**2"},
    "alpha": {"kind": "harmonic"},
    "bounds": {"K": 1.5},
    "x0": [1.5, 0.0],
}


def _config(**changes) -> dict:
    data = deepcopy(BASE)
    data.update(changes)
    return data


# =====================================================
# SCENARIO CONFIG
# =====================================================

class TestScenarioConfig:
    """Tests for ScenarioConfig validation."""

    def test_minimal(self):
        """Test that the base config validates with defaults filled in."""
        config = ScenarioConfig.model_validate(BASE)
        assert config.divergence == "integral"
        assert config.horizon is None
        assert not config.is_ishikawa

    @pytest.mark.parametrize("entry", SEED_SCENARIOS, ids=lambda entry: entry["config"]["id"])
    def test_catalogue_validates(self, entry):
        """Test every bundled scenario."""
        ScenarioConfig.model_validate(deepcopy(entry["config"]))

    @pytest.mark.parametrize("changes,message", [
        ({"x0": [1.0, 0.0, 0.0]}, "x0 has 3 coordinates"),
        ({"bounds": {}}, "thm42 needs bounds K"),
        ({"theorem": "rem43"}, "rem43 needs operator.psi"),
        ({"theorem": "thm55", "bounds": {"K": 1.5, "K_prime": 1.0}}, "needs an approximation block"),
        ({"beta": {"kind": "harmonic"}}, "beta and offset do not apply"),
        ({"operator": {"family": "shift", "q": [0.5, 0.0]}}, "must declare one of theta, psi, phi"),
        ({"operator": {"family": "shift", "q": [0.5, 0.0], "theta": "t", "psi": "t"}}, "at most one"),
        ({"operator": {"family": "diagonal", "q": [0.5, 0.0], "theta": "t"}}, "needs 'diagonal'"),
        ({"alpha": {"kind": "power", "c": 1.0}}, "needs s"),
        ({"alpha": {"kind": "expr", "expr": "1/(n+1)", "f": "exp(x)", "bound": 1.0}}, "needs divergence 'simple'"),
    ])
    def test_consistency_errors(self, changes, message):
        """Test cross-field requirements."""
        with pytest.raises(ValidationError, match=message):
            ScenarioConfig.model_validate(_config(**changes))

    def test_ishikawa_requirements(self):
        """Test beta, varpi, the second operator and tau."""
        ishikawa = _config(theorem="thm64", bounds={"K0": 1.0, "K1": 1.0})
        with pytest.raises(ValidationError, match="needs a beta sequence"):
            ScenarioConfig.model_validate(ishikawa)
        ishikawa["beta"] = {"kind": "harmonic"}
        with pytest.raises(ValidationError, match="needs operator.varpi"):
            ScenarioConfig.model_validate(ishikawa)

        smooth = {**ishikawa, "theorem": "thm73"}
        with pytest.raises(ValidationError, match="needs second_operator"):
            ScenarioConfig.model_validate(smooth)
        smooth["second_operator"] = {"family": "shift", "q": [0.0, 0.0]}
        smooth["space"] = {"dim": 2, "p": 2, "tau": "t"}
        with pytest.raises(ValidationError, match="share the zero"):
            ScenarioConfig.model_validate(smooth)
        smooth["second_operator"]["q"] = [0.5, 0.0]
        assert ScenarioConfig.model_validate(smooth).is_ishikawa

    @pytest.mark.parametrize("changes", [
        {"unexpected": 1},
        {"id": "Bad_Id"},
        {"id": "trailing-"},
        {"theorem": "thm99"},
        {"space": {"dim": 2, "p": 1}},
        {"operator": {"family": "shift", "q": [0.5, 0.0], "theta": "t +"}},
        {"operator": {"family": "shift", "q": [0.5, 0.0], "theta": "__import__('os')"}},
        {"operator": {"family": "bounded_perturbation", "q": [0.5, 0.0], "lam": 0.75, "theta": "t"}},
        {"horizon": 0},
        {"eps_grid": [0.5, -0.1]},
        {"alpha": {"kind": "constant", "value": -1.0}},
    ])
    def test_field_errors(self, changes):
        """Test field-level constraints."""
        with pytest.raises(ValidationError):
            ScenarioConfig.model_validate(_config(**changes))

    def test_theta_in_K_and_t(self):
        """Test that a direct Theta may use K."""
        operator = {"family": "shift", "q": [0.5, 0.0], "theta": "t**2 / K"}
        assert ScenarioConfig.model_validate(_config(operator=operator)).operator.theta == "t**2 / K"

    def test_json_schema(self):
        """Test that the JSON schema names the required top-level fields."""
        schema = ScenarioConfig.model_json_schema()
        assert {"id", "theorem", "space", "operator", "alpha", "bounds", "x0"} <= set(schema["required"])


# =====================================================
# REPORTS
# =====================================================

class TestReports:
    """Tests for verdict and report invariants."""

    def test_failed_needs_counterexample(self):
        """Test that a failed verdict without a counterexample is invalid."""
        with pytest.raises(ValidationError):
            EpsVerdict(eps=0.1, phi=3, status="failed")

    def test_certified_has_none(self):
        """Test that a certified verdict cannot carry counterexamples."""
        with pytest.raises(ValidationError):
            EpsVerdict(
                eps=0.1, phi=3, status="certified",
                counterexamples=[Counterexample(eps=0.1, n=4, residual=0.2)],
            )

    def test_exit_codes(self):
        """Test 0 for a clean report and 1 for failure, violation or rejection."""
        certified = EpsVerdict(eps=0.5, phi=2, status="certified", first_entry=1, slack_ratio=2.0)
        vacuous = EpsVerdict(eps=0.1, phi=50, status="vacuous")
        failed = EpsVerdict(
            eps=0.1, phi=3, status="failed",
            counterexamples=[Counterexample(eps=0.1, n=3, residual=0.2)],
        )
        clean = CertificationReport(scenario_id="s", horizon=10, entries=[certified, vacuous])
        assert clean.exit_code == 0
        assert clean.eps_grid == [0.5, 0.1]
        assert clean.phi_values == [2, 50]
        assert CertificationReport(scenario_id="s", horizon=10, entries=[failed]).exit_code == 1
        violated = CertificationReport(
            scenario_id="s", horizon=10, entries=[certified],
            hypothesis_violations=[HypothesisViolation(check="accretivity", message="x")],
        )
        assert violated.exit_code == 1
        assert CertificationReport(scenario_id="s", horizon=10, rejected=True).exit_code == 1

    def test_json_round_trip_keeps_verdicts(self):
        """Test that a dumped report validates back to the same verdicts."""
        report = CertificationReport(
            scenario_id="s", horizon=10,
            entries=[EpsVerdict(eps=0.5, phi=2, status="certified", first_entry=1, slack_ratio=2.0)],
        )
        again = CertificationReport.model_validate_json(report.model_dump_json())
        assert again.entries == report.entries
        assert again.metadata.generated_at == report.metadata.generated_at

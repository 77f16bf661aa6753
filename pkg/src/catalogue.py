"""
Bundled scenario catalogue.

Each entry pairs a scenario config (validated into ScenarioConfig on access) with the
outcome the harness should reach on it:
    pass    no failed verdict, no hypothesis violation
    fail    at least one failed verdict with a recorded counterexample
    reject  the preflight finds a hypothesis violation and nothing is iterated
"""
from copy import deepcopy
from typing import Literal, NamedTuple

from src.exceptions import ScenarioError
from src.schemas import THEOREM_LABELS, ScenarioConfig

Outcome = Literal["pass", "fail", "reject"]


class CatalogueEntry(NamedTuple):
    id: str
    theorem_label: str
    expected: Outcome


# Shared geometry: q in R^4 and a start at distance exactly 1
_Q4 = [0.5, -0.5, 0.25, 0.0]
_X4 = [1.5, -0.5, 0.25, 0.0]
_X4_HALF = [1.0, -0.5, 0.25, 0.0]

# Planar instances for the perturbed and Ishikawa schemes
_Q2 = [0.5, 0.0]
_X2 = [1.5, 0.0]

# (||q|| + lam * sqrt(2)) (1 + 1e-6) for lam = 0.5 and ||q|| = 0.5, rounded up
_K0_BOUNDED = 1.2072

_HARMONIC_THM42 = {
    "id": "implicit-shift-harmonic",
    "description": "Implicit scheme for A(x) = x - q in l_2^4 with harmonic steps",
    "theorem": "thm42",
    "space": {"dim": 4, "p": 2},
    "operator": {"family": "shift", "q": _Q4, "theta": "t**2"},
    "alpha": {"kind": "harmonic"},
    "divergence": "simple",
    "bounds": {"K": 1.000001},
    "x0": _X4,
    "horizon": 10_000,
}

SEED_SCENARIOS: list[dict] = [
    # Positive scenarios, one per certified rate
    {
        "expected": "pass",
        "config": _HARMONIC_THM42,
    },
    {
        "expected": "pass",
        "config": {
            "id": "implicit-shift-linear",
            "description": "psi = id with constant steps: linear convergence",
            "theorem": "rem43",
            "space": {"dim": 4, "p": 2},
            "operator": {"family": "shift", "q": _Q4, "psi": "t", "linear_c": 1.0},
            "alpha": {"kind": "constant", "value": 1.0},
            "bounds": {"K": 1.0},
            "x0": _X4_HALF,
            "horizon": 10_000,
        },
    },
    {
        "expected": "pass",
        "config": {
            "id": "implicit-shift-envelope",
            "description": "psi = id with harmonic steps, plus the psi-inverse envelope",
            "theorem": "cor44",
            "space": {"dim": 4, "p": 2},
            "operator": {"family": "shift", "q": _Q4, "psi": "t"},
            "alpha": {"kind": "harmonic"},
            "bounds": {"K": 1.000001},
            "x0": _X4,
            "horizon": 10_000,
        },
    },
    {
        "expected": "pass",
        "config": {
            "id": "implicit-perturbed-thm55",
            "description": "A_n(x) = x - q + b/(n+1)^2 with a declared residual bound",
            "theorem": "thm55",
            "space": {"dim": 2, "p": 2},
            "operator": {"family": "shift", "q": _Q2, "theta": "t**2"},
            "approximation": {"b": [0.0, 1.0], "h": {"kind": "power", "c": 1.0, "s": 2.0}, "xi_star": "1"},
            "alpha": {"kind": "harmonic"},
            "bounds": {"K": 1.000001, "K_prime": 0.500001},
            "x0": _X2,
            "horizon": 10_000,
        },
    },
    {
        "expected": "pass",
        "config": {
            "id": "implicit-perturbed-thm56",
            "description": "A_n(x) = x - q + b/(n+1)^2 with the residual bound derived from K0, K1, K2",
            "theorem": "thm56",
            "space": {"dim": 2, "p": 2},
            "operator": {"family": "shift", "q": _Q2, "theta": "t**2"},
            "approximation": {"b": [0.0, 1.0], "h": {"kind": "power", "c": 1.0, "s": 2.0}, "xi_star": "1"},
            "alpha": {"kind": "constant", "value": 1.0},
            # sum of 1/(n+1)^2 is pi^2/6 < 1.65
            "bounds": {"K0": 1.000001, "K1": 0.500001, "K2": 1.65},
            "x0": _X2,
            "horizon": 10_000,
        },
    },
    {
        "expected": "pass",
        "config": {
            "id": "ishikawa-perturbed-thm64",
            "description": "Ishikawa scheme for a tanh-perturbed shift with bounded I - A",
            "theorem": "thm64",
            "space": {"dim": 2, "p": 2},
            "operator": {
                "family": "bounded_perturbation",
                "q": _Q2,
                "lam": 0.5,
                "theta": "0.5*t**2",
                "varpi": "t/1.5",
            },
            "alpha": {"kind": "shifted_harmonic", "c": 4.0},
            "beta": {"kind": "shifted_harmonic", "c": 4.0},
            "bounds": {"K0": _K0_BOUNDED, "K1": 1.000001},
            "x0": _X2,
            "horizon": 20_000,
        },
    },
    {
        "expected": "pass",
        "config": {
            "id": "ishikawa-two-op-hilbert",
            "description": "Two-operator Ishikawa scheme in l_2^2 with tau(t) = t",
            "theorem": "thm73",
            "space": {"dim": 2, "p": 2, "tau": "t"},
            "operator": {"family": "bounded_perturbation", "q": _Q2, "lam": 0.5, "theta": "0.5*t**2"},
            "second_operator": {"family": "bounded_perturbation", "q": _Q2, "lam": 0.25},
            "alpha": {"kind": "shifted_harmonic", "c": 4.0},
            "beta": {"kind": "shifted_harmonic", "c": 4.0},
            "bounds": {"K0": _K0_BOUNDED, "K1": 1.000001},
            "x0": _X2,
            "horizon": 20_000,
            "verify_samples": 10_000,
        },
    },

    # Negative controls
    {
        "expected": "fail",
        "config": {
            **_HARMONIC_THM42,
            "id": "broken-rate-control",
            "description": "Claims every residual is below every eps from n = 0",
            "rate_override": "0",
            "horizon": 1_000,
        },
    },
    {
        "expected": "reject",
        "config": {
            **_HARMONIC_THM42,
            "id": "wrong-theta-control",
            "description": "Declares Theta = 2 t^2 for an operator with <A x, J(x - q)> = ||x - q||^2",
            "operator": {"family": "shift", "q": _Q4, "theta": "2*t**2"},
        },
    },
    {
        "expected": "reject",
        "config": {
            "id": "perturbed-constant-control",
            "description": "A perturbation that never vanishes, declared with a rate claiming it does",
            "theorem": "thm55",
            "space": {"dim": 2, "p": 2},
            "operator": {"family": "shift", "q": _Q2, "theta": "t**2"},
            "approximation": {"b": [0.0, 1.0], "h": {"kind": "constant", "value": 0.5}, "h_rate": "1"},
            "alpha": {"kind": "harmonic"},
            "bounds": {"K": 1.000001, "K_prime": 0.500001},
            "x0": _X2,
            "horizon": 1_000,
        },
    },
]

_BY_ID = {entry["config"]["id"]: entry for entry in SEED_SCENARIOS}


def list_scenarios() -> list[CatalogueEntry]:
    """Catalogue entries in their bundled order."""
    return [
        CatalogueEntry(entry["config"]["id"], THEOREM_LABELS[entry["config"]["theorem"]], entry["expected"])
        for entry in SEED_SCENARIOS
    ]


def has_scenario(scenario_id: str) -> bool:
    return scenario_id in _BY_ID


def get_scenario(scenario_id: str) -> ScenarioConfig:
    """Validated config of a bundled scenario; raises ScenarioError for unknown ids."""
    entry = _BY_ID.get(scenario_id)
    if entry is None:
        raise ScenarioError(f"unknown scenario '{scenario_id}'")
    return ScenarioConfig.model_validate(deepcopy(entry["config"]))


def expected_outcome(scenario_id: str) -> Outcome:
    if scenario_id not in _BY_ID:
        raise ScenarioError(f"unknown scenario '{scenario_id}'")
    return _BY_ID[scenario_id]["expected"]

"""Pydantic schemas for scenario configs and certification reports."""
from datetime import datetime
from typing import Annotated, Literal, Optional

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, PositiveFloat, field_validator, model_validator

from src.exceptions import ExpressionError
from src.expressions import compile_expression
from src.models import get_current_time


def _expression_over(*variables: str):
    def check(source: str) -> str:
        try:
            compile_expression(source, variables)
        except ExpressionError as exc:
            raise ValueError(str(exc)) from exc
        return source

    return AfterValidator(check)


# Expressions in t (psi, phi, varpi, xi*, tau, rates), in K and t (a direct Theta),
# in n (sequences) and in x (simple divergence witnesses)
Expr = Annotated[str, _expression_over("t")]
ThetaExpr = Annotated[str, _expression_over("K", "t")]
SequenceExpr = Annotated[str, _expression_over("n")]
DivergenceExpr = Annotated[str, _expression_over("x")]

Theorem = Literal["thm42", "rem43", "cor44", "thm55", "thm56", "thm64", "thm73"]

IMPLICIT_THEOREMS = frozenset({"thm42", "rem43", "cor44", "thm55", "thm56"})
ISHIKAWA_THEOREMS = frozenset({"thm64", "thm73"})

THEOREM_LABELS = {
    "thm42": "Thm 4.2",
    "rem43": "Remark 4.3",
    "cor44": "Cor 4.4",
    "thm55": "Thm 5.5",
    "thm56": "Thm 5.6",
    "thm64": "Thm 6.4",
    "thm73": "Thm 7.3",
}


# ============== Scenario Config ==============

class SpaceSpec(BaseModel):
    """l_p^dim, optionally with a smoothness modulus tau(t)."""
    model_config = ConfigDict(extra="forbid")

    dim: int = Field(..., ge=1, le=256)
    p: float = Field(..., gt=1, lt=1e6)
    tau: Optional[Expr] = None


class OperatorSpec(BaseModel):
    """A built-in operator family with its declared moduli."""
    model_config = ConfigDict(extra="forbid")

    family: Literal["shift", "diagonal", "bounded_perturbation"]
    q: list[float] = Field(..., min_length=1)
    diagonal: Optional[list[PositiveFloat]] = None
    lam: Optional[float] = Field(None, ge=0, le=0.5)
    theta: Optional[ThetaExpr] = None
    psi: Optional[Expr] = None
    phi: Optional[Expr] = None
    varpi: Optional[Expr] = None
    linear_c: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def check_family(self):
        if self.family == "diagonal" and self.diagonal is None:
            raise ValueError("family 'diagonal' needs 'diagonal'")
        if self.family == "bounded_perturbation" and self.lam is None:
            raise ValueError("family 'bounded_perturbation' needs 'lam'")
        declared = [name for name in ("theta", "psi", "phi") if getattr(self, name) is not None]
        if len(declared) > 1:
            raise ValueError(f"declare at most one of theta, psi, phi (got {', '.join(declared)})")
        return self

    @property
    def has_modulus(self) -> bool:
        return any(getattr(self, name) is not None for name in ("theta", "psi", "phi"))


class SequenceSpec(BaseModel):
    """
    A step-size (or approximation) sequence.

    Built-ins: constant (value), harmonic 1/(n+1), shifted_harmonic 1/(n+c),
    power 1/(n+c)^s. ``expr`` takes the terms, a convergence rate, a simple
    divergence witness f(x) and a term bound as expressions.
    """
    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant", "harmonic", "shifted_harmonic", "power", "expr"]
    value: Optional[float] = Field(None, ge=0)
    c: Optional[PositiveFloat] = None
    s: Optional[PositiveFloat] = None
    expr: Optional[SequenceExpr] = None
    rate: Optional[Expr] = None
    f: Optional[DivergenceExpr] = None
    bound: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def check_kind(self):
        required = {
            "constant": ("value",),
            "harmonic": (),
            "shifted_harmonic": ("c",),
            "power": ("c", "s"),
            "expr": ("expr", "f", "bound"),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"kind '{self.kind}' needs {', '.join(missing)}")
        return self


class ApproximationSpec(BaseModel):
    """A_n(x) = A(x) + h_n * b with xi*(t) bounding ||b||-scaled errors."""
    model_config = ConfigDict(extra="forbid")

    b: list[float] = Field(..., min_length=1)
    h: SequenceSpec
    xi_star: Expr = "1"
    h_rate: Optional[Expr] = None


class BoundsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    K: Optional[PositiveFloat] = None
    K_prime: Optional[PositiveFloat] = None
    K0: Optional[PositiveFloat] = None
    K1: Optional[PositiveFloat] = None
    K2: Optional[PositiveFloat] = None


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    trace_csv: Optional[str] = None
    report_json: Optional[str] = None


_REQUIRED_BOUNDS = {
    "thm42": ("K",),
    "rem43": ("K",),
    "cor44": ("K",),
    "thm55": ("K", "K_prime"),
    "thm56": ("K0", "K1", "K2"),
    "thm64": ("K0", "K1"),
    "thm73": ("K0", "K1"),
}


class ScenarioConfig(BaseModel):
    """One certification scenario: space, operator(s), schedule, bounds and theorem."""
    model_config = ConfigDict(extra="forbid")

    id: str = Field(..., pattern=r"^[a-z0-9][a-z0-9-]*$", max_length=64)
    description: str = ""
    theorem: Theorem
    space: SpaceSpec
    operator: OperatorSpec
    second_operator: Optional[OperatorSpec] = None
    approximation: Optional[ApproximationSpec] = None
    alpha: SequenceSpec
    beta: Optional[SequenceSpec] = None
    divergence: Literal["integral", "simple"] = "integral"
    bounds: BoundsSpec
    x0: list[float] = Field(..., min_length=1)
    offset: Optional[list[float]] = None
    horizon: Optional[int] = Field(None, ge=1, le=10_000_000)
    eps_grid: Optional[list[PositiveFloat]] = Field(None, min_length=1)
    rate_override: Optional[Expr] = None
    verify_samples: Optional[int] = Field(None, ge=8)
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def check_consistency(self):
        dim = self.space.dim
        vectors = {"x0": self.x0, "operator.q": self.operator.q}
        if self.operator.diagonal is not None:
            vectors["operator.diagonal"] = self.operator.diagonal
        if self.second_operator is not None:
            vectors["second_operator.q"] = self.second_operator.q
        if self.approximation is not None:
            vectors["approximation.b"] = self.approximation.b
        if self.offset is not None:
            vectors["offset"] = self.offset
        for name, coords in vectors.items():
            if len(coords) != dim:
                raise ValueError(f"{name} has {len(coords)} coordinates, space has dim {dim}")

        thm = self.theorem
        if not self.operator.has_modulus:
            raise ValueError("operator must declare one of theta, psi, phi")
        missing = [name for name in _REQUIRED_BOUNDS[thm] if getattr(self.bounds, name) is None]
        if missing:
            raise ValueError(f"{thm} needs bounds {', '.join(missing)}")
        if thm in ("rem43", "cor44") and self.operator.psi is None:
            raise ValueError(f"{thm} needs operator.psi")
        if thm in ("thm55", "thm56") and self.approximation is None:
            raise ValueError(f"{thm} needs an approximation block")
        if thm in ISHIKAWA_THEOREMS and self.beta is None:
            raise ValueError(f"{thm} needs a beta sequence")
        if thm in IMPLICIT_THEOREMS and (self.beta is not None or self.offset is not None):
            raise ValueError(f"{thm} is an implicit scheme; beta and offset do not apply")
        if thm == "thm64":
            if self.operator.varpi is None:
                raise ValueError("thm64 needs operator.varpi")
            if self.second_operator is not None:
                raise ValueError("thm64 uses a single operator")
        if thm == "thm73":
            if self.second_operator is None:
                raise ValueError("thm73 needs second_operator")
            if self.space.tau is None:
                raise ValueError("thm73 needs space.tau")
            if self.second_operator.q != self.operator.q:
                raise ValueError("both operators must share the zero q")
        if self.alpha.kind == "expr" and self.divergence != "simple":
            raise ValueError("an expr alpha sequence needs divergence 'simple'")
        return self

    @field_validator("id")
    @classmethod
    def no_trailing_dash(cls, v: str) -> str:
        if v.endswith("-"):
            raise ValueError("id must not end with '-'")
        return v

    @property
    def is_ishikawa(self) -> bool:
        return self.theorem in ISHIKAWA_THEOREMS


# ============== Report Schemas ==============

class Counterexample(BaseModel):
    """An index in the certified window where the residual exceeds eps."""
    eps: float
    n: int
    residual: float


class EpsVerdict(BaseModel):
    """Verdict for one eps of the grid."""
    eps: float
    phi: int
    status: Literal["certified", "vacuous", "failed"]
    first_entry: Optional[int] = None
    slack_ratio: Optional[float] = None
    counterexamples: list[Counterexample] = []

    @model_validator(mode="after")
    def check_counterexamples(self):
        if self.status == "failed" and not self.counterexamples:
            raise ValueError("failed verdicts carry a counterexample")
        if self.status == "certified" and self.counterexamples:
            raise ValueError("certified verdicts carry no counterexample")
        return self


class HypothesisViolation(BaseModel):
    check: str
    message: str
    eps: Optional[float] = None
    excess: Optional[float] = None


class ReportMetadata(BaseModel):
    generated_at: datetime = Field(default_factory=get_current_time)


class CertificationReport(BaseModel):
    """Per-eps certification of a rate against one trace, plus hypothesis checks."""
    scenario_id: str
    theorem: Optional[str] = None
    horizon: int
    rejected: bool = False
    entries: list[EpsVerdict] = []
    hypothesis_violations: list[HypothesisViolation] = []
    notes: list[str] = []
    metadata: ReportMetadata = Field(default_factory=ReportMetadata)

    @property
    def eps_grid(self) -> list[float]:
        return [entry.eps for entry in self.entries]

    @property
    def phi_values(self) -> list[int]:
        return [entry.phi for entry in self.entries]

    @property
    def failed(self) -> bool:
        return any(entry.status == "failed" for entry in self.entries)

    @property
    def exit_code(self) -> int:
        """0 when nothing failed, was violated or rejected; 1 otherwise."""
        if self.rejected or self.failed or self.hypothesis_violations:
            return 1
        return 0

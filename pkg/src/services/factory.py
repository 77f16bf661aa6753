"""Build spaces, operators, schedules and rates from a scenario config."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from src.config import settings
from src.expressions import compile_expression
from src.log import get_logger
from src.models import (
    AccretivityModulus,
    ApproximationData,
    BoundSet,
    ContinuityModulus,
    IterationTrace,
    OperatorInstance,
    RateOfConvergence,
    RealFunction,
    ScalarSchedule,
    SmoothnessModulus,
    SpaceInstance,
    Vector,
    as_vector,
)
from src.schemas import IMPLICIT_THEOREMS, OperatorSpec, ScenarioConfig, SequenceSpec
from src.services import operators, schemes
from src.services.rates import INDEX_CAP, ceil_index

logger = get_logger(__name__)


@dataclass(frozen=True)
class ScenarioBundle:
    """Everything a scenario run needs, built once from its config."""

    config: ScenarioConfig
    space: SpaceInstance
    operator: OperatorInstance
    theta: AccretivityModulus
    schedule: ScalarSchedule
    bounds: BoundSet
    x0: Vector
    horizon: int
    eps_grid: list[float]
    rate: RateOfConvergence
    # K at which Theta is evaluated and below which residuals must stay
    K: float
    run: Callable[[], IterationTrace]
    second_operator: Optional[OperatorInstance] = None
    # None when the second operator declares no modulus; it is then only checked for accretivity at zero
    second_theta: Optional[AccretivityModulus] = None
    approximation: Optional[ApproximationData] = None
    psi: Optional[RealFunction] = None
    varpi: Optional[ContinuityModulus] = None
    tau: Optional[SmoothnessModulus] = None
    h_values: Optional[Callable[[int], float]] = None
    offset: Optional[Vector] = None
    notes: list[str] = field(default_factory=list)

    @property
    def q(self) -> Vector:
        return self.operator.zero_q


def real_function(source: str) -> RealFunction:
    """Compile a one-variable expression in t."""
    return compile_expression(source, ("t",))


def index_function(source: str) -> Callable[[float], int]:
    expr = compile_expression(source, ("t",))
    return lambda t: ceil_index(expr.scalar(t))


def build_operator(space: SpaceInstance, spec: OperatorSpec) -> OperatorInstance:
    if spec.family == "shift":
        return operators.shift_operator(space, spec.q)
    if spec.family == "diagonal":
        return operators.diagonal_operator(space, spec.q, spec.diagonal)
    return operators.bounded_perturbation_operator(space, spec.q, spec.lam)


def build_modulus(spec: OperatorSpec) -> AccretivityModulus:
    if spec.psi is not None:
        return operators.modulus_from_psi(real_function(spec.psi))
    if spec.phi is not None:
        return operators.modulus_from_phi(real_function(spec.phi))
    theta = compile_expression(spec.theta, ("K", "t"))
    return operators.modulus_direct(lambda K, t: theta.scalar(K=K, t=t))


def build_sequence(spec: SequenceSpec) -> schemes.StepSequence:
    if spec.kind == "constant":
        return schemes.constant_sequence(spec.value)
    if spec.kind == "harmonic":
        return schemes.harmonic()
    if spec.kind == "shifted_harmonic":
        return schemes.shifted_harmonic(spec.c)
    if spec.kind == "power":
        return schemes.power_sequence(spec.c, spec.s)

    values = compile_expression(spec.expr, ("n",))
    f = compile_expression(spec.f, ("x",))
    rate = index_function(spec.rate) if spec.rate is not None else (lambda eps: INDEX_CAP)
    return schemes.StepSequence(
        values=values,
        rate=RateOfConvergence(rate, label=f"rate({spec.rate})"),
        bound=spec.bound,
        simple=lambda x: ceil_index(f.scalar(x)),
        label=spec.expr,
    )


def build_scenario(
    config: ScenarioConfig,
    horizon: Optional[int] = None,
    eps_grid: Optional[list[float]] = None,
) -> ScenarioBundle:
    """
    Build a scenario bundle.

    Horizon and eps grid resolve as: explicit argument, then config, then settings
    defaults (implicit schemes and Ishikawa schemes have different default horizons).
    """
    thm = config.theorem
    tau = None
    if config.space.tau is not None:
        tau = SmoothnessModulus(real_function(config.space.tau), descriptor=config.space.tau)
    space = SpaceInstance(dim=config.space.dim, p=config.space.p, tau=tau)
    op = build_operator(space, config.operator)
    theta = build_modulus(config.operator)
    psi = real_function(config.operator.psi) if config.operator.psi is not None else None
    varpi = ContinuityModulus(real_function(config.operator.varpi)) if config.operator.varpi is not None else None

    alpha = build_sequence(config.alpha)
    beta = build_sequence(config.beta) if config.beta is not None else None
    schedule = schemes.build_schedule(alpha, beta, config.divergence)
    b = config.bounds
    bounds = BoundSet(K=b.K, K_prime=b.K_prime, K0=b.K0, K1=b.K1, K2=b.K2)
    x0 = as_vector(config.x0, space.dim)

    default_horizon = settings.DEFAULT_IMPLICIT_HORIZON if thm in IMPLICIT_THEOREMS else settings.DEFAULT_EXPLICIT_HORIZON
    horizon = horizon or config.horizon or default_horizon
    eps_grid = list(eps_grid or config.eps_grid or settings.DEFAULT_EPS_GRID)

    approximation = None
    h_values = None
    if config.approximation is not None:
        spec = config.approximation
        h = build_sequence(spec.h)
        h_values = h.values
        h_rate = RateOfConvergence(index_function(spec.h_rate), label=spec.h_rate) if spec.h_rate else h.rate
        approximation = ApproximationData(
            base=op,
            family=operators.perturbed_family(op, h.values, spec.b),
            h_seq=h.values,
            h_rate=h_rate,
            xi_star=real_function(spec.xi_star),
            partial_alpha_h_bound=b.K2,
        )

    second = second_theta = None
    if config.second_operator is not None:
        second = build_operator(space, config.second_operator)
        if config.second_operator.has_modulus:
            second_theta = build_modulus(config.second_operator)
    offset = as_vector(config.offset, space.dim) if config.offset is not None else None
    r = schedule.r

    if thm == "thm42":
        K = b.K
        rate = schemes.rate_implicit_simple(theta, r, K)
    elif thm in ("rem43", "cor44"):
        K = b.K
        rate = schemes.rate_psi(psi, r, K)
    elif thm == "thm55":
        K = b.K

        def mu(L: float, eps: float) -> int:
            return operators.mu_from_approx(approximation, L, eps)

        rate = schemes.rate_implicit_approx(theta, mu, r, K, b.K_prime)
    elif thm == "thm56":
        K = bounds.approx_K(approximation.xi_star_at)
        rate = schemes.rate_implicit_approx_bounded(
            theta, approximation.h_rate, approximation.xi_star_at, r, b.K0, b.K1, b.K2
        )
    elif thm == "thm64":
        K = bounds.ishikawa_K()
        rate = schemes.rate_ishikawa_continuous(theta, varpi, schedule.joint_rate, r, b.K0, b.K1)
    else:
        K = bounds.ishikawa_K()
        rate = schemes.rate_ishikawa_smooth(theta, tau, schedule.joint_rate, r, b.K0, b.K1)

    notes: list[str] = []
    if config.rate_override is not None:
        rate = RateOfConvergence(index_function(config.rate_override), label=config.rate_override)
        notes.append(f"rate overridden by '{config.rate_override}'")

    if thm in ("thm42", "rem43", "cor44"):
        def run() -> IterationTrace:
            return schemes.run_implicit_simple(op, schedule, x0, horizon)
    elif thm in ("thm55", "thm56"):
        def run() -> IterationTrace:
            return schemes.run_implicit_approx(approximation, op.zero_q, schedule, x0, horizon)
    else:
        op2 = second if second is not None else op

        def run() -> IterationTrace:
            return schemes.run_ishikawa(op, op2, schedule, x0, horizon, offset)

    if offset is not None and np.any(offset != 0):
        notes.append("nonzero offset f: trace recorded, rate outside its certified scope")

    logger.info("built scenario %s (%s, dim=%d, p=%g, horizon=%d)", config.id, thm, space.dim, space.p, horizon)
    return ScenarioBundle(
        config=config,
        space=space,
        operator=op,
        theta=theta,
        schedule=schedule,
        bounds=bounds,
        x0=x0,
        horizon=horizon,
        eps_grid=eps_grid,
        rate=rate,
        K=K,
        run=run,
        second_operator=second,
        second_theta=second_theta,
        approximation=approximation,
        psi=psi,
        varpi=varpi,
        tau=tau,
        h_values=h_values,
        offset=offset,
        notes=notes,
    )

"""Iteration engines and the rates of convergence they come with.

Engines:
    implicit          x_{n+1} = x_n - alpha_n u_n,  u_n in A x_{n+1}
    implicit_approx   the same with A_n in place of A at step n
    ishikawa          y_n = (1-beta_n) x_n + beta_n (f + v_n),  v_n in (I-A_2) x_n
                      x_{n+1} = (1-alpha_n) x_n + alpha_n (f + u_n),  u_n in (I-A_1) y_n

Rates are exact compositions of the supplied moduli; real intermediate values are
only turned into indices inside r and phi.
"""
import math
from dataclasses import dataclass
from typing import Callable, Literal, NamedTuple, Optional

import numpy as np
from scipy.optimize import root

from src.config import settings
from src.exceptions import DomainError, InvalidModulusError, SolverError
from src.log import get_logger
from src.models import (
    AccretivityModulus,
    ApproximationData,
    ContinuityModulus,
    IterationTrace,
    OperatorInstance,
    RateOfConvergence,
    RateOfDivergence,
    RealFunction,
    ScalarSchedule,
    SmoothnessModulus,
    SpaceInstance,
    Vector,
    Violation,
    as_vector,
)
from src.services import banach_core
from src.services.rates import (
    INDEX_CAP,
    ceil_index,
    divergence_from_simple,
    inverse_decreasing,
    lemma37_threshold,
    successor,
)

logger = get_logger(__name__)

# exp(700) is close to the largest finite double
_LOG_CAP = 700.0


def _exp_index(log_value: float) -> int:
    if log_value > _LOG_CAP:
        return INDEX_CAP
    return ceil_index(math.exp(log_value))


# ============== Step-size sequences ==============

@dataclass(frozen=True)
class StepSequence:
    """A step-size sequence with its witnesses.

    ``rate`` is a rate of convergence to 0 (INDEX_CAP when the sequence stays above
    eps), ``simple`` a witness f with sum_{i<=f(x)} >= x, ``integral`` a direct rate
    of divergence, and ``bound`` a supremum of the terms.
    """

    values: Callable[[int], float]
    rate: RateOfConvergence
    bound: float
    simple: Optional[Callable[[float], int]] = None
    integral: Optional[RateOfDivergence] = None
    label: str = "sequence"


def power_sequence(c: float, s: float) -> StepSequence:
    """
    alpha_n = 1/(n+c)^s.

    Converges with rate eps -> ceil(eps^(-1/s) - c). For s <= 1 the sum diverges and
    integral comparison gives
        s = 1:  f(x) = ceil(c e^x),                           r(N,x) = ceil((N+c) e^x)
        s < 1:  f(x) = ceil((x(1-s) + c^(1-s))^(1/(1-s))),    r(N,x) = ceil((x(1-s) + (N+c)^(1-s))^(1/(1-s)))
    """
    if not c > 0 or not s > 0:
        raise DomainError(f"power sequence needs positive c and s, got c={c}, s={s}")

    def values(n):
        return 1.0 / np.power(np.asarray(n, dtype=np.float64) + c, s)

    def rate(eps: float) -> int:
        log_inverse = -math.log(eps) / s
        if log_inverse > _LOG_CAP:
            return INDEX_CAP
        return ceil_index(math.exp(log_inverse) - c)

    simple = integral = None
    if s == 1.0:
        def simple(x: float) -> int:
            return _exp_index(math.log(c) + x)

        def r(N: int, x: float) -> int:
            return max(N, _exp_index(math.log(N + c) + x))

        integral = RateOfDivergence(r, label=f"integral(c={c:g})")
    elif s < 1.0:
        e = 1.0 - s

        def simple(x: float) -> int:
            return _exp_index(math.log(x * e + c**e) / e)

        def r(N: int, x: float) -> int:
            return max(N, _exp_index(math.log(x * e + (N + c) ** e) / e))

        integral = RateOfDivergence(r, label=f"integral(c={c:g}, s={s:g})")

    return StepSequence(
        values=values,
        rate=RateOfConvergence(rate, label=f"1/(n+{c:g})^{s:g}"),
        bound=c**-s,
        simple=simple,
        integral=integral,
        label=f"1/(n+{c:g})^{s:g}",
    )


def harmonic() -> StepSequence:
    """alpha_n = 1/(n+1)."""
    return power_sequence(1.0, 1.0)


def shifted_harmonic(c: float) -> StepSequence:
    return power_sequence(c, 1.0)


def constant_sequence(v: float) -> StepSequence:
    """alpha_n = v, with r(N, x) = N + ceil(x/v)."""
    if v < 0:
        raise DomainError(f"constant step must be nonnegative, got {v}")

    def values(n):
        return np.full(np.shape(n), v, dtype=np.float64) if np.ndim(n) else float(v)

    def rate(eps: float) -> int:
        return 0 if v <= eps else INDEX_CAP

    def simple(x: float) -> int:
        return ceil_index(x / v) if v > 0 else INDEX_CAP

    def r(N: int, x: float) -> int:
        return N + ceil_index(x / v) if v > 0 else INDEX_CAP

    return StepSequence(
        values=values,
        rate=RateOfConvergence(rate, label=f"constant({v:g})"),
        bound=v,
        simple=simple,
        integral=RateOfDivergence(r, label=f"constant({v:g})"),
        label=f"constant({v:g})",
    )


def joint_rate(rate_alpha: RateOfConvergence, rate_beta: RateOfConvergence) -> RateOfConvergence:
    """Rate for max(alpha_n, beta_n) -> 0."""
    return RateOfConvergence(lambda eps: max(rate_alpha(eps), rate_beta(eps)), label="joint")


def build_schedule(
    alpha: StepSequence,
    beta: Optional[StepSequence] = None,
    divergence: Literal["integral", "simple"] = "integral",
) -> ScalarSchedule:
    """Assemble a schedule; ``simple`` converts the simple witness with the bounded-term conversion."""
    if divergence == "simple":
        if alpha.simple is None:
            raise DomainError(f"{alpha.label} has no simple divergence witness")
        r = divergence_from_simple(alpha.simple, alpha.bound)
    else:
        if alpha.integral is None:
            raise DomainError(f"{alpha.label} has no rate of divergence")
        r = alpha.integral
    return ScalarSchedule(
        alpha=alpha.values,
        r=r,
        beta=beta.values if beta is not None else None,
        joint_rate=joint_rate(alpha.rate, beta.rate) if beta is not None else alpha.rate,
        alpha_bound=alpha.bound,
        label=alpha.label if beta is None else f"{alpha.label} / {beta.label}",
    )


# ============== Implicit step ==============

def _step_residual(op: OperatorInstance, z: Vector, alpha: float, x: Vector) -> float:
    return banach_core.norm(op.space, z + alpha * op.select(z) - x)


def solve_implicit_step(op: OperatorInstance, x: Vector, alpha: float, step: Optional[int] = None) -> Vector:
    """
    Solve z + alpha * A(z) = x.

    Affine operators use the closed-form resolvent z = (x - alpha*offset)/(1 + alpha*diag).
    Otherwise z <- x - alpha*A(z) is iterated when alpha*lipschitz < 1, and
    scipy's root finder is used as a fallback.

    Examples:
        A(x) = x,   alpha = 1, x = 1  → 0.5
        alpha = 0                     → x
    """
    if alpha < 0:
        raise DomainError(f"step size must be nonnegative, got {alpha}")
    if alpha == 0:
        return np.array(x, dtype=np.float64)
    if op.affine is not None:
        diag, offset = op.affine
        return (x - alpha * offset) / (1.0 + alpha * diag)

    target = settings.SOLVER_TOL * (1.0 + banach_core.norm(op.space, x))
    if op.lipschitz is not None and alpha * op.lipschitz < 1.0:
        z = np.array(x, dtype=np.float64)
        for _ in range(settings.SOLVER_MAX_ITER):
            z = x - alpha * op.select(z)
            if _step_residual(op, z, alpha, x) <= target:
                return z
        logger.debug("fixed-point iteration stalled at step %s, trying root finder", step)

    solution = root(lambda z: z + alpha * op.select(z) - x, x0=np.array(x, dtype=np.float64), tol=1e-14)
    z = solution.x
    residual = _step_residual(op, z, alpha, x)
    if residual > target:
        raise SolverError(
            f"implicit step residual {residual:.3e} above {target:.3e} after {settings.SOLVER_MAX_ITER} iterations",
            step=step,
        )
    return z


def _run_implicit(
    operator_at: Callable[[int], OperatorInstance],
    space: SpaceInstance,
    q: Vector,
    schedule: ScalarSchedule,
    x0: Vector,
    horizon: int,
    scheme_id: str,
) -> IterationTrace:
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    alphas = schedule.alphas(horizon)
    xs = np.empty((horizon + 1, space.dim))
    us = np.empty((horizon, space.dim))
    xs[0] = as_vector(x0, space.dim)
    for n in range(horizon):
        op = operator_at(n)
        xs[n + 1] = solve_implicit_step(op, xs[n], float(alphas[n]), step=n)
        us[n] = op.select(xs[n + 1])
    residuals = np.asarray(banach_core.norm(space, xs - q))
    logger.debug("%s run: %d steps, final residual %.3e", scheme_id, horizon, residuals[-1])
    return IterationTrace(
        scheme_id=scheme_id,
        space=space,
        q=q,
        xs=xs,
        residuals=residuals,
        alphas=alphas,
        horizon=horizon,
        us=us,
    )


def run_implicit_simple(op: OperatorInstance, schedule: ScalarSchedule, x0: Vector, horizon: int) -> IterationTrace:
    """x_{n+1} = x_n - alpha_n u_n with u_n = A(x_{n+1})."""
    if op.zero_q is None:
        raise DomainError(f"{op.name} has no declared zero")
    return _run_implicit(lambda n: op, op.space, op.zero_q, schedule, x0, horizon, "implicit")


def run_implicit_approx(
    data: ApproximationData,
    q: Vector,
    schedule: ScalarSchedule,
    x0: Vector,
    horizon: int,
) -> IterationTrace:
    """x_{n+1} = x_n - alpha_n u_n with u_n = A_n(x_{n+1})."""
    space = data.base.space
    return _run_implicit(data.family, space, as_vector(q, space.dim), schedule, x0, horizon, "implicit_approx")


def run_ishikawa(
    op1: OperatorInstance,
    op2: OperatorInstance,
    schedule: ScalarSchedule,
    x0: Vector,
    horizon: int,
    offset: Optional[Vector] = None,
) -> IterationTrace:
    """
    Two-operator Ishikawa scheme; with op1 = op2 it is the classical one-operator form.

    u_n := y_n - A_1(y_n) and v_n := x_n - A_2(x_n). A nonzero ``offset`` f shifts both
    convex combinations towards f.
    """
    if schedule.beta is None:
        raise DomainError("Ishikawa scheme needs a beta sequence")
    if op1.zero_q is None:
        raise DomainError(f"{op1.name} has no declared zero")
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    space = op1.space
    f = np.zeros(space.dim) if offset is None else as_vector(offset, space.dim)
    alphas = schedule.alphas(horizon)
    betas = schedule.betas(horizon)
    xs = np.empty((horizon + 1, space.dim))
    ys = np.empty((horizon, space.dim))
    us = np.empty((horizon, space.dim))
    vs = np.empty((horizon, space.dim))
    xs[0] = as_vector(x0, space.dim)
    for n in range(horizon):
        x = xs[n]
        v = x - op2.select(x)
        y = (1.0 - betas[n]) * x + betas[n] * (f + v)
        u = y - op1.select(y)
        x_next = (1.0 - alphas[n]) * x + alphas[n] * (f + u)
        if not np.all(np.isfinite(x_next)):
            raise SolverError("iterate left the finite range", step=n)
        vs[n], ys[n], us[n], xs[n + 1] = v, y, u, x_next
    q = op1.zero_q
    residuals = np.asarray(banach_core.norm(space, xs - q))
    return IterationTrace(
        scheme_id="ishikawa",
        space=space,
        q=q,
        xs=xs,
        residuals=residuals,
        alphas=alphas,
        betas=betas,
        horizon=horizon,
        ys=ys,
        us=us,
        vs=vs,
        metadata={"offset": f.tolist()} if offset is not None else {},
    )


# ============== Rates ==============

def _theta(theta: AccretivityModulus, K: float, eps: float) -> float:
    value = theta(K, eps)
    if not value > 0:
        raise InvalidModulusError(f"Theta_{K}({eps}) = {value} is not positive")
    return value


def rate_implicit_simple(theta: AccretivityModulus, r: RateOfDivergence, K: float) -> RateOfConvergence:
    """Phi(eps) = r(0, K^2 / Theta_K(eps)) + 1."""
    if not K > 0:
        raise DomainError("K must be positive")
    return RateOfConvergence(lambda eps: successor(r(0, K * K / _theta(theta, K, eps))), label="implicit")


def rate_psi(psi: RealFunction, r: RateOfDivergence, K: float) -> RateOfConvergence:
    """Phi(eps) = r(0, K / psi(eps)) + 1 for psi-strongly accretive operators."""
    if not K > 0:
        raise DomainError("K must be positive")

    def phi(eps: float) -> int:
        value = float(psi(eps))
        if not value > 0:
            raise InvalidModulusError(f"psi({eps}) = {value} is not positive")
        return successor(r(0, K / value))

    return RateOfConvergence(phi, label="psi")


class EnvelopeBound(NamedTuple):
    value: float
    threshold: Optional[int]


def bound_cor44(psi: RealFunction, K: float, partial_sums: np.ndarray, n: int) -> EnvelopeBound:
    """
    psi^{-1}(K / sum_{i<n} alpha_i), evaluated by inverting f(eps) = K/psi(eps).

    ``partial_sums[n]`` is sum_{i<n} alpha_i. The threshold is the least index from
    which the inverse is defined.
    """
    total = float(partial_sums[n])
    if not total > 0:
        raise DomainError(f"partial sum at n={n} is {total}, not positive")

    def f(eps: float) -> float:
        value = float(psi(eps))
        # psi may underflow to 0 near eps = 0, where f tends to infinity
        return K / value if value > 0 else math.inf

    return EnvelopeBound(inverse_decreasing(f, total), lemma37_threshold(f, partial_sums))


def rate_implicit_approx(
    theta: AccretivityModulus,
    mu: Callable[[float, float], int],
    r: RateOfDivergence,
    K: float,
    K_prime: float,
) -> RateOfConvergence:
    """Phi(eps) = r(mu_{K+K'}(Theta_K(eps)/2K), K^2/Theta_K(eps)) + 1."""
    if not K > 0 or not K_prime > 0:
        raise DomainError("K and K' must be positive")

    def phi(eps: float) -> int:
        t = _theta(theta, K, eps)
        return successor(r(mu(K + K_prime, t / (2.0 * K)), K * K / t))

    return RateOfConvergence(phi, label="implicit_approx")


def rate_implicit_approx_bounded(
    theta: AccretivityModulus,
    h_rate: RateOfConvergence,
    xi_star: RealFunction,
    r: RateOfDivergence,
    K0: float,
    K1: float,
    K2: float,
) -> RateOfConvergence:
    """
    Phi(eps) = r(phi(Theta_K(eps) / (3K xi*(K+K1))), K^2/Theta_K(eps)) + 1
    with K := K0 + K2 xi*(K1).
    """
    K = K0 + K2 * float(xi_star(K1))
    level = float(xi_star(K + K1))
    if not level > 0:
        raise InvalidModulusError(f"xi*({K + K1}) = {level} is not positive")

    def phi(eps: float) -> int:
        t = _theta(theta, K, eps)
        return successor(r(h_rate(t / (3.0 * K * level)), K * K / t))

    return RateOfConvergence(phi, label="implicit_approx_bounded")


def rate_ishikawa_continuous(
    theta: AccretivityModulus,
    varpi: ContinuityModulus,
    joint: RateOfConvergence,
    r: RateOfDivergence,
    K0: float,
    K1: float,
) -> RateOfConvergence:
    """
    Phi(eps) = r(phi(min{1/4, (1/6K) min{T/16K, varpi(T/16K)}}), K^2/T) + 1
    with T = Theta_K(eps) and K := 2K0 + K1.
    """
    K = 2.0 * K0 + K1

    def phi(eps: float) -> int:
        t = _theta(theta, K, eps)
        level = t / (16.0 * K)
        inner = min(0.25, min(level, varpi(level)) / (6.0 * K))
        return successor(r(joint(inner), K * K / t))

    return RateOfConvergence(phi, label="ishikawa_continuous")


def rate_ishikawa_smooth(
    theta: AccretivityModulus,
    tau: SmoothnessModulus,
    joint: RateOfConvergence,
    r: RateOfDivergence,
    K0: float,
    K1: float,
) -> RateOfConvergence:
    """
    Phi(eps) = r(phi((1/6K) min{eps/2, 3T/32K, omega_tau(K, T/16K)}), K^2/T) + 1
    with T = Theta_K(eps/2) and K := 2K0 + K1.
    """
    K = 2.0 * K0 + K1

    def phi(eps: float) -> int:
        t = _theta(theta, K, eps / 2.0)
        inner = min(eps / 2.0, 3.0 * t / (32.0 * K), banach_core.omega_tau(tau, K, t / (16.0 * K))) / (6.0 * K)
        return successor(r(joint(inner), K * K / t))

    return RateOfConvergence(phi, label="ishikawa_smooth")


# ============== Trace checks ==============

def _first_violations(mask: np.ndarray, check: str, describe: Callable[[int], str]) -> list[Violation]:
    bad = np.flatnonzero(mask)
    if not bad.size:
        return []
    n = int(bad[0])
    return [Violation(check, f"{bad.size} steps violate the bound, first at n={n}: {describe(n)}")]


def residual_bound_violations(trace: IterationTrace, K: float, check: str = "residual_bound") -> list[Violation]:
    """Every residual must stay strictly below K (up to the identity tolerance)."""
    tol = settings.IDENTITY_TOL
    return _first_violations(
        trace.residuals >= K + tol,
        check,
        lambda n: f"||x_n - q|| = {trace.residuals[n]:.6g} >= K = {K:.6g}",
    )


def check_ishikawa_bounds(trace: IterationTrace, K: float) -> list[Violation]:
    """
    Per-step Ishikawa bounds for K = 2K0 + K1:
    ||x_n - q||, ||y_n - q||, ||u_n - q||, ||v_n - q|| < K and
    ||y_n - x_{n+1}|| <= 3(alpha_n + beta_n) K.
    """
    if trace.ys is None or trace.betas is None:
        raise DomainError("trace does not come from an Ishikawa run")
    tol = settings.IDENTITY_TOL
    space, q = trace.space, trace.q
    violations = residual_bound_violations(trace, K, "ishikawa_residual")
    for name, points in (("y", trace.ys), ("u", trace.us), ("v", trace.vs)):
        dist = np.asarray(banach_core.norm(space, points - q))
        violations += _first_violations(
            dist >= K + tol,
            f"ishikawa_{name}_bound",
            lambda n, dist=dist, name=name: f"||{name}_n - q|| = {dist[n]:.6g} >= K = {K:.6g}",
        )
    gap = np.asarray(banach_core.norm(space, trace.ys - trace.xs[1:]))
    allowed = 3.0 * (trace.alphas + trace.betas) * K
    violations += _first_violations(
        gap > allowed + tol,
        "ishikawa_gap",
        lambda n: f"||y_n - x_(n+1)|| = {gap[n]:.6g} > {allowed[n]:.6g}",
    )
    return violations

"""Rate calculus: convergence and divergence witnesses and their combinators.

Rates return natural-number indices. Real-valued intermediate formulas are carried
in floating point and converted with :func:`ceil_index` only at the final step.
"""
import math
import sys
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from src.config import settings
from src.exceptions import DomainError, InvalidModulusError, InverseRangeError
from src.log import get_logger
from src.models import RateOfConvergence, RateOfDivergence, RealFunction, StarWitness, Violation

logger = get_logger(__name__)

INDEX_CAP = 2**63 - 1
_SNAP = 1e-9


def ceil_index(value: float) -> int:
    """
    Ceiling to a natural number.

    Values within a relative 1e-9 of an integer snap to it, so 1/(2/6) gives 3 and
    not 4. Negative values clamp to 0; infinite, NaN or overflowing values saturate
    at INDEX_CAP, which lies beyond every horizon.
    """
    v = float(value)
    if math.isnan(v) or v >= INDEX_CAP:
        return INDEX_CAP
    if v <= 0:
        return 0
    nearest = round(v)
    if abs(v - nearest) <= _SNAP * max(1.0, abs(v)):
        return int(nearest)
    return int(math.ceil(v))


def successor(n: int) -> int:
    return INDEX_CAP if n >= INDEX_CAP else n + 1


# ============== Divergence ==============

def divergence_from_simple(f: Callable[[float], float], alpha_bound: float) -> RateOfDivergence:
    """
    Convert a simple divergence witness f (sum_{i<=f(x)} alpha_i >= x) into r(N, x).

    With alpha_i <= alpha_bound the partial sum up to N is at most alpha_bound*N, so
    r(N, x) := max(N, f(x + alpha_bound*N)).
    """
    if not alpha_bound > 0:
        raise DomainError("alpha_bound must be positive")

    def r(N: int, x: float) -> int:
        return max(N, ceil_index(f(x + alpha_bound * N)))

    return RateOfDivergence(r, label=f"simple(bound={alpha_bound:g})")


def divergence_from_partial_sums(f: Callable[[float], float], S: Callable[[int], float]) -> RateOfDivergence:
    """r(N, x) := max(N, f(x + S(N))) for an over-estimator S of the partial sums."""

    def r(N: int, x: float) -> int:
        return max(N, ceil_index(f(x + S(N))))

    return RateOfDivergence(r, label="partial-sums")


def divergence_violations(
    r: RateOfDivergence,
    alphas: np.ndarray,
    samples: int,
    rng: np.random.Generator,
    tol: float = 1e-12,
) -> list[Violation]:
    """
    Check sum_{i=N}^{r(N,x)} alpha_i >= x on random (N, x) within the horizon.

    x is drawn below the mass left after N so that r(N, x) usually falls inside the
    horizon; pairs whose r lands beyond it are skipped.
    """
    horizon = len(alphas)
    cumulative = np.concatenate(([0.0], np.cumsum(alphas)))
    violations: list[Violation] = []
    skipped = 0
    for _ in range(samples):
        N = int(rng.integers(0, max(1, horizon // 2)))
        remaining = cumulative[horizon] - cumulative[N]
        if remaining <= 0:
            skipped += 1
            continue
        x = float(rng.uniform(0.0, 0.9 * remaining)) or remaining / 2
        m = r(N, x)
        if m < N:
            violations.append(Violation("divergence", f"r({N}, {x:g}) = {m} < N"))
            continue
        if m >= horizon:
            skipped += 1
            continue
        total = cumulative[m + 1] - cumulative[N]
        if total < x - tol:
            violations.append(Violation(
                "divergence",
                f"sum of alpha over [{N}, {m}] is {total:.6g} < x = {x:.6g}",
                excess=float(x - total),
            ))
    if skipped:
        logger.debug("divergence check skipped %d of %d samples beyond the horizon", skipped, samples)
    return violations


# ============== Convergence ==============

def convergence_violations(
    rate: RateOfConvergence,
    values: np.ndarray,
    eps_grid,
    check: str = "convergence",
    tol: Optional[float] = None,
) -> list[Violation]:
    """Check values[n] <= eps for every n in [rate(eps), len(values))."""
    tol = settings.IDENTITY_TOL if tol is None else tol
    violations: list[Violation] = []
    for eps in eps_grid:
        start = rate(eps)
        if start >= len(values):
            continue
        tail = values[start:]
        bad = np.flatnonzero(tail > eps + tol)
        if bad.size:
            n = start + int(bad[0])
            violations.append(Violation(
                check,
                f"value {values[n]:.6g} at n={n} exceeds eps={eps:g} although rate gives {start}",
                eps=eps,
                excess=float(values[n] - eps),
            ))
    return violations


def technical_rate(K: float, r: RateOfDivergence, w: StarWitness) -> RateOfConvergence:
    """
    Rate for sequences that drop by alpha_n*varphi(eps) whenever they stay above eps.

    Psi(eps) = r(N(eps), K/varphi(eps)) + 1

    Requires theta_n < K for all n, r a rate of divergence for sum alpha_i, and for
    n >= N(eps): eps < theta_{n+1} implies theta_{n+1} <= theta_n - alpha_n*varphi(eps).
    """
    if not K > 0:
        raise DomainError("K must be positive")

    def psi(eps: float) -> int:
        step = float(w.varphi(eps))
        if not step > 0:
            raise InvalidModulusError(f"varphi({eps}) = {step} is not positive")
        return successor(r(w.big_n(eps), K / step))

    return RateOfConvergence(psi, label="technical")


def linear_rate(K: float, alpha: float, c: float) -> RateOfConvergence:
    """eps -> ceil(log(K/eps) / log(1 + alpha*c)), clamped at 0."""
    if not alpha > 0 or not c > 0:
        raise DomainError("linear rate needs positive alpha and c")
    base = math.log1p(alpha * c)

    def phi(eps: float) -> int:
        if eps >= K:
            return 0
        return ceil_index(math.log(K / eps) / base)

    return RateOfConvergence(phi, label=f"linear(alpha={alpha:g}, c={c:g})")


def linear_envelope(K: float, alpha: float, c: float, n):
    """K * (1/(1 + alpha*c))^n."""
    return K * np.power(1.0 + alpha * c, -np.asarray(n, dtype=np.float64))


# ============== Inversion ==============

def inverse_decreasing(f: RealFunction, s: float, tol: Optional[float] = None) -> float:
    """
    Solve f(eps) = s for strictly decreasing continuous f: (0, inf) -> (0, inf).

    Works on u = log(eps). The bracket starts at [2^-E, 2^E] with E =
    BRACKET_EXPONENT and doubles E up to BRACKET_EXPANSIONS times before giving up.

    Examples:
        f(eps) = 1/eps,  s = 10  → 0.1
        f(eps) = 1/eps,  s = 4   → 0.25
    """
    tol = settings.INVERSE_TOL if tol is None else tol

    def g(u: float) -> float:
        # f may be +inf near 0; brentq needs finite values of the right sign
        return min(float(f(math.exp(u))), sys.float_info.max) - s

    exponent = float(settings.BRACKET_EXPONENT)
    bracketed = False
    for _ in range(settings.BRACKET_EXPANSIONS + 1):
        # 2^1024 overflows a double
        if exponent >= 1024:
            break
        lo, hi = -exponent * math.log(2.0), exponent * math.log(2.0)
        g_lo, g_hi = g(lo), g(hi)
        if g_lo == 0.0:
            return math.exp(lo)
        if g_hi == 0.0:
            return math.exp(hi)
        if g_lo > 0 > g_hi:
            bracketed = True
            break
        exponent *= 2.0
    if not bracketed:
        raise InverseRangeError(f"{s} is not in the range of f within the bracket 2^±{exponent:g}")

    u = brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    eps = math.exp(u)
    residual = abs(float(f(eps)) - s)
    if residual > tol * (1.0 + abs(s)):
        logger.warning("inverse at s=%g has residual %.3e above tolerance", s, residual)
    return eps


def lemma37_threshold(f: RealFunction, partial_sums: np.ndarray) -> Optional[int]:
    """
    Least n with partial_sums[n] > inf f, or None within the horizon.

    partial_sums[n] is sum_{i<n} alpha_i. inf f is estimated by f at the upper end of
    the initial inversion bracket.
    """
    inf_f = float(f(2.0 ** settings.BRACKET_EXPONENT))
    above = np.flatnonzero(np.asarray(partial_sums) > inf_f)
    return int(above[0]) if above.size else None

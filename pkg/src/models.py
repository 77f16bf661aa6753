"""Domain types for spaces, operators, rates and iteration traces.

All types are immutable values. Vectors are 1-d numpy float64 arrays; function-valued
fields are plain callables (compiled expressions from configs, or Python callables
in tests and library use).
"""
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from typing import Callable, Literal, Optional, Sequence

import numpy as np
import numpy.typing as npt

from src.exceptions import DimensionMismatchError, DomainError, InvalidModulusError

Vector = npt.NDArray[np.float64]
RealFunction = Callable[[float], float]


def get_current_time() -> datetime:
    """Get current UTC time (timezone-aware)."""
    return datetime.now(timezone.utc)


def as_vector(coords: Sequence[float] | Vector, dim: Optional[int] = None) -> Vector:
    """Coerce coordinates into a finite float64 vector, checking the dimension if given."""
    vec = np.array(coords, dtype=np.float64).reshape(-1)
    if dim is not None and vec.shape[0] != dim:
        raise DimensionMismatchError(dim, vec.shape[0])
    if not np.all(np.isfinite(vec)):
        raise DomainError("vector coordinates must be finite")
    return vec


# ============== Spaces ==============

@dataclass(frozen=True)
class SmoothnessModulus:
    """Modulus of uniform smoothness tau: ||x||=1, ||y|| <= tau(eps) => ||x+y||+||x-y|| <= 2+eps||y||."""

    tau: RealFunction
    descriptor: str = "custom"

    def __call__(self, eps: float) -> float:
        value = float(self.tau(eps))
        if not value > 0:
            raise InvalidModulusError(f"tau({eps}) = {value} is not positive")
        return value


@dataclass(frozen=True)
class SpaceInstance:
    """The space l_p^dim with 1 < p < inf and an optional smoothness modulus."""

    dim: int
    p: float
    tau: Optional[SmoothnessModulus] = None

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"dim must be positive, got {self.dim}")
        if not (1.0 < self.p < np.inf):
            raise DomainError(f"p must lie strictly between 1 and inf, got {self.p}")

    @property
    def q_dual(self) -> float:
        return self.p / (self.p - 1.0)


# ============== Operators ==============

@dataclass(frozen=True)
class OperatorInstance:
    """A (possibly set-valued) operator given by its canonical selection.

    ``affine`` = (diag, offset) declares A(x) = diag*x + offset componentwise, which
    gives the implicit step a closed-form resolvent. ``members`` enumerates finite
    images for genuinely set-valued test instances.
    """

    space: SpaceInstance
    select: Callable[[Vector], Vector]
    zero_q: Optional[Vector] = None
    members: Optional[Callable[[Vector], list[Vector]]] = None
    lipschitz: Optional[float] = None
    range_bound: Optional[float] = None
    affine: Optional[tuple[Vector, Vector]] = None
    name: str = "operator"

    def __post_init__(self):
        if self.zero_q is not None:
            q = as_vector(self.zero_q, self.space.dim)
            object.__setattr__(self, "zero_q", q)
            residual = float(np.linalg.norm(self.select(q), ord=self.space.p))
            if residual > 1e-9:
                raise DomainError(f"{self.name}: ||select(q)|| = {residual:.3e}, q is not a zero")
        if self.lipschitz is not None and self.lipschitz <= 0:
            raise DomainError("lipschitz constant must be positive")
        if self.range_bound is not None and self.range_bound <= 0:
            raise DomainError("range bound K0 must be positive")

    def image(self, x: Vector) -> list[Vector]:
        """Finite enumeration of Ax; the canonical selection alone when no members are declared."""
        if self.members is None:
            return [self.select(x)]
        return list(self.members(x))


@dataclass(frozen=True)
class AccretivityModulus:
    """Modulus of uniform accretivity at zero, Theta_K(eps)."""

    theta: Callable[[float, float], float]
    provenance: Literal["from_psi", "from_phi", "direct"] = "direct"
    psi: Optional[RealFunction] = None

    def __call__(self, K: float, eps: float) -> float:
        value = float(self.theta(K, eps))
        if not value > 0:
            raise InvalidModulusError(f"Theta_{K}({eps}) = {value} is not positive")
        return value

    def cached(self) -> "AccretivityModulus":
        """Same modulus with memoised evaluations (useful when Theta is an infimum search)."""
        return AccretivityModulus(lru_cache(maxsize=4096)(self.theta), self.provenance, self.psi)


@dataclass(frozen=True)
class ContinuityModulus:
    """Modulus of uniform continuity varpi: ||x-y|| <= varpi(eps) => H*[Ax, Ay, eps]."""

    varpi: RealFunction

    def __call__(self, eps: float) -> float:
        value = float(self.varpi(eps))
        if not value > 0:
            raise InvalidModulusError(f"varpi({eps}) = {value} is not positive")
        return value


# ============== Rates ==============

@dataclass(frozen=True)
class RateOfConvergence:
    """phi: (0, inf) -> N with alpha_n <= eps for every n >= phi(eps)."""

    phi: Callable[[float], int]
    label: str = "rate"

    def __call__(self, eps: float) -> int:
        if not eps > 0:
            raise DomainError(f"rate evaluated at non-positive eps={eps}")
        return int(self.phi(eps))


@dataclass(frozen=True)
class RateOfDivergence:
    """r: N x (0, inf) -> N with sum_{i=N}^{r(N,x)} alpha_i >= x; always r(N,x) >= N."""

    r: Callable[[int, float], int]
    label: str = "divergence"

    def __call__(self, N: int, x: float) -> int:
        return max(int(N), int(self.r(int(N), x)))


@dataclass(frozen=True)
class StarWitness:
    """N(eps) and varphi(eps) witnessing the decrease property of the technical lemma."""

    big_n: Callable[[float], int]
    varphi: RealFunction


@dataclass(frozen=True)
class ApproximationData:
    """Operators A_n approximating A: H(A_n x, Ax) <= h_n * xi(||x||)."""

    base: OperatorInstance
    family: Callable[[int], OperatorInstance]
    h_seq: Callable[[int], float]
    h_rate: RateOfConvergence
    xi_star: RealFunction
    partial_alpha_h_bound: Optional[float] = None

    def xi_star_at(self, L: float) -> float:
        value = float(self.xi_star(L))
        if not value > 0:
            raise InvalidModulusError(f"xi*({L}) = {value} is not positive")
        return value


# ============== Schemes ==============

@dataclass(frozen=True)
class ScalarSchedule:
    """Step-size sequences with their divergence and joint convergence witnesses."""

    alpha: Callable[[int], float]
    r: RateOfDivergence
    beta: Optional[Callable[[int], float]] = None
    joint_rate: Optional[RateOfConvergence] = None
    alpha_bound: Optional[float] = None
    label: str = "schedule"

    def alphas(self, horizon: int) -> np.ndarray:
        return _evaluate_sequence(self.alpha, horizon)

    def betas(self, horizon: int) -> Optional[np.ndarray]:
        if self.beta is None:
            return None
        return _evaluate_sequence(self.beta, horizon)


def _evaluate_sequence(fn: Callable[[int], float], horizon: int) -> np.ndarray:
    index = np.arange(horizon)
    try:
        values = np.asarray(fn(index), dtype=np.float64)
        if values.shape == index.shape:
            return values
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(n)) for n in range(horizon)], dtype=np.float64)


@dataclass(frozen=True)
class BoundSet:
    """The constants K, K', K0, K1, K2 of the convergence theorems."""

    K: Optional[float] = None
    K_prime: Optional[float] = None
    K0: Optional[float] = None
    K1: Optional[float] = None
    K2: Optional[float] = None

    def __post_init__(self):
        for name in ("K", "K_prime", "K0", "K1", "K2"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise DomainError(f"bound {name} must be positive, got {value}")

    def ishikawa_K(self) -> float:
        if self.K0 is None or self.K1 is None:
            raise DomainError("Ishikawa bound needs K0 and K1")
        return 2.0 * self.K0 + self.K1

    def approx_K(self, xi_star: RealFunction) -> float:
        if self.K0 is None or self.K1 is None or self.K2 is None:
            raise DomainError("approximation bound needs K0, K1 and K2")
        return self.K0 + self.K2 * float(xi_star(self.K1))


@dataclass(frozen=True)
class IterationTrace:
    """Full record of one scheme run; residuals[n] = ||x_n - q||."""

    scheme_id: str
    space: SpaceInstance
    q: Vector
    xs: np.ndarray
    residuals: np.ndarray
    alphas: np.ndarray
    horizon: int
    ys: Optional[np.ndarray] = None
    us: Optional[np.ndarray] = None
    vs: Optional[np.ndarray] = None
    betas: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.xs.shape[0] != self.horizon + 1 or self.residuals.shape[0] != self.horizon + 1:
            raise DomainError("trace length must be horizon + 1")


# ============== Verification ==============

@dataclass(frozen=True)
class Violation:
    """One sampled counterexample to a declared hypothesis."""

    check: str
    message: str
    eps: Optional[float] = None
    excess: Optional[float] = None

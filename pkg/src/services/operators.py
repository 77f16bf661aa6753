"""Operators, accretivity moduli and set-distance predicates."""
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist

from src.config import settings
from src.exceptions import DimensionMismatchError, DomainError, EmptySetError, InvalidModulusError
from src.log import get_logger
from src.models import (
    AccretivityModulus,
    ApproximationData,
    ContinuityModulus,
    OperatorInstance,
    RealFunction,
    SpaceInstance,
    Vector,
    Violation,
    as_vector,
)
from src.services import banach_core
from src.services.rates import INDEX_CAP

logger = get_logger(__name__)


def strict_bound(value: float) -> float:
    """Turn an observed bound into a strict one: value*(1+margin), or margin for 0."""
    margin = settings.BOUND_MARGIN
    return value * (1.0 + margin) if value > 0 else margin


def evaluate_on(fn: Callable, grid: np.ndarray) -> np.ndarray:
    """Evaluate fn on a grid, vectorised when fn accepts arrays."""
    try:
        values = np.asarray(fn(grid), dtype=np.float64)
        if values.shape == grid.shape:
            return values
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(t)) for t in grid], dtype=np.float64)


def select_batch(op: OperatorInstance, xs: np.ndarray) -> np.ndarray:
    """Canonical selection applied row-wise to a batch."""
    try:
        out = np.asarray(op.select(xs), dtype=np.float64)
        if out.shape == xs.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([op.select(x) for x in xs], dtype=np.float64)


# ============== Accretivity moduli ==============

def theta_from_psi(psi: RealFunction, eps: float) -> float:
    """
    Modulus of a psi-strongly accretive operator: Theta_K(eps) = psi(eps) * eps.

    Examples:
        psi = id,     eps = 0.1  → 0.01
        psi = t**2,   eps = 0.5  → 0.125
    """
    value = float(psi(eps)) * eps
    if not value > 0:
        raise InvalidModulusError(f"psi({eps}) * {eps} = {value} is not positive")
    return value


def theta_from_phi(
    phi: RealFunction,
    K: float,
    eps: float,
    points: Optional[int] = None,
) -> float:
    """
    Theta_K(eps) = inf { phi(t) : t in [eps, max(eps, K)] }.

    A uniform grid locates the minimiser; a bounded Brent search between the
    neighbouring grid points refines it. The result never exceeds phi at any grid
    point, including both endpoints.
    """
    points = settings.THETA_GRID_POINTS if points is None else points
    upper = max(eps, K)
    if upper == eps:
        best = float(phi(eps))
    else:
        grid = np.linspace(eps, upper, points)
        values = evaluate_on(phi, grid)
        i = int(np.nanargmin(values))
        best = float(values[i])
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
        refined = minimize_scalar(
            lambda t: float(phi(t)),
            bounds=(a, b),
            method="bounded",
            options={"xatol": settings.THETA_REL_TOL * max(1.0, abs(b - a))},
        )
        if refined.success and np.isfinite(refined.fun):
            best = min(best, float(refined.fun))
    if not best > 0:
        raise InvalidModulusError(f"infimum of phi over [{eps}, {upper}] is {best}, not positive")
    return best


def modulus_from_psi(psi: RealFunction) -> AccretivityModulus:
    return AccretivityModulus(theta=lambda K, eps: theta_from_psi(psi, eps), provenance="from_psi", psi=psi)


def modulus_from_phi(phi: RealFunction) -> AccretivityModulus:
    return AccretivityModulus(theta=lambda K, eps: theta_from_phi(phi, K, eps), provenance="from_phi").cached()


def modulus_direct(theta: Callable[[float, float], float]) -> AccretivityModulus:
    return AccretivityModulus(theta=theta, provenance="direct")


def _require_zero(op: OperatorInstance) -> Vector:
    if op.zero_q is None:
        raise DomainError(f"{op.name} has no declared zero")
    return op.zero_q


def verify_accretive_at_zero(
    op: OperatorInstance,
    theta: Optional[AccretivityModulus],
    K: float,
    samples: int,
    rng: np.random.Generator,
    lower: Optional[float] = None,
    points: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
) -> list[Violation]:
    """
    Sample the uniform accretivity inequality <u, J(x-q)> >= Theta_K(||x-q||).

    Points are drawn with ||x-q|| in [lower, K]; the first few sit exactly on the
    sphere of radius K. Explicit ``points`` outside that range are skipped. Every
    member of Ax is checked when the operator enumerates its images. Without a
    modulus only plain accretivity at zero, <u, J(x-q)> >= 0, is checked.
    """
    tol = settings.IDENTITY_TOL if tol is None else tol
    q = _require_zero(op)
    space = op.space
    lower = K / 1024.0 if lower is None else lower
    if points is None:
        directions = banach_core.random_unit_vectors(space, samples, rng)
        radii = rng.uniform(lower, K, size=samples)
        radii[: max(1, samples // 16)] = K
        points = q + directions * radii[:, None]
    violations: list[Violation] = []
    skipped = failing = 0
    for x in np.atleast_2d(points):
        dist = banach_core.norm(space, x - q)
        if not (lower <= dist <= K):
            skipped += 1
            continue
        delta = theta(K, dist) if theta is not None else 0.0
        j = banach_core.duality_map(space, x - q)
        for u in op.image(x):
            pairing = banach_core.dual_pair(space, u, j)
            if pairing < delta - tol * (1.0 + abs(delta)):
                failing += 1
                if failing > settings.MAX_COUNTEREXAMPLES:
                    continue
                violations.append(Violation(
                    "accretivity",
                    f"{op.name}: <u, J(x-q)> = {pairing:.6g} < Theta_{K:g}({dist:.6g}) = {delta:.6g}",
                    eps=dist,
                    excess=float(delta - pairing),
                ))
    if failing > settings.MAX_COUNTEREXAMPLES:
        violations.append(Violation(
            "accretivity",
            f"{failing - settings.MAX_COUNTEREXAMPLES} more failing samples not listed ({failing} in total)",
        ))
    if skipped:
        logger.debug("accretivity check skipped %d points outside [%g, %g]", skipped, lower, K)
    return violations


def pseudo_contraction_check(
    op: OperatorInstance,
    theta: AccretivityModulus,
    K: float,
    x: Vector,
    tol: Optional[float] = None,
) -> bool:
    """
    With u := x - select(x) in (I-A)x and j := J(x-q), check
    <u - q, j> <= ||x-q||^2 - Theta_K(||x-q||).
    """
    tol = settings.IDENTITY_TOL if tol is None else tol
    q = _require_zero(op)
    space = op.space
    x = as_vector(x, space.dim)
    dist = banach_core.norm(space, x - q)
    if dist == 0:
        raise DomainError("pseudo-contraction check needs x != q")
    if dist > K * (1.0 + tol):
        raise DomainError(f"||x-q|| = {dist:g} exceeds K = {K:g}")
    u = x - op.select(x)
    lhs = banach_core.dual_pair(space, u - q, banach_core.duality_map(space, x - q))
    rhs = dist * dist - theta(K, dist)
    return bool(lhs <= rhs + tol * (1.0 + dist * dist))


# ============== Set distances ==============

def _point_set(points, space: SpaceInstance) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if arr.size == 0:
        raise EmptySetError("set-distance operations need nonempty sets")
    if arr.ndim != 2 or arr.shape[-1] != space.dim:
        raise DimensionMismatchError(space.dim, arr.shape[-1])
    return arr


def hausdorff_finite(P, Q, space: SpaceInstance) -> float:
    """
    Hausdorff distance between finite sets in l_p.

    Examples:
        P = {0, 1}, Q = {0}       → 1
        P = {(0,0)}, Q = {(3,4)}  → 5   (p = 2)
    """
    distances = cdist(_point_set(P, space), _point_set(Q, space), metric="minkowski", p=space.p)
    return float(max(distances.min(axis=1).max(), distances.min(axis=0).max()))


def h_star(P, Q, a: float, space: SpaceInstance) -> bool:
    """Every u in P has some v in Q with ||u - v|| <= a."""
    distances = cdist(_point_set(P, space), _point_set(Q, space), metric="minkowski", p=space.p)
    return bool(np.all(distances.min(axis=1) <= a))


# ============== Uniform approximation ==============

def mu_from_approx(data: ApproximationData, L: float, eps: float) -> int:
    """Rate of uniform approximation: mu_L(eps) = phi(2 eps / (3 xi*(L)))."""
    if not L > 0 or not eps > 0:
        raise DomainError(f"mu needs positive L and eps, got L={L}, eps={eps}")
    return data.h_rate(2.0 * eps / (3.0 * data.xi_star_at(L)))


def verify_uniform_approximation(
    data: ApproximationData,
    L: float,
    eps_grid: Iterable[float],
    samples: int,
    rng: np.random.Generator,
    offsets: tuple[int, ...] = (0, 1, 10, 100),
) -> list[Violation]:
    """Sample H*[A_n x, A x, eps] for ||x|| <= L and n = mu_L(eps) + offset."""
    space = data.base.space
    violations: list[Violation] = []
    xs = banach_core.random_vectors(space, samples, rng, L)
    for eps in eps_grid:
        start = mu_from_approx(data, L, eps)
        if start >= INDEX_CAP - max(offsets):
            continue
        for n in (start + k for k in offsets):
            member = data.family(n)
            for x in xs:
                if not h_star(member.image(x), data.base.image(x), eps, space):
                    violations.append(Violation(
                        "uniform_approximation",
                        f"A_{n} x is not within {eps:g} of A x (mu gives {start})",
                        eps=eps,
                    ))
                    break
    return violations


# ============== Uniform continuity ==============

def varpi_from_hausdorff_modulus(omega: RealFunction) -> ContinuityModulus:
    """A modulus of continuity w.r.t. the Hausdorff metric gives varpi(eps) := omega(eps/2)."""
    return ContinuityModulus(lambda eps: omega(eps / 2.0))


def verify_uniform_continuity(
    op: OperatorInstance,
    varpi: ContinuityModulus,
    eps_grid: Iterable[float],
    samples: int,
    rng: np.random.Generator,
    radius: float,
    tol: Optional[float] = None,
) -> list[Violation]:
    """Sample ||x - y|| <= varpi(eps) => H*[Ax, Ay, eps] inside the ball of the given radius."""
    tol = settings.IDENTITY_TOL if tol is None else tol
    space = op.space
    center = op.zero_q if op.zero_q is not None else np.zeros(space.dim)
    violations: list[Violation] = []
    for eps in eps_grid:
        try:
            delta = varpi(eps)
        except InvalidModulusError as exc:
            violations.append(Violation("uniform_continuity", str(exc), eps=eps))
            continue
        xs = center + banach_core.random_vectors(space, samples, rng, radius)
        ys = xs + banach_core.random_vectors(space, samples, rng, delta)
        if op.members is None:
            gap = banach_core.norm(space, select_batch(op, xs) - select_batch(op, ys))
            bad = int(np.count_nonzero(gap > eps + tol))
        else:
            bad = sum(not h_star(op.image(x), op.image(y), eps + tol, space) for x, y in zip(xs, ys))
        if bad:
            violations.append(Violation(
                "uniform_continuity",
                f"{bad} of {samples} pairs within varpi({eps:g}) = {delta:g} move A by more than {eps:g}",
                eps=eps,
            ))
    return violations


def sample_range_bound(
    op: OperatorInstance,
    radius: float,
    samples: int,
    rng: np.random.Generator,
) -> float:
    """Largest observed ||x - select(x)|| over a ball around the zero (or the origin)."""
    space = op.space
    center = op.zero_q if op.zero_q is not None else np.zeros(space.dim)
    xs = center + banach_core.random_vectors(space, samples, rng, radius)
    # far points reach the tails of bounded perturbations
    xs[: samples // 8] = center + banach_core.random_unit_vectors(space, samples // 8, rng) * 1e6
    return float(np.max(banach_core.norm(space, xs - select_batch(op, xs))))


# ============== Operator families ==============

def shift_operator(space: SpaceInstance, q: Vector) -> OperatorInstance:
    """A(x) = x - q, so (I - A)x = q for every x."""
    q = as_vector(q, space.dim)
    ones = np.ones(space.dim)
    return OperatorInstance(
        space=space,
        select=lambda x: x - q,
        zero_q=q,
        lipschitz=1.0,
        range_bound=strict_bound(banach_core.norm(space, q)),
        affine=(ones, -q),
        name="shift",
    )


def diagonal_operator(space: SpaceInstance, q: Vector, diag: Vector) -> OperatorInstance:
    """A(x) = D(x - q) with positive diagonal D; uniformly accretive with Theta = min(D) eps^2."""
    q = as_vector(q, space.dim)
    diag = as_vector(diag, space.dim)
    if np.any(diag <= 0):
        raise DomainError("diagonal entries must be positive")
    return OperatorInstance(
        space=space,
        select=lambda x: diag * (x - q),
        zero_q=q,
        lipschitz=float(diag.max()),
        affine=(diag, -diag * q),
        name="diagonal",
    )


def bounded_perturbation_operator(space: SpaceInstance, q: Vector, lam: float) -> OperatorInstance:
    """
    A(x) = (x - q) + lam * tanh(x - q), lam in [0, 0.5].

    Lipschitz with constant 1 + lam, and (I - A)x = q - lam*tanh(x - q) has norm
    below ||q|| + lam * dim^(1/p).
    """
    if not 0.0 <= lam <= 0.5:
        raise DomainError(f"lam must lie in [0, 0.5], got {lam}")
    q = as_vector(q, space.dim)
    return OperatorInstance(
        space=space,
        select=lambda x: (x - q) + lam * np.tanh(x - q),
        zero_q=q,
        lipschitz=1.0 + lam,
        range_bound=strict_bound(banach_core.norm(space, q) + lam * space.dim ** (1.0 / space.p)),
        name=f"bounded_perturbation(lam={lam:g})",
    )


def perturbed_family(base: OperatorInstance, h_seq: Callable[[int], float], b: Vector) -> Callable[[int], OperatorInstance]:
    """n -> A_n with A_n(x) = A(x) + h_n * b, so H(A_n x, A x) = h_n * ||b||."""
    b = as_vector(b, base.space.dim)

    def member(n: int) -> OperatorInstance:
        shift = float(h_seq(n)) * b
        affine = None
        if base.affine is not None:
            diag, offset = base.affine
            affine = (diag, offset + shift)
        return OperatorInstance(
            space=base.space,
            select=lambda x: base.select(x) + shift,
            lipschitz=base.lipschitz,
            affine=affine,
            name=f"{base.name}+h_{n}b",
        )

    return member

"""Geometry of the spaces l_p^d: norms, duality map, pairings and smoothness.

Every function accepts a single vector of shape (d,) or a batch of shape (m, d);
batch inputs return one value (or one row) per vector.
"""
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from src.config import settings
from src.exceptions import DimensionMismatchError, DomainError, InvalidModulusError
from src.log import get_logger
from src.models import SmoothnessModulus, SpaceInstance, Vector, Violation

logger = get_logger(__name__)


def _coords(space: SpaceInstance, x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] != space.dim:
        raise DimensionMismatchError(space.dim, arr.shape[-1] if arr.ndim else 1)
    return arr


def _scalar_or_array(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def norm(space: SpaceInstance, x: Vector):
    """(sum |x_i|^p)^(1/p)."""
    return _scalar_or_array(np.linalg.norm(_coords(space, x), ord=space.p, axis=-1))


def dual_norm(space: SpaceInstance, j: Vector):
    """Norm of a functional in coordinates, i.e. the l_q norm with 1/p + 1/q = 1."""
    return _scalar_or_array(np.linalg.norm(_coords(space, j), ord=space.q_dual, axis=-1))


def duality_map(space: SpaceInstance, x: Vector) -> np.ndarray:
    """
    Normalized duality map of l_p, single-valued for 1 < p < inf.

    j_i = ||x||^(2-p) * sign(x_i) * |x_i|^(p-1), and J(0) = 0.

    Examples:
        p=2, x=(3, 4)  → (3, 4)
        p=4, x=(1, 1)  → (2^-1/2, 2^-1/2)
    """
    arr = _coords(space, x)
    nx = np.linalg.norm(arr, ord=space.p, axis=-1)
    scale = np.where(nx > 0, nx, 1.0) ** (2.0 - space.p)
    return np.expand_dims(scale, -1) * np.sign(arr) * np.abs(arr) ** (space.p - 1.0)


def dual_pair(space: SpaceInstance, y: Vector, j: Vector):
    """Coordinate pairing <y, j> = sum y_i j_i."""
    return _scalar_or_array(np.sum(_coords(space, y) * _coords(space, j), axis=-1))


@dataclass(frozen=True)
class SubdiffCheck:
    holds: bool | np.ndarray
    slack: float | np.ndarray


def check_subdiff_inequality(space: SpaceInstance, x: Vector, y: Vector, tol: Optional[float] = None) -> SubdiffCheck:
    """
    Check ||x+y||^2 <= ||x||^2 + 2<y, J(x+y)>.

    slack is right side minus left side; the inequality holds for every input, so a
    negative slack beyond tolerance means a broken duality map.
    """
    tol = settings.IDENTITY_TOL if tol is None else tol
    xs = _coords(space, x)
    ys = _coords(space, y)
    s = xs + ys
    lhs = np.linalg.norm(s, ord=space.p, axis=-1) ** 2
    rhs = np.linalg.norm(xs, ord=space.p, axis=-1) ** 2 + 2.0 * np.sum(ys * duality_map(space, s), axis=-1)
    slack = rhs - lhs
    holds = slack >= -tol * (1.0 + np.abs(lhs))
    if np.ndim(slack) == 0:
        return SubdiffCheck(bool(holds), float(slack))
    return SubdiffCheck(holds, slack)


# ============== Uniform smoothness ==============

def hilbert_tau() -> SmoothnessModulus:
    """tau(eps) = eps, valid for p = 2 by the parallelogram law."""
    return SmoothnessModulus(tau=lambda eps: eps, descriptor="t")


def omega_tau(tau: SmoothnessModulus, d: float, eps: float) -> float:
    """
    Modulus of uniform continuity of J on the ball of radius d.

    eps^2/(12d) * tau(eps/(2d)) for eps in (0, 2] and d >= 1; smaller d is treated
    as d = 1 and larger eps as eps = 2.
    """
    if not d > 0 or not eps > 0:
        raise DomainError(f"omega_tau needs positive d and eps, got d={d}, eps={eps}")
    d = max(d, 1.0)
    eps = min(eps, 2.0)
    return eps * eps / (12.0 * d) * tau(eps / (2.0 * d))


def random_unit_vectors(space: SpaceInstance, count: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.standard_normal((count, space.dim))
    norms = np.linalg.norm(raw, ord=space.p, axis=-1, keepdims=True)
    # a zero draw has probability zero; guard it anyway so the batch stays finite
    raw[norms[:, 0] == 0] = 1.0
    return raw / np.linalg.norm(raw, ord=space.p, axis=-1, keepdims=True)


def random_vectors(space: SpaceInstance, count: int, rng: np.random.Generator, radius: float = 1.0) -> np.ndarray:
    """Random directions with norms uniform in [0, radius]."""
    radii = rng.uniform(0.0, radius, size=(count, 1))
    return random_unit_vectors(space, count, rng) * radii


def validate_smoothness(
    space: SpaceInstance,
    tau: SmoothnessModulus,
    eps_grid: Iterable[float],
    samples: int,
    rng: np.random.Generator,
    tol: Optional[float] = None,
) -> list[Violation]:
    """
    Sample the defining inequality of a smoothness modulus.

    For unit x and ||y|| <= tau(eps) require ||x+y|| + ||x-y|| <= 2 + eps*||y||. A
    quarter of each batch sits exactly on ||y|| = tau(eps).
    """
    tol = settings.IDENTITY_TOL if tol is None else tol
    violations: list[Violation] = []
    for eps in eps_grid:
        try:
            radius = tau(eps)
        except InvalidModulusError as exc:
            violations.append(Violation("smoothness", str(exc), eps=eps))
            continue
        xs = random_unit_vectors(space, samples, rng)
        ys = random_vectors(space, samples, rng, radius)
        boundary = samples // 4
        ys[:boundary] = random_unit_vectors(space, boundary, rng) * radius
        ny = np.linalg.norm(ys, ord=space.p, axis=-1)
        lhs = np.linalg.norm(xs + ys, ord=space.p, axis=-1) + np.linalg.norm(xs - ys, ord=space.p, axis=-1)
        rhs = 2.0 + eps * ny
        excess = lhs - rhs - tol * (1.0 + rhs)
        bad = np.flatnonzero(excess > 0)
        if bad.size:
            worst = bad[np.argmax(excess[bad])]
            violations.append(Violation(
                "smoothness",
                f"{bad.size} of {samples} samples violate the smoothness inequality at tau({eps:g})={radius:g}",
                eps=eps,
                excess=float(excess[worst]),
            ))
    if violations:
        logger.warning("tau '%s' failed on %d eps values", tau.descriptor, len(violations))
    return violations


def duality_continuity_violations(
    space: SpaceInstance,
    tau: SmoothnessModulus,
    d: float,
    eps: float,
    samples: int,
    rng: np.random.Generator,
    tol: Optional[float] = None,
) -> list[Violation]:
    """Sample ||x||, ||y|| <= d with ||x-y|| <= omega_tau(d, eps) and require ||Jx - Jy||_* <= eps."""
    tol = settings.IDENTITY_TOL if tol is None else tol
    delta = omega_tau(tau, d, eps)
    xs = random_vectors(space, samples, rng, d)
    ys = xs + random_vectors(space, samples, rng, delta)
    inside = np.linalg.norm(ys, ord=space.p, axis=-1) <= d
    xs, ys = xs[inside], ys[inside]
    gap = np.linalg.norm(duality_map(space, xs) - duality_map(space, ys), ord=space.q_dual, axis=-1)
    excess = gap - eps - tol
    bad = np.flatnonzero(excess > 0)
    if not bad.size:
        return []
    return [Violation(
        "duality_continuity",
        f"{bad.size} of {xs.shape[0]} pairs move J by more than {eps:g}",
        eps=eps,
        excess=float(excess.max()),
    )]

"""Application configuration."""
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables (prefix ACCRETIA_)."""

    model_config = SettingsConfigDict(env_file=".env", env_prefix="ACCRETIA_", extra="ignore")

    # Output - ACCRETIA_OUT overrides the artifact directory
    OUT: Path = Path("runs")
    LOG_LEVEL: str = "INFO"

    # Numerical slack for identity checks (absolute, and relative to the compared size)
    IDENTITY_TOL: float = 1e-9

    # Implicit step solver
    SOLVER_TOL: float = 1e-12
    SOLVER_MAX_ITER: int = 10_000

    # Infimum of phi for the accretivity modulus
    THETA_GRID_POINTS: int = 4096
    THETA_REL_TOL: float = 1e-6

    # Inversion of strictly decreasing functions
    INVERSE_TOL: float = 1e-10
    BRACKET_EXPONENT: int = 40
    BRACKET_EXPANSIONS: int = 20

    # Certification defaults
    DEFAULT_IMPLICIT_HORIZON: int = 10_000
    DEFAULT_EXPLICIT_HORIZON: int = 100_000
    DEFAULT_EPS_GRID: list[float] = [2.0 ** -k for k in range(1, 11)]
    MAX_COUNTEREXAMPLES: int = 5

    # Strict bounds K are declared as observed * (1 + BOUND_MARGIN)
    BOUND_MARGIN: float = 1e-6

    # Sampling-based hypothesis checks
    VERIFY_SAMPLES: int = 2000
    SEED: int = 0


settings = Settings()

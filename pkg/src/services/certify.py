"""Rate certification: compare a theoretical rate with the residuals of a trace."""
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from src.config import settings
from src.exceptions import AccretiaError
from src.log import get_logger
from src.models import IterationTrace, RateOfConvergence, RealFunction, Vector, Violation
from src.schemas import (
    CertificationReport,
    Counterexample,
    EpsVerdict,
    HypothesisViolation,
    ScenarioConfig,
)
from src.services import banach_core, operators, rates, reporting, schemes
from src.services.factory import ScenarioBundle, build_scenario

logger = get_logger(__name__)


def _residuals(trace: IterationTrace, q: Optional[Vector]) -> np.ndarray:
    if q is None:
        return trace.residuals
    return np.asarray(banach_core.norm(trace.space, trace.xs - q))


def empirical_first_entry(
    trace: IterationTrace,
    eps: float,
    q: Optional[Vector] = None,
    tol: Optional[float] = None,
) -> Optional[int]:
    """
    Least n0 with residuals[m] <= eps for every m in [n0, horizon], or None.

    Scans from the end, so a dip below eps followed by a rise does not count.
    """
    tol = settings.IDENTITY_TOL if tol is None else tol
    above = np.flatnonzero(_residuals(trace, q) > eps + tol)
    if not above.size:
        return 0
    last = int(above[-1])
    return None if last == trace.horizon else last + 1


def certify(
    trace: IterationTrace,
    rate: RateOfConvergence,
    eps_grid,
    scenario_id: str = "adhoc",
    q: Optional[Vector] = None,
    theorem: Optional[str] = None,
) -> CertificationReport:
    """
    Per-eps verdicts for residuals against rate.

    certified   every residual in [Phi(eps), horizon] is <= eps (+ tolerance)
    vacuous     Phi(eps) lies beyond the horizon, so nothing was tested
    failed      some residual in the window exceeds eps; counterexamples recorded
    """
    tol = settings.IDENTITY_TOL
    residuals = _residuals(trace, q)
    entries = []
    for eps in eps_grid:
        phi = rate(eps)
        first = empirical_first_entry(trace, eps, q)
        slack = phi / first if first and phi < rates.INDEX_CAP else None
        if phi > trace.horizon:
            status, counterexamples = "vacuous", []
            logger.warning("%s: Phi(%g) = %d exceeds horizon %d, verdict vacuous", scenario_id, eps, phi, trace.horizon)
        else:
            bad = phi + np.flatnonzero(residuals[phi:] > eps + tol)
            counterexamples = [
                Counterexample(eps=eps, n=int(n), residual=float(residuals[n]))
                for n in bad[: settings.MAX_COUNTEREXAMPLES]
            ]
            status = "failed" if counterexamples else "certified"
        entries.append(EpsVerdict(
            eps=eps,
            phi=phi,
            status=status,
            first_entry=first,
            slack_ratio=slack,
            counterexamples=counterexamples,
        ))
    return CertificationReport(scenario_id=scenario_id, theorem=theorem, horizon=trace.horizon, entries=entries)


def oracle_grid_min(phi: RealFunction, lo: float, hi: float, points: int) -> float:
    """Plain dense-grid minimum of phi over [lo, hi], with no refinement."""
    return float(np.min(operators.evaluate_on(phi, np.linspace(lo, hi, points))))


# ============== Hypothesis checks ==============

def _guarded(check: str, fn: Callable[[], list[Violation]]) -> list[Violation]:
    try:
        return fn()
    except AccretiaError as exc:
        return [Violation(check, str(exc))]


def _strictly_below(check: str, value: float, bound: float, what: str) -> list[Violation]:
    if value < bound:
        return []
    return [Violation(check, f"{what} = {value:.6g} is not below {bound:.6g}", excess=float(value - bound))]


def _sample_levels(eps_grid) -> list[float]:
    return sorted(set(eps_grid) | {2.0**-k for k in range(1, 21)})


def preflight(bundle: ScenarioBundle, rng: np.random.Generator, samples: Optional[int] = None) -> list[Violation]:
    """
    Check the declared hypotheses of a scenario before any iteration.

    Covers accretivity of the declared modulus, initial and range bounds, step-size
    ranges, the divergence and joint-rate contracts, uniform approximation and
    continuity, and the smoothness modulus, as far as each theorem needs them.
    """
    cfg = bundle.config
    thm = cfg.theorem
    samples = samples or cfg.verify_samples or settings.VERIFY_SAMPLES
    space, op, K, q = bundle.space, bundle.operator, bundle.K, bundle.q
    b = bundle.bounds
    eps_grid = bundle.eps_grid
    schedule = bundle.schedule
    alphas = schedule.alphas(bundle.horizon)
    x0_dist = banach_core.norm(space, bundle.x0 - q)
    q_norm = banach_core.norm(space, q)
    violations: list[Violation] = []

    # 1. Declared modulus of accretivity
    lower = min(min(eps_grid) / 2.0, K)
    violations += _guarded("accretivity", lambda: operators.verify_accretive_at_zero(
        op, bundle.theta, K, samples, rng, lower=lower))
    if bundle.second_operator is not None:
        violations += _guarded("accretivity", lambda: operators.verify_accretive_at_zero(
            bundle.second_operator, bundle.second_theta, K, samples, rng, lower=lower))

    # 2. Step sizes and their witnesses
    if np.any(alphas < 0):
        violations.append(Violation("step_range", "alpha_n must be nonnegative"))
    if schedule.alpha_bound is not None and np.any(alphas > schedule.alpha_bound * (1.0 + settings.IDENTITY_TOL)):
        violations.append(Violation("step_range", f"alpha_n exceeds its declared bound {schedule.alpha_bound:g}"))
    violations += _guarded("divergence", lambda: rates.divergence_violations(
        schedule.r, alphas, min(200, samples), rng))
    if cfg.is_ishikawa:
        betas = schedule.betas(bundle.horizon)
        upper = 0.5 if thm == "thm64" else 1.0
        if np.any(alphas >= upper) or np.any(betas >= upper) or np.any(betas < 0):
            violations.append(Violation("step_range", f"alpha_n and beta_n must lie in [0, {upper:g})"))
        violations += _guarded("joint_rate", lambda: rates.convergence_violations(
            schedule.joint_rate, np.maximum(alphas, betas), _sample_levels(eps_grid), "joint_rate"))

    # 3. Bounds
    if thm in ("thm42", "rem43", "cor44", "thm55"):
        violations += _strictly_below("initial_bound", x0_dist, K, "||x0 - q||")
    if thm == "thm55":
        violations += _strictly_below("zero_bound", q_norm, b.K_prime, "||q||")
    if thm == "thm56":
        violations += _strictly_below("initial_bound", x0_dist, b.K0, "||x0 - q||")
        violations += _strictly_below("zero_bound", q_norm, b.K1, "||q||")
        h = np.asarray(operators.evaluate_on(bundle.h_values, np.arange(bundle.horizon, dtype=np.float64)))
        violations += _strictly_below(
            "alpha_h_sum", float(np.max(np.cumsum(alphas * h))), bundle.approximation.partial_alpha_h_bound, "sum alpha_i h_i")
    if cfg.is_ishikawa:
        violations += _strictly_below("initial_bound", x0_dist, b.K1, "||x0 - q||")
        for member in filter(None, (op, bundle.second_operator)):
            # a family bound at or below K0 settles the hypothesis without sampling
            if member.range_bound is not None and member.range_bound <= b.K0:
                continue
            observed = operators.sample_range_bound(member, K, samples, rng)
            violations += _strictly_below("range_bound", observed, b.K0, f"sampled ||w||, w in R(I - {member.name})")

    # 4. Theorem-specific moduli
    if thm in ("thm55", "thm56"):
        data = bundle.approximation
        L = K + (b.K_prime if thm == "thm55" else b.K1)
        levels = [bundle.theta(K, eps) / (2.0 * K) for eps in eps_grid]
        violations += _guarded("uniform_approximation", lambda: operators.verify_uniform_approximation(
            data, L, levels, min(samples, 64), rng))
        h = operators.evaluate_on(data.h_seq, np.arange(bundle.horizon, dtype=np.float64))
        violations += _guarded("h_rate", lambda: rates.convergence_violations(
            data.h_rate, h, _sample_levels(levels), "h_rate"))
        grid = np.linspace(1e-3, 4.0 * L, 256)
        xi = operators.evaluate_on(data.xi_star, grid)
        if np.any(np.diff(xi) < -settings.IDENTITY_TOL):
            violations.append(Violation("xi_star_monotone", "xi* must be nondecreasing"))
    if thm == "thm64":
        levels = sorted({bundle.theta(K, eps) / (16.0 * K) for eps in eps_grid} | set(eps_grid))
        violations += _guarded("uniform_continuity", lambda: operators.verify_uniform_continuity(
            op, bundle.varpi, levels, samples, rng, radius=K))
    if thm == "thm73":
        levels = [bundle.theta(K, eps / 2.0) / (16.0 * K) for eps in eps_grid]
        arguments = sorted(set(eps_grid) | {min(level, 2.0) / (2.0 * max(K, 1.0)) for level in levels})
        violations += _guarded("smoothness", lambda: banach_core.validate_smoothness(
            space, bundle.tau, arguments, samples, rng))

    for violation in violations:
        logger.warning("%s preflight: [%s] %s", cfg.id, violation.check, violation.message)
    return violations


def post_run_checks(bundle: ScenarioBundle, trace: IterationTrace) -> tuple[list[Violation], list[str]]:
    """Hypotheses that can only be checked on the trace, with notes for the report."""
    cfg = bundle.config
    thm = cfg.theorem
    K = bundle.K
    violations: list[Violation] = []
    notes: list[str] = []

    if thm in ("thm42", "rem43", "cor44", "thm55"):
        violations += schemes.residual_bound_violations(trace, K, "declared_bound")
    elif thm == "thm56":
        violations += schemes.residual_bound_violations(trace, K, "derived_bound")
        notes.append(f"derived K = K0 + K2 xi*(K1) = {K:.6g}, max residual {trace.residuals.max():.6g}")
    elif bundle.offset is None or not np.any(bundle.offset):
        violations += schemes.check_ishikawa_bounds(trace, K)

    linear_c = cfg.operator.linear_c
    if thm == "rem43" and linear_c is not None and cfg.alpha.kind == "constant" and cfg.alpha.value > 0:
        alpha = cfg.alpha.value
        envelope = rates.linear_envelope(K, alpha, linear_c, np.arange(trace.horizon + 1))
        bad = np.flatnonzero(trace.residuals > envelope + settings.IDENTITY_TOL)
        if bad.size:
            n = int(bad[0])
            violations.append(Violation(
                "linear_envelope",
                f"residual {trace.residuals[n]:.6g} above K(1+alpha c)^-n = {envelope[n]:.6g} at n={n}",
            ))
        linear = rates.linear_rate(K, alpha, linear_c)
        notes.append("linear rate: " + ", ".join(f"{eps:g}->{linear(eps)}" for eps in bundle.eps_grid))

    if thm == "cor44":
        violations += _guarded("envelope", lambda: _envelope_violations(bundle, trace, notes))
    return violations, notes


def _envelope_violations(bundle: ScenarioBundle, trace: IterationTrace, notes: list[str]) -> list[Violation]:
    partial_sums = np.concatenate(([0.0], np.cumsum(trace.alphas)))
    n0 = rates.lemma37_threshold(lambda eps: bundle.K / float(bundle.psi(eps)), partial_sums)
    notes.append(f"envelope threshold n0 = {n0}")
    if n0 is None:
        return [Violation("envelope", "partial sums never exceed inf f within the horizon")]
    start = max(n0, 1)
    dense = np.arange(start, min(trace.horizon, start + 200) + 1)
    sparse = np.unique(np.geomspace(start, trace.horizon, 200).astype(int))
    for n in np.union1d(dense, sparse):
        bound = schemes.bound_cor44(bundle.psi, bundle.K, partial_sums, int(n)).value
        if not trace.residuals[n] < bound + settings.IDENTITY_TOL:
            return [Violation(
                "envelope",
                f"residual {trace.residuals[n]:.6g} not below psi^-1(K/sum) = {bound:.6g} at n={n}",
            )]
    return []


# ============== Orchestration ==============

def run_scenario(
    config: ScenarioConfig,
    out_dir: Optional[Path] = None,
    seed: Optional[int] = None,
    horizon: Optional[int] = None,
    eps_grid: Optional[list[float]] = None,
) -> CertificationReport:
    """
    Build, preflight, run, certify and (with an output directory) persist a scenario.

    A scenario whose preflight finds violations is rejected without iterating.
    """
    bundle = build_scenario(config, horizon=horizon, eps_grid=eps_grid)
    rng = np.random.default_rng(settings.SEED if seed is None else seed)

    logger.info("preflight %s", config.id)
    violations = preflight(bundle, rng)
    if violations:
        report = CertificationReport(
            scenario_id=config.id,
            theorem=config.theorem,
            horizon=bundle.horizon,
            rejected=True,
            hypothesis_violations=[HypothesisViolation(**asdict(v)) for v in violations],
            notes=bundle.notes + ["rejected before iteration"],
        )
        _persist(config, out_dir, report, None)
        return report

    logger.info("running %s for %d steps", config.id, bundle.horizon)
    trace = bundle.run()
    report = certify(trace, bundle.rate, bundle.eps_grid, scenario_id=config.id, theorem=config.theorem)
    post_violations, notes = post_run_checks(bundle, trace)
    report.hypothesis_violations = [HypothesisViolation(**asdict(v)) for v in post_violations]
    report.notes = bundle.notes + notes
    logger.info(
        "certified %s: %d certified, %d vacuous, %d failed",
        config.id,
        sum(e.status == "certified" for e in report.entries),
        sum(e.status == "vacuous" for e in report.entries),
        sum(e.status == "failed" for e in report.entries),
    )
    _persist(config, out_dir, report, trace)
    return report


def _persist(
    config: ScenarioConfig,
    out_dir: Optional[Path],
    report: CertificationReport,
    trace: Optional[IterationTrace],
) -> None:
    configured = config.output.report_json is not None or config.output.trace_csv is not None
    if out_dir is None and not configured:
        return
    base = Path(out_dir) if out_dir is not None else settings.OUT
    if trace is not None:
        reporting.write_trace_csv(trace, reporting.resolve_output(config.output.trace_csv, base, f"{config.id}-trace.csv"))
    reporting.write_report_json(report, reporting.resolve_output(config.output.report_json, base, f"{config.id}-report.json"))

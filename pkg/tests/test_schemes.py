"""
Tests for step-size sequences, the iteration engines and the closed-form rates.
"""
import math

import numpy as np
import pytest

from src.exceptions import DomainError, SolverError
from src.models import (
    ApproximationData,
    ContinuityModulus,
    OperatorInstance,
    RateOfConvergence,
    RateOfDivergence,
    SmoothnessModulus,
    SpaceInstance,
)
from src.services import banach_core, certify, operators, rates, schemes
from src.services.rates import ceil_index

THETA_SQUARE = operators.modulus_direct(lambda K, t: t * t)
THETA_LINEAR = operators.modulus_direct(lambda K, t: t)


def _unit_steps() -> RateOfDivergence:
    return RateOfDivergence(lambda N, x: N + ceil_index(x))


def _reciprocal_rate() -> RateOfConvergence:
    """phi(d) = ceil(1/d)."""
    return RateOfConvergence(lambda d: ceil_index(1.0 / d))


def _constant_schedule(v: float):
    return schemes.build_schedule(schemes.constant_sequence(v))


# =====================================================
# STEP SIZES
# =====================================================

class TestSequences:
    """Tests for the built-in step-size sequences and their witnesses."""

    def test_harmonic_values_and_rate(self):
        """Test 1/(n+1) and its rate ceil(1/eps - 1)."""
        seq = schemes.harmonic()
        np.testing.assert_allclose(seq.values(np.arange(3)), [1.0, 0.5, 1.0 / 3.0])
        assert seq.rate(0.1) == 9
        assert seq.bound == 1.0

    def test_simple_witness_harmonic(self):
        """Test sum_{i=0}^{f(x)} 1/(i+1) >= x."""
        seq = schemes.harmonic()
        cumulative = np.cumsum(1.0 / np.arange(1, 20_001))
        for x in (0.5, 1.0, 3.0, 7.5):
            assert cumulative[seq.simple(x)] >= x

    @pytest.mark.parametrize("c,s", [(1.0, 1.0), (4.0, 1.0), (1.0, 0.5), (2.0, 0.75)])
    def test_integral_divergence(self, rng, c, s):
        """Test the integral rate of divergence on sampled (N, x)."""
        seq = schemes.power_sequence(c, s)
        alphas = seq.values(np.arange(20_000))
        assert rates.divergence_violations(seq.integral, alphas, 500, rng) == []

    @pytest.mark.parametrize("c,s", [(1.0, 2.0), (4.0, 1.0), (1.0, 0.5)])
    def test_power_rate(self, c, s):
        """Test the convergence rate of 1/(n+c)^s."""
        seq = schemes.power_sequence(c, s)
        values = seq.values(np.arange(100_000))
        assert rates.convergence_violations(seq.rate, values, [0.5, 0.1, 0.01]) == []

    def test_summable_has_no_divergence(self):
        """Test that s > 1 cannot drive a schedule."""
        with pytest.raises(DomainError):
            schemes.build_schedule(schemes.power_sequence(1.0, 2.0))

    def test_constant(self):
        """Test the constant sequence witnesses."""
        seq = schemes.constant_sequence(0.25)
        assert seq.rate(0.5) == 0
        assert seq.rate(0.1) == rates.INDEX_CAP
        assert seq.integral(3, 1.0) == 7

    def test_joint_rate(self):
        """Test that the joint rate is the larger of the two."""
        joint = schemes.joint_rate(schemes.harmonic().rate, schemes.shifted_harmonic(4.0).rate)
        assert joint(0.1) == 9

    def test_schedule_simple_conversion(self):
        """Test the simple witness conversion for a schedule."""
        schedule = schemes.build_schedule(schemes.harmonic(), divergence="simple")
        assert schedule.r(0, 4.000008) == 55


# =====================================================
# IMPLICIT STEP
# =====================================================

class TestImplicitStep:
    """Tests for solving z + alpha A(z) = x."""

    def test_identity_on_line(self, line):
        """Test A(x) = x with alpha = 1 and x = 1 through the root finder."""
        op = OperatorInstance(space=line, select=lambda x: x, zero_q=[0.0], lipschitz=1.0)
        np.testing.assert_allclose(schemes.solve_implicit_step(op, np.array([1.0]), 1.0), [0.5], atol=1e-10)

    @pytest.mark.parametrize("c,alpha,x", [(0.5, 1.0, 2.0), (2.0, 0.25, -1.0), (0.1, 3.0, 7.0)])
    def test_closed_form_matches_fixed_point(self, line, c, alpha, x):
        """Test the affine resolvent x/(1 + c alpha) against the fixed-point solve."""
        closed = operators.diagonal_operator(line, [0.0], [c])
        iterative = OperatorInstance(space=line, select=lambda z: c * z, zero_q=[0.0], lipschitz=c)
        expected = x / (1.0 + c * alpha)
        np.testing.assert_allclose(schemes.solve_implicit_step(closed, np.array([x]), alpha), [expected], atol=1e-12)
        np.testing.assert_allclose(schemes.solve_implicit_step(iterative, np.array([x]), alpha), [expected], atol=1e-10)

    def test_zero_step(self, plane):
        """Test alpha = 0 returns x."""
        op = operators.bounded_perturbation_operator(plane, [0.5, 0.0], 0.5)
        x = np.array([1.0, 2.0])
        np.testing.assert_array_equal(schemes.solve_implicit_step(op, x, 0.0), x)

    @pytest.mark.parametrize("alpha", [0.1, 1.0, 5.0])
    def test_nonlinear_residual(self, plane, alpha):
        """Test the tanh-perturbed shift, solved by iteration or root finding."""
        op = operators.bounded_perturbation_operator(plane, [0.5, -0.25], 0.5)
        x = np.array([2.0, -1.0])
        z = schemes.solve_implicit_step(op, x, alpha)
        assert banach_core.norm(plane, z + alpha * op.select(z) - x) < 1e-10

    def test_unsolvable_step(self, line):
        """Test that z + alpha A(z) = x with A(z) = -z, alpha = 1 has no solution."""
        op = OperatorInstance(space=line, select=lambda z: -z, zero_q=[0.0])
        with pytest.raises(SolverError):
            schemes.solve_implicit_step(op, np.array([1.0]), 1.0, step=3)


# =====================================================
# ENGINES
# =====================================================

class TestImplicitEngines:
    """Tests for the implicit schemes."""

    def test_resolvent_halves_residual(self):
        """Test residuals 2^-n for the shift with alpha = 1, exactly to 1e-12."""
        space = SpaceInstance(dim=4, p=2.0)
        q = np.array([0.5, -0.5, 0.25, 0.0])
        op = operators.shift_operator(space, q)
        trace = schemes.run_implicit_simple(op, _constant_schedule(1.0), q + np.array([1.0, 0.0, 0.0, 0.0]), 60)
        n = np.arange(61)
        np.testing.assert_allclose(trace.residuals, 2.0 ** -n, rtol=0, atol=1e-12)
        assert np.all(trace.residuals <= rates.linear_envelope(1.0, 1.0, 1.0, n) + 1e-9)

    def test_start_at_zero(self, plane):
        """Test x0 = q stays at q."""
        op = operators.shift_operator(plane, [1.0, 2.0])
        trace = schemes.run_implicit_simple(op, schemes.build_schedule(schemes.harmonic()), [1.0, 2.0], 20)
        assert np.all(trace.residuals <= 1e-12)

    def test_zero_steps(self, plane):
        """Test alpha = 0 leaves x0 in place."""
        op = operators.bounded_perturbation_operator(plane, [0.0, 0.0], 0.5)
        trace = schemes.run_implicit_simple(op, _constant_schedule(0.0), [1.0, 1.0], 10)
        assert np.all(trace.xs == np.array([1.0, 1.0]))

    def test_exact_approximation_matches_simple(self, plane):
        """Test A_n = A reproduces the simple scheme."""
        op = operators.shift_operator(plane, [0.5, 0.0])
        zero = schemes.constant_sequence(0.0)
        data = ApproximationData(
            base=op,
            family=operators.perturbed_family(op, zero.values, [0.0, 1.0]),
            h_seq=zero.values,
            h_rate=zero.rate,
            xi_star=lambda L: 1.0,
        )
        schedule = schemes.build_schedule(schemes.harmonic())
        simple = schemes.run_implicit_simple(op, schedule, [1.5, 0.0], 100)
        approx = schemes.run_implicit_approx(data, op.zero_q, schedule, [1.5, 0.0], 100)
        np.testing.assert_array_equal(simple.xs, approx.xs)
        assert approx.scheme_id == "implicit_approx"

    def test_vanishing_perturbation_converges(self, plane):
        """Test A_n = A + b/(n+1)^2 drives the residual to 0."""
        op = operators.shift_operator(plane, [0.5, 0.0])
        h = schemes.power_sequence(1.0, 2.0)
        data = ApproximationData(
            base=op,
            family=operators.perturbed_family(op, h.values, [0.0, 1.0]),
            h_seq=h.values,
            h_rate=h.rate,
            xi_star=lambda L: 1.0,
        )
        trace = schemes.run_implicit_approx(data, op.zero_q, _constant_schedule(1.0), [1.5, 0.0], 2000)
        assert trace.residuals[-1] < 1e-5

    def test_constant_perturbation_fails_certification(self, plane):
        """Test h_n = 1 with a rate claiming h_n = 0 from the start: the iterates settle at q - b."""
        op = operators.shift_operator(plane, [0.5, 0.0])
        h = schemes.constant_sequence(1.0)
        data = ApproximationData(
            base=op,
            family=operators.perturbed_family(op, h.values, [0.0, 1.0]),
            h_seq=h.values,
            h_rate=RateOfConvergence(lambda d: 0),
            xi_star=lambda L: 1.0,
        )
        schedule = _constant_schedule(1.0)
        trace = schemes.run_implicit_approx(data, op.zero_q, schedule, [1.5, 0.0], 50)
        assert trace.residuals[-1] == pytest.approx(1.0, abs=1e-12)

        mu = lambda L, eps: operators.mu_from_approx(data, L, eps)  # noqa: E731
        rate = schemes.rate_implicit_approx(THETA_SQUARE, mu, schedule.r, 1.5, 1.0)
        assert rate(0.5) == 10

        verdict = certify.certify(trace, rate, [0.5]).entries[0]
        assert verdict.status == "failed"
        assert verdict.counterexamples
        assert all(example.n >= 10 for example in verdict.counterexamples)


class TestIshikawa:
    """Tests for the Ishikawa engine and its per-step bounds."""

    def test_shift_recurrence(self, plane):
        """Test x_(n+1) = (1 - alpha_n) x_n + alpha_n q for the shift."""
        op = operators.shift_operator(plane, [0.5, 0.0])
        seq = schemes.shifted_harmonic(4.0)
        schedule = schemes.build_schedule(seq, seq)
        trace = schemes.run_ishikawa(op, op, schedule, [1.5, 0.0], 200)
        expected = np.concatenate(([1.0], np.cumprod(1.0 - trace.alphas)))
        np.testing.assert_allclose(trace.residuals, expected, rtol=1e-12)

    def test_zero_steps(self, plane):
        """Test alpha = beta = 0 is a constant trace."""
        op = operators.bounded_perturbation_operator(plane, [0.5, 0.0], 0.5)
        zero = schemes.constant_sequence(0.0)
        schedule = schemes.ScalarSchedule(
            alpha=zero.values, r=zero.integral, beta=zero.values, joint_rate=zero.rate, alpha_bound=0.0
        )
        trace = schemes.run_ishikawa(op, op, schedule, [2.0, 1.0], 10)
        assert np.all(trace.xs == np.array([2.0, 1.0]))

    def test_needs_beta(self, plane):
        """Test that a schedule without beta is refused."""
        op = operators.shift_operator(plane, [0.0, 0.0])
        with pytest.raises(DomainError):
            schemes.run_ishikawa(op, op, schemes.build_schedule(schemes.harmonic()), [1.0, 0.0], 5)

    def test_bounded_perturbation_bounds(self, plane):
        """Test the per-step bounds with K = 2 K0 + K1."""
        op = operators.bounded_perturbation_operator(plane, [0.5, 0.0], 0.5)
        seq = schemes.shifted_harmonic(4.0)
        trace = schemes.run_ishikawa(op, op, schemes.build_schedule(seq, seq), [1.5, 0.0], 5000)
        K = 2.0 * op.range_bound + 1.000001
        assert schemes.check_ishikawa_bounds(trace, K) == []
        assert trace.residuals[-1] < trace.residuals[0]

    def test_offset_recorded(self, plane):
        """Test that a nonzero offset is kept in the metadata."""
        op = operators.shift_operator(plane, [0.0, 0.0])
        seq = schemes.shifted_harmonic(4.0)
        trace = schemes.run_ishikawa(op, op, schemes.build_schedule(seq, seq), [1.0, 0.0], 5, offset=[0.1, 0.0])
        assert trace.metadata["offset"] == [0.1, 0.0]

    def test_bound_violation_reported(self, plane):
        """Test that a too-small K is reported."""
        op = operators.shift_operator(plane, [0.0, 0.0])
        seq = schemes.shifted_harmonic(4.0)
        trace = schemes.run_ishikawa(op, op, schemes.build_schedule(seq, seq), [1.0, 0.0], 5)
        checks = {v.check for v in schemes.check_ishikawa_bounds(trace, 0.5)}
        assert "ishikawa_residual" in checks


# =====================================================
# RATES
# =====================================================

class TestImplicitRates:
    """Tests for the closed-form rates of the implicit schemes."""

    def test_uniformly_accretive(self):
        """Test Theta = eps^2, K = 1, r = N + ceil(x) at eps = 0.1."""
        assert schemes.rate_implicit_simple(THETA_SQUARE, _unit_steps(), 1.0)(0.1) == 101

    def test_psi_variant(self):
        """Test psi = id, K = 1 at eps = 0.1."""
        assert schemes.rate_psi(lambda t: t, _unit_steps(), 1.0)(0.1) == 11

    def test_psi_rate_dominates(self):
        """Test that the psi rate never exceeds the general rate for eps <= K."""
        r = schemes.harmonic().integral
        for psi in (lambda t: t, lambda t: t * t, lambda t: 0.5 * t):
            general = schemes.rate_implicit_simple(operators.modulus_from_psi(psi), r, 1.5)
            special = schemes.rate_psi(psi, r, 1.5)
            for eps in (1.0, 0.5, 0.1, 0.03):
                assert special(eps) <= general(eps)

    def test_total_above_K(self):
        """Test that the rate is defined and positive for eps >= K."""
        assert schemes.rate_implicit_simple(THETA_SQUARE, _unit_steps(), 1.0)(5.0) >= 1

    def test_approximate(self):
        """Test Theta = eps^2, K = K' = 1, mu = ceil(3/(2 eps)) at eps = 0.1."""
        rate = schemes.rate_implicit_approx(
            THETA_SQUARE, lambda L, eps: ceil_index(3.0 / (2.0 * eps)), _unit_steps(), 1.0, 1.0
        )
        assert rate(0.1) == 401

    def test_approximate_exact_operators(self):
        """Test mu = 0 reduces to the simple rate."""
        approx = schemes.rate_implicit_approx(THETA_SQUARE, lambda L, eps: 0, _unit_steps(), 1.0, 1.0)
        simple = schemes.rate_implicit_simple(THETA_SQUARE, _unit_steps(), 1.0)
        assert [approx(e) for e in (0.5, 0.1, 0.01)] == [simple(e) for e in (0.5, 0.1, 0.01)]

    def test_approximate_bounded(self):
        """Test K := K0 + K2 xi*(K1) = 2 with phi = ceil(1/d) at eps = 0.1."""
        rate = schemes.rate_implicit_approx_bounded(
            THETA_SQUARE, _reciprocal_rate(), lambda t: 1.0, _unit_steps(), 1.0, 1.0, 1.0
        )
        assert rate(0.1) == 1001


class TestIshikawaRates:
    """Tests for the closed-form rates of the Ishikawa schemes."""

    def test_continuous(self):
        """Test K0 = 0.25, K1 = 0.5, Theta = eps, varpi = id at eps = 0.1."""
        rate = schemes.rate_ishikawa_continuous(
            THETA_LINEAR, ContinuityModulus(lambda e: e), _reciprocal_rate(), _unit_steps(), 0.25, 0.5
        )
        assert rate(0.1) == 971

    def test_continuous_matches_proof_form(self):
        """Test (1/6K)(Theta/16K) = Theta/96K^2 when the Theta branch is the smaller one."""
        K0, K1 = 0.5, 1.0
        K = 2.0 * K0 + K1
        rate = schemes.rate_ishikawa_continuous(
            THETA_LINEAR, ContinuityModulus(lambda e: 1e6), _reciprocal_rate(), _unit_steps(), K0, K1
        )
        for eps in (0.5, 0.1, 0.03):
            inner = ceil_index(96.0 * K * K / eps)
            assert rate(eps) == inner + ceil_index(K * K / eps) + 1

    def test_smooth(self):
        """Test K = 1, Theta = tau = id at eps = 1: the omega_tau branch gives 1/4718592."""
        tau = banach_core.hilbert_tau()
        rate = schemes.rate_ishikawa_smooth(THETA_LINEAR, tau, _reciprocal_rate(), _unit_steps(), 0.25, 0.5)
        assert rate(1.0) == 4_718_592 + 2 + 1

    def test_smooth_theta_branch(self):
        """Test that a huge tau leaves the 3 Theta/32K branch as the minimum."""
        tau = SmoothnessModulus(lambda e: 1e12)
        rate = schemes.rate_ishikawa_smooth(THETA_LINEAR, tau, _reciprocal_rate(), _unit_steps(), 0.25, 0.5)
        # 3 Theta(0.5) / 32 = 3/64, divided by 6
        assert rate(1.0) == 128 + 2 + 1


class TestEnvelope:
    """Tests for psi^-1(K / sum alpha) and its threshold."""

    def test_constant_steps(self):
        """Test psi = id, K = 1, alpha = 1 and n = 10."""
        partial_sums = np.arange(0.0, 21.0)
        bound = schemes.bound_cor44(lambda t: t, 1.0, partial_sums, 10)
        assert bound.value == pytest.approx(0.1, rel=1e-10)
        assert bound.threshold == 1

    def test_sum_equals_K(self):
        """Test n with sum = K gives psi^-1(1) = 1."""
        bound = schemes.bound_cor44(lambda t: t, 1.0, np.arange(0.0, 5.0), 1)
        assert bound.value == pytest.approx(1.0, rel=1e-10)

    def test_shift_run_below_envelope(self):
        """Test residuals of the harmonic shift run stay below the envelope from n0 on."""
        space = SpaceInstance(dim=2, p=2.0)
        op = operators.shift_operator(space, [0.5, 0.0])
        trace = schemes.run_implicit_simple(op, schemes.build_schedule(schemes.harmonic()), [1.5, 0.0], 500)
        partial_sums = np.concatenate(([0.0], np.cumsum(trace.alphas)))
        K = 1.000001
        n0 = schemes.bound_cor44(lambda t: t, K, partial_sums, 1).threshold
        assert n0 <= 10
        for n in range(max(n0, 1), 501):
            assert trace.residuals[n] < schemes.bound_cor44(lambda t: t, K, partial_sums, n).value + 1e-9

    def test_psi_underflowing_near_zero(self):
        """Test psi = exp(-1/t), which is 0.0 in floating point at the lower bracket end."""
        partial_sums = np.concatenate(([0.0], np.cumsum(1.0 / np.arange(1.0, 61.0))))
        bound = schemes.bound_cor44(lambda t: math.exp(-1.0 / t), 1.0, partial_sums, 50)
        assert bound.value == pytest.approx(1.0 / math.log(partial_sums[50]), rel=1e-9)
        assert bound.threshold == 2

    def test_needs_positive_sum(self):
        """Test that n = 0 has no envelope."""
        with pytest.raises(DomainError):
            schemes.bound_cor44(lambda t: t, 1.0, np.arange(0.0, 5.0), 0)

    def test_residual_bound(self):
        """Test the declared-K check on a trace."""
        space = SpaceInstance(dim=1, p=2.0)
        op = operators.shift_operator(space, [0.0])
        trace = schemes.run_implicit_simple(op, _constant_schedule(1.0), [1.0], 5)
        assert schemes.residual_bound_violations(trace, 1.000001) == []
        assert schemes.residual_bound_violations(trace, 0.75)
        assert math.isclose(trace.residuals[1], 0.5)

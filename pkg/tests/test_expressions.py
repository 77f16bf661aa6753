"""
Tests for the safe expression grammar used by scenario configs.

Run tests with: python -m pytest tests/ -v
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.exceptions import ExpressionError
from src.expressions import compile_expression


# =====================================================
# EVALUATION
# =====================================================

class TestEvaluation:
    """Tests for compiled expression values."""

    def test_polynomial(self):
        """Test a quadratic modulus."""
        assert compile_expression("0.5*t**2").scalar(2.0) == 2.0

    def test_two_variables_by_keyword(self):
        """Test a direct Theta in K and t."""
        theta = compile_expression("K*t", ("K", "t"))
        assert theta.scalar(K=2.0, t=3.0) == 6.0

    def test_positional_arity(self):
        """Test that a wrong number of positional arguments is refused."""
        with pytest.raises(TypeError):
            compile_expression("K*t", ("K", "t"))(1.0)

    def test_sequence_over_array(self):
        """Test that a schedule evaluates on a whole index array."""
        values = compile_expression("1/(n+4)", ("n",))(np.arange(3))
        np.testing.assert_allclose(values, [0.25, 0.2, 1.0 / 6.0])

    def test_variadic_min_max(self):
        """Test min and max with more than two arguments."""
        assert compile_expression("max(t, 1, 2)").scalar(0.0) == 2.0
        assert compile_expression("min(t, 1, 2)").scalar(0.5) == 0.5

    def test_constants_and_functions(self):
        """Test pi, e and the unary functions."""
        assert compile_expression("pi").scalar(0.0) == pytest.approx(math.pi)
        assert compile_expression("log(e)").scalar(0.0) == pytest.approx(1.0)
        assert compile_expression("ceil(t)").scalar(2.1) == 3.0
        assert compile_expression("sqrt(t) + tanh(0)").scalar(9.0) == 3.0

    def test_overflow_gives_inf(self):
        """Test that overflowing powers give inf rather than raising."""
        assert compile_expression("exp(t)").scalar(1e4) == math.inf

    @given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_abs_matches_builtin(self, x):
        """Test abs against Python's abs."""
        assert compile_expression("abs(t)").scalar(x) == abs(x)

    @given(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False),
           st.floats(min_value=-1e3, max_value=1e3, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_arithmetic_matches_python(self, a, b):
        """Test that + - * match plain float arithmetic."""
        expr = compile_expression("K*t - (K + t)", ("K", "t"))
        assert expr.scalar(K=a, t=b) == pytest.approx(a * b - (a + b))


# =====================================================
# GRAMMAR
# =====================================================

class TestGrammar:
    """Tests that anything outside the grammar is rejected."""

    @pytest.mark.parametrize("source", [
        "__import__('os')",
        "t.real",
        "[t]",
        "1 if t else 2",
        "'a'",
        "True",
        "t < 1",
        "lambda: 1",
    ])
    def test_rejects_non_grammar(self, source):
        """Test calls, attributes, literals and other constructs outside the grammar."""
        with pytest.raises(ExpressionError):
            compile_expression(source)

    def test_unknown_variable(self):
        """Test that only declared variables may appear."""
        with pytest.raises(ExpressionError, match="unknown name"):
            compile_expression("x + 1", ("t",))

    def test_syntax_error_carries_column(self):
        """Test that syntax errors report a column."""
        with pytest.raises(ExpressionError) as exc:
            compile_expression("t +")
        assert exc.value.column is not None

    def test_empty(self):
        """Test that blank expressions are refused."""
        with pytest.raises(ExpressionError):
            compile_expression("   ")

    def test_function_arity(self):
        """Test fixed and variadic arities."""
        with pytest.raises(ExpressionError):
            compile_expression("exp(t, 1)")
        with pytest.raises(ExpressionError):
            compile_expression("max(t)")

import math

import pytest

from adiabatic_lab.errors import ConfigError
from adiabatic_lab.expr import ScalarExpr


def test_polynomial_and_derivative():
    f = ScalarExpr("0.6 + 0.3*t**2")
    assert f(0.5) == pytest.approx(0.675)
    assert f.derivative(0.5) == pytest.approx(0.3, abs=1e-14)


def test_elementary_functions():
    f = ScalarExpr("exp(-t)*sin(2*pi*t)")
    t = 0.3
    assert f(t) == pytest.approx(math.exp(-t) * math.sin(2 * math.pi * t))
    d = math.exp(-t) * (2 * math.pi * math.cos(2 * math.pi * t) - math.sin(2 * math.pi * t))
    assert f.derivative(t) == pytest.approx(d, rel=1e-13)


def test_complex_expression():
    f = ScalarExpr("1j*(t-0.5)**2")
    assert not f.is_real
    assert f(0.0) == pytest.approx(0.25j)
    assert f.derivative(0.0) == pytest.approx(-1j, abs=1e-10)


def test_numbers_are_constants():
    assert ScalarExpr(2)(0.7) == 2.0
    assert ScalarExpr(2).derivative(0.7) == 0.0


@pytest.mark.parametrize("src", ["__import__('os')", "t.real", "x + 1", "sin(t, t)", "lambda t: t", "[t]"])
def test_rejects_unsafe_or_unknown(src):
    with pytest.raises(ConfigError):
        ScalarExpr(src)


def test_rejects_syntax_error_and_booleans():
    with pytest.raises(ConfigError):
        ScalarExpr("t +")
    with pytest.raises(ConfigError):
        ScalarExpr(True)

import random
from fractions import Fraction

import pytest

from sodekit.expressions import (
    Add, Fn, Mul, Num, Pow, Sym, evaluate, free_symbols, normalize,
    to_str,
)
from sodekit.parser import ParseError, parse
from tests.conftest import random_polynomial


def test_sum_of_power_and_product():
    e = parse("y^2 + x*y")
    assert isinstance(e, Add)
    assert e.terms[0] == Pow(Sym("y"), 2)
    assert e.terms[1] == Mul((Sym("x"), Sym("y")))


def test_function_product():
    e = parse("exp(x)*sin(y)")
    assert isinstance(e, Mul)
    assert e.factors[0] == Fn("exp", Sym("x"))
    assert e.factors[1] == Fn("sin", Sym("y"))


def test_zero_denominator_exponent_rejected():
    with pytest.raises(ParseError):
        parse("y^(1/0)")


def test_nonconstant_exponent_rejected():
    with pytest.raises(ParseError, match="rational constant"):
        parse("x^y")


def test_constant_exponent_folds():
    assert parse("x^(3-1)") == Pow(Sym("x"), 2)
    assert parse("x^-2") == Pow(Sym("x"), -2)
    assert parse("x^(1/2)") == Pow(Sym("x"), Fraction(1, 2))


def test_unknown_symbols_are_free():
    e = parse("alpha_3 * q0")
    assert free_symbols(e) == {"alpha_3", "q0"}


def test_unknown_function_rejected():
    with pytest.raises(ParseError, match="unsupported function"):
        parse("tan(x)")


def test_error_carries_location():
    with pytest.raises(ParseError) as err:
        parse("x +\n* y")
    assert err.value.line == 2
    assert err.value.column == 1


def test_leftover_tokens_rejected():
    with pytest.raises(ParseError):
        parse("x y")


def test_decimals_are_exact_rationals():
    assert parse("0.5") == Num(Fraction(1, 2))
    assert parse("2.25") == Num(Fraction(9, 4))


def test_rationals_via_division_stay_exact():
    assert normalize(parse("1/3 + 1/3 + 1/3")) == Num(1)


def test_precedence_and_unary_minus():
    assert normalize(parse("-x^2")) == normalize(-(Sym("x") ** 2))
    assert normalize(parse("1/2*x")) == normalize(Num(Fraction(1, 2)) * Sym("x"))
    assert normalize(parse("2 - -3")) == Num(5)
    assert normalize(parse("x - y - z")) == normalize(
        Sym("x") - Sym("y") - Sym("z")
    )


def test_round_trip_random_polynomials():
    rng = random.Random(20240817)
    for _ in range(60):
        e = random_polynomial(rng, ["x", "y", "w"])
        again = parse(to_str(normalize(e)))
        assert normalize(again) == normalize(e)


def test_round_trip_with_functions_and_quotients():
    texts = [
        "exp(x)*sin(y) - cos(x*y)/(1 + y^2)",
        "log(1 + x^2) + x^(1/2)",
        "(x + y)^3/(x - y) - 7/3",
    ]
    assignment = {"x": 0.37, "y": 0.21}
    for text in texts:
        e = parse(text)
        again = parse(to_str(normalize(e)))
        assert abs(evaluate(again, assignment)
                   - evaluate(e, assignment)) < 1e-12

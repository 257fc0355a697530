import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hocp_revise.heme import HemeParameters, heme_vector_field
from hocp_revise.poly import (
    ONE,
    Monomial,
    Polynomial,
    PolynomialVector,
    affine_substitute,
    lie_derivative,
    monomial_basis,
    parse_polynomial,
)

NVARS = 3

exponents = st.tuples(*(st.integers(0, 2) for _ in range(NVARS)))
polynomials = st.dictionaries(exponents, st.integers(-5, 5), max_size=6).map(
    lambda terms: Polynomial(
        {Monomial.from_dense(powers): coef for powers, coef in terms.items()}, NVARS
    )
)
points = st.tuples(*(st.integers(-3, 3) for _ in range(NVARS)))


def x(index, nvars=NVARS):
    return Polynomial.variable(index, nvars)


def test_eval_square():
    assert (x(0, 1) ** 2).eval([3]) == 9


def test_zero_polynomial():
    zero = Polynomial.zero(2)
    assert zero.eval([1.5, -2.0]) == 0
    assert zero.degree() == -math.inf
    assert zero.is_zero


def test_constant_degree_is_zero():
    assert Polynomial.constant(2.0, 3).degree() == 0


def test_eval_constant_product():
    p = HemeParameters()
    assert Polynomial.constant(p.k1 * p.fe_ex, 1).eval([7.0]) == pytest.approx(5.6e-3)


def test_eval_dimension_mismatch():
    with pytest.raises(ValueError, match="2 coordinates.*3 variables"):
        x(0).eval([1.0, 2.0])


def test_zero_coefficients_are_dropped():
    p = x(0) - x(0) + 1
    assert dict(p.terms) == {ONE: 1.0}


def test_basis_examples():
    assert monomial_basis(2, 1) == (ONE, Monomial.variable(0), Monomial.variable(1))
    assert len(monomial_basis(1, 3)) == 4
    assert len(monomial_basis(5, 4)) == 126


def test_basis_within_degree_is_descending():
    assert monomial_basis(2, 2)[3:] == (
        Monomial.from_dense((2, 0)),
        Monomial.from_dense((1, 1)),
        Monomial.from_dense((0, 2)),
    )


def test_basis_negative_degree():
    with pytest.raises(ValueError, match="nonnegative"):
        monomial_basis(2, -1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 8), st.integers(0, 6))
def test_basis_size_and_order(nvars, d):
    basis = monomial_basis(nvars, d)
    assert len(basis) == math.comb(nvars + d, d)
    assert len(set(basis)) == len(basis)
    assert all(a < b for a, b in zip(basis, basis[1:]))


@given(polynomials, polynomials, points)
def test_eval_is_a_ring_homomorphism(p, q, z):
    assert (p + q).eval(z) == pytest.approx(p.eval(z) + q.eval(z), rel=1e-12, abs=1e-12)
    assert (p * q).eval(z) == pytest.approx(p.eval(z) * q.eval(z), rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    polynomials,
    st.lists(polynomials, min_size=NVARS, max_size=NVARS),
    st.tuples(*(st.integers(-1, 1) for _ in range(NVARS))),
)
def test_compose_matches_evaluation(p, subs, z):
    inner = [s.eval(z) for s in subs]
    assert p.compose(subs).eval(z) == pytest.approx(p.eval(inner), rel=1e-9, abs=1e-9)


@given(polynomials)
def test_format_parse_round_trip(p):
    names = ["a", "b", "c"]
    assert parse_polynomial(p.format(names), names) == p


def test_lie_derivative_of_iron_pool():
    f = heme_vector_field("ctrl")
    v = x(1, 5)
    assert lie_derivative(v, f) == f[1]


def test_lie_derivative_of_clock():
    f = heme_vector_field("ctrl")
    assert lie_derivative(x(0, 5), f) == Polynomial.constant(1.0, 6)


def test_lie_derivative_of_square():
    f = heme_vector_field("ctrl")
    v = x(4, 5) ** 2
    assert lie_derivative(v, f) == 2 * x(4, 6) * f[4]


def test_lie_derivative_rejects_non_affine_input():
    f = (Polynomial.constant(1.0, 3), x(2) ** 2)
    with pytest.raises(ValueError, match="not affine"):
        lie_derivative(x(1, 2), f)


def test_lie_derivative_matches_finite_differences():
    t, y, u = x(0), x(1), x(2)
    f = (Polynomial.constant(1.0, 3), 0.5 - y * u + t * t)
    v = (t * y**2 + 3 * y).extend(2)
    derivative = lie_derivative(v, f)
    rng = np.random.default_rng(7)
    h = 1e-5
    for _ in range(20):
        point = rng.uniform(-1, 1, 3)
        velocity = np.array([row.eval(point) for row in f])
        ahead = v.eval(point[:2] + h * velocity)
        behind = v.eval(point[:2] - h * velocity)
        assert (ahead - behind) / (2 * h) == pytest.approx(
            derivative.eval(point), rel=1e-6, abs=1e-7
        )


def test_parse_operators():
    p = parse_polynomial("2*x^2 - 3*y + 1", ["x", "y"])
    assert p.eval([2, 5]) == -6
    assert parse_polynomial("x**2*(y + 1)", ["x", "y"]).eval([3, 1]) == 18
    assert parse_polynomial("-x^2", ["x"]).eval([3]) == -9


def test_parse_errors():
    with pytest.raises(ValueError, match="unknown variable 'z'"):
        parse_polynomial("x + z", ["x", "y"])
    with pytest.raises(ValueError, match="empty expression"):
        parse_polynomial("  ", ["x"])
    with pytest.raises(ValueError, match="cannot parse"):
        parse_polynomial("x +* y", ["x", "y"])


@pytest.mark.parametrize("text", ["x^0.5", "1/x", "x^-1", "sin(x)", "2^x"])
def test_parse_rejects_non_polynomials(text):
    with pytest.raises(ValueError, match="not a polynomial in x"):
        parse_polynomial(text, ["x"])


@pytest.mark.parametrize(
    ("text", "value"),
    [("x^2^2", 81.0), ("x^(2)", 9.0), ("(x + 1)^2 / 4", 4.0), ("x**2^1", 9.0)],
)
def test_parse_nested_powers(text, value):
    assert parse_polynomial(text, ["x"]).eval([3.0]) == pytest.approx(value)


def test_to_sympy_round_trip():
    p = parse_polynomial("1.5*x1^2 - x2*x1 + 3", ["x1", "x2"])
    poly = p.to_sympy()
    assert poly.total_degree() == 2
    assert Polynomial.from_sympy(poly, 2) == p


def test_format():
    p = parse_polynomial("1.5*x1^2 - x2 + 3", ["x1", "x2"])
    assert p.format(["x1", "x2"]) == "3.0 - x2 + 1.5*x1^2"


def test_affine_substitute():
    p = x(0, 1) ** 2
    assert affine_substitute(p, [1.0], [2.0]).eval([0.5]) == 4.0


def test_polynomial_vector_matches_eval():
    rows = [x(0) * x(1) - 2, x(2) ** 3 + 0.5 * x(0), Polynomial.zero(NVARS)]
    compiled = PolynomialVector(rows)
    point = [0.3, -1.2, 2.0]
    np.testing.assert_allclose(compiled(point), [row.eval(point) for row in rows])

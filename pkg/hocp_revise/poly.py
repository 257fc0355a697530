"""Sparse multivariate polynomials over a fixed, ordered variable list.

Variable 0 is the clock ``t`` whenever a polynomial lives on a
time-extended space. Monomials are ordered graded-lexicographically with
x0 > x1 > ..., which fixes the layout of every moment matrix.
"""

import math
from collections.abc import Mapping
from dataclasses import dataclass
from functools import lru_cache
from tokenize import TokenError
from types import MappingProxyType

import numpy as np
import sympy
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)
from sympy.polys.polyerrors import BasePolynomialError


@dataclass(frozen=True)
class Monomial:
    exponents: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        previous = -1
        for var, exp in self.exponents:
            if var <= previous or exp <= 0:
                raise ValueError(f"malformed monomial exponents {self.exponents}")
            previous = var

    @classmethod
    def from_dense(cls, powers):
        return cls(tuple((var, int(exp)) for var, exp in enumerate(powers) if exp))

    @classmethod
    def variable(cls, index, power=1):
        return cls(((index, power),)) if power else cls()

    @property
    def degree(self):
        return sum(exp for _, exp in self.exponents)

    @property
    def top_variable(self):
        return self.exponents[-1][0] if self.exponents else -1

    def power(self, var):
        for index, exp in self.exponents:
            if index == var:
                return exp
        return 0

    def dense(self, nvars):
        powers = [0] * nvars
        for var, exp in self.exponents:
            if var >= nvars:
                raise ValueError(f"monomial uses variable {var} but only {nvars} exist")
            powers[var] = exp
        return tuple(powers)

    def __mul__(self, other):
        merged = dict(self.exponents)
        for var, exp in other.exponents:
            merged[var] = merged.get(var, 0) + exp
        return Monomial(tuple(sorted(merged.items())))

    def sort_key(self):
        return (self.degree, tuple(-exp for exp in self.dense(self.top_variable + 1)))

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def format(self, names):
        if not self.exponents:
            return "1"
        factors = []
        for var, exp in self.exponents:
            factors.append(names[var] if exp == 1 else f"{names[var]}^{exp}")
        return "*".join(factors)


ONE = Monomial()


def _compositions(nvars, degree):
    # descending lexicographic order of exponent vectors with a fixed sum
    if nvars == 0:
        if degree == 0:
            yield ()
        return
    if nvars == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _compositions(nvars - 1, degree - first):
            yield (first, *rest)


@lru_cache(maxsize=256)
def monomial_basis(nvars, d):
    """All monomials in ``nvars`` variables of total degree <= d, graded-lex."""
    if d < 0:
        raise ValueError(f"degree must be nonnegative, got {d}")
    return tuple(
        Monomial.from_dense(powers)
        for degree in range(d + 1)
        for powers in _compositions(nvars, degree)
    )


def basis_size(nvars, d):
    return math.comb(nvars + d, d)


def _is_number(value):
    return isinstance(value, int | float | np.integer | np.floating) and not isinstance(
        value, bool
    )


class Polynomial:
    __slots__ = ("_terms", "nvars")

    def __init__(self, terms=None, nvars=0):
        items = terms.items() if isinstance(terms, Mapping) else (terms or ())
        collected = {}
        for mono, coef in items:
            if mono.top_variable >= nvars:
                raise ValueError(
                    f"monomial {mono.exponents} outside {nvars} variables"
                )
            collected[mono] = collected.get(mono, 0.0) + float(coef)
        self._terms = {mono: coef for mono, coef in collected.items() if coef != 0.0}
        self.nvars = nvars

    @classmethod
    def zero(cls, nvars):
        return cls({}, nvars)

    @classmethod
    def constant(cls, value, nvars):
        return cls({ONE: value}, nvars)

    @classmethod
    def variable(cls, index, nvars):
        if not 0 <= index < nvars:
            raise ValueError(f"variable {index} outside {nvars} variables")
        return cls({Monomial.variable(index): 1.0}, nvars)

    @property
    def terms(self):
        return MappingProxyType(self._terms)

    def items(self):
        return sorted(self._terms.items(), key=lambda item: item[0].sort_key())

    @property
    def is_zero(self):
        return not self._terms

    def degree(self):
        if not self._terms:
            return -math.inf
        return max(mono.degree for mono in self._terms)

    def degree_in(self, variables):
        """Largest combined power of ``variables`` over all terms."""
        if not self._terms:
            return -math.inf
        variables = set(variables)
        return max(
            sum(exp for var, exp in mono.exponents if var in variables)
            for mono in self._terms
        )

    def used_variables(self):
        return sorted({var for mono in self._terms for var, _ in mono.exponents})

    def coefficient(self, mono):
        return self._terms.get(mono, 0.0)

    def extend(self, nvars):
        if nvars < self.nvars and any(
            mono.top_variable >= nvars for mono in self._terms
        ):
            raise ValueError(f"cannot drop variables in use to fit {nvars} variables")
        return Polynomial(self._terms, nvars)

    def _coerce(self, other):
        if _is_number(other):
            return Polynomial.constant(other, self.nvars), self
        if isinstance(other, Polynomial):
            nvars = max(self.nvars, other.nvars)
            return other.extend(nvars), self.extend(nvars)
        return NotImplemented, self

    def __add__(self, other):
        other, this = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(this._terms)
        for mono, coef in other._terms.items():
            terms[mono] = terms.get(mono, 0.0) + coef
        return Polynomial(terms, this.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({mono: -coef for mono, coef in self._terms.items()}, self.nvars)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if _is_number(other):
            return Polynomial(
                {mono: coef * other for mono, coef in self._terms.items()}, self.nvars
            )
        other, this = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = {}
        for left, a in this._terms.items():
            for right, b in other._terms.items():
                mono = left * right
                terms[mono] = terms.get(mono, 0.0) + a * b
        return Polynomial(terms, this.nvars)

    __rmul__ = __mul__

    def __pow__(self, power):
        if not isinstance(power, int) or power < 0:
            raise ValueError(f"polynomial powers must be nonnegative integers, got {power}")
        result = Polynomial.constant(1.0, self.nvars)
        base = self
        while power:
            if power & 1:
                result = result * base
            base = base * base
            power >>= 1
        return result

    def __eq__(self, other):
        if _is_number(other):
            other = Polynomial.constant(other, self.nvars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self._terms.items())))

    def __repr__(self):
        return f"Polynomial({self.format()!r}, nvars={self.nvars})"

    def eval(self, point):
        if len(point) != self.nvars:
            raise ValueError(
                f"point has {len(point)} coordinates, polynomial has {self.nvars} variables"
            )
        total = 0.0
        for mono, coef in self._terms.items():
            value = coef
            for var, exp in mono.exponents:
                value *= point[var] ** exp
            total += value
        return total

    def to_sympy(self, gens=None):
        """This polynomial as a ``sympy.Poly`` over ``gens`` (z0, z1, ... by default)."""
        gens = gens or generators(self.nvars)
        rep = {mono.dense(self.nvars): coef for mono, coef in self._terms.items()}
        return sympy.Poly.from_dict(rep or {(0,) * self.nvars: 0.0}, *gens, domain="RR")

    @classmethod
    def from_sympy(cls, poly, nvars):
        return cls({Monomial.from_dense(m): float(c) for m, c in poly.terms()}, nvars)

    def compose(self, subs):
        """Replace variable k by ``subs[k]``; the result lives on subs' variables."""
        if len(subs) != self.nvars:
            raise ValueError(
                f"{len(subs)} substitutions given for {self.nvars} variables"
            )
        nvars = max((sub.nvars for sub in subs), default=0)
        if not self.used_variables():
            return Polynomial.constant(self.coefficient(ONE), nvars)
        inner = generators(nvars)
        outer = generators(self.nvars, "w")
        replacement = {
            gen: sub.extend(nvars).to_sympy(inner).as_expr() for gen, sub in zip(outer, subs)
        }
        expr = self.to_sympy(outer).as_expr().xreplace(replacement)
        if not inner:
            return Polynomial.constant(float(expr), 0)
        return Polynomial.from_sympy(sympy.Poly(expr, *inner, domain="RR"), nvars)

    def format(self, names=None):
        names = names or default_names(self.nvars)
        if not self._terms:
            return "0"
        text = ""
        for mono, coef in self.items():
            sign = "-" if coef < 0 else "+"
            magnitude = abs(coef)
            if mono == ONE:
                body = repr(magnitude)
            elif magnitude == 1.0:
                body = mono.format(names)
            else:
                body = f"{magnitude!r}*{mono.format(names)}"
            if not text:
                text = body if sign == "+" else f"-{body}"
            else:
                text += f" {sign} {body}"
        return text


def default_names(nvars):
    return [f"x{index + 1}" for index in range(nvars)]


@lru_cache(maxsize=64)
def generators(nvars, prefix="z"):
    return tuple(sympy.Symbol(f"{prefix}{k}") for k in range(nvars))


def affine_substitute(p, offsets, scales):
    """p(offsets + scales * z) as a polynomial in z."""
    subs = [
        Polynomial({ONE: offset, Monomial.variable(k): scale}, p.nvars)
        for k, (offset, scale) in enumerate(zip(offsets, scales, strict=True))
    ]
    return p.compose(subs)


def lie_derivative(v, f):
    """Sum of dv/dz_k * f_k; row 0 of ``f`` is the clock row.

    Variables of ``f`` beyond ``v.nvars`` are inputs and must appear affinely.
    """
    if len(f) != v.nvars:
        raise ValueError(f"vector field has {len(f)} rows for {v.nvars} variables")
    nvars = max([v.nvars, *(row.nvars for row in f)])
    inputs = range(v.nvars, nvars)
    for k, row in enumerate(f):
        if row.degree_in(inputs) > 1:
            raise ValueError(f"vector field row {k} is not affine in the inputs")
    gens = generators(nvars)
    state = v.extend(nvars).to_sympy(gens)
    result = sympy.Poly(0, *gens, domain="RR")
    for k, row in enumerate(f):
        partial = state.diff(gens[k])
        if not partial.is_zero:
            result += partial * row.extend(nvars).to_sympy(gens)
    return Polynomial.from_sympy(result, nvars)


class PolynomialVector:
    """A fixed list of polynomials compiled for fast numeric evaluation."""

    def __init__(self, polynomials, nvars=None):
        self.nvars = nvars if nvars is not None else max(
            (p.nvars for p in polynomials), default=0
        )
        monomials = sorted(
            {mono for p in polynomials for mono in p.terms}, key=Monomial.sort_key
        )
        index = {mono: k for k, mono in enumerate(monomials)}
        self.exponents = np.array(
            [mono.dense(self.nvars) for mono in monomials], dtype=np.int64
        ).reshape(len(monomials), self.nvars)
        self.coefficients = np.zeros((len(polynomials), len(monomials)))
        for row, p in enumerate(polynomials):
            for mono, coef in p.terms.items():
                self.coefficients[row, index[mono]] = coef

    def __len__(self):
        return self.coefficients.shape[0]

    def __call__(self, point):
        point = np.asarray(point, dtype=float)
        if point.shape[-1] != self.nvars:
            raise ValueError(
                f"point has {point.shape[-1]} coordinates, expected {self.nvars}"
            )
        values = np.prod(point[..., None, :] ** self.exponents, axis=-1)
        return values @ self.coefficients.T


TRANSFORMATIONS = (*standard_transformations, convert_xor)


def parse_polynomial(text, names):
    """Parse ``"c*x1^a*x2 + ..."`` over the given variable names; ``^`` is a power."""
    names = list(names)
    if not text.strip():
        raise ValueError(f"empty expression in polynomial {text!r}")
    gens = [sympy.Symbol(name) for name in names]
    try:
        expr = parse_expr(
            text, local_dict=dict(zip(names, gens)), transformations=TRANSFORMATIONS
        )
    except (SyntaxError, TypeError, TokenError, sympy.SympifyError) as error:
        raise ValueError(f"cannot parse polynomial {text!r}: {error}") from None
    unknown = sorted(str(symbol) for symbol in expr.free_symbols - set(gens))
    if unknown:
        raise ValueError(f"unknown variable {unknown[0]!r} in polynomial {text!r}")
    try:
        if not gens:
            return Polynomial.constant(float(expr), 0)
        poly = sympy.Poly(expr, *gens, domain="RR")
    except (BasePolynomialError, TypeError) as error:
        raise ValueError(f"not a polynomial in {', '.join(names)}: {text!r}") from error
    return Polynomial.from_sympy(poly, len(names))


def polynomial_from_coefficients(basis, coefficients, nvars):
    return Polynomial(dict(zip(basis, coefficients, strict=True)), nvars)


import numpy as np
import pytest

from hocp_revise.poly import Monomial, Polynomial
from hocp_revise.relax import build_relaxation
from hocp_revise.sim import ControlWindow, PolynomialControl, simulate
from hocp_revise.synth import MomentData, SynthesisError, extract_control, residual


def moments_of(system, law, order):
    relaxation = build_relaxation(system, order)
    control = PolynomialControl([ControlWindow(0.0, 1.0, {1: (law,)})], system.inputs)
    trajectory = simulate(system, control, system.initial, (0.0, 1.0))
    return relaxation, relaxation.empirical_moments(trajectory, control)


def law_of(control, mode=1):
    (law,) = control.windows[0].laws[mode]
    return law


def test_recovers_constant_control(scalar_system):
    relaxation, y = moments_of(scalar_system, Polynomial.constant(0.5, 2), 1)
    data = MomentData.from_moments(relaxation, y)
    control = extract_control(data, 0)
    assert law_of(control).eval([0.3, 0.15]) == pytest.approx(0.5, abs=1e-4)
    assert control.span == (0.0, 1.0)
    assert residual(data.modes[1], 0) == pytest.approx(0.0, abs=1e-9)


def test_recovers_linear_control(scalar_system):
    t = Polynomial.variable(0, 2)
    relaxation, y = moments_of(scalar_system, 0.2 + 0.5 * t, 1)
    law = law_of(extract_control(MomentData.from_moments(relaxation, y), 1))
    assert law.terms.get(Monomial(), 0.0) == pytest.approx(0.2, abs=1e-3)
    assert law.terms.get(Monomial.variable(0), 0.0) == pytest.approx(0.5, abs=1e-3)
    assert law.terms.get(Monomial.variable(1), 0.0) == pytest.approx(0.0, abs=1e-3)


def test_moment_matrices_are_positive(scalar_system):
    relaxation, y = moments_of(scalar_system, Polynomial.constant(-0.25, 2), 2)
    entry = MomentData.from_moments(relaxation, y).modes[1]
    assert len(entry.min_eigenvalues) == 3
    assert min(entry.min_eigenvalues) >= -1e-9


def test_control_degree_limited_by_moments(scalar_system):
    relaxation, y = moments_of(scalar_system, Polynomial.constant(0.5, 2), 1)
    data = MomentData.from_moments(relaxation, y)
    with pytest.raises(ValueError, match="control degree 2 needs moments of degree 4"):
        extract_control(data, 2)
    with pytest.raises(ValueError, match="non-negative"):
        extract_control(data, -1)


def test_zero_moments(scalar_system):
    relaxation = build_relaxation(scalar_system, 1)
    data = MomentData.from_moments(relaxation, np.zeros(relaxation.layout.size))
    with pytest.raises(SynthesisError, match="numerically zero"):
        extract_control(data, 0)


def test_extracted_control_uses_input_bounds(scalar_system):
    relaxation, y = moments_of(scalar_system, Polynomial.constant(1.0, 2), 1)
    control = extract_control(MomentData.from_moments(relaxation, y), 0)
    assert control.bounds is scalar_system.inputs
    assert control.value(0.5, 1, [0.5, 0.5])[0] <= 1.0

import numpy as np
import pytest

from hocp_revise import artifacts
from hocp_revise.fit import (
    ControlSamples,
    evaluate_fit,
    fit_family,
    fit_hill,
    fit_piecewise_poly,
    fit_step,
    hill,
    plot_controls,
    sample_control,
    write_fit_report,
    write_plot_data,
)
from hocp_revise.poly import Polynomial
from hocp_revise.revise import DataPoint
from hocp_revise.sim import ControlWindow, PolynomialControl, simulate


def samples_of(function, end=20.0, step=0.05):
    times = np.round(np.arange(0.0, end + step / 2, step), 10)
    return ControlSamples(times, function(times))


def test_step_recovers_switch():
    samples = samples_of(lambda t: np.where(t < 9.975, 0.1, 0.8))
    f = fit_step(samples)
    assert f.parameters["low"] == pytest.approx(0.1)
    assert f.parameters["high"] == pytest.approx(0.8)
    assert f.parameters["switch"] == pytest.approx(9.975)
    assert f.residual == pytest.approx(0.0, abs=1e-12)
    assert f.flags == ()


def test_step_on_constant_degenerates():
    samples = samples_of(lambda t: np.full_like(t, 0.4))
    f = fit_step(samples)
    assert f.flags == ("degenerate",)
    assert f.parameters["low"] == f.parameters["high"]
    assert f.parameters["low"] == pytest.approx(0.4)


def test_step_needs_samples():
    with pytest.raises(ValueError, match="at least 4 samples"):
        fit_step(ControlSamples(np.arange(3.0), np.zeros(3)))


def test_piecewise_polynomial_is_exact_on_polynomials():
    samples = samples_of(lambda t: np.where(t < 11, 0.01 * t**2, 0.5 + 0.001 * (t - 11) ** 3))
    f = fit_piecewise_poly(samples)
    assert f.residual == pytest.approx(0.0, abs=1e-12)
    assert f.parameters["left"] == pytest.approx([0.0, 0.0, 0.01], abs=1e-9)
    assert f(5.0) == pytest.approx(0.25)
    assert f(15.0) == pytest.approx(0.564)


def test_piecewise_polynomial_needs_samples_on_both_sides():
    samples = samples_of(lambda t: t / 20)
    with pytest.raises(ValueError, match="right piece has 0 samples"):
        fit_piecewise_poly(samples, breakpoint=30.0)


def test_hill_recovers_parameters():
    samples = samples_of(lambda t: hill(t, 0.05, 0.6, 10.0, 4.0))
    f = fit_hill(samples)
    assert f.parameters["K"] == pytest.approx(10.0, abs=1e-6)
    assert f.parameters["n"] == pytest.approx(4.0, abs=1e-6)
    assert f.parameters["basal"] == pytest.approx(0.05, abs=1e-6)
    assert f.parameters["amplitude"] == pytest.approx(0.6, abs=1e-6)
    assert f.flags == ()


def test_hill_is_zero_activation_at_origin():
    assert hill(0.0, 0.2, 1.0, 3.0, 2.0) == 0.2
    assert hill(3.0, 0.0, 1.0, 3.0, 2.0) == pytest.approx(0.5)


def test_fitted_values_are_clipped():
    samples = samples_of(lambda t: np.where(t < 10, -0.5, 1.5))
    f = fit_step(samples, bounds=(0.0, 1.0))
    assert f(0.0) == 0.0
    assert f(20.0) == 1.0
    np.testing.assert_array_equal(f.value(5.0, 1, None), [0.0])


def test_fit_family():
    samples = samples_of(lambda t: np.where(t < 10, 0.2, 0.7))
    assert fit_family("step", samples).family == "step"
    assert fit_family("piecewise_poly", samples, breakpoint=10.0).family == "piecewise_poly"
    with pytest.raises(ValueError, match="unknown family 'spline'"):
        fit_family("spline", samples)


def test_describe():
    samples = samples_of(lambda t: np.where(t < 10, 0.25, 0.75))
    assert fit_step(samples).describe().startswith("low=0.25;high=0.75;switch=9.97")


def test_sample_control(scalar_system):
    t = Polynomial.variable(0, 2)
    control = PolynomialControl([ControlWindow(0.0, 1.0, {1: (t,)})], scalar_system.inputs)
    trajectory = simulate(scalar_system, control, scalar_system.initial, (0.0, 1.0))
    samples = sample_control(control, trajectory, step=0.25)
    np.testing.assert_array_equal(samples.times, [0.0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(samples.values, samples.times)


def test_samples_must_increase():
    with pytest.raises(ValueError, match="strictly increasing"):
        ControlSamples(np.array([0.0, 0.0]), np.zeros(2))


def test_evaluate_fit(scalar_system):
    samples = samples_of(lambda t: np.full_like(t, 0.5), end=1.0)
    f = fit_step(samples, bounds=(-1.0, 1.0))
    data = [DataPoint(1.0, 1.0, Polynomial.variable(1, 2))]
    error, trajectory = evaluate_fit(scalar_system, f, data)
    assert error == pytest.approx(0.5, rel=1e-6)
    assert f.epsilon_total == error
    assert trajectory.final[1][1] == pytest.approx(0.5, rel=1e-6)


def test_report_and_plot_data(tmp_path):
    samples = samples_of(lambda t: np.where(t < 10, 0.2, 0.7), end=20.0, step=5.0)
    f = fit_step(samples)
    write_fit_report(tmp_path / "fits.csv", [("step", f.describe(), f.residual, 0.125, ())])
    (row,) = artifacts.read_csv(tmp_path / "fits.csv")
    assert row["family"] == "step"
    assert row["epsilon_total"] == "0.125"
    assert row["flags"] == ""
    write_plot_data(tmp_path / "plot.csv", samples, [f])
    rows = artifacts.read_csv(tmp_path / "plot.csv")
    assert list(rows[0]) == ["t", "revised", "step"]
    assert [row["t"] for row in rows] == ["0", "5", "10", "15", "20"]


def test_svg_is_deterministic(tmp_path):
    samples = samples_of(lambda t: np.where(t < 10, 0.2, 0.7))
    fits = [fit_step(samples), fit_hill(samples)]
    first = plot_controls(tmp_path / "a.svg", samples, fits).read_bytes()
    second = plot_controls(tmp_path / "b.svg", samples, fits).read_bytes()
    assert first == second
    assert b"<svg" in first

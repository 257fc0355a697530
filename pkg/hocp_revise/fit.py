"""Interpretable approximations of a synthesised control: step, piecewise polynomial, Hill."""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import matplotlib
import numpy as np
import scipy.optimize
from matplotlib.figure import Figure
from numpy.polynomial import Polynomial as NumpyPolynomial

from . import artifacts
from .revise import total_error
from .sim import evaluate_measurement, simulate

logger = logging.getLogger(__name__)

SAMPLE_STEP = 0.05
HILL_K_STEP = 0.25
HILL_N_STEP = 0.5
HILL_N_MAX = 10.0
HILL_ROUNDS = 4
DEFAULT_BREAKPOINT = 11.0
DEFAULT_DEGREES = (2, 4)

SVG_SALT = "hocp-revise"


@dataclass(frozen=True)
class ControlSamples:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError(f"{len(self.times)} times for {len(self.values)} values")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    def __len__(self):
        return len(self.times)


def sample_control(control, trajectory, step=SAMPLE_STEP):
    """Values of the first input along ``trajectory`` on a regular grid."""
    start, end = trajectory.span
    count = int(math.floor((end - start) / step + 1e-9))
    times = np.round(start + step * np.arange(count + 1), 10)
    values = []
    for t in times:
        mode, state = trajectory.state_at(t)
        values.append(control.value(t, mode, state)[0])
    return ControlSamples(times, np.asarray(values, dtype=float))


@dataclass
class FittedFunction:
    family: str
    parameters: dict
    residual: float
    evaluator: Callable = field(repr=False)
    bounds: tuple[float, float] = (0.0, 1.0)
    flags: tuple[str, ...] = ()
    epsilon_total: float | None = None

    def __call__(self, t):
        return np.clip(self.evaluator(np.asarray(t, dtype=float)), *self.bounds)

    def value(self, t, mode, state):
        """Open-loop control interface for the simulator."""
        return np.atleast_1d(self(t)).astype(float)

    def describe(self):
        return ";".join(
            f"{name}={_format_parameter(value)}" for name, value in self.parameters.items()
        )


def _format_parameter(value):
    if isinstance(value, list | tuple):
        return "[" + " ".join(artifacts.format_number(float(v)) for v in value) + "]"
    return artifacts.format_number(float(value))


def _sse(values, fitted):
    return float(np.sum((values - fitted) ** 2))


def fit_step(samples, bounds=(0.0, 1.0)):
    """Best single switch between two constant levels, switch on sample midpoints."""
    t, v = samples.times, samples.values
    n = len(samples)
    if n < 4:
        raise ValueError(f"step fit needs at least 4 samples, got {n}")
    cumulative = np.concatenate([[0.0], np.cumsum(v)])
    squares = np.concatenate([[0.0], np.cumsum(v**2)])
    best = None
    for k in range(2, n - 1):
        left_mean = cumulative[k] / k
        right_mean = (cumulative[n] - cumulative[k]) / (n - k)
        sse = (squares[k] - k * left_mean**2) + (
            squares[n] - squares[k] - (n - k) * right_mean**2
        )
        if best is None or sse < best[0] - 1e-12:
            best = (max(sse, 0.0), k, left_mean, right_mean)
    _, k, low, high = best
    switch = float((t[k - 1] + t[k]) / 2)
    sse = _sse(v, np.where(t < switch, low, high))
    constant_sse = _sse(v, np.mean(v))
    variance = sse / (n - 3)
    flags = ()
    # no significant gain over a constant (BIC-style penalty)
    if constant_sse - sse <= 3 * math.log(n) * variance + 1e-12 * max(1.0, constant_sse):
        flags = ("degenerate",)
        low = high = float(np.mean(v))
        switch = float((t[0] + t[-1]) / 2)
        sse = constant_sse
        logger.info("step fit degenerates to a constant %.6g", low)

    def evaluator(time):
        return np.where(time < switch, low, high)

    return FittedFunction(
        family="step",
        parameters={"low": float(low), "high": float(high), "switch": switch},
        residual=float(sse),
        evaluator=evaluator,
        bounds=bounds,
        flags=flags,
    )


def fit_piecewise_poly(
    samples, breakpoint=DEFAULT_BREAKPOINT, degrees=DEFAULT_DEGREES, bounds=(0.0, 1.0)
):
    """Independent least-squares polynomials before and after ``breakpoint``."""
    t, v = samples.times, samples.values
    pieces = []
    residual = 0.0
    for name, mask, degree in (
        ("left", t < breakpoint, degrees[0]),
        ("right", t >= breakpoint, degrees[1]),
    ):
        count = int(np.count_nonzero(mask))
        if count < degree + 1:
            raise ValueError(
                f"{name} piece has {count} samples, degree {degree} needs {degree + 1}"
            )
        piece = NumpyPolynomial.fit(t[mask], v[mask], degree)
        residual += _sse(v[mask], piece(t[mask]))
        pieces.append(piece)
    left, right = pieces

    def evaluator(time):
        return np.where(time < breakpoint, left(time), right(time))

    return FittedFunction(
        family="piecewise_poly",
        parameters={
            "breakpoint": float(breakpoint),
            "left": [float(c) for c in left.convert().coef],
            "right": [float(c) for c in right.convert().coef],
        },
        residual=residual,
        evaluator=evaluator,
        bounds=bounds,
    )


def hill(t, basal, amplitude, k, n):
    """basal + amplitude * t^n / (k^n + t^n), zero activation at t <= 0."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        activation = np.where(t > 0, 1.0 / (1.0 + (k / np.maximum(t, 1e-300)) ** n), 0.0)
    return basal + amplitude * activation


def _hill_linear(t, v, k, n):
    activation = hill(t, 0.0, 1.0, k, n)
    design = np.column_stack([np.ones_like(t), activation])
    (basal, amplitude), *_ = np.linalg.lstsq(design, v, rcond=None)
    return _sse(v, design @ (basal, amplitude)), float(basal), float(amplitude)


def _refine(objective, grid, position):
    """Golden-section search around ``grid[position]``; falls back to a bounded search."""
    lo = grid[max(position - 1, 0)]
    hi = grid[min(position + 1, len(grid) - 1)]
    middle = grid[position]
    if lo < middle < hi and objective(middle) < min(objective(lo), objective(hi)):
        result = scipy.optimize.minimize_scalar(
            objective, bracket=(lo, middle, hi), method="golden"
        )
        converged = bool(getattr(result, "success", True))
        if converged and lo <= result.x <= hi:
            return float(result.x), converged
    result = scipy.optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded")
    return float(result.x), bool(result.success)


def fit_hill(samples, bounds=(0.0, 1.0)):
    """Grid search over (K, n) with a closed-form (basal, amplitude), then golden refinement."""
    t, v = samples.times, samples.values
    if len(samples) < 6:
        raise ValueError(f"Hill fit needs at least 6 samples, got {len(samples)}")
    k_grid = np.arange(HILL_K_STEP, t[-1] + HILL_K_STEP / 2, HILL_K_STEP)
    n_grid = np.arange(HILL_N_STEP, HILL_N_MAX + HILL_N_STEP / 2, HILL_N_STEP)
    best = None
    for a, k in enumerate(k_grid):
        for b, n in enumerate(n_grid):
            sse = _hill_linear(t, v, k, n)[0]
            if best is None or sse < best[0] - 1e-15:
                best = (sse, a, b)
    _, a, b = best
    k, n = float(k_grid[a]), float(n_grid[b])
    converged = True
    if best[0] > 1e-24:
        for _ in range(HILL_ROUNDS):
            k, ok_k = _refine(lambda x: _hill_linear(t, v, x, n)[0], _around(k_grid, k), 1)
            n, ok_n = _refine(lambda x: _hill_linear(t, v, k, x)[0], _around(n_grid, n), 1)
            converged = ok_k and ok_n
    sse, basal, amplitude = _hill_linear(t, v, k, n)
    flags = () if converged else ("not_converged",)

    def evaluator(time):
        return hill(time, basal, amplitude, k, n)

    return FittedFunction(
        family="hill",
        parameters={"basal": basal, "amplitude": amplitude, "K": k, "n": n},
        residual=sse,
        evaluator=evaluator,
        bounds=bounds,
        flags=flags,
    )


def _around(grid, value):
    step = grid[1] - grid[0] if len(grid) > 1 else 1.0
    return [max(grid[0], value - step), value, min(grid[-1], value + step)]


FAMILIES = {
    "step": fit_step,
    "piecewise_poly": fit_piecewise_poly,
    "hill": fit_hill,
}


def fit_family(family, samples, bounds=(0.0, 1.0), breakpoint=DEFAULT_BREAKPOINT):
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}, expected one of {', '.join(FAMILIES)}")
    if family == "piecewise_poly":
        return fit_piecewise_poly(samples, breakpoint, bounds=bounds)
    return FAMILIES[family](samples, bounds=bounds)


def evaluate_fit(chs, f, data, start=None):
    """Total error of the model driven open loop by ``f``; returns (error, trajectory)."""
    start = start or chs.initial
    span = (float(start[1][0]), data[-1].time)
    trajectory = simulate(chs, f, start, span, sample_step=SAMPLE_STEP)
    f.epsilon_total = total_error(trajectory, data)
    return f.epsilon_total, trajectory


def write_fit_report(path, rows):
    """rows: (family, parameters text, residual, epsilon_total, flags)."""
    return artifacts.write_csv(
        path,
        ["family", "parameters", "residual", "epsilon_total", "flags"],
        [
            [family, parameters, float(residual), float(error), " ".join(flags)]
            for family, parameters, residual, error, flags in rows
        ],
    )


def _state_column(trajectory, t, k):
    _, state = trajectory.state_at(t)
    return float(state[k]) if k < len(state) else ""


def write_plot_data(path, samples, fits, trajectory=None, states=(5, 7)):
    header = ["t", "revised", *(f.family for f in fits)]
    if trajectory is not None:
        header += [f"x{k}" for k in states]
    rows = []
    for t, u in zip(samples.times, samples.values):
        row = [float(t), float(u), *(float(f(t)) for f in fits)]
        if trajectory is not None:
            row += [_state_column(trajectory, t, k) for k in states]
        rows.append(row)
    return artifacts.write_csv(path, header, rows)


def _save(figure, path):
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT}):
        figure.savefig(path, format="svg", metadata={"Date": None})
    return path


def plot_controls(path, samples, fits):
    figure = Figure(figsize=(8, 4.5))
    axes = figure.add_subplot()
    axes.plot(samples.times, samples.values, label="revised", color="black", linewidth=1.5)
    for f in fits:
        axes.plot(samples.times, f(samples.times), label=f.family, linewidth=1)
    axes.set_xlabel("t (h)")
    axes.set_ylabel("u")
    axes.legend(loc="best")
    return _save(figure, path)


def _measurement_series(trajectory, m, times):
    values = []
    for t in times:
        try:
            values.append(evaluate_measurement(trajectory, m, t))
        except ValueError:
            values.append(np.nan)
    return np.asarray(values)


def plot_measurement(path, data, trajectories):
    """m(x(t)) along each named trajectory, with the data points."""
    figure = Figure(figsize=(8, 4.5))
    axes = figure.add_subplot()
    m = data[0].measurement
    for name, trajectory in trajectories.items():
        start, end = trajectory.span
        times = np.linspace(start, end, 1101)
        axes.plot(times, _measurement_series(trajectory, m, times), label=name, linewidth=1)
    axes.scatter(
        [p.time for p in data], [p.value for p in data], color="black", zorder=3, label="data"
    )
    axes.set_xlabel("t (h)")
    axes.set_ylabel("m(x)")
    axes.legend(loc="best")
    return _save(figure, path)

"""Greedy model revision against intermediate data points.

Each data point (T_j, z_j) closes a window [T_{j-1}, T_j]. The window's optimal
control problem is relaxed, a low-degree feedback is synthesised from the
moments and validated by simulation; the simulated state at T_j (left of any
transition firing there) starts the next window.
"""

import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import artifacts, sdp
from .chs import CLOCK, enter, restrict, validate
from .poly import Polynomial
from .relax import (
    DEFAULT_ZETA,
    REACH_FLOOR,
    REACH_MARGIN,
    CostSpec,
    build_relaxation,
    relaxation_size,
    write_layout,
)
from .sim import (
    ControlWindow,
    PolynomialControl,
    SimulationError,
    evaluate_measurement,
    simulate,
    write_events_csv,
    write_trajectory_csv,
)
from .synth import MomentData, SynthesisError, extract_control

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "hocp-revise/report"
REPORT_VERSION = 1

SOLVERS = ("embedded", "export-sdpa")
SAMPLE_STEP = 0.05
SCALINGS = ("reference", "domain")
# Constant inputs tried, as fractions of the input box, when fitting the reference.
REFERENCE_GRID = (0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0)


class RevisionError(RuntimeError):
    pass


@dataclass(frozen=True)
class DataPoint:
    time: float
    value: float
    measurement: Polynomial

    def error(self, trajectory):
        """Squared misfit of the measurement at this point's time."""
        return (evaluate_measurement(trajectory, self.measurement, self.time) - self.value) ** 2


def check_data(points):
    if not points:
        raise ValueError("no data points")
    for point in points:
        if not (math.isfinite(point.time) and math.isfinite(point.value)):
            raise ValueError(f"non-finite data point ({point.time}, {point.value})")
    for left, right in zip(points, points[1:]):
        if not left.time < right.time:
            raise ValueError(
                f"data times must be strictly increasing: {left.time} then {right.time}"
            )
    return points


@dataclass
class RevisionConfig:
    epsilon: float = 0.0
    order: int = 2
    max_order: int = 4
    zeta: float = DEFAULT_ZETA
    control_weight: float = 0.01
    smoothing_weight: float = 1.0
    solver_tol: float = sdp.DEFAULT_TOL
    max_moments: int = 6000
    solver: str = "embedded"
    scaling: str = "reference"
    export_dir: Path | None = None
    layout_dir: Path | None = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.order < 1:
            raise ValueError(f"relaxation order must be at least 1, got {self.order}")
        if self.max_order < self.order:
            raise ValueError(
                f"max order {self.max_order} is below the starting order {self.order}"
            )
        if self.zeta <= 0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {self.scaling!r}")

    def to_document(self):
        return {
            "epsilon": self.epsilon,
            "order": self.order,
            "max_order": self.max_order,
            "zeta": self.zeta,
            "control_weight": self.control_weight,
            "smoothing_weight": self.smoothing_weight,
            "solver_tol": self.solver_tol,
            "max_moments": self.max_moments,
            "solver": self.solver,
            "scaling": self.scaling,
        }


@dataclass(frozen=True)
class Attempt:
    order: int
    degree: int | None
    lower_bound: float
    error: float
    status: str


@dataclass
class WindowResult:
    index: int
    span: tuple[float, float]
    point: DataPoint
    control: PolynomialControl
    trajectory: object
    error: float
    lower_bound: float
    order: int | None
    degree: int | None
    status: str
    attempts: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    scaling: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.trajectory.final

    def to_document(self):
        mode, state = self.final
        return {
            "index": self.index,
            "span": list(self.span),
            "time": self.point.time,
            "value": self.point.value,
            "mode": mode,
            "state": [float(v) for v in state],
            "measured": _measured(self.trajectory, self.point),
            "error": self.error,
            "lower_bound": self.lower_bound,
            "order": self.order,
            "degree": self.degree,
            "status": self.status,
            "attempts": [
                {
                    "order": a.order,
                    "degree": a.degree,
                    "lower_bound": a.lower_bound,
                    "error": a.error,
                    "status": a.status,
                }
                for a in self.attempts
            ],
            "diagnostics": list(self.diagnostics),
            "scaling": dict(self.scaling),
        }


@dataclass
class RevisionResult:
    system: object
    data: list
    config: RevisionConfig
    windows: list
    control: PolynomialControl
    trajectory: object
    epsilon_total: float

    def to_report(self):
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "model": self.system.name,
            "config": self.config.to_document(),
            "windows": [window.to_document() for window in self.windows],
            "epsilon_total": self.epsilon_total,
        }

    def timings(self):
        return {
            "windows": [
                {"index": window.index, **{k: round(v, 6) for k, v in window.timings.items()}}
                for window in self.windows
            ],
            "total": round(sum(sum(w.timings.values()) for w in self.windows), 6),
        }


def _measured(trajectory, point):
    try:
        return evaluate_measurement(trajectory, point.measurement, point.time)
    except ValueError:
        return None


def _measurement_defined(m, mode):
    used = m.used_variables()
    return not used or used[-1] < mode.dim


def window_cost(chs, point, j, cfg=None, previous_input=None):
    """Running and terminal costs of window ``j`` (0-based).

    Running costs penalise (w1*u)^2 in the modes where the measurement is
    defined and, after the first window, w2*(u_prev - u)^2 everywhere. The
    terminal cost is (m(x) - z_j)^2.
    """
    cfg = cfg or RevisionConfig()
    m = chs.n_inputs
    running = {}
    terminal = {}
    for mode in chs.modes:
        nvars = mode.dim + m
        inputs = [Polynomial.variable(mode.dim + k, nvars) for k in range(m)]
        cost = Polynomial.zero(nvars)
        measured = _measurement_defined(point.measurement, mode)
        if measured and cfg.control_weight:
            for u in inputs:
                cost = cost + (cfg.control_weight * u) ** 2
        if j >= 1 and previous_input is not None and cfg.smoothing_weight:
            for u, previous in zip(inputs, previous_input):
                cost = cost + cfg.smoothing_weight * (float(previous) - u) ** 2
        if not cost.is_zero:
            running[mode.index] = cost
        if measured:
            terminal[mode.index] = (point.measurement.extend(mode.dim) - point.value) ** 2
    return CostSpec(running=running, terminal=terminal)


def total_error(trajectory, data, exclude=()):
    """Sum of |m(x(T_j)) - z_j| over sum of z_j, skipping indices in ``exclude``."""
    kept = [point for j, point in enumerate(data) if j not in set(exclude)]
    if not kept:
        raise ValueError("every data point excluded")
    denominator = sum(point.value for point in kept)
    if denominator == 0:
        raise ValueError("data values sum to zero")
    return sum(math.sqrt(point.error(trajectory)) for point in kept) / denominator


class _Clock:
    def __init__(self):
        self.totals = defaultdict(float)

    def measure(self, name, function, *args, **kwargs):
        started = time.perf_counter()
        try:
            return function(*args, **kwargs)
        finally:
            self.totals[name] += time.perf_counter() - started


class _Window:
    """Algorithm state of one window: best simulated control so far."""

    def __init__(self, chs, point, j, start, span, cfg, previous_input):
        self.chs = chs
        self.point = point
        self.j = j
        self.start = start
        self.span = span
        self.cfg = cfg
        self.sub = restrict(chs, span, start=start)
        self.cost = window_cost(self.sub, point, j, cfg, previous_input)
        self.attempts = []
        self.diagnostics = []
        self.clock = _Clock()
        self.best = None
        self._reference = False

    def note(self, message, *args):
        text = message % args
        logger.warning("window %d: %s", self.j, text)
        self.diagnostics.append(text)

    def constant_control(self, fraction):
        """Input held at ``fraction`` of the way across the input box in every mode."""
        lo, hi = np.array(self.chs.inputs.bounds(), dtype=float).T
        values = lo + fraction * (hi - lo)
        laws = {
            mode.index: tuple(Polynomial.constant(float(v), mode.dim) for v in values)
            for mode in self.chs.modes
        }
        return PolynomialControl([ControlWindow(*self.span, laws)], self.chs.inputs)

    def misfit(self, fraction):
        trajectory = self.simulate(self.constant_control(fraction))
        measured = evaluate_measurement(trajectory, self.point.measurement, self.point.time)
        return measured - self.point.value

    def reference(self):
        """Constant input whose trajectory meets the data point, as (fraction, trajectory).

        Grid points that fail to simulate are skipped; the first sign change of
        the misfit is refined by Brent's method. None when nothing simulates.
        """
        if self._reference is not False:
            return self._reference
        self._reference = None
        tried = []
        for fraction in REFERENCE_GRID:
            try:
                tried.append((fraction, self.misfit(fraction)))
            except (SimulationError, ValueError) as error:
                logger.debug("window %d: reference input %g failed: %s", self.j, fraction, error)
        if not tried:
            return None
        best = min(tried, key=lambda item: abs(item[1]))[0]
        for (a, fa), (b, fb) in zip(tried, tried[1:]):
            if fa * fb < 0:
                try:
                    best = brentq(self.misfit, a, b, xtol=1e-12, rtol=1e-3)
                except (SimulationError, ValueError, RuntimeError) as error:
                    logger.debug("window %d: reference refinement failed: %s", self.j, error)
                break
        try:
            trajectory = self.simulate(self.constant_control(best))
        except (SimulationError, ValueError):
            return None
        logger.info("window %d: reference input at %.6g of the input box", self.j, best)
        self._reference = (best, trajectory)
        return self._reference

    def scales(self):
        """(reach, zeta) handed to the relaxation; reach is None for domain scaling."""
        if self.cfg.scaling == "domain" or self.reference() is None:
            return None, self.cfg.zeta
        fraction, trajectory = self.reference()
        reach = {}
        samples = [(s.mode, s.initial) for s in trajectory.segments]
        samples += [(s.mode, s.final) for s in trajectory.segments]
        samples += list(zip(trajectory.modes, trajectory.states))
        for mode, state in samples:
            state = np.asarray(state, dtype=float)
            reach[mode] = np.maximum(reach[mode], state) if mode in reach else state
        lo, hi = np.array(self.chs.inputs.bounds(), dtype=float).T
        magnitude = float(np.max(np.abs(lo + fraction * (hi - lo))))
        zeta = min(self.cfg.zeta, max(REACH_MARGIN * magnitude, REACH_FLOOR * self.cfg.zeta))
        return reach, zeta

    def scaling_document(self):
        if self.cfg.scaling == "domain" or not self._reference:
            return {"kind": "domain", "zeta": self.cfg.zeta}
        fraction, _ = self._reference
        lo, hi = np.array(self.chs.inputs.bounds(), dtype=float).T
        return {
            "kind": "reference",
            "reference_input": [float(v) for v in lo + fraction * (hi - lo)],
            "zeta": self.scales()[1],
        }

    def build(self, order):
        size = relaxation_size(self.sub, order)
        if size > self.cfg.max_moments:
            self.note(
                "order %d skipped: %d moments exceed budget %d", order, size, self.cfg.max_moments
            )
            return None
        reach, zeta = self.scales()
        try:
            relaxation = self.clock.measure(
                "build",
                build_relaxation,
                self.sub,
                order,
                self.cost,
                horizon=self.span,
                zeta=zeta,
                cost_scale=max(1.0, self.point.value**2),
                reach=reach,
            )
        except ValueError as error:
            self.note("order %d relaxation not built: %s", order, error)
            return None
        if self.cfg.layout_dir is not None:
            write_layout(
                relaxation, Path(self.cfg.layout_dir) / f"window-{self.j:02d}-order-{order}.json"
            )
        return relaxation

    def simulate(self, control):
        return self.clock.measure(
            "simulate",
            simulate,
            self.chs,
            control,
            self.start,
            self.span,
            sample_step=SAMPLE_STEP,
        )

    def validate(self, control, order, degree, lower_bound):
        try:
            trajectory = self.simulate(control)
            error = self.point.error(trajectory)
        except (SimulationError, ValueError) as error:
            self.note("order %d degree %d simulation failed: %s", order, degree, error)
            self.attempts.append(Attempt(order, degree, lower_bound, math.inf, "simulation_failed"))
            return math.inf
        self.attempts.append(Attempt(order, degree, lower_bound, error, "simulated"))
        logger.info(
            "window %d order %d degree %d: err=%.6g lower bound=%.6g",
            self.j,
            order,
            degree,
            error,
            lower_bound,
        )
        if self.best is None or error < self.best[0]:
            self.best = (error, control, trajectory, order, degree)
        return error

    def synthesise(self, relaxation, solution, order, degree, lower_bound):
        try:
            data = self.clock.measure("synthesis", MomentData.from_solution, relaxation, solution)
            control = self.clock.measure("synthesis", extract_control, data, degree)
        except SynthesisError as error:
            self.note("order %d degree %d synthesis failed: %s", order, degree, error)
            self.attempts.append(Attempt(order, degree, lower_bound, math.inf, "synthesis_failed"))
            return math.inf
        return self.validate(control, order, degree, lower_bound)


def _zero_window(window, status, lower_bound=-math.inf):
    control = PolynomialControl.zero(window.span, window.chs.inputs)
    try:
        trajectory = window.simulate(control)
    except SimulationError as error:
        raise RevisionError(
            f"window {window.j}: no control can be chained from t={window.span[0]} ({error})"
        ) from error
    return WindowResult(
        index=window.j,
        span=window.span,
        point=window.point,
        control=control,
        trajectory=trajectory,
        error=window.point.error(trajectory),
        lower_bound=lower_bound,
        order=None,
        degree=None,
        status=status,
        attempts=window.attempts,
        diagnostics=window.diagnostics,
        timings=dict(window.clock.totals),
        scaling=window.scaling_document(),
    )


def _export_window(window):
    directory = Path(window.cfg.export_dir or artifacts.output_dir() / "sdpa")
    for order in range(window.cfg.order, window.cfg.max_order + 1):
        relaxation = window.build(order)
        if relaxation is None:
            break
        path = directory / f"window-{window.j:02d}-order-{order}.dat-s"
        sdp.export_sdpa(
            relaxation.conic,
            path,
            title=f"window {window.j} [{window.span[0]}, {window.span[1]}] order {order}",
        )
        window.attempts.append(Attempt(order, None, -math.inf, math.inf, "exported"))
        logger.info("exported %s", path)
    return _zero_window(window, "exported")


def _solve_window(window):
    cfg = window.cfg
    epsilon = cfg.epsilon
    error = math.inf
    lower_bound = -math.inf
    order = cfg.order
    degree = 0
    status = "best"
    while error >= epsilon and not (epsilon > 0 and lower_bound > epsilon):
        if order > cfg.max_order:
            break
        relaxation = window.build(order)
        if relaxation is None:
            break
        solution = window.clock.measure("solve", sdp.solve, relaxation.conic, tol=cfg.solver_tol)
        lower_bound = relaxation.lower_bound(solution)
        logger.info(
            "window %d order %d: %s after %d iterations, lower bound %.6g",
            window.j,
            order,
            solution.status,
            solution.iterations,
            lower_bound,
        )
        if not solution.solved:
            window.note("order %d relaxation %s", order, solution.status)
            window.attempts.append(Attempt(order, None, lower_bound, math.inf, solution.status))
            order += 1
            continue
        while error >= epsilon and degree <= order:
            error = min(error, window.synthesise(relaxation, solution, order, degree, lower_bound))
            degree += 1
        order += 1
    if error < epsilon:
        status = "accepted"
    elif epsilon > 0 and lower_bound > epsilon:
        status = "lower_bound_exceeds_epsilon"
        window.note(
            "lower bound %.6g exceeds epsilon %.6g: keeping the best control", lower_bound, epsilon
        )
    if window.best is None:
        window.note("no control synthesised: falling back to zero input")
        return _zero_window(window, "failed", lower_bound)
    best_error, control, trajectory, best_order, best_degree = window.best
    return WindowResult(
        index=window.j,
        span=window.span,
        point=window.point,
        control=control,
        trajectory=trajectory,
        error=best_error,
        lower_bound=max(a.lower_bound for a in window.attempts),
        order=best_order,
        degree=best_degree,
        status=status,
        attempts=window.attempts,
        diagnostics=window.diagnostics,
        timings=dict(window.clock.totals),
        scaling=window.scaling_document(),
    )


def run(chs, data, start=None, cfg=None):
    """Revise ``chs`` against ``data`` window by window."""
    cfg = cfg or RevisionConfig()
    problems = validate(chs)
    if problems:
        raise ValueError("invalid system: " + "; ".join(problems))
    check_data(data)
    index, state = start or chs.initial
    state = np.asarray(state, dtype=float)
    t_init = float(state[CLOCK])
    t_end = chs.time_span()[1]
    if data[0].time <= t_init or data[-1].time > t_end:
        raise ValueError(f"data times must lie in ({t_init}, {t_end}]")
    windows = []
    previous_input = None
    for j, point in enumerate(data):
        index, state = enter(chs, index, state)
        span = (t_init, point.time)
        logger.info("window %d on [%s, %s] from mode %d", j, *span, index)
        window = _Window(chs, point, j, (index, state), span, cfg, previous_input)
        if cfg.solver == "export-sdpa":
            result = _export_window(window)
        else:
            result = _solve_window(window)
        windows.append(result)
        index, state = result.final
        previous_input = result.control.value(point.time, index, state)
        t_init = point.time
        logger.info(
            "window %d done: %s, err=%.6g, order %s, degree %s",
            j,
            result.status,
            result.error,
            result.order,
            result.degree,
        )
    trajectory = windows[0].trajectory
    for window in windows[1:]:
        trajectory = trajectory.extend(window.trajectory)
    control = PolynomialControl.concatenate([window.control for window in windows])
    return RevisionResult(
        system=chs,
        data=data,
        config=cfg,
        windows=windows,
        control=control,
        trajectory=trajectory,
        epsilon_total=total_error(trajectory, data),
    )


def write_revision(result, directory):
    directory = artifacts.output_dir(directory)
    artifacts.write_document(directory / "report.json", result.to_report())
    artifacts.write_document(directory / "control.json", result.control.to_document(result.system))
    artifacts.write_document(directory / "timings.json", result.timings())
    write_trajectory_csv(result.trajectory, directory / "trajectory.csv", result.system)
    write_events_csv(result.trajectory, directory / "events.csv")
    return directory

"""Simulation of a controlled hybrid system under a feedback control."""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import artifacts
from .chs import CLOCK, SemialgebraicBox, clock_guard_time
from .poly import PolynomialVector, parse_polynomial

logger = logging.getLogger(__name__)

CONTROL_SCHEMA = "hocp-revise/control"
CONTROL_VERSION = 1

METHOD = "DOP853"
DEFAULT_RTOL = 1e-7
DEFAULT_ATOL = 1e-9
EVENT_TOL = 1e-9
DOMAIN_TOL = 1e-6
MAX_EVENTS = 1000


class SimulationError(RuntimeError):
    pass


class DomainExitError(SimulationError):
    def __init__(self, mode, time, state):
        super().__init__(
            f"mode {mode} left its domain at t={time:.9g} with no enabled transition"
        )
        self.mode = mode
        self.time = time
        self.state = np.asarray(state)


@dataclass(frozen=True)
class ControlWindow:
    start: float
    end: float
    laws: Mapping[int, tuple] = field(default_factory=dict)


class PolynomialControl:
    """Piecewise polynomial feedback u(t, x): per window, per mode."""

    def __init__(self, windows, bounds):
        windows = tuple(windows)
        if not windows:
            raise ValueError("a control needs at least one window")
        for window in windows:
            if not window.start < window.end:
                raise ValueError(f"empty control window [{window.start}, {window.end}]")
        for left, right in zip(windows, windows[1:]):
            if not math.isclose(left.end, right.start, abs_tol=1e-12):
                raise ValueError(
                    f"control windows not contiguous at {left.end} / {right.start}"
                )
        self.windows = windows
        self.bounds = bounds
        self._compiled = {}
        for position, window in enumerate(windows):
            for mode, law in window.laws.items():
                if len(law) != bounds.dim:
                    raise ValueError(
                        f"mode {mode}: {len(law)} control polynomials for {bounds.dim} inputs"
                    )
                self._compiled[(position, mode)] = PolynomialVector(law)

    @classmethod
    def zero(cls, span, bounds):
        return cls([ControlWindow(span[0], span[1], {})], bounds)

    @classmethod
    def concatenate(cls, controls):
        windows = [window for control in controls for window in control.windows]
        return cls(windows, controls[0].bounds)

    @property
    def span(self):
        return self.windows[0].start, self.windows[-1].end

    def window_index(self, t):
        for position, window in enumerate(self.windows):
            if t < window.end:
                return position
        return len(self.windows) - 1

    def raw_value(self, t, mode, state):
        compiled = self._compiled.get((self.window_index(t), mode))
        if compiled is None:
            return np.zeros(self.bounds.dim)
        return compiled(np.asarray(state, dtype=float)[: compiled.nvars])

    def value(self, t, mode, state):
        return self.bounds.clamp(self.raw_value(t, mode, state))

    def to_document(self, system):
        windows = []
        for window in self.windows:
            laws = {}
            for mode, law in sorted(window.laws.items()):
                names = system.mode(mode).variables
                laws[str(mode)] = {
                    "variables": list(names),
                    "inputs": [p.format(names) for p in law],
                }
            windows.append({"span": [window.start, window.end], "modes": laws})
        return {
            "schema": CONTROL_SCHEMA,
            "version": CONTROL_VERSION,
            "inputs": {
                "names": list(system.input_names),
                "bounds": [[lo, hi] for lo, hi in self.bounds.bounds()],
            },
            "windows": windows,
        }

    @classmethod
    def from_document(cls, document):
        try:
            bounds = SemialgebraicBox.from_bounds(document["inputs"]["bounds"])
            windows = []
            for entry in document["windows"]:
                laws = {
                    int(mode): tuple(
                        parse_polynomial(text, law["variables"]) for text in law["inputs"]
                    )
                    for mode, law in entry["modes"].items()
                }
                start, end = entry["span"]
                windows.append(ControlWindow(float(start), float(end), laws))
        except (KeyError, TypeError) as error:
            raise ValueError(f"malformed control document: {error!r}") from error
        return cls(windows, bounds)


def load_control(path):
    return PolynomialControl.from_document(
        artifacts.read_document(path, CONTROL_SCHEMA, CONTROL_VERSION)
    )


@dataclass(frozen=True)
class Segment:
    mode: int
    start: float
    end: float
    initial: np.ndarray
    final: np.ndarray
    solution: object = None
    step_times: np.ndarray = field(default_factory=lambda: np.empty(0))

    def state(self, t):
        if t >= self.end:
            return self.final
        if t <= self.start or self.solution is None:
            return self.initial
        return self.solution(t)


@dataclass(frozen=True)
class Event:
    time: float
    source: int
    destination: int
    transition: int
    pre: np.ndarray
    post: np.ndarray


@dataclass
class HybridTrajectory:
    segments: list = field(default_factory=list)
    events: list = field(default_factory=list)
    times: list = field(default_factory=list)
    modes: list = field(default_factory=list)
    states: list = field(default_factory=list)
    controls: list = field(default_factory=list)

    @property
    def span(self):
        return self.segments[0].start, self.segments[-1].end

    @property
    def final(self):
        segment = self.segments[-1]
        return segment.mode, segment.final

    def locate(self, t, tol=EVENT_TOL):
        for segment in self.segments:
            if segment.start - tol <= t <= segment.end + tol:
                return segment
        start, end = self.span
        raise ValueError(f"t={t} outside trajectory span [{start}, {end}]")

    def state_at(self, t):
        segment = self.locate(t)
        return segment.mode, np.asarray(segment.state(t), dtype=float)

    def extend(self, other):
        return HybridTrajectory(
            segments=self.segments + other.segments,
            events=self.events + other.events,
            times=self.times + other.times,
            modes=self.modes + other.modes,
            states=self.states + other.states,
            controls=self.controls + other.controls,
        )


def evaluate_measurement(traj, m, t):
    mode, state = traj.state_at(t)
    used = m.used_variables()
    if used and used[-1] >= len(state):
        raise ValueError(
            f"measurement uses variable {used[-1]} absent in mode {mode} "
            f"({len(state)} variables)"
        )
    point = np.zeros(m.nvars)
    count = min(m.nvars, len(state))
    point[:count] = state[:count]
    return m.eval(point)


def _event(function, direction):
    function.terminal = True
    function.direction = direction
    return function


def _domain_events(domain):
    events = []
    for k in range(1, domain.dim):
        lo, hi = domain.lower[k], domain.upper[k]
        if lo == hi:
            continue
        events.append(_event(lambda t, z, k=k, lo=lo: z[k] - (lo - DOMAIN_TOL), -1))
        events.append(_event(lambda t, z, k=k, hi=hi: (hi + DOMAIN_TOL) - z[k], -1))
    return events


def _hyperplane(guard):
    fixed = [k for k in guard.fixed() if k != CLOCK]
    if len(fixed) != 1 or guard.lower[CLOCK] == guard.upper[CLOCK]:
        return None
    return fixed[0], guard.lower[fixed[0]]


def _guard_plan(chs, index):
    clock_guards = []
    state_guards = []
    for position, tr in enumerate(chs.transitions):
        if tr.source != index:
            continue
        c = clock_guard_time(chs, tr)
        if c is not None:
            clock_guards.append((c, position))
            continue
        plane = _hyperplane(tr.guard)
        if plane is None:
            raise SimulationError(f"{tr.describe(position)}: guard not executable")
        state_guards.append((position, plane))
    return sorted(clock_guards), state_guards


class _Run:
    def __init__(self, chs, control, rtol, atol, sample_step):
        self.chs = chs
        self.control = control
        self.rtol = rtol
        self.atol = atol
        self.sample_step = sample_step
        self.trajectory = HybridTrajectory()
        self._fields = {}

    def vector_field(self, index):
        if index not in self._fields:
            mode = self.chs.mode(index)
            self._fields[index] = PolynomialVector(
                mode.dynamics, nvars=mode.dim + self.chs.n_inputs
            )
        return self._fields[index]

    def fire(self, index, state, position):
        transition = self.chs.transitions[position]
        post = transition.apply(state)
        post[CLOCK] = state[CLOCK]
        destination = self.chs.mode(transition.destination)
        if not destination.domain.contains(post, DOMAIN_TOL):
            raise DomainExitError(destination.index, state[CLOCK], post)
        self.trajectory.events.append(
            Event(state[CLOCK], index, transition.destination, position, state.copy(), post)
        )
        logger.debug("event %s->%s at t=%.9g", index, transition.destination, state[CLOCK])
        return transition.destination, post

    def fire_active(self, index, state):
        for _ in range(len(self.chs.transitions) + 1):
            active = [
                position
                for position, tr in enumerate(self.chs.transitions)
                if tr.source == index and tr.guard.contains(state, EVENT_TOL)
            ]
            if not active:
                return index, state
            index, state = self.fire(index, state, active[0])
        raise SimulationError(f"guards keep firing at t={state[CLOCK]}")

    def record(self, index, start, end, initial, final, solution, step_times):
        self.trajectory.segments.append(
            Segment(index, start, end, initial, final, solution, step_times)
        )
        if self.sample_step:
            first = math.ceil(start / self.sample_step - 1e-9)
            last = math.floor(end / self.sample_step + 1e-9)
            grid = [round(k * self.sample_step, 10) for k in range(first, last + 1)]
            times = sorted({start, *(g for g in grid if start <= g <= end), end})
        else:
            times = list(step_times) if len(step_times) else [start, end]
        segment = self.trajectory.segments[-1]
        for t in times:
            state = np.asarray(segment.state(t), dtype=float)
            self.trajectory.times.append(float(t))
            self.trajectory.modes.append(index)
            self.trajectory.states.append(state)
            self.trajectory.controls.append(self.control.value(t, index, state))

    def integrate(self, index, state, t1):
        mode = self.chs.mode(index)
        field_ = self.vector_field(index)
        control = self.control
        clock_guards, state_guards = _guard_plan(self.chs, index)
        t = state[CLOCK]
        upcoming = [(c, position) for c, position in clock_guards if c > t + EVENT_TOL]
        target = min([t1, mode.time_window[1], *(c for c, _ in upcoming)])

        def rhs(time, z):
            return field_(np.concatenate([z, control.value(time, index, z)]))

        guard_events = [
            _event(lambda time, z, k=k, c=c: z[k] - c, 0) for _, (k, c) in state_guards
        ]
        domain_events = _domain_events(mode.domain)
        if target <= t:
            solution = None
            final, step_times = state, np.array([t])
        else:
            result = solve_ivp(
                rhs,
                (t, target),
                state,
                method=METHOD,
                rtol=self.rtol,
                atol=self.atol,
                dense_output=True,
                events=guard_events + domain_events or None,
            )
            if result.status == -1:
                raise SimulationError(
                    f"integration failed in mode {index} near t={result.t[-1]:.9g}: "
                    f"{result.message}"
                )
            solution, step_times = result.sol, result.t
            final = result.y[:, -1].copy()
            if result.status == 1:
                hits = [
                    (result.t_events[k][0], k)
                    for k in range(len(result.t_events))
                    if len(result.t_events[k])
                ]
                when, which = min(hits)
                final = result.y_events[which][0].copy()
                self.record(index, t, when, state, final, solution, step_times)
                if which >= len(guard_events):
                    raise DomainExitError(index, when, final)
                position = state_guards[which][0]
                if not self.chs.transitions[position].guard.contains(final, DOMAIN_TOL):
                    raise DomainExitError(index, when, final)
                return self.fire(index, final, position)
            final[CLOCK] = target
        self.record(index, t, target, state, final, solution, step_times)
        if target >= t1:
            return None
        for c, position in upcoming:
            if c == target:
                return self.fire(index, final, position)
        raise DomainExitError(index, target, final)


def simulate(
    chs,
    control,
    start,
    span,
    *,
    rtol=DEFAULT_RTOL,
    atol=DEFAULT_ATOL,
    sample_step=None,
):
    """Integrate from ``start`` over ``span``; guards at the span's end are not fired."""
    index, state = start
    state = np.asarray(state, dtype=float).copy()
    t0, t1 = span
    if t1 < t0:
        raise ValueError(f"span [{t0}, {t1}] runs backwards")
    if abs(state[CLOCK] - t0) > EVENT_TOL:
        raise ValueError(f"start clock {state[CLOCK]} does not match span start {t0}")
    if not chs.mode(index).domain.contains(state, DOMAIN_TOL):
        raise ValueError(f"start state not in the domain of mode {index}")
    state[CLOCK] = t0
    run = _Run(chs, control, rtol, atol, sample_step)
    for _ in range(MAX_EVENTS):
        if state[CLOCK] < t1:
            index, state = run.fire_active(index, state)
        reached = run.integrate(index, state, t1)
        if reached is None:
            return run.trajectory
        index, state = reached
    raise SimulationError(f"more than {MAX_EVENTS} events before t={t1}")


def write_trajectory_csv(traj, path, chs):
    width = max(len(state) for state in traj.states) if traj.states else 1
    header = ["t", "mode", *(f"x{k}" for k in range(1, width)), *chs.input_names]
    rows = []
    for t, mode, state, u in zip(traj.times, traj.modes, traj.states, traj.controls):
        padding = [""] * (width - len(state))
        rows.append([t, mode, *map(float, state[1:]), *padding, *map(float, u)])
    return artifacts.write_csv(path, header, rows)


def write_events_csv(traj, path):
    rows = [
        [
            float(event.time),
            event.source,
            event.destination,
            " ".join(artifacts.format_number(v) for v in event.pre),
            " ".join(artifacts.format_number(v) for v in event.post),
        ]
        for event in traj.events
    ]
    return artifacts.write_csv(path, ["t", "source", "destination", "pre", "post"], rows)

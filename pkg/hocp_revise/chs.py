"""Controlled hybrid systems: modes, guarded transitions and affine resets.

A hybrid state is a ``(mode index, state vector)`` pair. Every state vector
starts with the clock ``t``, and every mode's dynamics start with the clock
row ``1``.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .poly import Polynomial, parse_polynomial

logger = logging.getLogger(__name__)

MODEL_SCHEMA = "hocp-revise/model"
MODEL_VERSION = 1

CLOCK = 0
GUARD_TOL = 1e-9


@dataclass(frozen=True)
class SemialgebraicBox:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError(
                f"box has {len(self.lower)} lower and {len(self.upper)} upper bounds"
            )
        for k, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"box coordinate {k} is not bounded")
            if lo > hi:
                raise ValueError(f"box coordinate {k}: lower bound {lo} exceeds upper {hi}")

    @classmethod
    def from_bounds(cls, bounds):
        return cls(
            tuple(float(lo) for lo, _ in bounds), tuple(float(hi) for _, hi in bounds)
        )

    @property
    def dim(self):
        return len(self.lower)

    def bounds(self):
        return list(zip(self.lower, self.upper))

    def widths(self):
        return tuple(hi - lo for lo, hi in zip(self.lower, self.upper))

    def fixed(self):
        return {k: lo for k, (lo, hi) in enumerate(self.bounds()) if lo == hi}

    def contains(self, point, tol=0.0):
        if len(point) != self.dim:
            return False
        return all(
            lo - tol <= value <= hi + tol
            for value, lo, hi in zip(point, self.lower, self.upper)
        )

    def intersects(self, other):
        return all(
            max(a_lo, b_lo) <= min(a_hi, b_hi)
            for a_lo, a_hi, b_lo, b_hi in zip(self.lower, self.upper, other.lower, other.upper)
        )

    def clamp(self, point):
        return np.clip(np.asarray(point, dtype=float), self.lower, self.upper)

    def with_bounds(self, k, lo, hi):
        lower = list(self.lower)
        upper = list(self.upper)
        lower[k], upper[k] = lo, hi
        return SemialgebraicBox(tuple(lower), tuple(upper))


def default_variables(dim):
    return ("t", *(f"x{k}" for k in range(1, dim)))


def default_inputs(count):
    return ("u",) if count == 1 else tuple(f"u{k}" for k in range(1, count + 1))


@dataclass(frozen=True)
class Mode:
    index: int
    domain: SemialgebraicBox
    dynamics: tuple[Polynomial, ...]
    running_cost: Polynomial | None = None
    variables: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.variables:
            object.__setattr__(self, "variables", default_variables(self.domain.dim))

    @property
    def dim(self):
        return self.domain.dim

    @property
    def time_window(self):
        return self.domain.lower[CLOCK], self.domain.upper[CLOCK]


@dataclass(frozen=True)
class Transition:
    source: int
    destination: int
    guard: SemialgebraicBox
    reset_matrix: tuple[tuple[float, ...], ...]
    reset_offset: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.reset_offset:
            object.__setattr__(
                self, "reset_offset", tuple(0.0 for _ in self.reset_matrix)
            )

    @property
    def matrix(self):
        return np.array(self.reset_matrix, dtype=float).reshape(
            len(self.reset_matrix), self.guard.dim
        )

    def apply(self, state):
        return self.matrix @ np.asarray(state, dtype=float) + np.asarray(self.reset_offset)

    def reset_polynomials(self):
        """The reset as affine polynomials in the source coordinates."""
        nvars = self.guard.dim
        rows = []
        for row, offset in zip(self.reset_matrix, self.reset_offset):
            p = Polynomial.constant(offset, nvars)
            for k, coef in enumerate(row):
                if coef:
                    p = p + coef * Polynomial.variable(k, nvars)
            rows.append(p)
        return rows

    def describe(self, position):
        return f"transition #{position} ({self.source}->{self.destination})"


@dataclass(frozen=True)
class ControlledHybridSystem:
    modes: tuple[Mode, ...]
    transitions: tuple[Transition, ...]
    inputs: SemialgebraicBox
    initial: tuple[int, tuple[float, ...]] | None = None
    terminal_costs: Mapping[int, Polynomial] = field(default_factory=dict)
    targets: Mapping[int, SemialgebraicBox] = field(default_factory=dict)
    input_names: tuple[str, ...] = ()
    measurement: Polynomial | None = None
    name: str = ""
    horizon: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.input_names:
            object.__setattr__(self, "input_names", default_inputs(self.inputs.dim))

    @property
    def n_inputs(self):
        return self.inputs.dim

    def mode(self, index):
        for mode in self.modes:
            if mode.index == index:
                return mode
        raise ValueError(f"no mode {index}")

    def has_mode(self, index):
        return any(mode.index == index for mode in self.modes)

    def outgoing(self, index):
        return [tr for tr in self.transitions if tr.source == index]

    def incoming(self, index):
        return [tr for tr in self.transitions if tr.destination == index]

    def names(self, index):
        return (*self.mode(index).variables, *self.input_names)

    def time_span(self):
        if self.horizon is not None:
            return self.horizon
        start = min(mode.time_window[0] for mode in self.modes)
        if self.initial is not None and self.initial[1] is not None:
            start = self.initial[1][CLOCK]
        return start, max(mode.time_window[1] for mode in self.modes)


def clock_guard_time(chs, transition):
    """Time c of a guard ``t == c`` spanning the rest of the source domain, else None."""
    guard = transition.guard
    if guard.lower[CLOCK] != guard.upper[CLOCK]:
        return None
    domain = chs.mode(transition.source).domain
    for k in range(1, guard.dim):
        if (guard.lower[k], guard.upper[k]) != (domain.lower[k], domain.upper[k]):
            return None
    return guard.lower[CLOCK]


def is_time_triggered(chs):
    return all(clock_guard_time(chs, tr) is not None for tr in chs.transitions)


def _on_boundary(guard, domain):
    for k in range(guard.dim):
        if guard.lower[k] == guard.upper[k] and guard.lower[k] in (
            domain.lower[k],
            domain.upper[k],
        ):
            return True
    return False


def validate(chs):
    problems = []
    if not chs.modes:
        return ["system has no modes"]
    seen = set()
    for mode in chs.modes:
        if mode.index in seen:
            problems.append(f"mode {mode.index} defined twice")
        seen.add(mode.index)
    m = chs.n_inputs
    for mode in chs.modes:
        n = mode.dim
        if len(mode.dynamics) != n:
            problems.append(
                f"mode {mode.index}: dynamics has {len(mode.dynamics)} rows for {n} variables"
            )
        if len(mode.variables) != n:
            problems.append(
                f"mode {mode.index}: {len(mode.variables)} variable names for {n} variables"
            )
        for k, row in enumerate(mode.dynamics):
            if row.nvars != n + m:
                problems.append(
                    f"mode {mode.index}: dynamics row {k} has {row.nvars} variables, "
                    f"expected {n + m}"
                )
            elif row.degree_in(range(n, n + m)) > 1:
                problems.append(f"mode {mode.index}: dynamics row {k} not affine in u")
        if mode.dynamics and mode.dynamics[CLOCK] != Polynomial.constant(
            1.0, mode.dynamics[CLOCK].nvars
        ):
            problems.append(f"mode {mode.index}: clock row must be 1")
        if mode.running_cost is not None and mode.running_cost.nvars != n + m:
            problems.append(f"mode {mode.index}: running cost has wrong dimension")
    for position, tr in enumerate(chs.transitions):
        label = tr.describe(position)
        if tr.source not in seen or tr.destination not in seen:
            problems.append(f"{label}: unknown mode")
            continue
        source = chs.mode(tr.source)
        target = chs.mode(tr.destination)
        if tr.guard.dim != source.dim:
            problems.append(f"{label}: guard dimension {tr.guard.dim} != {source.dim}")
            continue
        matrix_shape = (len(tr.reset_matrix), {len(row) for row in tr.reset_matrix})
        if matrix_shape != (target.dim, {source.dim}) or len(tr.reset_offset) != target.dim:
            problems.append(
                f"{label}: reset must map {source.dim} to {target.dim} coordinates"
            )
        if not source.domain.contains(tr.guard.lower) or not source.domain.contains(
            tr.guard.upper
        ):
            problems.append(f"{label}: guard outside the domain of mode {source.index}")
        elif not _on_boundary(tr.guard, source.domain):
            problems.append(f"{label}: guard not on boundary")
    for mode in chs.modes:
        out = [(p, tr) for p, tr in enumerate(chs.transitions) if tr.source == mode.index]
        for a, (pa, ta) in enumerate(out):
            for pb, tb in out[a + 1 :]:
                if ta.guard.dim == tb.guard.dim and ta.guard.intersects(tb.guard):
                    problems.append(
                        f"mode {mode.index}: guards of transitions #{pa} and #{pb} "
                        "not disjoint"
                    )
    if chs.initial is None or chs.initial[1] is None:
        problems.append("no initial condition")
    else:
        index, state = chs.initial
        if index not in seen:
            problems.append(f"initial mode {index} does not exist")
        elif not chs.mode(index).domain.contains(state, GUARD_TOL):
            problems.append(f"initial state not in domain of mode {index}")
    for index, cost in chs.terminal_costs.items():
        if index not in seen:
            problems.append(f"terminal cost for unknown mode {index}")
        elif cost.nvars != chs.mode(index).dim:
            problems.append(f"mode {index}: terminal cost has wrong dimension")
    for index, target in chs.targets.items():
        if index not in seen or target.dim != chs.mode(index).dim:
            problems.append(f"target set for mode {index} does not match the mode")
    return problems


class Window(NamedTuple):
    mode: int
    start: float
    end: float


def schedule(chs, start=None):
    """Follow clock guards from ``start`` (default: the initial condition)."""
    if not is_time_triggered(chs):
        raise ValueError("λ not precomputable: guards depend on the state")
    index, state = start or chs.initial
    t = state[CLOCK] if state is not None else chs.time_span()[0]
    windows = []
    for _ in range(len(chs.transitions) + 1):
        exits = sorted(
            (clock_guard_time(chs, tr), position)
            for position, tr in enumerate(chs.transitions)
            if tr.source == index and clock_guard_time(chs, tr) >= t - GUARD_TOL
        )
        if not exits:
            windows.append(Window(index, t, chs.mode(index).time_window[1]))
            return windows
        time, position = exits[0]
        if time > t or not windows:
            windows.append(Window(index, t, time))
        index, t = chs.transitions[position].destination, time
    raise ValueError("schedule does not terminate")


def mode_at(chs, t, start=None):
    windows = [w for w in schedule(chs, start) if w.end > w.start] or schedule(chs, start)
    first, last = windows[0].start, windows[-1].end
    if not first <= t <= last:
        raise ValueError(f"t={t} outside horizon [{first}, {last}]")
    for window in windows:
        if window.start <= t < window.end:
            return window.mode
    return windows[-1].mode


def restrict(chs, span, start=None):
    """Sub-system of the modes visited on ``span``; mode labels are kept."""
    t_a, t_b = span
    if not t_a < t_b:
        raise ValueError(f"empty window [{t_a}, {t_b}]")
    windows = schedule(chs, start)
    first, last = windows[0].start, windows[-1].end
    if t_a < first - GUARD_TOL or t_b > last + GUARD_TOL:
        raise ValueError(f"window [{t_a}, {t_b}] outside horizon [{first}, {last}]")
    kept = []
    for window in windows:
        if window.start < t_b and window.end > t_a and window.mode not in kept:
            kept.append(window.mode)
    modes = []
    for index in kept:
        mode = chs.mode(index)
        lo, hi = mode.time_window
        domain = mode.domain.with_bounds(CLOCK, max(lo, t_a), min(hi, t_b))
        modes.append(replace(mode, domain=domain))
    transitions = tuple(
        tr
        for tr in chs.transitions
        if tr.source in kept
        and tr.destination in kept
        and t_a < clock_guard_time(chs, tr) < t_b
    )
    if start is None and chs.initial is not None and chs.initial[1][CLOCK] == t_a:
        start = chs.initial
    logger.debug("restricted to [%s, %s]: modes %s", t_a, t_b, kept)
    return replace(
        chs,
        modes=tuple(modes),
        transitions=transitions,
        initial=start,
        terminal_costs={k: v for k, v in chs.terminal_costs.items() if k in kept},
        targets={k: v for k, v in chs.targets.items() if k in kept},
        horizon=(t_a, t_b),
    )


def enter(chs, index, state, tol=GUARD_TOL):
    """Fire every guard active at ``state``; returns the hybrid state reached."""
    state = np.asarray(state, dtype=float)
    for _ in range(len(chs.transitions) + 1):
        active = [tr for tr in chs.outgoing(index) if tr.guard.contains(state, tol)]
        if not active:
            return index, state
        transition = active[0]
        logger.debug("guard %s->%s active at t=%s", index, transition.destination, state[0])
        index, state = transition.destination, transition.apply(state)
    raise ValueError(f"guards keep firing at t={state[CLOCK]}")


def _box_document(box):
    return [[lo, hi] for lo, hi in box.bounds()]


def system_to_document(chs):
    modes = []
    for mode in chs.modes:
        names = chs.names(mode.index)
        entry = {
            "index": mode.index,
            "variables": list(mode.variables),
            "domain": _box_document(mode.domain),
            "dynamics": [row.format(names) for row in mode.dynamics],
        }
        if mode.running_cost is not None:
            entry["running_cost"] = mode.running_cost.format(names)
        modes.append(entry)
    transitions = []
    for tr in chs.transitions:
        clock = clock_guard_time(chs, tr)
        guard = {"clock": clock} if clock is not None else {"box": _box_document(tr.guard)}
        transitions.append(
            {
                "source": tr.source,
                "destination": tr.destination,
                "guard": guard,
                "reset": {
                    "matrix": [list(row) for row in tr.reset_matrix],
                    "offset": list(tr.reset_offset),
                },
            }
        )
    document = {
        "schema": MODEL_SCHEMA,
        "version": MODEL_VERSION,
        "name": chs.name,
        "inputs": {"names": list(chs.input_names), "bounds": _box_document(chs.inputs)},
        "modes": modes,
        "transitions": transitions,
    }
    if chs.initial is not None:
        document["initial"] = {"mode": chs.initial[0], "state": list(chs.initial[1])}
    if chs.terminal_costs:
        document["terminal_costs"] = {
            str(k): cost.format(chs.mode(k).variables)
            for k, cost in sorted(chs.terminal_costs.items())
        }
    if chs.targets:
        document["targets"] = {
            str(k): _box_document(box) for k, box in sorted(chs.targets.items())
        }
    if chs.measurement is not None:
        names = default_variables(chs.measurement.nvars)
        document["measurement"] = {
            "variables": list(names),
            "expression": chs.measurement.format(names),
        }
    return document


def system_from_document(document):
    inputs = document["inputs"]
    input_box = SemialgebraicBox.from_bounds(inputs["bounds"])
    input_names = tuple(inputs.get("names") or default_inputs(input_box.dim))
    modes = []
    for entry in document["modes"]:
        domain = SemialgebraicBox.from_bounds(entry["domain"])
        variables = tuple(entry.get("variables") or default_variables(domain.dim))
        names = (*variables, *input_names)
        running = entry.get("running_cost")
        modes.append(
            Mode(
                index=int(entry["index"]),
                domain=domain,
                dynamics=tuple(parse_polynomial(row, names) for row in entry["dynamics"]),
                running_cost=parse_polynomial(running, names) if running else None,
                variables=variables,
            )
        )
    by_index = {mode.index: mode for mode in modes}
    transitions = []
    for entry in document.get("transitions", []):
        source = by_index.get(int(entry["source"]))
        if source is None:
            raise ValueError(f"transition from unknown mode {entry['source']}")
        guard = entry["guard"]
        if "clock" in guard:
            c = float(guard["clock"])
            box = source.domain.with_bounds(CLOCK, c, c)
        else:
            box = SemialgebraicBox.from_bounds(guard["box"])
        reset = entry["reset"]
        transitions.append(
            Transition(
                source=source.index,
                destination=int(entry["destination"]),
                guard=box,
                reset_matrix=tuple(tuple(float(v) for v in row) for row in reset["matrix"]),
                reset_offset=tuple(float(v) for v in reset.get("offset", ())),
            )
        )
    initial = document.get("initial")
    if initial is not None:
        initial = (int(initial["mode"]), tuple(float(v) for v in initial["state"]))
    terminal_costs = {
        int(k): parse_polynomial(text, by_index[int(k)].variables)
        for k, text in document.get("terminal_costs", {}).items()
    }
    targets = {
        int(k): SemialgebraicBox.from_bounds(bounds)
        for k, bounds in document.get("targets", {}).items()
    }
    measurement = document.get("measurement")
    if measurement is not None:
        measurement = parse_polynomial(measurement["expression"], measurement["variables"])
    return ControlledHybridSystem(
        modes=tuple(modes),
        transitions=tuple(transitions),
        inputs=input_box,
        initial=initial,
        terminal_costs=terminal_costs,
        targets=targets,
        input_names=input_names,
        measurement=measurement,
        name=document.get("name", ""),
    )

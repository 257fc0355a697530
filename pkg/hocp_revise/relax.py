"""Moment relaxations of hybrid optimal control problems over occupation measures.

Every mode carries an occupation measure on (t, x, u), every transition a guard
measure on its guard set and every mode reaching the end of the horizon a
terminal measure. The measures are linked by one Liouville equality per test
monomial and mode. Time is normalised to [0, 1] over the horizon, states are
mapped onto [0, 1] over their domain boxes, or over the range a reference
trajectory covers when one is given, and inputs are divided by ``zeta``.
"""

import logging
import math
from collections import defaultdict
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse

from . import artifacts
from .chs import CLOCK, validate
from .poly import (
    Monomial,
    Polynomial,
    affine_substitute,
    basis_size,
    default_names,
    lie_derivative,
    monomial_basis,
)
from .sdp import ConicProblem, Functional

logger = logging.getLogger(__name__)

LAYOUT_SCHEMA = "hocp-revise/layout"
LAYOUT_VERSION = 1

DEFAULT_ZETA = 0.1
QUADRATURE_NODES = 8
TERMINAL_TOL = 1e-9
REACH_MARGIN = 2.0
REACH_FLOOR = 1e-3


@lru_cache(maxsize=64)
def basis_index(nvars, degree):
    return {mono: k for k, mono in enumerate(monomial_basis(nvars, degree))}


@lru_cache(maxsize=64)
def _basis_exponents(nvars, degree):
    basis = monomial_basis(nvars, degree)
    return np.array([mono.dense(nvars) for mono in basis], dtype=np.int64).reshape(
        len(basis), nvars
    )


@lru_cache(maxsize=64)
def _moment_structure(nvars, order):
    basis = monomial_basis(nvars, order)
    index = basis_index(nvars, 2 * order)
    return tuple(
        (a, b, index[basis[a] * basis[b]])
        for a in range(len(basis))
        for b in range(a, len(basis))
    )


def _localizing_structure(g, order):
    basis = monomial_basis(g.nvars, order)
    index = basis_index(g.nvars, 2 * order + max(0, g.degree()))
    entries = []
    for a in range(len(basis)):
        for b in range(a, len(basis)):
            pair = basis[a] * basis[b]
            entries.append((a, b, [(index[pair * mono], coef) for mono, coef in g.items()]))
    return entries


def _lookup(y, nvars, degree):
    if isinstance(y, Mapping):
        table = y
    else:
        table = dict(zip(monomial_basis(nvars, degree), y))

    def value(mono):
        try:
            return float(table[mono])
        except KeyError:
            raise ValueError(
                f"missing moment for monomial {mono.format(default_names(nvars))}"
            ) from None

    return value


def moment_matrix(y, nvars, d):
    """M_d(y)[a, b] = y[a * b] over the graded-lex basis of degree d.

    ``y`` is a mapping from monomials to moments or a sequence aligned with
    ``monomial_basis(nvars, 2 * d)``.
    """
    basis = monomial_basis(nvars, d)
    value = _lookup(y, nvars, 2 * d)
    return np.array([[value(a * b) for b in basis] for a in basis])


def moment_index_matrix(nvars, d):
    """Positions into ``monomial_basis(nvars, 2 * d)`` of every M_d entry."""
    basis = monomial_basis(nvars, d)
    index = basis_index(nvars, 2 * d)
    return np.array([[index[a * b] for b in basis] for a in basis], dtype=np.int64)


def localizing_matrix(y, g, d):
    basis = monomial_basis(g.nvars, d)
    value = _lookup(y, g.nvars, 2 * d + max(0, g.degree()))
    return np.array(
        [
            [sum(coef * value(a * b * mono) for mono, coef in g.items()) for b in basis]
            for a in basis
        ]
    )


def box_constraints(bounds):
    """(y_k - lo)(hi - y_k) >= 0 for every coordinate of a box."""
    nvars = len(bounds)
    constraints = []
    for k, (lo, hi) in enumerate(bounds):
        y = Polynomial.variable(k, nvars)
        constraints.append((y - lo) * (hi - y))
    return constraints


@dataclass(frozen=True)
class Scaling:
    """z = offset + width * y on states, u = zeta * v on inputs."""

    offsets: tuple[float, ...]
    widths: tuple[float, ...]
    zeta: float
    n_inputs: int

    @classmethod
    def for_mode(cls, mode, horizon, zeta, n_inputs, reach=None):
        """Domain-box scaling, narrowed to ``REACH_MARGIN`` times ``reach`` when given.

        ``reach`` holds per-coordinate maxima of a reference trajectory in this
        mode; widths never drop below ``REACH_FLOOR`` of the domain width.
        """
        t_a, t_b = horizon
        offsets = [t_a]
        widths = [t_b - t_a]
        for k, (lo, hi) in enumerate(mode.domain.bounds()[1:], start=1):
            offsets.append(lo)
            if hi <= lo:
                widths.append(1.0)
            elif reach is None:
                widths.append(hi - lo)
            else:
                spread = REACH_MARGIN * (float(reach[k]) - lo)
                widths.append(min(hi - lo, max(spread, REACH_FLOOR * (hi - lo))))
        return cls(tuple(offsets), tuple(widths), zeta, n_inputs)

    def to_scaled(self, state):
        return (np.asarray(state, dtype=float) - self.offsets) / self.widths

    def from_scaled(self, y):
        return np.asarray(self.offsets) + np.asarray(self.widths) * np.asarray(y)

    def scale_state_polynomial(self, p):
        return affine_substitute(p, self.offsets, self.widths)

    def scale_polynomial(self, p):
        """p(z, u) as a polynomial in the scaled (y, v)."""
        offsets = (*self.offsets, *([0.0] * self.n_inputs))
        widths = (*self.widths, *([self.zeta] * self.n_inputs))
        return affine_substitute(p, offsets, widths)

    def unscale_state_polynomial(self, p):
        """q(y) as a polynomial in the original z."""
        return affine_substitute(
            p,
            [-o / w for o, w in zip(self.offsets, self.widths)],
            [1.0 / w for w in self.widths],
        )

    def bounds(self, box):
        return [
            ((lo - o) / w, (hi - o) / w)
            for (lo, hi), o, w in zip(box.bounds(), self.offsets, self.widths)
        ]

    def to_document(self):
        return {"offsets": list(self.offsets), "widths": list(self.widths), "zeta": self.zeta}


@dataclass(frozen=True)
class Measure:
    role: str
    mode: int | None
    transition: int | None
    ambient: int
    free: tuple[int, ...]
    fixed: Mapping[int, float]
    degree: int
    support: tuple[tuple[float, float], ...]
    offset: int = 0
    names: tuple[str, ...] = ()

    @property
    def nvars(self):
        return len(self.free)

    @property
    def size(self):
        return basis_size(self.nvars, self.degree)

    @property
    def label(self):
        if self.role == "guard":
            return f"guard[#{self.transition}]"
        if self.mode is None:
            return self.role
        return f"{self.role}[{self.mode}]"

    def basis(self):
        return monomial_basis(self.nvars, self.degree)

    def local(self, mono):
        """Map an ambient monomial onto (factor, local monomial)."""
        factor = 1.0
        position = {a: k for k, a in enumerate(self.free)}
        kept = []
        for var, exp in mono.exponents:
            if var in self.fixed:
                factor *= self.fixed[var] ** exp
            else:
                kept.append((position[var], exp))
        return factor, Monomial(tuple(kept))

    def integrate(self, p):
        """Linear form of ``p`` on this measure's moments: {global index: coefficient}."""
        index = basis_index(self.nvars, self.degree)
        form = defaultdict(float)
        for mono, coef in p.terms.items():
            factor, local = self.local(mono)
            if local not in index:
                raise ValueError(
                    f"{self.label}: monomial of degree {local.degree} exceeds {self.degree}"
                )
            form[self.offset + index[local]] += coef * factor
        return form

    def dirac(self, point):
        """Basis monomials evaluated at an ambient point (rows if 2-D)."""
        point = np.asarray(point, dtype=float)
        local = point[..., list(self.free)]
        return np.prod(
            local[..., None, :] ** _basis_exponents(self.nvars, self.degree), axis=-1
        )


@dataclass
class MeasureLayout:
    measures: list = field(default_factory=list)
    size: int = 0

    def add(self, measure):
        placed = Measure(**{**measure.__dict__, "offset": self.size})
        self.measures.append(placed)
        self.size += placed.size
        return placed

    def find(self, role, mode=None, transition=None):
        for measure in self.measures:
            if (measure.role, measure.mode, measure.transition) == (role, mode, transition):
                return measure
        return None

    def occupation(self, mode):
        return self.find("occupation", mode)

    def terminal(self, mode):
        return self.find("terminal", mode)

    def moment_labels(self):
        labels = []
        for measure in self.measures:
            names = [measure.names[a] for a in measure.free] if measure.names else None
            labels.extend(
                f"{measure.label}:{mono.format(names or default_names(measure.nvars))}"
                for mono in measure.basis()
            )
        return labels


@dataclass(frozen=True)
class CostSpec:
    running: Mapping[int, Polynomial] = field(default_factory=dict)
    terminal: Mapping[int, Polynomial] = field(default_factory=dict)

    @classmethod
    def from_system(cls, chs):
        return cls(
            running={
                mode.index: mode.running_cost
                for mode in chs.modes
                if mode.running_cost is not None
            },
            terminal=dict(chs.terminal_costs),
        )


@dataclass
class RelaxationProblem:
    layout: MeasureLayout
    conic: ConicProblem
    order: int
    system: object
    cost: CostSpec
    horizon: tuple[float, float]
    scalings: dict
    cost_scale: float
    liouville: scipy.sparse.csr_matrix
    liouville_rhs: np.ndarray
    objective: np.ndarray
    blocks: list = field(default_factory=list)

    def lower_bound(self, solution):
        if solution.status == "unbounded":
            return math.inf
        if solution.solved:
            return -solution.objective * self.cost_scale
        return -math.inf

    def moments(self, solution):
        return np.asarray(solution.dual, dtype=float)

    def liouville_residual(self, y):
        return self.liouville @ y - self.liouville_rhs

    def empirical_moments(self, trajectory, control, nodes=QUADRATURE_NODES):
        """Moments of a simulated pair in the scaled coordinates of this layout."""
        y = np.zeros(self.layout.size)
        t_a, t_b = self.horizon
        length = t_b - t_a
        abscissae, weights = np.polynomial.legendre.leggauss(nodes)
        for segment in trajectory.segments:
            measure = self.layout.occupation(segment.mode)
            start, end = max(segment.start, t_a), min(segment.end, t_b)
            if measure is None or end <= start:
                continue
            scaling = self.scalings[segment.mode]
            cuts = [start, *(t for t in segment.step_times if start < t < end), end]
            for lo, hi in zip(cuts, cuts[1:]):
                times = lo + (hi - lo) * (abscissae + 1) / 2
                states = np.array([segment.state(t) for t in times])
                inputs = np.array(
                    [control.value(t, segment.mode, z) for t, z in zip(times, states)]
                )
                points = np.hstack([scaling.to_scaled(states), inputs / scaling.zeta])
                values = measure.dirac(points)
                y[measure.offset : measure.offset + measure.size] += (
                    weights * (hi - lo) / 2 / length
                ) @ values
        for measure in self.layout.measures:
            if measure.role != "guard":
                continue
            transition = self.system.transitions[measure.transition]
            for event in trajectory.events:
                if (
                    (event.source, event.destination)
                    == (transition.source, transition.destination)
                    and t_a < event.time < t_b
                    and transition.guard.contains(event.pre, 1e-6)
                ):
                    scaled = self.scalings[transition.source].to_scaled(event.pre)
                    y[measure.offset : measure.offset + measure.size] += measure.dirac(scaled)
        mode, state = trajectory.state_at(t_b)
        measure = self.layout.terminal(mode)
        if measure is not None:
            scaled = self.scalings[mode].to_scaled(state)
            y[measure.offset : measure.offset + measure.size] += measure.dirac(scaled)
        return y


def _required_order(degree):
    return max(1, math.ceil(degree / 2))


def _scaled_dynamics(mode, scaling, length):
    rows = []
    for k, row in enumerate(mode.dynamics):
        rows.append(scaling.scale_polynomial(row) * (length / scaling.widths[k]))
    return rows


def _scaled_reset(transition, source_scaling, target_scaling):
    nvars = transition.guard.dim
    affine = [
        Polynomial.constant(o, nvars) + w * Polynomial.variable(k, nvars)
        for k, (o, w) in enumerate(zip(source_scaling.offsets, source_scaling.widths))
    ]
    rows = []
    for k, row in enumerate(transition.reset_polynomials()):
        composed = row.compose(affine)
        rows.append((composed - target_scaling.offsets[k]) * (1.0 / target_scaling.widths[k]))
    return rows


class _Assembler:
    """Collects equality rows (one per moment) of the SOS form."""

    def __init__(self, size):
        self.rows = [defaultdict(float) for _ in range(size)]
        self.dims = []
        self.blocks = []

    def moment_block(self, measure, order):
        block = len(self.dims)
        self.dims.append(basis_size(measure.nvars, order))
        self.blocks.append((measure.label, "moment", self.dims[-1]))
        for a, b, local in _moment_structure(measure.nvars, order):
            self.rows[measure.offset + local][(block, a, b)] -= 1.0

    def localizing_block(self, measure, g, order, label):
        block = len(self.dims)
        self.dims.append(basis_size(measure.nvars, order))
        self.blocks.append((measure.label, label, self.dims[-1]))
        for a, b, terms in _localizing_structure(g, order):
            for local, coef in terms:
                self.rows[measure.offset + local][(block, a, b)] -= coef

    def support(self, measure, order):
        self.moment_block(measure, order)
        if order < 1:
            return
        for k, g in enumerate(box_constraints(measure.support)):
            self.localizing_block(measure, g, order - 1, f"localizing y{k}")

    def conic(self, liouville, liouville_rhs, objective, names):
        liouville = liouville.tocsc()
        equalities = []
        for gamma, row in enumerate(self.rows):
            lo, hi = liouville.indptr[gamma], liouville.indptr[gamma + 1]
            free = tuple(
                (int(k), -float(v))
                for k, v in zip(liouville.indices[lo:hi], liouville.data[lo:hi])
                if v
            )
            blocks = tuple((b, i, j, v) for (b, i, j), v in sorted(row.items()) if v)
            equalities.append(Functional(blocks=blocks, free=free))
        return ConicProblem(
            block_dims=tuple(self.dims),
            n_free=liouville.shape[0],
            objective=Functional(
                free=tuple((k, -float(v)) for k, v in enumerate(liouville_rhs) if v)
            ),
            equalities=tuple(equalities),
            rhs=tuple(-float(c) for c in objective),
            names=names,
        )


def _sparse_rows(rows, size):
    data, indices, indptr = [], [], [0]
    for row in rows:
        for column, value in sorted(row.items()):
            if value:
                indices.append(column)
                data.append(value)
        indptr.append(len(indices))
    return scipy.sparse.csr_matrix((data, indices, indptr), shape=(len(rows), size))


def build_relaxation(
    chs,
    order,
    cost=None,
    *,
    horizon=None,
    zeta=DEFAULT_ZETA,
    cost_scale=None,
    reach=None,
):
    """Order-``order`` moment relaxation of the optimal control problem on ``chs``.

    ``reach`` maps mode indices to per-coordinate state maxima of a reference
    trajectory; modes it covers are scaled to that range instead of their domain.
    """
    if order < 1:
        raise ValueError(f"relaxation order must be at least 1, got {order}")
    problems = validate(chs)
    if problems:
        raise ValueError("invalid system: " + "; ".join(problems))
    cost = cost or CostSpec.from_system(chs)
    t_a, t_b = horizon or chs.time_span()
    length = t_b - t_a
    if length <= 0:
        raise ValueError(f"empty horizon [{t_a}, {t_b}]")
    degree = 2 * order
    m = chs.n_inputs
    scalings = {
        mode.index: Scaling.for_mode(mode, (t_a, t_b), zeta, m, (reach or {}).get(mode.index))
        for mode in chs.modes
    }
    dynamics = {}
    running = {}
    terminal = {}
    for mode in chs.modes:
        scaling = scalings[mode.index]
        dynamics[mode.index] = _scaled_dynamics(mode, scaling, length)
        demand = max(row.degree() for row in dynamics[mode.index])
        if mode.index in cost.running:
            running[mode.index] = scaling.scale_polynomial(cost.running[mode.index]) * length
            demand = max(demand, running[mode.index].degree())
        if mode.index in cost.terminal:
            terminal[mode.index] = scaling.scale_state_polynomial(cost.terminal[mode.index])
            demand = max(demand, terminal[mode.index].degree())
        if demand > degree:
            raise ValueError(
                f"mode {mode.index} needs degree {demand}: requires relaxation order "
                f">= {_required_order(demand)}"
            )
    scale = cost_scale
    if scale is None:
        coefficients = [
            abs(c) for p in (*running.values(), *terminal.values()) for c in p.terms.values()
        ]
        scale = max(coefficients, default=1.0) or 1.0

    layout = MeasureLayout()
    input_box = [(lo / zeta, hi / zeta) for lo, hi in chs.inputs.bounds()]
    for mode in chs.modes:
        scaling = scalings[mode.index]
        layout.add(
            Measure(
                role="occupation",
                mode=mode.index,
                transition=None,
                ambient=mode.dim + m,
                free=tuple(range(mode.dim + m)),
                fixed={},
                degree=degree,
                support=(*scaling.bounds(mode.domain), *input_box),
                names=chs.names(mode.index),
            )
        )
    for position, tr in enumerate(chs.transitions):
        scaling = scalings[tr.source]
        bounds = scaling.bounds(tr.guard)
        fixed = {k: lo for k, (lo, hi) in enumerate(bounds) if k in tr.guard.fixed()}
        free = tuple(k for k in range(tr.guard.dim) if k not in fixed)
        layout.add(
            Measure(
                role="guard",
                mode=tr.source,
                transition=position,
                ambient=tr.guard.dim,
                free=free,
                fixed=fixed,
                degree=degree,
                support=tuple(bounds[k] for k in free),
                names=chs.mode(tr.source).variables,
            )
        )
    for mode in chs.modes:
        if mode.time_window[1] < t_b - TERMINAL_TOL:
            continue
        scaling = scalings[mode.index]
        box = chs.targets.get(mode.index, mode.domain)
        bounds = scaling.bounds(box)
        fixed = {CLOCK: 1.0}
        fixed.update({k: lo for k, (lo, hi) in enumerate(bounds) if k and lo == hi})
        free = tuple(k for k in range(mode.dim) if k not in fixed)
        layout.add(
            Measure(
                role="terminal",
                mode=mode.index,
                transition=None,
                ambient=mode.dim,
                free=free,
                fixed=fixed,
                degree=degree,
                support=tuple(bounds[k] for k in free),
                names=mode.variables,
            )
        )
    if not any(measure.role == "terminal" for measure in layout.measures):
        raise ValueError(f"no mode reaches the end of the horizon t={t_b}")

    index0, state0 = chs.initial
    start = scalings[index0].to_scaled(state0)
    rows = []
    rhs = []
    for mode in chs.modes:
        occupation = layout.occupation(mode.index)
        final = layout.terminal(mode.index)
        field_degree = max(row.degree() for row in dynamics[mode.index])
        test_degree = min(degree, degree + 1 - max(1, field_degree))
        resets = {
            position: _scaled_reset(tr, scalings[tr.source], scalings[mode.index])
            for position, tr in enumerate(chs.transitions)
            if tr.destination == mode.index
        }
        for mono in monomial_basis(mode.dim, test_degree):
            v = Polynomial({mono: 1.0}, mode.dim)
            row = defaultdict(float)
            for k, coef in occupation.integrate(lie_derivative(v, dynamics[mode.index])).items():
                row[k] += coef
            for measure in layout.measures:
                if measure.role != "guard":
                    continue
                transition = chs.transitions[measure.transition]
                if transition.source == mode.index:
                    for k, coef in measure.integrate(v).items():
                        row[k] -= coef
                if measure.transition in resets:
                    composed = v.compose(resets[measure.transition])
                    for k, coef in measure.integrate(composed).items():
                        row[k] += coef
            if final is not None:
                for k, coef in final.integrate(v).items():
                    row[k] -= coef
            rows.append(row)
            rhs.append(-v.eval(start) if mode.index == index0 else 0.0)
    mass = defaultdict(float)
    for measure in layout.measures:
        if measure.role == "terminal":
            mass[measure.offset] += 1.0
    rows.append(mass)
    rhs.append(1.0)
    liouville = _sparse_rows(rows, layout.size)
    liouville_rhs = np.asarray(rhs)

    objective = np.zeros(layout.size)
    for index, p in running.items():
        for k, coef in layout.occupation(index).integrate(p).items():
            objective[k] += coef / scale
    for index, p in terminal.items():
        measure = layout.terminal(index)
        if measure is None:
            continue
        for k, coef in measure.integrate(p).items():
            objective[k] += coef / scale

    assembler = _Assembler(layout.size)
    for measure in layout.measures:
        assembler.support(measure, order)
    names = {label: k for k, label in enumerate(layout.moment_labels())}
    conic = assembler.conic(liouville, liouville_rhs, objective, names)
    logger.info(
        "order %d relaxation on [%s, %s]: %d moments, %d blocks (largest %d), %d equalities",
        order,
        t_a,
        t_b,
        layout.size,
        len(conic.block_dims),
        max(conic.block_dims),
        liouville.shape[0],
    )
    return RelaxationProblem(
        layout=layout,
        conic=conic,
        order=order,
        system=chs,
        cost=cost,
        horizon=(t_a, t_b),
        scalings=scalings,
        cost_scale=scale,
        liouville=liouville,
        liouville_rhs=liouville_rhs,
        objective=objective,
        blocks=assembler.blocks,
    )


def relaxation_size(chs, order, horizon=None):
    """Number of moments ``build_relaxation`` would create, without building."""
    t_b = (horizon or chs.time_span())[1]
    m = chs.n_inputs
    degree = 2 * order
    total = sum(basis_size(mode.dim + m, degree) for mode in chs.modes)
    for tr in chs.transitions:
        total += basis_size(tr.guard.dim - len(tr.guard.fixed()), degree)
    for mode in chs.modes:
        if mode.time_window[1] >= t_b - TERMINAL_TOL:
            total += basis_size(mode.dim - 1, degree)
    return total


def polynomial_relaxation(f, box, order):
    """Moment relaxation of min f over a box: one probability measure on the box."""
    if f.degree() > 2 * order:
        raise ValueError(
            f"objective degree {f.degree()} requires relaxation order "
            f">= {_required_order(f.degree())}"
        )
    layout = MeasureLayout()
    measure = layout.add(
        Measure(
            role="static",
            mode=None,
            transition=None,
            ambient=f.nvars,
            free=tuple(range(f.nvars)),
            fixed={},
            degree=2 * order,
            support=tuple(box.bounds()),
        )
    )
    liouville = _sparse_rows([{measure.offset: 1.0}], layout.size)
    liouville_rhs = np.array([1.0])
    objective = np.zeros(layout.size)
    for k, coef in measure.integrate(f).items():
        objective[k] += coef
    assembler = _Assembler(layout.size)
    assembler.support(measure, order)
    names = {label: k for k, label in enumerate(layout.moment_labels())}
    return RelaxationProblem(
        layout=layout,
        conic=assembler.conic(liouville, liouville_rhs, objective, names),
        order=order,
        system=None,
        cost=CostSpec(),
        horizon=(0.0, 1.0),
        scalings={},
        cost_scale=1.0,
        liouville=liouville,
        liouville_rhs=liouville_rhs,
        objective=objective,
        blocks=assembler.blocks,
    )


def layout_document(relaxation):
    measures = []
    for measure in relaxation.layout.measures:
        names = measure.names or default_names(measure.ambient)
        measures.append(
            {
                "role": measure.role,
                "label": measure.label,
                "mode": measure.mode,
                "transition": measure.transition,
                "variables": [names[a] for a in measure.free],
                "fixed": {names[a]: value for a, value in sorted(measure.fixed.items())},
                "degree": measure.degree,
                "offset": measure.offset,
                "size": measure.size,
                "support": [list(bounds) for bounds in measure.support],
            }
        )
    return {
        "schema": LAYOUT_SCHEMA,
        "version": LAYOUT_VERSION,
        "order": relaxation.order,
        "horizon": list(relaxation.horizon),
        "cost_scale": relaxation.cost_scale,
        "moments": relaxation.layout.size,
        "liouville_equalities": relaxation.liouville.shape[0],
        "measures": measures,
        "blocks": [
            {"measure": label, "kind": kind, "dim": dim}
            for label, kind, dim in relaxation.blocks
        ],
        "scalings": {
            str(k): scaling.to_document() for k, scaling in sorted(relaxation.scalings.items())
        },
        "coordinates": relaxation.layout.moment_labels(),
    }


def write_layout(relaxation, path):
    return artifacts.write_document(path, layout_document(relaxation))

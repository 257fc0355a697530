"""Haemoglobin production under a radioactive-iron pulse protocol.

Control batches (odd modes) run the four-species model; radioactive batches
(even modes) add the 59Fe-labelled copies. The single input is the iron
incorporation rate k3 in 1/h. States are in atoms/fL, time in hours.
"""

from dataclasses import dataclass

from .chs import ControlledHybridSystem, Mode, SemialgebraicBox, Transition
from .poly import Polynomial
from .revise import DataPoint

SECONDS_PER_HOUR = 3600

CTRL_DIM = 5
RAD_DIM = 9

# domain upper bounds of x1..x8
STATE_SCALE = (2000.0, 500.0, 20.0, 1000.0, 50000.0, 12000.0, 20.0, 12000.0)

PROTOCOL = (
    (0.0, 4.0),
    (4.0, 7.0),
    (7.0, 8.0),
    (8.0, 11.0),
    (11.0, 16.0),
    (16.0, 19.0),
    (19.0, 24.0),
    (24.0, 27.0),
    (27.0, 32.0),
    (32.0, 35.0),
    (35.0, 42.0),
    (42.0, 45.0),
    (45.0, 52.0),
    (52.0, 55.0),
)

# measurement times (h) and radioactivity counts per hour
DATA = (
    (7.0, 16.0),
    (11.0, 85.0),
    (19.0, 348.0),
    (27.0, 391.0),
    (35.0, 399.0),
    (45.0, 481.0),
    (55.0, 395.0),
)


@dataclass(frozen=True)
class HemeParameters:
    """Rate constants in 1/s (k5 in fL/(atom s)), concentrations in atoms/fL."""

    k1: float = 1.4e-3
    k4: float = 4.47e-4
    k5: float = 7.27e-6
    k6: float = 4.47e-4
    k8: float = 1.14e-5
    fe0: float = 321.0
    fe_ex: float = 4.0
    fe59_ex: float = 3000.0
    k2: float = 0.0
    k7: float = 0.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value >= 0:
                raise ValueError(f"parameter {name} must be non-negative, got {value}")

    def hourly(self, name):
        return getattr(self, name) * SECONDS_PER_HOUR


def heme_vector_field(kind, p=None):
    """Dynamics over (t, x1.., u); ``kind`` is "ctrl" or "rad"."""
    p = p or HemeParameters()
    if kind not in ("ctrl", "rad"):
        raise ValueError(f"unknown heme mode kind {kind!r}")
    dim = CTRL_DIM if kind == "ctrl" else RAD_DIM
    nvars = dim + 1
    x = [Polynomial.variable(k, nvars) for k in range(dim)]
    u = Polynomial.variable(dim, nvars)
    k1, k4, k5, k6, k8 = (p.hourly(name) for name in ("k1", "k4", "k5", "k6", "k8"))
    rows = [
        Polynomial.constant(1.0, nvars),
        k1 * p.fe_ex - u * x[1],
        -k4 * x[2] - 4 * k5 * x[2] * x[3] + u * x[1],
        k6 * x[2] - 4 * k5 * x[2] * x[3],
        k5 * x[2] * x[3] - k8 * x[4],
    ]
    if kind == "rad":
        heme_total = x[2] + x[6]
        rows += [
            k1 * p.fe59_ex - u * x[5],
            -k4 * x[6] - 4 * k5 * x[6] * x[7] + u * x[5],
            k6 * heme_total - 4 * k5 * heme_total * x[7],
            k5 * x[6] * x[7] - k8 * x[8],
        ]
    return tuple(rows)


def measurement():
    """Radioactive heme, free and bound: x6 + 4*x8."""
    x = [Polynomial.variable(k, RAD_DIM) for k in range(RAD_DIM)]
    return x[6] + 4 * x[8]


def _domain(window, dim):
    return SemialgebraicBox(
        (window[0], *([0.0] * (dim - 1))), (window[1], *STATE_SCALE[: dim - 1])
    )


def _embedding(rows, columns):
    return tuple(tuple(1.0 if i == j else 0.0 for j in range(columns)) for i in range(rows))


def build_heme_chs(p=None):
    p = p or HemeParameters()
    fields = {"ctrl": heme_vector_field("ctrl", p), "rad": heme_vector_field("rad", p)}
    modes = []
    for position, window in enumerate(PROTOCOL):
        kind = "ctrl" if position % 2 == 0 else "rad"
        dim = CTRL_DIM if kind == "ctrl" else RAD_DIM
        modes.append(
            Mode(
                index=position + 1,
                domain=_domain(window, dim),
                dynamics=fields[kind],
                variables=("t", *(f"x{k}" for k in range(1, dim))),
            )
        )
    transitions = []
    for source, target in zip(modes, modes[1:]):
        c = source.time_window[1]
        transitions.append(
            Transition(
                source=source.index,
                destination=target.index,
                guard=source.domain.with_bounds(0, c, c),
                reset_matrix=_embedding(target.dim, source.dim),
            )
        )
    return ControlledHybridSystem(
        modes=tuple(modes),
        transitions=tuple(transitions),
        inputs=SemialgebraicBox((0.0,), (1.0,)),
        initial=(1, (0.0, p.fe0, 0.0, 0.0, 0.0)),
        input_names=("u",),
        measurement=measurement(),
        name="heme",
    )


def heme_data():
    m = measurement()
    return [DataPoint(time, value, m) for time, value in DATA]

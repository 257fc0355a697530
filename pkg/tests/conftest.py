import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from hocp_revise.chs import ControlledHybridSystem, Mode, SemialgebraicBox, Transition
from hocp_revise.heme import build_heme_chs
from hocp_revise.poly import Polynomial
from hocp_revise.sim import ControlWindow, PolynomialControl

RAMP_MODEL = {
    "schema": "hocp-revise/model",
    "version": 1,
    "name": "ramp",
    "inputs": {"names": ["u"], "bounds": [[-1, 1]]},
    "modes": [
        {"index": 1, "variables": ["t", "x1"], "domain": [[0, 1], [-2, 2]], "dynamics": ["1", "u"]}
    ],
    "transitions": [],
    "initial": {"mode": 1, "state": [0, 0]},
    "measurement": {"variables": ["t", "x1"], "expression": "x1"},
}


def variable(index, nvars):
    return Polynomial.variable(index, nvars)


@pytest.fixture()
def scalar_system():
    """x' = u on [0, 1], U = [-1, 1], X = [-2, 2], x0 = 0, terminal cost (x(1) - 1)^2."""
    x = variable(1, 2)
    return ControlledHybridSystem(
        modes=(
            Mode(
                index=1,
                domain=SemialgebraicBox((0.0, -2.0), (1.0, 2.0)),
                dynamics=(Polynomial.constant(1.0, 3), variable(2, 3)),
            ),
        ),
        transitions=(),
        inputs=SemialgebraicBox((-1.0,), (1.0,)),
        initial=(1, (0.0, 0.0)),
        terminal_costs={1: (x - 1) ** 2},
        measurement=x,
        name="scalar",
    )


@pytest.fixture()
def two_mode_system():
    """x1' = u on [0, 0.5]; then x1' = u, x2' = x1 on [0.5, 1] with x2 appended at 0."""
    return ControlledHybridSystem(
        modes=(
            Mode(
                index=1,
                domain=SemialgebraicBox((0.0, -2.0), (0.5, 2.0)),
                dynamics=(Polynomial.constant(1.0, 3), variable(2, 3)),
            ),
            Mode(
                index=2,
                domain=SemialgebraicBox((0.5, -2.0, -2.0), (1.0, 2.0, 2.0)),
                dynamics=(Polynomial.constant(1.0, 4), variable(3, 4), variable(1, 4)),
            ),
        ),
        transitions=(
            Transition(
                source=1,
                destination=2,
                guard=SemialgebraicBox((0.5, -2.0), (0.5, 2.0)),
                reset_matrix=((1.0, 0.0), (0.0, 1.0), (0.0, 0.0)),
            ),
        ),
        inputs=SemialgebraicBox((-1.0,), (1.0,)),
        initial=(1, (0.0, 0.0)),
        name="two-mode",
    )


@pytest.fixture()
def heme_system():
    return build_heme_chs()


@pytest.fixture()
def constant_control():
    def make(system, values, span=None):
        span = span or system.time_span()
        laws = {
            mode.index: (Polynomial.constant(values[mode.index], mode.dim),)
            for mode in system.modes
        }
        return PolynomialControl([ControlWindow(*span, laws)], system.inputs)

    return make


@pytest.fixture()
def ramp_model():
    return json.loads(json.dumps(RAMP_MODEL))


@pytest.fixture()
def runner():
    cli_runner = CliRunner()
    with cli_runner.isolated_filesystem():
        yield cli_runner


@pytest.fixture()
def ramp_files(runner):
    Path("ramp.json").write_text(json.dumps(RAMP_MODEL), encoding="utf-8")
    Path("ramp.csv").write_text("time,value\n1,1\n", encoding="utf-8")
    return "ramp.json", "ramp.csv"

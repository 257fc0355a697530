import math

import numpy as np
import pytest

from hocp_revise import artifacts
from hocp_revise.chs import ControlledHybridSystem, Mode, SemialgebraicBox, Transition
from hocp_revise.heme import PROTOCOL, HemeParameters, measurement
from hocp_revise.poly import Polynomial
from hocp_revise.sim import (
    ControlWindow,
    DomainExitError,
    PolynomialControl,
    evaluate_measurement,
    load_control,
    simulate,
    write_events_csv,
    write_trajectory_csv,
)

TIGHT = {"rtol": 1e-10, "atol": 1e-12}


def single_mode(dynamics, lower, upper, inputs=(0.0, 1.0), transitions=()):
    return ControlledHybridSystem(
        modes=(Mode(index=1, domain=SemialgebraicBox(lower, upper), dynamics=dynamics),),
        transitions=transitions,
        inputs=SemialgebraicBox((inputs[0],), (inputs[1],)),
        initial=(1, tuple(lower[:1]) + (0.0,) * (len(lower) - 1)),
    )


def x(index, nvars=3):
    return Polynomial.variable(index, nvars)


def test_linear_decay():
    system = single_mode(
        (Polynomial.constant(1.0, 3), -x(1)), (0.0, 0.0), (1.0, 2.0)
    )
    zero = PolynomialControl.zero((0.0, 1.0), system.inputs)
    trajectory = simulate(system, zero, (1, (0.0, 1.0)), (0.0, 1.0), **TIGHT)
    mode, state = trajectory.final
    assert mode == 1
    assert state[1] == pytest.approx(math.exp(-1), rel=1e-8)


def test_constant_input_relaxes_to_equilibrium(constant_control):
    # x' = a - u x with u = 0.5
    system = single_mode(
        (Polynomial.constant(1.0, 3), 2.0 - x(2) * x(1)), (0.0, 0.0), (3.0, 10.0)
    )
    control = constant_control(system, {1: 0.5})
    trajectory = simulate(system, control, system.initial, (0.0, 3.0), **TIGHT)
    expected = 4.0 * (1.0 - math.exp(-1.5))
    assert trajectory.final[1][1] == pytest.approx(expected, rel=1e-8)


def test_heme_zero_input_first_window(heme_system):
    zero = PolynomialControl.zero((0.0, 4.0), heme_system.inputs)
    trajectory = simulate(heme_system, zero, heme_system.initial, (0.0, 4.0), **TIGHT)
    mode, state = trajectory.final
    slope = HemeParameters().hourly("k1") * HemeParameters().fe_ex
    assert mode == 1
    assert trajectory.events == []
    assert state[1] == pytest.approx(321.0 + 4.0 * slope, rel=1e-8)
    np.testing.assert_array_equal(state[2:], 0.0)


def test_heme_zero_input_whole_protocol(heme_system):
    zero = PolynomialControl.zero((0.0, 55.0), heme_system.inputs)
    trajectory = simulate(heme_system, zero, heme_system.initial, (0.0, 55.0), **TIGHT)
    p = HemeParameters()
    assert [event.time for event in trajectory.events] == pytest.approx(
        [end for _, end in PROTOCOL[:-1]], abs=1e-9
    )
    first = trajectory.events[0]
    assert (first.source, first.destination) == (1, 2)
    np.testing.assert_array_equal(first.post[5:], 0.0)
    np.testing.assert_array_equal(first.post[:5], first.pre)
    mode, state = trajectory.final
    assert mode == 14
    assert state[1] == pytest.approx(321.0 + 55.0 * p.hourly("k1") * p.fe_ex, rel=1e-8)
    assert state[5] == pytest.approx(3.0 * p.hourly("k1") * p.fe59_ex, rel=1e-8)


def test_left_state_kept_at_span_end(heme_system):
    zero = PolynomialControl.zero((0.0, 7.0), heme_system.inputs)
    trajectory = simulate(heme_system, zero, heme_system.initial, (0.0, 7.0))
    assert trajectory.final[0] == 2
    assert len(trajectory.events) == 1
    assert trajectory.state_at(7.0)[0] == 2


def test_state_guard_event(constant_control):
    one = Polynomial.constant(1.0, 3)
    system = ControlledHybridSystem(
        modes=(
            Mode(1, SemialgebraicBox((0.0, 0.0), (1.0, 0.5)), (one, one)),
            Mode(2, SemialgebraicBox((0.0, 0.5), (1.0, 2.0)), (one, one)),
        ),
        transitions=(
            Transition(
                source=1,
                destination=2,
                guard=SemialgebraicBox((0.0, 0.5), (1.0, 0.5)),
                reset_matrix=((1.0, 0.0), (0.0, 1.0)),
            ),
        ),
        inputs=SemialgebraicBox((0.0,), (1.0,)),
        initial=(1, (0.0, 0.0)),
    )
    control = constant_control(system, {1: 0.0, 2: 0.0})
    trajectory = simulate(system, control, system.initial, (0.0, 1.0), **TIGHT)
    assert len(trajectory.events) == 1
    assert trajectory.events[0].time == pytest.approx(0.5, abs=1e-9)
    mode, state = trajectory.final
    assert mode == 2
    assert state[1] == pytest.approx(1.0, rel=1e-9)


def test_domain_exit():
    one = Polynomial.constant(1.0, 3)
    system = single_mode((one, one), (0.0, 0.0), (1.0, 0.5))
    zero = PolynomialControl.zero((0.0, 1.0), system.inputs)
    with pytest.raises(DomainExitError, match="mode 1 left its domain") as error:
        simulate(system, zero, system.initial, (0.0, 1.0))
    assert error.value.time == pytest.approx(0.5, abs=1e-5)
    assert error.value.mode == 1


def test_start_must_match_span():
    one = Polynomial.constant(1.0, 3)
    system = single_mode((one, -x(1)), (0.0, 0.0), (1.0, 1.0))
    zero = PolynomialControl.zero((0.0, 1.0), system.inputs)
    with pytest.raises(ValueError, match="does not match span start"):
        simulate(system, zero, (1, (0.5, 0.0)), (0.0, 1.0))


def test_control_is_clamped(scalar_system):
    t = Polynomial.variable(0, 2)
    window = ControlWindow(0.0, 1.0, {1: (5.0 * t - 2.0,)})
    control = PolynomialControl([window], scalar_system.inputs)
    assert control.value(0.0, 1, [0.0, 0.0]) == pytest.approx([-1.0])
    assert control.value(0.5, 1, [0.5, 0.0]) == pytest.approx([0.5])
    assert control.value(1.0, 1, [1.0, 0.0]) == pytest.approx([1.0])
    assert control.value(0.5, 7, [0.5, 0.0]) == pytest.approx([0.0])


def test_control_windows_must_be_contiguous(scalar_system):
    with pytest.raises(ValueError, match="not contiguous"):
        PolynomialControl(
            [ControlWindow(0.0, 0.5, {}), ControlWindow(0.6, 1.0, {})], scalar_system.inputs
        )


def test_concatenated_control_picks_window(scalar_system, constant_control):
    first = constant_control(scalar_system, {1: 0.25}, span=(0.0, 0.5))
    second = constant_control(scalar_system, {1: 0.75}, span=(0.5, 1.0))
    control = PolynomialControl.concatenate([first, second])
    assert control.span == (0.0, 1.0)
    assert control.value(0.25, 1, [0.25, 0.0]) == pytest.approx([0.25])
    assert control.value(0.5, 1, [0.5, 0.0]) == pytest.approx([0.75])


def test_control_document_round_trip(tmp_path, scalar_system):
    t, y = Polynomial.variable(0, 2), Polynomial.variable(1, 2)
    control = PolynomialControl(
        [ControlWindow(0.0, 1.0, {1: (0.1 + 0.5 * t - 0.25 * y * t,)})], scalar_system.inputs
    )
    path = artifacts.write_document(tmp_path / "control.json", control.to_document(scalar_system))
    loaded = load_control(path)
    for point in ([0.1, 0.2], [0.7, -1.0]):
        assert loaded.value(point[0], 1, point) == pytest.approx(
            control.value(point[0], 1, point), rel=1e-12
        )


def test_control_document_schema(tmp_path):
    path = artifacts.write_document(tmp_path / "other.json", {"schema": "other", "version": 1})
    with pytest.raises(ValueError, match="expected a hocp-revise/control document"):
        load_control(path)


def test_measurement_on_radioactive_state(heme_system):
    zero = PolynomialControl.zero((0.0, 7.0), heme_system.inputs)
    trajectory = simulate(heme_system, zero, heme_system.initial, (0.0, 7.0))
    assert evaluate_measurement(trajectory, Polynomial.constant(5.0, 9), 6.0) == 5.0
    _, state = trajectory.state_at(6.0)
    assert evaluate_measurement(trajectory, measurement(), 6.0) == pytest.approx(
        state[6] + 4 * state[8]
    )
    with pytest.raises(ValueError, match="absent in mode 1"):
        evaluate_measurement(trajectory, measurement(), 2.0)


def test_csv_exports(tmp_path, heme_system):
    zero = PolynomialControl.zero((0.0, 8.0), heme_system.inputs)
    trajectory = simulate(heme_system, zero, heme_system.initial, (0.0, 8.0), sample_step=0.5)
    write_trajectory_csv(trajectory, tmp_path / "trajectory.csv", heme_system)
    write_events_csv(trajectory, tmp_path / "events.csv")
    rows = artifacts.read_csv(tmp_path / "trajectory.csv")
    assert list(rows[0]) == ["t", "mode", *(f"x{k}" for k in range(1, 9)), "u"]
    assert rows[0]["x5"] == ""
    assert [row["t"] for row in rows[:3]] == ["0", "0.5", "1"]
    events = artifacts.read_csv(tmp_path / "events.csv")
    assert [(row["t"], row["source"], row["destination"]) for row in events] == [
        ("4", "1", "2"),
        ("7", "2", "3"),
    ]

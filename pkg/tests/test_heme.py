import numpy as np
import pytest

from hocp_revise import artifacts
from hocp_revise.chs import (
    MODEL_SCHEMA,
    MODEL_VERSION,
    is_time_triggered,
    system_from_document,
    validate,
)
from hocp_revise.heme import (
    PROTOCOL,
    HemeParameters,
    build_heme_chs,
    heme_data,
    heme_vector_field,
    measurement,
)


def assert_same_polynomial(actual, expected):
    assert actual.nvars == expected.nvars
    assert set(actual.terms) == set(expected.terms)
    for mono, coef in expected.terms.items():
        assert actual.terms[mono] == pytest.approx(coef, rel=1e-12)


def test_hourly_rates():
    p = HemeParameters()
    assert p.hourly("k1") == pytest.approx(5.04)
    assert p.hourly("k5") == pytest.approx(0.026172)
    assert p.hourly("k8") == pytest.approx(0.04104)


def test_parameters_must_be_non_negative():
    with pytest.raises(ValueError, match="parameter k4 must be non-negative"):
        HemeParameters(k4=-1.0)


def test_vector_fields():
    ctrl, rad = heme_vector_field("ctrl"), heme_vector_field("rad")
    assert len(ctrl) == 5
    assert len(rad) == 9
    assert all(row.nvars == 10 for row in rad)
    point = np.array([1.0, 100.0, 10.0, 2.0, 5.0, 0.0])
    assert ctrl[1].eval(point) == pytest.approx(20.16)
    point[-1] = 0.5
    assert ctrl[1].eval(point) == pytest.approx(20.16 - 50.0)
    assert ctrl[2].eval(point) == pytest.approx(-1.6092 * 10 - 0.104688 * 20 + 50.0)
    with pytest.raises(ValueError, match="unknown heme mode kind"):
        heme_vector_field("hot")


def test_heme_structure(heme_system):
    assert validate(heme_system) == []
    assert is_time_triggered(heme_system)
    assert [mode.dim for mode in heme_system.modes] == [5, 9] * 7
    assert [mode.time_window for mode in heme_system.modes] == list(PROTOCOL)
    assert heme_system.initial == (1, (0.0, 321.0, 0.0, 0.0, 0.0))
    assert heme_system.inputs.bounds() == [(0.0, 1.0)]


def test_radioactive_reset_appends_zeros(heme_system):
    forward = heme_system.transitions[0]
    post = forward.apply([4.0, 1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(post, [4.0, 1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0])


def test_golden_model_file(heme_system):
    path = artifacts.data_path("heme.json")
    system = system_from_document(artifacts.read_document(path, MODEL_SCHEMA, MODEL_VERSION))
    assert validate(system) == []
    assert system.name == "heme"
    assert len(system.modes) == len(heme_system.modes)
    for loaded, built in zip(system.modes, heme_system.modes):
        assert loaded.domain == built.domain
        for row, expected in zip(loaded.dynamics, built.dynamics):
            assert_same_polynomial(row, expected)
    for loaded, built in zip(system.transitions, heme_system.transitions):
        assert (loaded.source, loaded.destination) == (built.source, built.destination)
        assert loaded.guard == built.guard
        assert loaded.reset_matrix == built.reset_matrix
    assert_same_polynomial(system.measurement, measurement())


def test_measurement():
    m = measurement()
    state = np.zeros(9)
    state[6], state[8] = 100.0, 25.0
    assert m.eval(state) == 200.0


def test_built_in_data_matches_file():
    rows = artifacts.read_csv(artifacts.data_path("heme_data.csv"))
    assert [(float(r["time"]), float(r["value"])) for r in rows] == [
        (p.time, p.value) for p in heme_data()
    ]

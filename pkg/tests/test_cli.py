# pylint: disable=redefined-outer-name
import json
import sys
from pathlib import Path

import click
import pytest

from hocp_revise import artifacts
from hocp_revise.cli import PartialChoice, cli, main
from hocp_revise.models import load_model
from hocp_revise.poly import Polynomial
from hocp_revise.sim import ControlWindow, PolynomialControl


@pytest.fixture()
def hocprevise(runner):
    def invoke(*args, catch_exceptions=False, expected_exit_code=0, **kwargs):
        result = runner.invoke(cli, *args, catch_exceptions=catch_exceptions, **kwargs)
        assert result.exit_code == expected_exit_code, result.output
        return result

    return invoke


@pytest.fixture()
def ramp_control(ramp_files):
    system = load_model(ramp_files[0])
    law = {1: (Polynomial.constant(0.5, 2),)}
    control = PolynomialControl([ControlWindow(0.0, 1.0, law)], system.inputs)
    artifacts.write_document("control.json", control.to_document(system))
    return "control.json"


def test_models_list(hocprevise):
    result = hocprevise("models")
    assert result.output.startswith("heme: haemoglobin production")
    assert hocprevise("models list").output == result.output


def test_models_export_and_validate(hocprevise):
    assert hocprevise("models export heme heme.json").output == "heme.json\n"
    assert json.loads(Path("heme.json").read_text())["name"] == "heme"
    result = hocprevise("validate -m heme.json")
    assert result.output == "heme.json: 14 modes, 13 transitions, ok\n"


def test_validate_reports_problems(hocprevise, ramp_model):
    ramp_model["initial"]["state"] = [0, 5]
    Path("bad.json").write_text(json.dumps(ramp_model), encoding="utf-8")
    result = hocprevise("validate -m bad.json", expected_exit_code=1)
    assert "initial state not in domain of mode 1" in result.output


def test_simulate_heme(hocprevise):
    result = hocprevise("simulate -o out")
    assert result.output.startswith("t=55 mode 14: ")
    assert "epsilon_total: " in result.output
    rows = artifacts.read_csv("out/trajectory.csv")
    assert rows[0]["mode"] == "1"
    assert len(artifacts.read_csv("out/events.csv")) == 13


def test_simulate_with_control(hocprevise, ramp_files, ramp_control):
    result = hocprevise(f"simulate -m {ramp_files[0]} -c {ramp_control} -o out")
    assert result.output == "t=1 mode 1: 0.5\n"


def test_revise(hocprevise, ramp_files):
    model, data = ramp_files
    result = hocprevise(f"revise -m {model} -d {data} -r 1 --max-order 2 -e 1e-3 -o out")
    assert "revising ramp on 1 data points" in result.output
    assert "window 0 [0, 1] accepted:" in result.output
    report = json.loads(Path("out/report.json").read_text())
    assert report["windows"][0]["status"] == "accepted"
    assert report["epsilon_total"] < 0.03
    assert Path("out/control.json").exists()


def test_revise_dumps_layouts(hocprevise, ramp_files):
    model, data = ramp_files
    hocprevise(f"revise -m {model} -d {data} -r 1 --max-order 1 --dump-layouts -o out")
    assert Path("out/layouts/window-00-order-1.json").exists()


def test_reports_are_byte_identical(hocprevise, ramp_files):
    model, data = ramp_files
    for out in ("first", "second"):
        hocprevise(f"revise -m {model} -d {data} -r 1 --max-order 2 -o {out}")
    assert Path("first/report.json").read_bytes() == Path("second/report.json").read_bytes()


def test_export_sdpa(hocprevise, ramp_files):
    model, data = ramp_files
    result = hocprevise(f"export-sdpa -m {model} -d {data} -r 1 --max-order 2 -o out")
    assert "window 0 [0, 1] exported:" in result.output
    assert result.output.splitlines()[-2:] == [
        "out/sdpa/window-00-order-1.dat-s",
        "out/sdpa/window-00-order-2.dat-s",
    ]


def test_fit(hocprevise, ramp_files, ramp_control):
    model, data = ramp_files
    result = hocprevise(f"fit -m {model} -d {data} -c {ramp_control} -b 0.5 -o out")
    families = [line.split()[0] for line in result.output.splitlines() if "epsilon_total" in line]
    assert families == ["revised", "step", "piecewise_poly", "hill"]
    assert "revised         epsilon_total=0.5000" in result.output
    rows = artifacts.read_csv("out/fits.csv")
    assert [row["family"] for row in rows] == families
    assert rows[1]["flags"] == "degenerate"
    for name in ("plot.csv", "controls.svg", "measurement.svg"):
        assert Path("out", name).exists()


def test_fit_partial_family(hocprevise, ramp_files, ramp_control):
    model, data = ramp_files
    result = hocprevise(f"fit -m {model} -d {data} -c {ramp_control} -f st -o out")
    assert [row["family"] for row in artifacts.read_csv("out/fits.csv")] == ["revised", "step"]
    assert "step " in result.output


def test_fit_needs_a_family(hocprevise, ramp_files, ramp_control):
    model, data = ramp_files
    result = hocprevise(
        f"fit -m {model} -d {data} -c {ramp_control} -f , -o out", expected_exit_code=2
    )
    assert "give at least one family" in result.output


@pytest.mark.parametrize(
    ("family", "fitted"),
    [("hil", "hill"), ("p", "piecewise_poly"), ("step", "step")],
)
def test_fit_family_prefix(hocprevise, ramp_files, ramp_control, family, fitted):
    model, data = ramp_files
    hocprevise(f"fit -m {model} -d {data} -c {ramp_control} -f {family} -b 0.5 -o out")
    assert [row["family"] for row in artifacts.read_csv("out/fits.csv")] == ["revised", fitted]


def test_fit_family_must_be_a_prefix(hocprevise, ramp_files, ramp_control):
    model, data = ramp_files
    result = hocprevise(
        f"fit -m {model} -d {data} -c {ramp_control} -f o -o out", expected_exit_code=2
    )
    assert "invalid choice: o" in result.output


def test_partial_choice_rejects_ambiguous_prefix():
    choice = PartialChoice(name="FAMILY", get_choices=lambda: ["step", "steady", "stepwise"])
    assert choice.convert("stea", None, None) == "steady"
    assert choice.convert("step", None, None) == "step"
    with pytest.raises(click.BadParameter, match="ambiguous choice: ste"):
        choice.convert("ste", None, None)


def test_main_reports_missing_model(monkeypatch, capsys, runner):
    monkeypatch.setattr(sys, "argv", ["hocprevise", "validate", "-m", "missing.json"])
    with pytest.raises(SystemExit) as error:
        main()
    assert error.value.code == 1
    assert capsys.readouterr().err == "missing.json: model not found\n"


def test_main_reports_value_errors(monkeypatch, capsys, ramp_files):
    model, _ = ramp_files
    argv = ["hocprevise", "revise", "-m", model, "-d", "nothing.csv"]
    monkeypatch.setattr(sys, "argv", argv)
    with pytest.raises(SystemExit) as error:
        main()
    assert error.value.code == 1
    assert capsys.readouterr().err == "error: nothing.csv: data file not found\n"

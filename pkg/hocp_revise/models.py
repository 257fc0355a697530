from pathlib import Path

import click
from click_default_group import DefaultGroup

from . import artifacts, chs, heme
from .revise import DataPoint, check_data

BUILTIN_MODELS = [
    {
        "id": "heme",
        "description": "haemoglobin production under a 59Fe pulse-chase protocol",
        "file": "heme.json",
        "data": "heme_data.csv",
        "build": heme.build_heme_chs,
    },
]


def get_models():
    return BUILTIN_MODELS


def builtin(name):
    for model in BUILTIN_MODELS:
        if model["id"] == name:
            return model
    return None


def load_model(reference):
    model = builtin(reference)
    if model is not None:
        return model["build"]()
    path = Path(reference)
    if not path.exists():
        raise FileNotFoundError(reference)
    document = artifacts.read_document(path, chs.MODEL_SCHEMA, chs.MODEL_VERSION)
    try:
        return chs.system_from_document(document)
    except KeyError as error:
        raise ValueError(f"{path}: missing field {error}") from error


def load_data(reference, system, model_reference=None):
    if reference is None:
        model = builtin(model_reference)
        if model is None:
            raise ValueError("no data given for a model without built-in data")
        path = artifacts.data_path(model["data"])
    else:
        model = builtin(reference)
        path = artifacts.data_path(model["data"]) if model else Path(reference)
        if not model and not path.exists():
            raise ValueError(f"{reference}: data file not found")
    if system.measurement is None:
        raise ValueError("model defines no measurement to compare data with")
    try:
        points = [
            DataPoint(float(row["time"]), float(row["value"]), system.measurement)
            for row in artifacts.read_csv(path)
        ]
    except (KeyError, TypeError, ValueError) as error:
        raise ValueError(f"{reference}: expected 'time,value' rows ({error})") from error
    check_data(points)
    return points


@click.group(
    cls=DefaultGroup,
    default="list",
    default_if_no_args=True,
    help="View built-in models",
)
def models():
    pass


@models.command(name="list", help="List built-in models")
def list_models():
    for model in get_models():
        click.echo(f"{model['id']}: {model['description']}")


@models.command(name="export", help="Write a built-in model as a model file.")
@click.argument("name", type=click.Choice([model["id"] for model in BUILTIN_MODELS]))
@click.argument("destination", type=click.Path(dir_okay=False))
def export_model(name, destination):
    system = builtin(name)["build"]()
    artifacts.write_document(destination, chs.system_to_document(system))
    click.echo(destination)

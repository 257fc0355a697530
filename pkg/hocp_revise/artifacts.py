import csv
import json
import math
import os
from importlib import resources
from pathlib import Path


OUTPUT_DIR = os.environ.get("HOCPREVISE_OUT", "revision-out")
NUMBER_FORMAT = "%.17g"


def output_dir(path=None):
    directory = Path(path or OUTPUT_DIR)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def data_path(name):
    return resources.files("hocp_revise") / "data" / name


def _plain(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and callable(value.item):
        return _plain(value.item())
    return value


def dumps_document(document):
    return json.dumps(_plain(document), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_document(path, document):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_document(document))
    return path


def read_document(path, schema, version):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as error:
            raise ValueError(f"{path}: not a JSON document ({error})") from error
    if not isinstance(document, dict) or document.get("schema") != schema:
        raise ValueError(f"{path}: expected a {schema} document")
    if document.get("version") != version:
        raise ValueError(
            f"{path}: unsupported {schema} version {document.get('version')!r}"
        )
    return document


def format_number(value):
    return NUMBER_FORMAT % value


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_number(v) if isinstance(v, float) else v for v in row]
            )
    return path


def read_csv(path):
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)

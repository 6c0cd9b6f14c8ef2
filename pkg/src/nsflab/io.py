"""Output files: atomic writes, the diagnostics CSV, JSON reports and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from .functionals import SCHEMA_VERSION, DiagnosticsRecord


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return sha256_bytes(fh.read())


def write_atomic(path, data) -> str:
    """Write ``data`` (bytes or str) to a temp file in the target directory and
    rename it into place. Returns the SHA-256 of the bytes written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return sha256_bytes(data)


# --- config ---------------------------------------------------------------------

def load_yaml(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


# --- CSV ----------------------------------------------------------------------------

def _fmt(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))


def table_to_csv(columns: list, rows, comment: str | None = None) -> str:
    buf = _io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def records_to_csv(records) -> str:
    return table_to_csv(DiagnosticsRecord.columns(), (r.as_row() for r in records),
                        comment=f"nsflab diagnostics schema {SCHEMA_VERSION}")


def read_csv(path_or_text, expect_columns=None) -> dict:
    """Parse a CSV written by this package into a dict of float arrays."""
    text = path_or_text
    if not isinstance(text, str) or "\n" not in text:
        text = Path(path_or_text).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if expect_columns is not None and header != list(expect_columns):
        missing = sorted(set(expect_columns) - set(header))
        extra = sorted(set(header) - set(expect_columns))
        raise ValueError(f"CSV columns do not match schema (missing {missing}, extra {extra})")
    rows = [[float(v) for v in row] for row in reader if row]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: arr[:, i] for i, name in enumerate(header)}


def read_diagnostics_csv(path) -> dict:
    return read_csv(path, DiagnosticsRecord.columns())


# --- JSON ------------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "command", "status"],
    "properties": {
        "schema_version": {"type": "string"},
        "command": {"enum": ["simulate", "diagnose", "twin", "fit", "selftest"]},
        "status": {"type": "string"},
    },
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "code_version", "command", "scenario", "resolved",
                 "outputs", "steps", "wall_clock_s"],
    "properties": {
        "outputs": {"type": "object", "additionalProperties": {"type": "string",
                                                               "pattern": "^[0-9a-f]{64}$"}},
        "steps": {"type": "integer", "minimum": 0},
        "wall_clock_s": {"type": "number", "minimum": 0},
    },
}


def dumps_json(obj, schema=None) -> str:
    data = _jsonable(obj)
    if schema is not None:
        jsonschema.validate(data, schema)
    return json.dumps(data, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(path, report: dict) -> str:
    return write_atomic(path, dumps_json(report, REPORT_SCHEMA))


@dataclass
class RunManifest:
    command: str
    scenario: dict
    resolved: dict
    steps: int = 0
    wall_clock_s: float = 0.0
    outputs: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION
    code_version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> str:
        return write_atomic(path, dumps_json(self.to_dict(), MANIFEST_SCHEMA))


def verify_manifest(manifest_path) -> list:
    """Names of outputs whose current hash differs from the manifest."""
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    bad = []
    for name, digest in data["outputs"].items():
        p = manifest_path.parent / name
        if not p.exists() or sha256_file(p) != digest:
            bad.append(name)
    return bad

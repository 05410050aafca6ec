"""CSV and JSON persistence.

Every CSV starts with one ``#``-prefixed line of JSON metadata followed by
a column-name row.  Floats are written with 17 significant digits so that a
write/read cycle reproduces the binary values exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = 1
CODE_VERSION = f"lgfpf {__version__}"


class FileFormatError(ValueError):
    """A file that does not follow the expected layout or schema."""


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: str | Path, header: dict, columns: list[str], rows) -> None:
    """Write ``rows`` (2-D array-like) under a JSON header line."""
    path = Path(path)
    header = dict(header, schema_version=SCHEMA_VERSION, code_version=CODE_VERSION, columns=list(columns))
    data = np.asarray(rows, dtype=float)
    if data.size and data.shape[1] != len(columns):
        raise ValueError(f"{len(columns)} columns but rows have width {data.shape[1]}")
    lines = ["# " + json.dumps(header, sort_keys=True), ",".join(columns)]
    lines.extend(",".join(map(fmt, row)) for row in data)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path: str | Path) -> tuple[dict, np.ndarray]:
    """Return ``(header, data)``; the column names are in ``header['columns']``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith("#"):
        raise FileFormatError(f"{path}: missing '#' JSON header line")
    try:
        header = json.loads(lines[0][1:])
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: bad header JSON ({exc})") from None
    if header.get("schema_version") != SCHEMA_VERSION:
        raise FileFormatError(f"{path}: schema_version {header.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    columns = header.get("columns")
    if lines[1].split(",") != columns:
        raise FileFormatError(f"{path}: column row does not match header")
    body = lines[2:]
    data = np.array([[float(v) for v in ln.split(",")] for ln in body]) if body else np.empty((0, len(columns)))
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise FileFormatError(f"{path}: ragged rows")
    return header, data


def write_json(path: str | Path, obj: dict) -> None:
    Path(path).write_text(json.dumps(_round_trip_floats(obj), indent=2, sort_keys=True) + "\n")


def _round_trip_floats(obj):
    # json already emits repr(), which round-trips; normalize numpy scalars
    if isinstance(obj, dict):
        return {k: _round_trip_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_trip_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def read_json(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


@dataclass(frozen=True)
class Trajectory:
    """True state path and observation increments.

    Row ``k`` holds the time ``t_k = (k + 1) dt``, the true state at
    ``t_k`` and the increment ``dZ`` over ``[t_k - dt, t_k]``.
    """

    config_hash: str
    seed: int
    group: str
    initial_state: np.ndarray
    t: np.ndarray
    states: np.ndarray
    dz: np.ndarray

    @property
    def state_columns(self) -> list[str]:
        return ["theta"] if self.group == "SO2" else ["q0", "q1", "q2", "q3"]

    def observations(self):
        return list(zip(self.t.tolist(), self.dz.tolist()))

    def write(self, path: str | Path) -> None:
        header = {
            "kind": "trajectory",
            "config_hash": self.config_hash,
            "seed": self.seed,
            "group": self.group,
            "initial_state": [float(v) for v in np.atleast_1d(self.initial_state)],
        }
        rows = np.column_stack([self.t, self.states.reshape(len(self.t), -1), self.dz])
        write_csv(path, header, ["t", *self.state_columns, "dz"], rows)

    @classmethod
    def read(cls, path: str | Path) -> "Trajectory":
        header, data = read_csv(path)
        if header.get("kind") != "trajectory":
            raise FileFormatError(f"{path}: not a trajectory file")
        group = header["group"]
        width = 1 if group == "SO2" else 4
        if data.shape[1] != width + 2:
            raise FileFormatError(f"{path}: wrong number of columns for {group}")
        t = data[:, 0]
        if t.size and np.any(np.diff(t) <= 0):
            raise FileFormatError(f"{path}: times are not increasing")
        states = data[:, 1] if group == "SO2" else data[:, 1 : 1 + width]
        init = np.asarray(header["initial_state"], dtype=float)
        return cls(header["config_hash"], int(header["seed"]), group, init if width > 1 else init[0], t, states, data[:, -1])

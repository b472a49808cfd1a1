"""CSV and JSON artefacts written by experiment runs.

Files are written to a temporary sibling first and moved into place, so an
interrupted run never leaves a half-written result behind.
"""

import csv
import io
import json
import logging
import os
import threading
from pathlib import Path as FsPath
from typing import Iterable, Sequence

import numpy as np

from . import constants
from .errors import ConfigError
from .geometry import ChartMetric
from .paths_action import Path
from .propagator import Boundary, WaveField

log = logging.getLogger(__name__)


def json_safe(value):
    """Map NaN and infinities to None so the result is strict JSON."""
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return json_safe(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value


def format_float(value) -> str:
    return format(float(value), constants.FLOAT_FORMAT)


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter=",", lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


class ArtifactWriter:
    """Writes run outputs into one directory."""

    def __init__(self, directory: str, formats: Sequence[str] = ("csv", "json")):
        self.directory = directory
        self.formats = tuple(formats)
        self.written: list[str] = []
        self._save_lock = threading.Lock()
        log.debug(f"ArtifactWriter initialized for {self.directory} ({', '.join(self.formats)})")

    def _write_text(self, name: str, text: str) -> str:
        target = os.path.join(self.directory, name)
        with self._save_lock:
            temp_path = None
            try:
                FsPath(self.directory).mkdir(parents=True, exist_ok=True)
                temp_path = f"{target}.temp"
                with open(temp_path, "w", encoding="utf-8", newline="") as f:
                    f.write(text)
                    f.flush()
                    os.fsync(f.fileno())
                os.replace(temp_path, target)
            except OSError as e:
                log.error(f"Error writing {target}: {e}")
                if temp_path and os.path.exists(temp_path):
                    try:
                        os.remove(temp_path)
                    except OSError as rm_e:
                        log.error(f"Failed to remove temporary file {temp_path}: {rm_e}")
                raise ConfigError(f"output.directory: cannot write {target}: {e}") from e
        self.written.append(target)
        log.debug(f"Wrote {target}")
        return target

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> str | None:
        if "csv" not in self.formats:
            return None
        return self._write_text(name, csv_text(header, rows))

    def write_json(self, name: str, payload) -> str | None:
        if "json" not in self.formats:
            return None
        text = json.dumps(json_safe(payload), indent=2, sort_keys=True, allow_nan=False)
        return self._write_text(name, text + "\n")

    def write_path(self, name: str, path: Path) -> str | None:
        header = ["tau"] + [f"x{i}" for i in range(path.dim)]
        rows = (np.concatenate([[t], x]) for t, x in zip(path.params, path.nodes))
        return self.write_csv(name, header, rows)

    def write_field(self, name: str, field: WaveField) -> str | None:
        dim = len(field.shape)
        header = [f"x{i}" for i in range(dim)] + ["re", "im"]
        pts = field.points.reshape(-1, dim)
        values = field.values.ravel()
        rows = (list(p) + [v.real, v.imag] for p, v in zip(pts, values))
        return self.write_csv(name, header, rows)


def _read_table(filename: str) -> tuple[list[str], np.ndarray]:
    try:
        with open(filename, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    except (OSError, StopIteration, ValueError) as e:
        raise ConfigError(f"cannot read table {filename}: {e}") from e
    return header, data


def read_path(filename: str) -> Path:
    header, data = _read_table(filename)
    if not header or header[0] != "tau":
        raise ConfigError(f"{filename}: path tables start with a 'tau' column")
    return Path(data[:, 1:], data[:, 0])


def read_field(filename: str, metric: ChartMetric, boundary: Boundary | None = "periodic") -> WaveField:
    header, data = _read_table(filename)
    if header[-2:] != ["re", "im"]:
        raise ConfigError(f"{filename}: field tables end with 're' and 'im' columns")
    dim = len(header) - 2
    axes = tuple(np.unique(data[:, i]) for i in range(dim))
    shape = tuple(a.size for a in axes)
    if int(np.prod(shape)) != data.shape[0]:
        raise ConfigError(f"{filename}: {data.shape[0]} rows do not fill a {shape} lattice")
    values = (data[:, -2] + 1j * data[:, -1]).reshape(shape)
    return WaveField(axes, values, metric, boundary)

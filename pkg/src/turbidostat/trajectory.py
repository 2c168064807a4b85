"""Time-indexed closed/open-loop records and their CSV form."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import U_MAX, U_MIN

COLUMNS = ("time_min", "od_true", "od_meas", "setpoint", "pump_rate", "temp_c")


class ParseError(ValueError):
    """Malformed CSV input."""


@dataclass
class Trajectory:
    t: np.ndarray
    x_true: np.ndarray
    y_meas: np.ndarray
    setpoint: np.ndarray
    u: np.ndarray
    temp_c: np.ndarray

    def __post_init__(self):
        for name in ("t", "x_true", "y_meas", "setpoint", "u", "temp_c"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.t.size
        for name in ("x_true", "y_meas", "setpoint", "u", "temp_c"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"column {name} has length {getattr(self, name).size}, expected {n}")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("time stamps must be strictly increasing")
        if np.any((self.u < U_MIN) | (self.u > U_MAX)):
            raise ValueError("pump rate outside [0, 0.02]")

    def __len__(self):
        return self.t.size

    def same_grid(self, other: "Trajectory") -> bool:
        return self.t.shape == other.t.shape and bool(np.all(self.t == other.t))

    def to_csv(self, path=None) -> str:
        """Write with fixed column order and ``repr`` floats; returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in zip(self.t, self.x_true, self.y_meas, self.setpoint, self.u, self.temp_c):
            w.writerow(["" if math.isnan(v) else repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        cols = read_columns(path, required=("time_min", "pump_rate"), optional=COLUMNS + ("od",))
        n = len(cols["time_min"])
        nan = [math.nan] * n
        y = cols.get("od_meas") or cols.get("od")
        if y is None:
            raise ParseError(f"{path}: missing column 'od_meas' (or 'od')")
        return cls(
            t=cols["time_min"],
            x_true=cols.get("od_true") or nan,
            y_meas=y,
            setpoint=cols.get("setpoint") or nan,
            u=cols["pump_rate"],
            temp_c=cols.get("temp_c") or [37.0] * n,
        )


def read_columns(path, required, optional=()) -> dict[str, list[float]]:
    """Parse a numeric CSV with a header row.

    Errors carry the file name and 1-based line number.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        for name in required:
            if name not in header:
                raise ParseError(f"{path}:1: missing column '{name}'")
        wanted = [h for h in header if h in set(required) | set(optional)]
        out: dict[str, list[float]] = {h: [] for h in wanted}
        idx = {h: header.index(h) for h in wanted}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for h, i in idx.items():
                cell = row[i].strip()
                try:
                    out[h].append(math.nan if cell == "" else float(cell))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: column '{h}': not a number: {cell!r}") from None
    return out

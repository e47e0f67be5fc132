"""Delimited output with a self-describing comment header.

Every file starts with ``#`` lines holding the tool version and the full run
configuration as JSON, followed by one column-name line and comma-separated
rows. Floats are written with nine significant digits.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

__all__ = ["RunConfig", "format_value", "write_csv", "read_csv"]


@dataclass
class RunConfig:
    """Everything needed to reproduce one CLI invocation."""

    command: str
    model: dict
    options: dict = field(default_factory=dict)
    out: str = "."
    seed: int = 0
    threads: int = 1
    preset: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_jsonable)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (tuple, set)):
        return list(x)
    raise TypeError(f"not serialisable: {type(x).__name__}")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return f"{v:.9g}"
    return str(v)


def write_csv(path, columns, rows, config: RunConfig | None = None, comments=()) -> Path:
    """Write ``rows`` (an iterable of sequences) under ``columns``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# dicke_dtc {__version__}\n")
        if config is not None:
            fh.write(f"# config {config.to_json()}\n")
            fh.write(f"# seed {config.seed}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
    return path


def read_csv(path):
    """Return ``(config or None, columns, rows)``; numeric fields become floats."""
    config = None
    columns = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if line.startswith("# config "):
                    config = RunConfig.from_json(line[len("# config "):])
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append([_parse(v) for v in line.split(",")])
    return config, columns, rows


def _parse(v):
    try:
        return float(v)
    except ValueError:
        return v

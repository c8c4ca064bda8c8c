"""CSV and report writers.

Every file starts with ``#`` comment lines carrying the package version, the
config hash and the master seed.  Floats are written with ``repr`` so output
is byte-stable for a given input.
"""
from __future__ import annotations

import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__


def header_lines(config_hash: str, seed: int, kind: str) -> list[str]:
    return [f"# hawkeslab {__version__} {kind}", f"# config_sha256={config_hash} seed={seed}"]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, columns: dict, config_hash: str, seed: int, kind: str) -> Path:
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("all CSV columns must have equal length")
    lines = header_lines(config_hash, seed, kind)
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(_fmt(a[i]) for a in arrays))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    """Column names and a float array of the data rows."""
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    names = rows[0].split(",")
    data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]]).reshape(-1, len(names))
    return names, data


def plain(obj):
    """Convert dataclasses / numpy values into YAML-safe builtins."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def write_report(path: Path, data: dict, config_hash: str, seed: int, kind: str) -> Path:
    body = yaml.safe_dump(plain(data), sort_keys=True, default_flow_style=False, width=100)
    path = Path(path)
    path.write_text("\n".join(header_lines(config_hash, seed, kind)) + "\n" + body)
    return path


def read_report(path: Path) -> dict:
    return yaml.safe_load(Path(path).read_text())

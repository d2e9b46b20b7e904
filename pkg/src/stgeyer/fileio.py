"""Pattern CSV files, run configuration documents and atomic writes."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from .geometry import PointPattern, SpacetimeWindow

__all__ = [
    "PatternFileError",
    "ConfigError",
    "atomic_write_text",
    "atomic_write_bytes",
    "read_pattern_csv",
    "write_pattern_csv",
    "pattern_to_csv",
    "load_config",
    "validate_config",
    "CONFIG_SCHEMA",
]

WINDOW_PREFIX = "# window: "


class PatternFileError(ValueError):
    """A pattern file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConfigError(ValueError):
    """A configuration document failed parsing (``kind='parse'``) or
    schema validation (``kind='validation'``)."""

    def __init__(self, message, kind="validation", field=None):
        super().__init__(message)
        self.kind = kind
        self.field = field


def _file_mode() -> int:
    # mkstemp creates 0600 files; give outputs the usual umask-derived mode
    mask = os.umask(0)
    os.umask(mask)
    return 0o666 & ~mask


_FILE_MODE = _file_mode()


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        os.fchmod(fd, _FILE_MODE)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def pattern_to_csv(pattern: PointPattern) -> str:
    buf = io.StringIO()
    buf.write(WINDOW_PREFIX + json.dumps(pattern.window.to_dict()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "t"])
    for row in pattern.points.tolist():
        w.writerow([repr(v) for v in row])
    return buf.getvalue()


def write_pattern_csv(path, pattern: PointPattern) -> None:
    """Write ``x,y,t`` rows preceded by a ``# window: {...}`` comment line."""
    atomic_write_text(path, pattern_to_csv(pattern))


def read_pattern_csv(path, window: SpacetimeWindow | None = None) -> PointPattern:
    """Read a pattern file.

    The window comes from a leading ``# window: {json}`` comment, else from a
    sidecar ``<path>.window.json``, else from ``window``.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    declared = None
    body_start = 0
    if lines and lines[0].startswith("#"):
        head = lines[0]
        if head.startswith(WINDOW_PREFIX):
            try:
                declared = SpacetimeWindow.from_dict(json.loads(head[len(WINDOW_PREFIX):]))
            except (ValueError, KeyError, TypeError) as exc:
                raise PatternFileError(f"bad window declaration: {exc}", 1) from None
        body_start = 1
    if declared is None:
        sidecar = path.with_name(path.name + ".window.json")
        if sidecar.exists():
            try:
                declared = SpacetimeWindow.from_dict(json.loads(sidecar.read_text()))
            except (ValueError, KeyError, TypeError) as exc:
                raise PatternFileError(f"bad window sidecar {sidecar}: {exc}") from None
    declared = declared or window
    if declared is None:
        raise PatternFileError("no window declared for the pattern")
    if len(lines) <= body_start or [c.strip() for c in lines[body_start].split(",")] != ["x", "y", "t"]:
        raise PatternFileError("expected header 'x,y,t'", body_start + 1)
    rows = []
    for lineno in range(body_start + 2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text:
            continue
        fields = text.split(",")
        if len(fields) != 3:
            raise PatternFileError(f"expected 3 fields, got {len(fields)}", lineno)
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise PatternFileError(f"non-numeric value in {text!r}", lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise PatternFileError("non-finite coordinate", lineno)
        if not declared.contains(vals)[0]:
            raise PatternFileError(f"event {tuple(vals)} lies outside the window", lineno)
        rows.append(vals)
    return PointPattern(np.array(rows).reshape(-1, 3), declared)


_interval = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 2,
    "maxItems": 2,
}
_pos = {"type": "number", "exclusiveMinimum": 0}
_scale = {
    "type": "object",
    "additionalProperties": False,
    "required": ["r", "q", "s"],
    "properties": {
        "gamma": _pos,
        "r": _pos,
        "q": _pos,
        "s": {"type": "number", "minimum": 0},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "window": {
            "type": "object",
            "additionalProperties": False,
            "required": ["x", "y", "t"],
            "properties": {"x": _interval, "y": _interval, "t": _interval},
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["scales"],
            "properties": {
                "beta": _pos,
                "trend_raster": {"type": "array"},
                "scales": {"type": "array", "minItems": 1, "items": _scale},
            },
        },
        "mcmc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_steps": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
                "thin": {"type": "integer", "minimum": 1},
                "initial": {
                    "oneOf": [
                        {"enum": ["empty", "poisson"]},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["poisson"],
                            "properties": {"poisson": _pos},
                        },
                    ]
                },
            },
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["pseudo", "logistic"]},
                "grid": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 3,
                    "maxItems": 3,
                },
                "dummy_per_cell": {"type": "integer", "minimum": 1},
                "rho": _pos,
                "candidates": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "minItems": 1, "items": _scale},
                },
            },
        },
        "study": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_replicates": {"type": "integer", "minimum": 1},
                "methods": {
                    "type": "array",
                    "minItems": 1,
                    "uniqueItems": True,
                    "items": {"enum": ["pseudo", "logistic"]},
                },
                "name": {"type": "string"},
                "svg": {"type": "boolean"},
            },
        },
        "gnz": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_patterns": {"type": "integer", "minimum": 1},
                "grid": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 3,
                    "maxItems": 3,
                },
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
}


def _path_name(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else part)
    return out or "<root>"


def validate_config(doc) -> dict:
    """Schema-check a configuration mapping plus the cross-field rules."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        name = _path_name(err.absolute_path)
        raise ConfigError(f"{name}: {err.message}", "validation", name)
    win = doc.get("window")
    if win is not None:
        for axis in "xyt":
            lo, hi = win[axis]
            if not hi > lo:
                raise ConfigError(f"window.{axis}: interval must have positive length", field=f"window.{axis}")
    mcmc = doc.get("mcmc", {})
    if mcmc.get("burn_in", 0) > mcmc.get("n_steps", 20_000):
        raise ConfigError("mcmc.burn_in: must not exceed n_steps", field="mcmc.burn_in")
    return doc


def load_config(path) -> dict:
    """Parse and validate a JSON configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", "parse") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}", "parse") from None
    return validate_config(copy.deepcopy(doc))

"""Configuration loading and self-describing JSON/CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .params import PARAM_KEYS, ModelParams, ParameterError

CONFIG_ENV = "REVINVEST_CONFIG"
COMMANDS = ("solve-single", "solve-mfg", "sweep", "simulate", "nash-gap", "check")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    params: ModelParams
    command: str
    options: dict = field(default_factory=dict)
    output: str | None = None  # None means stdout
    format: str = "json"
    source: str | None = None

    def header(self) -> dict:
        head = {
            "tool": "revinvest",
            "version": __version__,
            "command": self.command,
            "params": self.params.to_dict(),
        }
        if "seed" in self.options:
            head["seed"] = self.options["seed"]
        return head


def read_config_file(path: str | os.PathLike) -> dict:
    """Flat ``key: value`` YAML file with model parameter keys only."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a flat key-value mapping")
    for key, value in data.items():
        if key not in PARAM_KEYS:
            raise ConfigError(f"unknown key {key!r} in {path}; allowed: {', '.join(PARAM_KEYS)}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} in {path} must be a number, got {value!r}")
    return data


def load_config(
    command: str,
    path: str | None = None,
    overrides: dict | None = None,
    options: dict | None = None,
    output: str | None = None,
    fmt: str = "json",
) -> RunConfig:
    """Merge defaults, an optional file and flag overrides into a RunConfig.

    Precedence: flags > file > defaults. Without ``path`` the file named by
    the ``REVINVEST_CONFIG`` environment variable is used if set.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    values = ModelParams().to_dict()
    if path is not None:
        values.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if key not in PARAM_KEYS:
            raise ConfigError(f"unknown parameter key {key!r}")
        if value is not None:
            values[key] = value
    try:
        params = ModelParams.from_dict(values)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    if fmt not in ("json", "csv"):
        raise ConfigError(f"format must be json or csv, got {fmt!r}")
    return RunConfig(params, command, dict(options or {}), output, fmt, path)


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def dump_json(payload: dict, header: dict, target: str | None = None) -> str:
    text = json.dumps(_clean({**header, **payload}), indent=2, ensure_ascii=False) + "\n"
    _write(text, target)
    return text


def dump_csv(columns, rows, header: dict, target: str | None = None) -> str:
    """CSV with '#'-prefixed metadata lines, a header row and '.' decimals."""
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key}: {json.dumps(value, ensure_ascii=False)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    _write(text, target)
    return text


def _fmt(v) -> str:
    if isinstance(v, float) or hasattr(v, "dtype"):
        return repr(float(v))
    return str(v)


def _write(text: str, target: str | None):
    if target is None or target == "-":
        sys.stdout.write(text)
    else:
        Path(target).write_text(text, encoding="utf-8")

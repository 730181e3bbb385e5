"""
Settings, exit codes and vector-file helpers shared by the CLI commands.
"""

import configparser
import csv
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, validator

from align.lorentz import SolverOptions
from constants import (
    BENCHMARK_SECTION,
    LOG_FILE,
    LOGGING_SECTION,
    LORENTZ_ALIGN_LOG_NAME,
    SETTINGS_CONFIG_FILE,
    SOLVER_SECTION,
)
from errors import ConfigError, VectorFileError


logger = logging.getLogger(LORENTZ_ALIGN_LOG_NAME)


LORENTZ_HEADER = ("t", "x", "y", "z")
EUCLID_HEADER = ("x", "y", "z")

MACHINE_FORMAT = ".17g"
HUMAN_FORMAT = ".6g"


class ExitCodes(Enum):
    """
    Code OK: command succeeded
    Code FAILURE: command failed, reason on stderr
    Code WARNING: result produced, but with diagnostics attached
    """

    OK = 0
    FAILURE = 1
    WARNING = 2


class AppSettings(BaseModel):
    log_level: str = "DEBUG"
    console_level: str = "ERROR"
    # empty string disables the log file
    log_file: str = LOG_FILE
    solver: SolverOptions = Field(default_factory=SolverOptions)
    workers: int = 1

    @validator("log_level", "console_level")
    def _known_level(cls, value, field):
        value = value.strip().upper()
        if not isinstance(logging.getLevelName(value), int):
            raise ValueError(f"{field.name} must be a logging level name, got {value!r}")
        return value

    @validator("workers")
    def _positive_workers(cls, value):
        if value < 1:
            raise ValueError(f"workers must be at least 1, got {value}")
        return value


# (section, option, settings key, getter name)
_LOGGING_KEYS = (
    (LOGGING_SECTION, "level", "log_level", "get"),
    (LOGGING_SECTION, "console_level", "console_level", "get"),
    (LOGGING_SECTION, "file", "log_file", "get"),
)
_SOLVER_KEYS = (
    (SOLVER_SECTION, "grad_tol", "grad_tol", "getfloat"),
    (SOLVER_SECTION, "step_tol", "step_tol", "getfloat"),
    (SOLVER_SECTION, "max_iters", "max_iters", "getint"),
    (SOLVER_SECTION, "fd_step", "fd_step", "getfloat"),
    (SOLVER_SECTION, "warm_start", "warm_start", "getboolean"),
)
_BENCHMARK_KEYS = ((BENCHMARK_SECTION, "workers", "workers", "getint"),)


def _read_keys(config: configparser.ConfigParser, keys) -> dict:
    values = {}
    for section, option, key, getter in keys:
        try:
            config[section][option]
        except KeyError:
            logger.debug({"operation": "load_settings", "status": "default", "key": f"{section}.{option}"})
            continue
        try:
            values[key] = getattr(config, getter)(section, option)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {option}: {exc}") from exc
    return values


def load_settings(path: Optional[Path] = None) -> AppSettings:
    """
    Read ``lorentz_align.ini``; missing sections or keys keep their defaults.

    An explicitly given path must exist. The default file is optional.
    """
    config_path = Path(path if path is not None else SETTINGS_CONFIG_FILE).resolve()
    config = configparser.ConfigParser()
    try:
        found = config.read(config_path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {config_path}: {exc}") from exc
    if path is not None and not found:
        raise ConfigError(f"settings file '{config_path}' could not be read")

    top = _read_keys(config, _LOGGING_KEYS + _BENCHMARK_KEYS)
    solver = _read_keys(config, _SOLVER_KEYS)
    try:
        return AppSettings(**top, solver=SolverOptions(**solver))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def format_machine(value: float) -> str:
    return format(float(value), MACHINE_FORMAT)


def format_human(value: float) -> str:
    return format(float(value), HUMAN_FORMAT)


def _parse_number(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise VectorFileError(f"{where}: '{text}' is not a number") from exc
    if not math.isfinite(value):
        raise VectorFileError(f"{where}: '{text}' is not finite")
    return value


def read_vector_file(path: Path, header: Sequence[str] = LORENTZ_HEADER) -> np.ndarray:
    """
    Rows of a VectorFile as an n x d array (one vector per row).

    The first line must be exactly the expected header, e.g. ``t,x,y,z``.
    """
    path = Path(path)
    try:
        with open(path, newline="") as src:
            rows = [row for row in csv.reader(src) if any(cell.strip() for cell in row)]
    except OSError as exc:
        raise VectorFileError(f"cannot read {path}: {exc.strerror}") from exc

    if not rows:
        raise VectorFileError(f"{path} is empty")
    found = tuple(cell.strip().lower() for cell in rows[0])
    if found != tuple(header):
        raise VectorFileError(f"{path}: expected header '{','.join(header)}', got '{','.join(found)}'")
    if len(rows) == 1:
        raise VectorFileError(f"{path} has no vectors")

    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise VectorFileError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        data.append([_parse_number(cell.strip(), f"{path}:{lineno}") for cell in row])
    return np.array(data)


def write_vector_file(path: Path, rows: np.ndarray, header: Sequence[str] = LORENTZ_HEADER) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_machine(v) for v in row])


def write_matrix_file(path: Path, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        for row in np.asarray(matrix, dtype=float):
            writer.writerow([format_machine(v) for v in row])


def parse_triple(text: str, name: str) -> Tuple[float, float, float]:
    """'a,b,c' -> (a, b, c)."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"{name} needs three comma-separated numbers, got '{text}'")
    values = []
    for part in parts:
        try:
            value = float(part)
        except ValueError as exc:
            raise ConfigError(f"{name}: '{part}' is not a number") from exc
        if not math.isfinite(value):
            raise ConfigError(f"{name}: '{part}' is not finite")
        values.append(value)
    return tuple(values)


def matrix_lines(matrix: np.ndarray, fmt: Callable[[float], str] = format_machine) -> List[str]:
    return ["  ".join(fmt(v) for v in row) for row in np.asarray(matrix, dtype=float)]

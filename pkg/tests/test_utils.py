import numpy as np
import pytest

from constants import SETTINGS_CONFIG_FILE
from errors import ConfigError, VectorFileError
from utils import (
    EUCLID_HEADER,
    LORENTZ_HEADER,
    ExitCodes,
    format_human,
    format_machine,
    load_settings,
    parse_triple,
    read_vector_file,
    write_vector_file,
)


def test_exit_codes():
    assert (ExitCodes.OK.value, ExitCodes.FAILURE.value, ExitCodes.WARNING.value) == (0, 1, 2)


def test_settings_default_without_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    settings = load_settings()
    assert settings.console_level == "ERROR"
    assert settings.workers == 1
    assert settings.solver.grad_tol == 1e-12
    assert settings.solver.max_iters == 10000
    assert not settings.solver.warm_start


def test_settings_from_default_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / SETTINGS_CONFIG_FILE).write_text(
        "[LOGGING]\nconsole_level = info\nfile =\n\n"
        "[SOLVER]\nmax_iters = 50\nwarm_start = yes\n\n"
        "[BENCHMARK]\nworkers = 4\n"
    )
    settings = load_settings()
    assert settings.console_level == "INFO"
    assert settings.log_file == ""
    assert settings.solver.max_iters == 50
    assert settings.solver.warm_start
    # untouched keys keep their defaults
    assert settings.solver.fd_step == 1e-6
    assert settings.workers == 4


@pytest.mark.parametrize(
    "body",
    [
        "[SOLVER]\ngrad_tol = tiny\n",
        "[SOLVER]\ngrad_tol = -1\n",
        "[LOGGING]\nlevel = LOUD\n",
        "[BENCHMARK]\nworkers = 0\n",
        "not an ini file",
    ],
)
def test_invalid_settings(tmp_path, body):
    path = tmp_path / "custom.ini"
    path.write_text(body)
    with pytest.raises(ConfigError):
        load_settings(path)


def test_explicit_settings_file_must_exist(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "missing.ini")


def test_vector_file_roundtrip(tmp_path):
    rows = np.array([[1.0, 0.0, 0.0, 0.0], [2.0 ** 0.5, 1.0, 0.0, 0.0], [1.25, 0.1, -0.7, 1e-17]])
    path = tmp_path / "a.csv"
    write_vector_file(path, rows)
    assert path.read_text().splitlines()[0] == "t,x,y,z"
    assert np.array_equal(read_vector_file(path), rows)


def test_euclidean_vector_file(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("x, y, z\n1, 2, 3\n\n4,5,6\n")
    assert read_vector_file(path, EUCLID_HEADER).tolist() == [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]
    with pytest.raises(VectorFileError):
        read_vector_file(path, LORENTZ_HEADER)


@pytest.mark.parametrize(
    "body",
    [
        "",
        "t,x,y,z\n",
        "t,x,y\n1,0,0\n",
        "t,x,y,z\n1,0,0\n",
        "t,x,y,z\n1,0,zero,0\n",
        "t,x,y,z\n1,0,nan,0\n",
    ],
)
def test_bad_vector_files(tmp_path, body):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(VectorFileError):
        read_vector_file(path)


def test_missing_vector_file(tmp_path):
    with pytest.raises(VectorFileError):
        read_vector_file(tmp_path / "nope.csv")


def test_parse_triple():
    assert parse_triple("0.1, -0.2,3", "--zeta") == (0.1, -0.2, 3.0)
    for bad in ("1,2", "1,2,x", "1,2,inf"):
        with pytest.raises(ConfigError):
            parse_triple(bad, "--zeta")


def test_number_formats():
    assert format_machine(0.1) == "0.10000000000000001"
    assert float(format_machine(1.0 / 3.0)) == 1.0 / 3.0
    assert format_human(1.0 / 3.0) == "0.333333"

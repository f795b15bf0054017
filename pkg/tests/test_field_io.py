import json

import numpy as np
import pytest

from field_io import (
    append_csv_row, read_csv, read_report, read_spfield, write_csv, write_manifest, write_report, write_spfield,
)
from grid_utils import build_domain
from solver_io import ConfigError


def test_spfield_ascii_header_and_values(tmp_path):
    domain = build_domain((2.0, 1.0), 8)
    values = np.arange(32, dtype=float).reshape(domain.shape) / 7.0
    path = write_spfield(tmp_path / "f.spf", domain, values)

    with open(path, "rb") as f:
        first = f.readline().decode("ascii").split()
    assert first == ["SPFIELD", "v1", "2", "8", "4", "0.25", "ascii"]

    header, loaded = read_spfield(path)
    assert header["shape"] == (8, 4)
    assert header["h"] == 0.25
    assert np.array_equal(loaded, values)


def test_spfield_binary(tmp_path):
    domain = build_domain((1.0, 1.0, 1.0), 4)
    values = np.random.default_rng(0).random(domain.shape)
    path = write_spfield(tmp_path / "f.spf", domain, values, binary=True)
    header, loaded = read_spfield(path)
    assert header["encoding"] == "binary"
    assert header["dim"] == 3
    assert np.array_equal(loaded, values)


def test_spfield_rejects_bad_input(tmp_path):
    domain = build_domain((1.0, 1.0), 4)
    with pytest.raises(ConfigError):
        write_spfield(tmp_path / "f.spf", domain, np.zeros((3, 3)))

    bad = tmp_path / "bad.spf"
    bad.write_text("NOTAFIELD 1 2\n1 2 3\n")
    with pytest.raises(ConfigError):
        read_spfield(bad)

    short = tmp_path / "short.spf"
    short.write_text("SPFIELD v1 2 4 4 0.25 ascii\n1 2 3\n")
    with pytest.raises(ConfigError):
        read_spfield(short)


def test_csv_uses_repr_floats(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "b", "c", "d"], [[0.1, 1 / 3, True, None]])
    lines = open(path, encoding="utf-8").read().splitlines()
    assert lines == ["a,b,c,d", "0.1,0.3333333333333333,true,"]


def test_identical_rows_give_identical_bytes(tmp_path):
    rows = [[i, np.sqrt(i + 0.5)] for i in range(20)]
    write_csv(tmp_path / "a.csv", ["i", "x"], rows)
    write_csv(tmp_path / "b.csv", ["i", "x"], rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_append_writes_header_once(tmp_path):
    path = tmp_path / "trace.csv"
    append_csv_row(str(path), ["iteration", "objective"], [0, 1.5])
    append_csv_row(str(path), ["iteration", "objective"], [1, 1.25])
    rows = read_csv(path)
    assert [r["objective"] for r in rows] == ["1.5", "1.25"]


def test_report_flattens_nested_values(tmp_path):
    path = write_report(tmp_path / "r.txt", {"a": {"b": 1}, "c": [1.5, 2], "ok": False})
    report = read_report(path)
    assert report == {"a.b": "1", "c.count": "2", "c[0]": "1.5", "c[1]": "2", "ok": "false"}


def test_manifest_lists_inputs_and_versions(tmp_path):
    write_manifest(str(tmp_path), "solve", {"seed": 4}, 4, {"eigen_tol": 1e-8}, ["summary.csv"])
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["command"] == "solve"
    assert data["seed"] == 4
    assert data["inputs"] == {"seed": 4}
    assert data["tolerances"]["eigen_tol"] == 1e-8
    assert {"toolkit", "python", "numpy", "scipy"} <= set(data["versions"])

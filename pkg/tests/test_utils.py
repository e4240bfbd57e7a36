# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

import json
import math

import numpy as np
import pytest

from qfield.utils import (
    atomic_write,
    csv_dump,
    dump,
    json_dump,
    to_builtin,
    yaml_dump,
    yaml_read,
)


def test_to_builtin():
    content = {
        "a": np.float64(0.5),
        "b": np.arange(3),
        "c": (np.int64(2), np.bool_(True)),
        "d": {1: [np.array([1.5])]},
    }
    assert to_builtin(content) == {
        "a": 0.5,
        "b": [0, 1, 2],
        "c": [2, True],
        "d": {"1": [[1.5]]},
    }
    assert type(to_builtin(np.float64(0.5))) is float
    assert type(to_builtin(np.bool_(False))) is bool


def test_json_dump():
    text = json_dump({"z": np.float64(0.1), "a": np.arange(2)})
    assert text.endswith("\n")
    assert json.loads(text) == {"a": [0, 1], "z": 0.1}
    # Sorted keys
    assert text.index('"a"') < text.index('"z"')


def test_json_dump_nonfinite():
    content = {"s": math.inf, "t": np.array([1.0, -np.inf, np.nan])}
    text = json_dump(content)
    assert "Infinity" not in text
    assert "NaN" not in text
    assert json.loads(text) == {"s": None, "t": [1.0, None, None]}
    # YAML keeps them
    assert to_builtin(content)["s"] == math.inf
    assert "inf" in yaml_dump(content)


def test_yaml_dump():
    content = {"rho": 0.5, "values": np.array([0.25, -1.0])}
    assert yaml_read(yaml_dump(content)) == {"rho": 0.5, "values": [0.25, -1.0]}
    assert yaml_dump({"a": 1}, preamble="# qfield\n").startswith("# qfield\n")


def test_dump():
    assert dump({"a": 1}) == json_dump({"a": 1})
    assert dump({"a": 1}, "yaml") == yaml_dump({"a": 1})
    with pytest.raises(ValueError):
        dump({"a": 1}, "xml")


def test_csv_dump():
    text = csv_dump(["n", "x", "Q"], [(0, 0.1, 1.0), (1, -2.0, 1 / 3)])
    assert text == "n,x,Q\n0,0.1,1.0\n1,-2.0,0.3333333333333333\n"
    # Full precision floats
    row = text.splitlines()[2].split(",")
    assert float(row[2]) == 1 / 3


def test_atomic_write(tmp_path):
    path = tmp_path / "sub" / "out.csv"
    atomic_write(path, "a,b\n")
    assert path.read_text() == "a,b\n"
    atomic_write(path, "c\n")
    assert path.read_text() == "c\n"
    # No temporary files left behind
    assert [p.name for p in path.parent.iterdir()] == ["out.csv"]


def test_atomic_write_stdout(capsys):
    atomic_write(None, "x,f,F\n")
    assert capsys.readouterr().out == "x,f,F\n"

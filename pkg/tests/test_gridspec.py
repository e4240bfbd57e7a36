# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

import numpy as np
import pytest

from qfield.gridspec import parse_degrees, parse_grid


def check_grid(string, expected):
    np.testing.assert_allclose(parse_grid(string), expected, rtol=0, atol=1e-15)


def check_grid_error(string):
    with pytest.raises(ValueError) as err:
        parse_grid(string)
    assert "Invalid grid specification" in str(err.value)


def test_grid():
    check_grid("-1:1:5", [-1, -0.5, 0, 0.5, 1])
    check_grid("0:1:2", [0, 1])
    check_grid("2:2:1", [2])
    check_grid("0.5:1.5:3", [0.5, 1, 1.5])
    check_grid("-1e-1:1e-1:3", [-0.1, 0, 0.1])
    check_grid("0,0.25,2", [0, 0.25, 2])
    check_grid("3", [3])
    check_grid(" -2.5 ", [-2.5])
    assert parse_grid("-2:2:9").dtype == float

    check_grid_error("")
    check_grid_error("a:b:c")
    check_grid_error("1:2")
    check_grid_error("0:1:0")
    check_grid_error("0:1:2.5")
    check_grid_error("1,,2")


def check_degrees(string, expected):
    degrees = parse_degrees(string)
    np.testing.assert_array_equal(degrees, expected)
    assert degrees.dtype.kind == "i"


def test_degrees():
    check_degrees("0:5:1", [0, 1, 2, 3, 4, 5])
    check_degrees("0:4:2", [0, 2, 4])
    check_degrees("0:5:2", [0, 2, 4])
    check_degrees("3,1,2", [3, 1, 2])
    check_degrees("7", [7])

    for bad in ("5:2:1", "0:4:0", "1.5", "-1", "0:5"):
        with pytest.raises(ValueError, match="Invalid grid specification"):
            parse_degrees(bad)

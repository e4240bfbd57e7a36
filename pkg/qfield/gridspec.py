# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

r"""Parsing of grid specifications given on the command line

A grid specification matches the following pseudo-BNF:

  grid ::= range
         | list

  range ::= number ":" number ":" count    (inclusive, evenly spaced)

  list ::= number
         | number "," list

So "-1:1:5" is the grid -1, -0.5, 0, 0.5, 1 and "0,0.25,2" is exactly those
three points. Degree lists use the same syntax with integers only, where a
range "a:b:step" steps through the integers instead.
"""

import numpy as np
from pyparsing import (
    Group,
    ParseException,
    Suppress,
    Word,
    delimitedList,
    nums,
    pyparsing_common,
)

_PARSER = None
_DEGREE_PARSER = None


def _get_parser():
    """Return a pyparsing parser for the grid syntax

    The result is either ("range", start, stop, count) or ("list", values).
    To avoid creating the parser repeatedly, this function is memoized.
    """
    global _PARSER
    if _PARSER is not None:
        return _PARSER

    number = pyparsing_common.sci_real | pyparsing_common.signed_integer
    number = number.copy().setParseAction(lambda t: float(t[0]))
    count = Word(nums).setParseAction(lambda t: int(t[0]))

    grid_range = number + Suppress(":") + number + Suppress(":") + count
    grid_range.setParseAction(lambda t: ("range", t[0], t[1], t[2]))
    grid_list = Group(delimitedList(number))
    grid_list.setParseAction(lambda t: ("list", list(t[0])))
    _PARSER = grid_range | grid_list
    return _PARSER


def _get_degree_parser():
    global _DEGREE_PARSER
    if _DEGREE_PARSER is not None:
        return _DEGREE_PARSER

    degree = Word(nums).setParseAction(lambda t: int(t[0]))
    degree_range = degree + Suppress(":") + degree + Suppress(":") + degree
    degree_range.setParseAction(lambda t: ("range", t[0], t[1], t[2]))
    degree_list = Group(delimitedList(degree))
    degree_list.setParseAction(lambda t: ("list", list(t[0])))
    _DEGREE_PARSER = degree_range | degree_list
    return _DEGREE_PARSER


def _parse(parser, text):
    try:
        return parser.parseString(text.strip(), parseAll=True)[0]
    except ParseException as err:
        raise ValueError(
            f"Invalid grid specification: {err}. Parsed text was {text!r}."
        ) from None


def parse_grid(text):
    """Parse a grid specification into a float array"""
    spec = _parse(_get_parser(), text)
    if spec[0] == "range":
        _, start, stop, count = spec
        if count < 1:
            raise ValueError(
                f"Invalid grid specification: count must be positive in {text!r}."
            )
        return np.linspace(start, stop, count)
    return np.array(spec[1], dtype=float)


def parse_degrees(text):
    """Parse a degree specification into an int array"""
    spec = _parse(_get_degree_parser(), text)
    if spec[0] == "range":
        _, start, stop, step = spec
        if step < 1 or stop < start:
            raise ValueError(
                f"Invalid grid specification: empty degree range {text!r}."
            )
        return np.arange(start, stop + 1, step)
    return np.array(spec[1], dtype=int)

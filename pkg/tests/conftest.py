from __future__ import annotations

import math

import pytest

from hoclbf import stl
from hoclbf.dynamics import unicycle

STATE = ("x", "y", "theta")
CASE_DEFS = {
    "b1": "16 - x^2 - y^2",
    "b2": "(pi/12)^2 - (theta - 5*pi/4)^2",
    "b3": "16 - (x + 10)^2 - (y + 10)^2",
    "b4": "(x + 8)^2 + (y + 4)^2 - 4",
    "b5": "(x + 10)^2 + (y + 10)^2 - 9",
}
CASE_FORMULA = ("(b1 >= 0 => G[0,5](b1 >= 0)) && (b1 < 0 => G[4,5](b1 >= 0)) && F[7,9](b2 >= 0) "
                "&& G[21,32](b3 >= 0) && G[0,32](b4 >= 0) && G[0,32](b5 >= 0)")
X_OUTSIDE = (0.0, -7.7, math.pi / 4)
X_INSIDE = (0.0, -3.7, 0.0)


def field(name: str, defs=None):
    parsed = stl.parse_definitions(defs or CASE_DEFS, STATE)
    return stl.definition_field(name, parsed)


@pytest.fixture
def uni():
    return unicycle(u_min=-0.6, u_max=0.6)


@pytest.fixture
def disc():
    return field("b1")

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoclbf import barrier
from hoclbf.barrier import ClassKSpec, Form, Mode, Structure, make_chain
from hoclbf.dynamics import unicycle
from hoclbf.errors import DegenerateRow, InvalidExponent

from .conftest import X_INSIDE, X_OUTSIDE, field


def test_start_values_of_finite_time_chain(disc):
    s = unicycle()
    chain = make_chain(disc, (5, 0.4), (1 / 3, 1))
    psi = barrier.psi_values(chain, s, X_OUTSIDE)
    # [DERIVED] symbolic evaluation
    assert psi[0] == pytest.approx(-43.29, abs=1e-12)
    assert psi[1] == pytest.approx(1.30423636763337, abs=1e-10)


def test_constraint_row_matches_symbolic(disc):
    s = unicycle()
    row = barrier.constraint_row(make_chain(disc, (5, 0.4), (1 / 3, 1)), s, X_OUTSIDE, owner="b1")
    # [DERIVED] a = Lg psi1, c = Lf psi1 + 0.4 psi1 from symbolic differentiation
    np.testing.assert_allclose(row.a, [18.8605177532325], atol=1e-9)
    assert row.c == pytest.approx(-2.92832261631125, abs=1e-9)
    assert row.owner == "b1"


def test_class2_obstacle_row_matches_symbolic():
    s = unicycle()
    row = barrier.constraint_row(make_chain(field("b4"), (2, 2), (1, 1)), s, X_OUTSIDE)
    # [DERIVED]
    np.testing.assert_allclose(row.psi, [73.69, 157.91249692713], atol=1e-9)
    np.testing.assert_allclose(row.a, [-28.6581893133533], atol=1e-9)
    assert row.c == pytest.approx(342.889635708519, abs=1e-8)


def test_relative_degree_one_row():
    s = unicycle()
    row = barrier.constraint_row(make_chain(field("b2"), (1,), (1,)), s, X_OUTSIDE)
    # [DERIVED] Lg b2 = -2 (theta - 5 pi/4) = 2 pi at theta = pi/4
    np.testing.assert_allclose(row.a, [2 * math.pi], atol=1e-12)
    assert row.c == pytest.approx(-9.80106548163735, abs=1e-10)


def test_degenerate_row():
    s = unicycle()
    chain = make_chain(field("b1"), (1,), (1,))  # too short for relative degree 2: no u in the row
    with pytest.raises(DegenerateRow):
        barrier.constraint_row(chain, s, X_OUTSIDE)
    row = barrier.constraint_row(chain, s, X_OUTSIDE, strict=False)
    assert np.allclose(row.a, 0.0)


def test_finite_time_bound_value():
    # [DERIVED] |-43.29|^(2/3) / (5 * 2/3)
    assert barrier.finite_time_bound(-43.29, 5, 1 / 3) == pytest.approx(3.69867619308403, abs=1e-12)
    with pytest.raises(InvalidExponent):
        barrier.finite_time_bound(-1.0, 1.0, 1.0)


def test_classification_and_validation(disc):
    assert make_chain(disc, (5, 0.4), (1 / 3, 1)).mode is Mode.CLASS1
    assert make_chain(disc, (1, 1), (1, 2)).mode is Mode.CLASS2
    assert barrier.classify(make_chain(disc, (1, 1), (0.5, 3))) is Mode.CLASS1
    with pytest.raises(InvalidExponent):
        ClassKSpec(1.0, 0.5, Form.PLAIN)
    with pytest.raises(InvalidExponent):
        ClassKSpec(1.0, 0.0)
    ClassKSpec(1.0, 1 / 3, Form.PLAIN)
    ClassKSpec(1.0, 3.0, Form.PLAIN)


def test_gstructure_drops_lower_terms(disc):
    s = unicycle()
    std = make_chain(disc, (5, 0.4), (1 / 3, 1))
    gs = make_chain(disc, (5, 0.4), (1 / 3, 1), m0=2, structure=Structure.GSTRUCTURE)
    assert not gs.has_term(1) and gs.has_term(2)
    psi_gs = barrier.psi_values(gs, s, X_OUTSIDE)
    assert psi_gs[1] == pytest.approx(18.8605177532325, abs=1e-10)
    assert barrier.psi_values(std, s, X_OUTSIDE)[1] != pytest.approx(psi_gs[1])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=5))
def test_m0_is_first_positive_level(values):
    m = len(values) + 1
    expected = next((i + 1 for i, v in enumerate(values) if v > 0), m)
    assert barrier.compute_m0(values, m) == expected


def rk4_scalar(psi0, p, q, t, n=4000):
    """Reference integration of psi' = -p sign(psi)|psi|^q."""
    h = t / n
    y = psi0

    def rhs(v):
        return -p * math.copysign(abs(v) ** q, v) if v else 0.0

    for _ in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


@settings(max_examples=60, deadline=None)
@given(st.floats(-20, 20).filter(lambda v: abs(v) > 0.1), st.floats(0.2, 3.0),
       st.sampled_from([1 / 3, 0.5, 1.0, 2.0, 3.0]), st.floats(0.0, 1.0))
def test_closed_form_solves_comparison_ode(psi0, p, q, frac):
    horizon = barrier.finite_time_bound(psi0, p, q) if q < 1 else 5.0
    t = 0.9 * frac * horizon
    lb = barrier.closed_form_lower_bound(psi0, p, q, t)
    assert not lb.past_horizon
    assert lb.value == pytest.approx(rk4_scalar(psi0, p, q, t), abs=1e-3)


def test_closed_form_past_horizon():
    t_star = barrier.finite_time_bound(-8.0, 1.0, 1 / 3)
    assert barrier.closed_form_lower_bound(-8.0, 1.0, 1 / 3, t_star + 1).past_horizon
    assert barrier.closed_form_lower_bound(0.0, 1.0, 0.5, 3.0).value == 0.0


def test_switch_promotes_positive_levels(disc):
    s = unicycle()
    chain = make_chain(disc, (6, 0.14), (1 / 3, 1 / 3))
    new = barrier.switch_update(chain, s, X_INSIDE, p_floor=0.1, margin=0.5)
    assert new.mode is Mode.CLASS2
    assert new.q == (1.0, 1.0)
    psi = barrier.psi_values(new, s, X_INSIDE)
    assert psi[0] > 0 and psi[1] > 0
    # outside the set nothing changes
    assert barrier.switch_update(chain, s, X_OUTSIDE) is chain


def test_switch_respects_deadband(disc):
    s = unicycle()
    x = (4.0 - 1e-5, 0.0, math.pi / 2)  # b just above 0, inside the deadband
    chain = make_chain(disc, (6, 0.14), (1 / 3, 1 / 3))
    assert 0 < disc.value(x) < barrier.SWITCH_EPS
    assert barrier.switch_update(chain, s, x).levels[0].q == pytest.approx(1 / 3)


def test_promoted_gain_formula():
    # (-psidot + margin psi) / psi^q, floored
    assert barrier.promoted_gain(2.0, -3.0, 1.0, 0.1, 0.5) == pytest.approx(2.0)
    assert barrier.promoted_gain(2.0, 5.0, 1.0, 0.1, 0.5) == 0.1


def test_class2_chain_places_state_inside_all_levels():
    s = unicycle()
    x = (-4.0, -4.0, math.pi)  # heading straight at the obstacle
    chain = barrier.class2_chain(field("b4"), 2, s, x, [0.1, 2])
    psi = barrier.psi_values(chain, s, x)
    assert np.all(psi >= 0)
    assert chain.levels[0].p > 0.1


def test_convergence_time_upper_bound(disc):
    chain = make_chain(disc, (5, 0.4), (1 / 3, 1 / 3))
    total = barrier.convergence_time_upper_bound(chain, [-43.29, -1.0])
    assert total == pytest.approx(3.69867619308403 + 1 / (0.4 * 2 / 3))


def test_eventually_positive_gain():
    assert barrier.eventually_positive_gain(1.0, -2.0, 0.5) == math.inf
    assert barrier.eventually_positive_gain(-4.0, 2.0, 0.5) == pytest.approx(1.0)
    assert barrier.eventually_positive_gain(-4.0, -2.0, 0.5) == 0.0

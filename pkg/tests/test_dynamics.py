from __future__ import annotations

import math

import numpy as np
import pytest

from hoclbf import dynamics
from hoclbf.dynamics import ScalarField, unicycle

from .conftest import X_OUTSIDE, field


def test_unicycle_vector_fields():
    s = unicycle(v=2.0)
    x = (1.0, 2.0, math.pi / 3)
    np.testing.assert_allclose(s.f(x), [1.0, math.sqrt(3.0), 0.0], atol=1e-15)
    np.testing.assert_allclose(s.g(x), [[0.0], [0.0], [1.0]])
    np.testing.assert_allclose(s.xdot(x, [0.5]), [1.0, math.sqrt(3.0), 0.5], atol=1e-15)
    np.testing.assert_allclose(s.clip([2.0]), [0.6])


def test_bounds_are_validated():
    with pytest.raises(ValueError):
        unicycle(u_min=1.0, u_max=-1.0)


def test_integrators_shapes():
    si = dynamics.single_integrator(2)
    di = dynamics.double_integrator(1)
    assert si.g([0, 0]).shape == (2, 2)
    np.testing.assert_allclose(di.f([1.0, 3.0]), [3.0, 0.0])
    assert di.state_names == ("x1", "v1")


def test_lie_derivatives_of_disc_at_start(disc):
    s = unicycle()
    # [DERIVED] symbolic differentiation: bdot = -2 v (x cos th + y sin th)
    assert disc.value(X_OUTSIDE) == pytest.approx(-43.29)
    assert dynamics.lie_f(disc, s).value(X_OUTSIDE) == pytest.approx(18.8605177532325, abs=1e-12)
    np.testing.assert_allclose(dynamics.lie_g_row(disc, s, X_OUTSIDE), [0.0], atol=1e-15)
    a = dynamics.lie_g_row(dynamics.lie_f(disc, s), s, X_OUTSIDE)
    assert a[0] == pytest.approx(18.8605177532325, abs=1e-12)


def test_relative_degrees_of_case_predicates():
    s = unicycle()
    samples = dynamics.sample_states(X_OUTSIDE, 16, 2.0, seed=3)
    assert dynamics.relative_degree(field("b1"), s, samples) == 2
    assert dynamics.relative_degree(field("b2"), s, samples) == 1
    assert dynamics.relative_degree(field("b4"), s, samples) == 2


def test_relative_degree_none_for_control_free_field():
    s = unicycle()
    const = ScalarField(lambda x: 3.0, name="three")
    assert dynamics.relative_degree(const, s, dynamics.sample_states((0, 0, 0), 4)) is None


def test_gradient_override_is_used():
    fld = ScalarField(lambda x: x[0] ** 2, gradient=lambda x: [7.0, 0.0], name="sq")
    _, g = dynamics.grad(fld, [1.0, 0.0])
    np.testing.assert_allclose(g, [7.0, 0.0])
    _, g = dynamics.grad(fld, [1.0, 0.0], use_override=False)
    np.testing.assert_allclose(g, [2.0, 0.0])


def test_sample_states_is_seeded():
    a = dynamics.sample_states((0, 0), 5, 1.0, seed=9)
    b = dynamics.sample_states((0, 0), 5, 1.0, seed=9)
    np.testing.assert_array_equal(np.array(a), np.array(b))

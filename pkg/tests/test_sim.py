from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoclbf import cli, stl
from hoclbf.barrier import make_chain
from hoclbf.dynamics import unicycle
from hoclbf.errors import StateDiverged
from hoclbf.sim import (FixedTask, Scenario, crossings_after_first_positive, detect_chattering, integrate_step,
                        run)

from .conftest import X_OUTSIDE, field

GOLDEN = Path(__file__).parent / "golden"


def exact_unicycle(x, u, t, v=1.732):
    x0, y0, th0 = x
    if abs(u) < 1e-6:  # the arc formula cancels badly; straight line is exact to O(u)
        return np.array([x0 + v * t * math.cos(th0), y0 + v * t * math.sin(th0), th0])
    th = th0 + u * t
    return np.array([x0 + v / u * (math.sin(th) - math.sin(th0)), y0 - v / u * (math.cos(th) - math.cos(th0)), th])


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-math.pi, math.pi))
def test_rk4_step_matches_closed_form_arc(u, th):
    s = unicycle()
    x = np.array([1.0, -2.0, th])
    np.testing.assert_allclose(integrate_step(s, x, [u], 0.1), exact_unicycle(x, u, 0.1), atol=1e-8)
    np.testing.assert_allclose(integrate_step(s, x, [u], 0.1, "rk45"), exact_unicycle(x, u, 0.1), atol=1e-7)


def test_integrator_errors():
    s = unicycle()
    with pytest.raises(ValueError):
        integrate_step(s, [0, 0, 0], [0], 0.0)
    with pytest.raises(ValueError):
        integrate_step(s, [0, 0, 0], [0], 0.1, "euler")
    with pytest.raises(StateDiverged):
        integrate_step(s, [2e9, 0, 0], [0], 0.1)


def test_chattering_counter():
    assert detect_chattering([1, -1, 1, -1]) == 3
    assert detect_chattering([1, 5e-5, -5e-5, 1]) == 0  # deadband carries no sign
    assert detect_chattering([1, np.nan, -1]) == 1
    assert detect_chattering([1, -1, 1, -1], window=(2, 4)) == 1
    assert crossings_after_first_positive([-3, -1, 2, -1, 1]) == 2
    assert crossings_after_first_positive([-3, -1]) == 0


def test_scenario_validation(disc):
    s = unicycle()
    chain = make_chain(disc, (5, 0.4), (1 / 3, 1))
    with pytest.raises(ValueError):
        Scenario(s, X_OUTSIDE, 1.0)
    with pytest.raises(ValueError):
        Scenario(s, (0, 0), 1.0, fixed=(FixedTask("b1", chain),))
    with pytest.raises(ValueError):
        Scenario(s, X_OUTSIDE, -1.0, fixed=(FixedTask("b1", chain),))
    with pytest.raises(ValueError):
        Scenario(s, X_OUTSIDE, 1.0, fixed=(FixedTask("b1", chain),), infeasible_policy="drop")
    assert Scenario(s, X_OUTSIDE, 3.0, 0.1, fixed=(FixedTask("b1", chain),)).n_steps == 30


def test_record_layout(disc):
    s = unicycle()
    chain = make_chain(disc, (5, 0.4), (1 / 3, 1))
    r = run(Scenario(s, X_OUTSIDE, 2.0, 0.1, fixed=(FixedTask("b1", chain),)))
    assert r.trajectory.states.shape == (21, 3)
    assert r.trajectory.controls.shape == (20, 1)
    # psi_0, psi_1 and the applied top level
    assert r.psi["b1"].shape == (21, 3)
    assert np.isnan(r.psi["b1"][-1, 2])
    assert r.psi["b1"][0, 0] == pytest.approx(-43.29)
    assert np.all(r.psi["b1"][:-1, 2] >= -1e-9)
    assert r.verdict is None and r.qp.solves == 20
    assert r.first_time("b1", 1) == 0.0


def test_runs_are_deterministic():
    a = run(cli.load("casestudy-full").scenario)
    b = run(cli.load("casestudy-full").scenario)
    np.testing.assert_array_equal(a.trajectory.states, b.trajectory.states)
    assert a.event_log() == b.event_log()


@pytest.mark.parametrize("name", cli.builtin_names())
def test_builtin_event_logs_match_golden(name):
    r = run(cli.load(name).scenario)
    expected = (GOLDEN / f"{name}.events.log").read_text()
    assert r.event_log() + ("\n" if r.events else "") == expected


def test_least_violation_policy_uses_phase1_point():
    ld = cli.load("chattering")
    r = run(replace(ld.scenario, infeasible_policy="least-violation"))
    assert any("least-violation" in e.detail for e in r.events if e.event == "QpInfeasible")


def test_case_study_tasks_activate_in_order():
    r = run(cli.load("casestudy-full").scenario)
    assert r.active[0] == ("b1@G[4,5]", "b2@F[7,9]", "b4@G[0,32]", "b5@G[0,32]")
    assert "b3@G[21,32]" in r.active[110] and "b3@G[21,32]" not in r.active[109]
    assert r.first_time("b1@G[4,5]") <= 4.0
    assert field("b2").value(r.trajectory.states[81]) >= 0


@pytest.mark.parametrize("name", ["casestudy-full"])
def test_task_satisfaction_implies_formula(name):
    ld = cli.load(name)
    rec = run(ld.scenario)
    tasks, _ = stl.decompose(ld.scenario.formula, ld.scenario.x0)
    if all(stl.monitor(rec.trajectory, t.formula) for t in tasks):
        assert rec.verdict is True

"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from hoclbf import barrier, cli, qp, stl
from hoclbf.barrier import make_chain
from hoclbf.dynamics import unicycle
from hoclbf.sim import FixedTask, Scenario, crossings_after_first_positive, run

from .conftest import X_OUTSIDE, field
from .oracles import brute_sat, projected_gradient_qp, random_formula
from .test_barrier import rk4_scalar
from .test_qp import random_qp


@pytest.fixture
def report(capsys):
    def _report(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[acceptance] criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return _report


def test_criterion_1_start_values(report):
    s = unicycle(v=1.732)
    chain = make_chain(field("b1"), (5, 0.4), (1 / 3, 1))
    barrier.psi_values(chain, s, X_OUTSIDE)  # warm the field cache
    times = []
    for _ in range(50):
        t0 = time.perf_counter()
        psi = barrier.psi_values(chain, s, X_OUTSIDE)
        times.append(time.perf_counter() - t0)
    runtime = float(np.median(times))
    ok = abs(psi[0] + 43.29) <= 0.01 and abs(psi[1] - 1.3042) <= 0.001 and runtime < 1e-3
    report(1, ok, f"b={psi[0]:.4f} psi1={psi[1]:.5f} runtime={runtime * 1e3:.3f} ms")


def test_criterion_2_finite_time_entry(report):
    bound = barrier.finite_time_bound(-43.29, 5, 1 / 3)
    ld = cli.load("class1-finite-time")
    t0 = time.perf_counter()
    rec = run(ld.scenario)
    runtime = time.perf_counter() - t0
    first = rec.first_time("b1", 0)
    dt = ld.scenario.dt
    ok = abs(bound - 3.699) < 1e-3 and bound < 4 and first is not None and first <= bound + dt and runtime < 5
    report(2, ok, f"bound={bound:.4f} s first b1>=0 at {first} s (limit {bound + dt:.3f}) runtime={runtime:.2f} s")


def test_criterion_3_linear_terms_never_enter(report):
    worst = {}
    for name in ("class2-linear", "class2-quadratic"):
        rec = run(cli.load(name).scenario)
        worst[name] = float(np.nanmax(rec.psi["b1"][:, 0]))
    ok = all(v < -1e-3 for v in worst.values())
    report(3, ok, " ".join(f"max b1 {k}={v:.4f}" for k, v in worst.items()))


def test_criterion_4_chattering_and_switch(report):
    plain = run(cli.load("chattering").scenario)
    changes = plain.chattering["b1"]
    switched = run(cli.load("chattering-switch").scenario)
    after = [crossings_after_first_positive(switched.psi["b1"][:, i]) for i in range(switched.psi["b1"].shape[1])]
    ok = max(changes) >= 3 and max(after) <= 1
    report(4, ok, f"sign changes without switch per level={changes}; "
                  f"crossings after first positive with switch={after}")


def test_criterion_5_case_study(report):
    ld = cli.load("casestudy-full")
    t0 = time.perf_counter()
    rec = run(ld.scenario)
    runtime = time.perf_counter() - t0
    b4 = float(np.nanmin([field("b4").value(x) for x in rec.trajectory.states]))
    b5 = float(np.nanmin([field("b5").value(x) for x in rec.trajectory.states]))
    ok = rec.verdict is True and rec.qp.safety_relaxations == 0 and min(b4, b5) >= -1e-3 and runtime < 30
    report(5, ok, f"verdict={rec.verdict} safety relaxations={rec.qp.safety_relaxations} "
                  f"min b4={b4:.3f} min b5={b5:.3f} runtime={runtime:.2f} s")


def test_criterion_6_closed_form_vs_ode(report):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        q = float(rng.choice([1 / 3, 1 / 2, 1.0, 2.0, 3.0]))
        psi0 = float(rng.choice([-1, 1]) * rng.uniform(0.1, 20))
        p = float(rng.uniform(0.2, 3.0))
        horizon = barrier.finite_time_bound(psi0, p, q) if q < 1 else 5.0
        t = float(rng.uniform(0, 0.95)) * horizon
        lb = barrier.closed_form_lower_bound(psi0, p, q, t)
        worst = max(worst, abs(lb.value - rk4_scalar(psi0, p, q, t)))
    report(6, worst <= 1e-3, f"max |closed form - RK4| over 100 cases = {worst:.2e}")


def test_criterion_7_forward_invariance(report):
    # bounds wide enough that every sampled start admits a feasible QP
    s = unicycle(u_min=-10.0, u_max=10.0)
    chain = make_chain(field("b4"), (1, 1), (1, 1))
    rng = np.random.default_rng(7)
    worst = math.inf
    starts = 0
    while starts < 50:
        x = np.array([rng.uniform(-14, -2), rng.uniform(-10, 2), rng.uniform(-math.pi, math.pi)])
        if np.min(barrier.psi_values(chain, s, x)) < 0:
            continue
        starts += 1
        rec = run(Scenario(s, tuple(x), 8.0, 0.1, fixed=(FixedTask("b4", chain),), switching=False))
        worst = min(worst, float(np.nanmin(rec.psi["b4"])))
    report(7, worst >= -1e-3, f"min psi over {starts} in-set starts = {worst:.3e}")


def test_criterion_8_qp_oracle(report):
    rng = np.random.default_rng(8)
    gap = kkt = 0.0
    for _ in range(500):
        problem = random_qp(rng)
        sol = qp.solve(problem)
        assert sol.optimal, sol.message
        G, b = problem.inequalities()
        _, ref = projected_gradient_qp(problem.hessian, problem.linear, G, b)
        gap = max(gap, abs(sol.objective - ref))
        kkt = max(kkt, max(qp.kkt_residuals(problem, sol).values()))
    report(8, gap <= 1e-6 and kkt < 1e-7, f"max objective gap={gap:.2e} max KKT residual={kkt:.2e}")


def test_criterion_9_monitor_and_round_trip(report):
    rng = np.random.default_rng(9)
    mismatches = 0
    for _ in range(200):
        phi = stl.parse(random_formula(rng, depth=3), ("x",))
        dt = float(rng.choice([0.1, 0.25, 0.5]))
        times = np.round(np.arange(0, 6.0 + dt / 2, dt), 9)
        states = np.cumsum(rng.normal(0, 0.4, times.size))[:, None]
        got = stl.monitor(stl.SampledTrajectory(times, states), phi)
        mismatches += got != brute_sat(phi, times, states, 0.0)
    trips = 0
    for _ in range(50):
        phi = stl.parse(random_formula(rng, depth=3), ("x",))
        trips += stl.parse(stl.to_text(phi), ("x",)) == phi
    report(9, mismatches == 0 and trips == 50, f"monitor mismatches={mismatches}/200 round trips={trips}/50")

"""Closed-loop simulation: per step scheduling, QP solve and zero-order-hold integration."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .barrier import BarrierChain, Mode, constraint_row, psi_values, switch_update
from .dynamics import AffineSystem
from .errors import StateDiverged
from .qp import QpConfig, Status, assemble, solve
from .scheduler import Event, Scheduler, SchedulerConfig, fmt_gains
from .stl import SampledTrajectory, decompose, monitor

log = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e9
CHATTER_DEADBAND = 1e-4


def integrate_step(sys: AffineSystem, x, u, dt: float, method: str = "rk4") -> np.ndarray:
    """Advance x over dt with u held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if method == "rk4":
        k1 = sys.xdot(x, u)
        k2 = sys.xdot(x + 0.5 * dt * k1, u)
        k3 = sys.xdot(x + 0.5 * dt * k2, u)
        k4 = sys.xdot(x + dt * k3, u)
        out = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    elif method == "rk45":
        sol = solve_ivp(lambda _t, y: sys.xdot(y, u), (0.0, dt), x, method="RK45", rtol=1e-8, atol=1e-8)
        if not sol.success:
            raise StateDiverged(f"integrator failed: {sol.message}")
        out = sol.y[:, -1]
    else:
        raise ValueError(f"unknown integrator {method!r}")
    if not np.all(np.isfinite(out)) or np.linalg.norm(out) > DIVERGENCE_NORM:
        raise StateDiverged(f"state norm exceeded {DIVERGENCE_NORM:g}")
    return out


def detect_chattering(trace, deadband: float = CHATTER_DEADBAND, window: tuple | None = None) -> int:
    """Number of sign changes in ``trace``; samples within the deadband carry no sign."""
    values = np.asarray(trace, dtype=float)
    if window is not None:
        values = values[window[0]:window[1]]
    count = 0
    last = 0
    for v in values:
        if not math.isfinite(v):
            continue
        s = 1 if v > deadband else (-1 if v < -deadband else 0)
        if s == 0:
            continue
        if last and s != last:
            count += 1
        last = s
    return count


def crossings_after_first_positive(trace, deadband: float = CHATTER_DEADBAND) -> int:
    values = np.asarray(trace, dtype=float)
    idx = np.flatnonzero(values > deadband)
    if idx.size == 0:
        return 0
    return detect_chattering(values[idx[0]:], deadband)


@dataclass(frozen=True)
class FixedTask:
    """A chain enforced for the whole run without a scheduler."""

    id: str
    chain: BarrierChain
    relaxable: bool = False


@dataclass
class Scenario:
    system: AffineSystem
    x0: tuple
    T: float
    dt: float = 0.1
    formula: object = None
    fixed: tuple = ()
    switching: bool = True
    integrator: str = "rk4"
    config: SchedulerConfig = field(default_factory=SchedulerConfig)
    seed: int = 0
    name: str = ""
    #: "hold" keeps the previous control; "least-violation" applies the phase-1 point
    infeasible_policy: str = "hold"

    def __post_init__(self):
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("T and dt must be positive")
        if (self.formula is None) == (not self.fixed):
            raise ValueError("give either a formula or fixed chains")
        self.x0 = tuple(float(v) for v in self.x0)
        if len(self.x0) != self.system.n:
            raise ValueError("x0 has the wrong dimension")
        if self.infeasible_policy not in ("hold", "least-violation"):
            raise ValueError(f"unknown infeasible policy {self.infeasible_policy!r}")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.dt - 1e-9))


@dataclass
class QpStats:
    solves: int = 0
    infeasible: int = 0
    max_iterations: int = 0
    relaxed_rows: int = 0
    safety_relaxations: int = 0


@dataclass
class RunRecord:
    trajectory: SampledTrajectory
    psi: dict
    slack: dict
    events: list
    qp: QpStats
    chattering: dict
    verdict: bool | None
    task_ids: tuple = ()
    active: list = field(default_factory=list)

    def first_time(self, task_id: str, level: int = 0, threshold: float = 0.0) -> float | None:
        """First sample time at which psi_level of the task is >= threshold."""
        trace = self.psi[task_id][:, level]
        idx = np.flatnonzero(trace >= threshold)
        return float(self.trajectory.times[idx[0]]) if idx.size else None

    def event_log(self) -> str:
        return "\n".join(str(e) for e in self.events)


def _solve_step(sys, rows, relax_plan, qp_config, warm):
    """Try relaxing 0, 1, ... candidate rows until the QP is feasible."""
    forced, candidates, assign_fn = relax_plan
    sol = None
    for n in range(len(candidates) + 1):
        assignment = assign_fn(n)
        problem = assemble(sys, [r for _, r in rows], assignment, qp_config)
        sol = solve(problem, warm.get((problem.dim, len(rows))))
        if sol.status is Status.OPTIMAL:
            warm[(problem.dim, len(rows))] = sol.active_set
            return sol, assignment
    return sol, None


def run(scenario: Scenario) -> RunRecord:
    sys = scenario.system
    dt = scenario.dt
    N = scenario.n_steps
    times = np.round(np.arange(N + 1) * dt, 12)
    x = np.array(scenario.x0, dtype=float)
    u_prev = np.zeros(sys.q)
    qp_config = QpConfig(scenario.config.slack_weight)
    stats = QpStats()
    warm: dict = {}
    states = np.zeros((N + 1, sys.n))
    controls = np.zeros((N, sys.q))
    extra_events: list[Event] = []

    sched = None
    fixed = list(scenario.fixed)
    if scenario.formula is not None:
        tasks, _ = decompose(scenario.formula, scenario.x0)
        cfg = scenario.config
        if cfg.switching != scenario.switching:
            from dataclasses import replace

            cfg = replace(cfg, switching=scenario.switching)
        sched = Scheduler(sys, tasks, cfg, x0=scenario.x0)
        ids = [rt.id for rt in sched.runtimes]
        widths = {rt.id: rt.m for rt in sched.runtimes}
    else:
        ids = [ft.id for ft in fixed]
        widths = {ft.id: ft.chain.m for ft in fixed}
    # extra last column: top level a.u + c under the applied control
    psi = {i: np.full((N + 1, widths[i] + 1), np.nan) for i in ids}
    slack = {i: np.full(N, np.nan) for i in ids}
    active_log: list = []

    for k in range(N + 1):
        t = float(times[k])
        states[k] = x
        if sched is not None:
            sched.activate(t, x)
            sched.step_update(t, x)
            current = [(rt.id, rt.chain) for rt in sched.active() if rt.chain is not None]
        else:
            if scenario.switching:
                for j, ft in enumerate(fixed):
                    new = switch_update(ft.chain, sys, x, scenario.config.switch_eps, scenario.config.q_class2,
                                        scenario.config.p_floor, scenario.config.margin)
                    if new is not ft.chain:
                        cls = "Class2" if new.mode is Mode.CLASS2 else "Class1"
                        extra_events.append(Event(t, ft.id, "Switched", f"{cls} {fmt_gains(new)}"))
                        fixed[j] = FixedTask(ft.id, new, ft.relaxable)
            current = [(ft.id, ft.chain) for ft in fixed]
        active_log.append(tuple(i for i, _ in current))
        for tid, chain in current:
            psi[tid][k, : chain.m] = psi_values(chain, sys, x)
        if k == N:
            break

        if sched is not None:
            rows = sched.rows(x)
            forced, candidates = sched.relaxation_order(rows, x)
            plan = (forced, candidates, lambda n, rows=rows: sched.resolve_conflicts(rows, x, n))
        else:
            rows = [(ft, constraint_row(ft.chain, sys, x, owner=ft.id, relaxable=ft.relaxable, strict=False))
                    for ft in fixed]
            relaxable = [j for j, (ft, _) in enumerate(rows) if ft.relaxable]
            plan = ([], relaxable, lambda n, rel=relaxable: {j: i for i, j in enumerate(rel[:n])})
        sol, assignment = _solve_step(sys, rows, plan, qp_config, warm)
        stats.solves += 1
        if assignment is None:
            stats.infeasible += 1
            owners = ",".join(r.owner for _, r in rows) or "-"
            action = "least-violation" if scenario.infeasible_policy == "least-violation" else "holding"
            held = ",".join(f"{v:.4g}" for v in u_prev)
            ev = Event(t, owners, "QpInfeasible", f"phase1={sol.phase1:.3g} {action} u=({held})")
            (sched.events if sched is not None else extra_events).append(ev)
            if scenario.infeasible_policy == "least-violation":
                u = sys.clip(sol.z[: sys.q])
            else:
                u = u_prev.copy()
            if sched is not None:
                sched.note_relaxation(t, x, rows, {})
        else:
            u = sys.clip(sol.z[: sys.q])
            stats.max_iterations = max(stats.max_iterations, sol.iterations)
            stats.relaxed_rows += len(assignment)
            for j, s in assignment.items():
                owner_rt = rows[j][0]
                slack[owner_rt.id][k] = sol.z[sys.q + s]
                chain = owner_rt.chain
                if chain.mode is Mode.CLASS2:
                    stats.safety_relaxations += 1
            if sched is not None:
                sched.note_relaxation(t, x, rows, assignment)
        controls[k] = u
        for owner, row in rows:
            psi[owner.id][k, -1] = float(np.dot(np.asarray(row.a, dtype=float).reshape(-1), u) + row.c)
        x = integrate_step(sys, x, u, dt, scenario.integrator)
        u_prev = u

    traj = SampledTrajectory(times, states, controls)
    verdict = monitor(traj, scenario.formula, 0.0) if scenario.formula is not None else None
    events = (sched.events if sched is not None else []) + extra_events
    events.sort(key=lambda e: e.t)
    chatter = {tid: [detect_chattering(psi[tid][:, i]) for i in range(psi[tid].shape[1])] for tid in ids}
    return RunRecord(traj, psi, slack, events, stats, chatter, verdict, tuple(ids), active_log)

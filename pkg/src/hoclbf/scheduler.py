"""Receding-horizon task scheduling: activation, gain planning, lifecycle and conflict relaxation."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .barrier import (
    P_FLOOR,
    SWITCH_EPS,
    SWITCH_MARGIN,
    BarrierChain,
    ClassKSpec,
    ConstraintRow,
    Mode,
    Structure,
    class2_chain,
    classify,
    compute_m0,
    constraint_row,
    finite_time_bound,
    make_chain,
    promoted_gain,
    psi_derivatives,
    psi_values,
    switch_update,
)
from .dynamics import AffineSystem, relative_degree, sample_states
from .errors import ConfigError, DeadlineUnreachable
from .stl import AtomicTask

log = logging.getLogger(__name__)

TIME_EPS = 1e-9


class TaskState(enum.Enum):
    PENDING = "Pending"
    ACTIVE = "Active"
    SATISFIED = "Satisfied"
    EXPIRED = "Expired"


@dataclass(frozen=True)
class SchedulerConfig:
    horizon: float = 10.0
    q_class1: float = 1.0 / 3.0
    q_class2: float = 1.0
    budget_safety_factor: float = 0.9
    slack_weight: float = 1000.0
    #: gain for class-2 levels when no per-predicate gains are given
    p_class2: float = 0.4
    switch_eps: float = SWITCH_EPS
    p_floor: float = P_FLOOR
    margin: float = SWITCH_MARGIN
    violation_tol: float = 1e-3
    #: smallest budget used when a deadline is at or behind the current time
    min_budget: float = 0.1
    p_min: float = 1e-4
    p_max: float = 1e6
    switching: bool = True
    #: predicate label -> class-2 gains per level
    gains: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if not 0 < self.q_class1 < 1:
            raise ConfigError("q_class1 must lie in (0, 1)")
        if self.q_class2 < 1:
            raise ConfigError("q_class2 must be >= 1")
        if not 0 < self.budget_safety_factor <= 1:
            raise ConfigError("budget_safety_factor must lie in (0, 1]")
        if self.slack_weight <= 0 or self.p_class2 <= 0:
            raise ConfigError("weights and gains must be positive")


@dataclass
class TaskRuntime:
    task: AtomicTask
    m: int
    chain: BarrierChain | None = None
    state: TaskState = TaskState.PENDING
    budget_partition: tuple = ()
    slack_index: int | None = None
    violated: bool = False
    relaxed: bool = False
    planned_bound: float = math.nan
    planned_budget: float = math.nan

    @property
    def id(self) -> str:
        return self.task.id

    @property
    def m0(self) -> int:
        return self.chain.m0 if self.chain is not None else self.m

    @property
    def active(self) -> bool:
        return self.state is TaskState.ACTIVE

    @property
    def class1(self) -> bool:
        return self.chain is not None and self.chain.mode is Mode.CLASS1


@dataclass(frozen=True)
class Event:
    t: float
    task: str
    event: str
    detail: str = ""

    def __str__(self):
        return f"t={_fmt_t(self.t)} task={self.task} event={self.event} detail={self.detail}"


def _fmt_t(t: float) -> str:
    return f"{round(t, 9):g}"


def fmt_gains(chain: BarrierChain) -> str:
    p = ",".join(f"{v:.4g}" for v in chain.p)
    q = ",".join(f"{v:.4g}" for v in chain.q)
    return f"p=({p}) q=({q})"


def _in_window(task: AtomicTask, t: float) -> bool:
    return task.interval.a - TIME_EPS <= t <= task.interval.b + TIME_EPS


def lie_values(predicate, m: int, sys: AffineSystem, x) -> np.ndarray:
    """b, L_f b, ..., L_f^{m-1} b at x (a chain with no class-K terms)."""
    bare = make_chain(predicate, [1.0] * m, [1.0] * m, Mode.CLASS2, m0=m, structure=Structure.GSTRUCTURE)
    return psi_values(bare, sys, x)


def finite_time_levels_bound(chain: BarrierChain, sys: AffineSystem, x) -> tuple[float, bool]:
    """Sum of finite-time bounds at x, and whether every class-2 level's argument is non-negative."""
    psi = psi_values(chain, sys, x)
    total = 0.0
    valid = True
    for i in range(1, chain.m + 1):
        if not chain.has_term(i):
            continue
        spec = chain.levels[i - 1]
        arg = psi[i - 1]
        if 0 < spec.q < 1:
            if arg < 0:
                total += finite_time_bound(arg, spec.p, spec.q)
        elif arg < 0:
            valid = False
    return total, valid


class Scheduler:
    """Owns the mutable task state of one closed-loop run."""

    def __init__(self, sys: AffineSystem, tasks: list[AtomicTask], config: SchedulerConfig | None = None,
                 x0=None, relative_degrees: dict | None = None):
        self.sys = sys
        self.config = config or SchedulerConfig()
        self.events: list[Event] = []
        relative_degrees = dict(relative_degrees or {})
        center = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float)
        samples = sample_states(center, 24, 2.0, seed=0)
        self.runtimes: list[TaskRuntime] = []
        for task in tasks:
            m = relative_degrees.get(task.name)
            if m is None:
                m = relative_degree(task.predicate.field, sys, samples)
                if m is None:
                    raise ConfigError(f"could not determine the relative degree of {task.name!r}")
                relative_degrees[task.name] = m
            self.runtimes.append(TaskRuntime(task, m))
        self.relative_degrees = relative_degrees

    # helpers
    def emit(self, t: float, rt: TaskRuntime | str, event: str, detail: str = ""):
        ev = Event(float(t), rt if isinstance(rt, str) else rt.id, event, detail)
        self.events.append(ev)
        log.info("%s", ev)

    def active(self) -> list[TaskRuntime]:
        return [rt for rt in self.runtimes if rt.active]

    def by_id(self, task_id: str) -> TaskRuntime:
        for rt in self.runtimes:
            if rt.id == task_id:
                return rt
        raise KeyError(task_id)

    def snapshot(self) -> tuple:
        return tuple(replace(rt) for rt in self.runtimes)

    def _class2_gains(self, rt: TaskRuntime) -> list:
        gains = self.config.gains.get(rt.task.name)
        if gains is None:
            return [self.config.p_class2] * rt.m
        gains = [float(g) for g in np.atleast_1d(gains)]
        return gains + [gains[-1]] * (rt.m - len(gains))

    # lifecycle
    def activate(self, t: float, x) -> list[TaskRuntime]:
        """Activate pending tasks whose window meets [t, t + H]."""
        cfg = self.config
        out = []
        for rt in self.runtimes:
            if rt.state is not TaskState.PENDING:
                continue
            iv = rt.task.interval
            if iv.a > t + cfg.horizon + TIME_EPS:
                continue
            rt.state = TaskState.ACTIVE
            try:
                self._build_chain(rt, x, t)
            except DeadlineUnreachable as exc:
                rt.state = TaskState.EXPIRED
                rt.violated = True
                self.emit(t, rt, "ViolationDetected", str(exc))
                self.emit(t, rt, "Expired", "deadline unreachable")
                continue
            cls = "Class1" if rt.class1 else "Class2"
            self.emit(t, rt, "Activated", f"{cls} m={rt.m} m0={rt.m0} {fmt_gains(rt.chain)}")
            out.append(rt)
        return out

    def _build_chain(self, rt: TaskRuntime, x, t: float):
        pred = rt.task.predicate
        if pred.value(x) >= 0:
            rt.chain = class2_chain(pred.field, rt.m, self.sys, x, self._class2_gains(rt), self.config.q_class2,
                                    self.config.p_floor, self.config.margin)
            return
        if rt.task.deadline <= t + TIME_EPS:
            raise DeadlineUnreachable(f"{rt.id}: deadline {rt.task.deadline:g} reached with the predicate unsatisfied")
        self.plan_parameters(rt, x, t)

    def plan_parameters(self, rt: TaskRuntime, x, t: float, single_slot: bool = False) -> TaskRuntime:
        """Choose finite-time gains so the summed convergence bound fits the remaining budget.

        Levels are filled bottom-up from m0. A level whose argument is not yet
        positive gets exponent ``q_class1`` and the gain that makes its
        finite-time bound equal to its slot times the safety factor; other
        levels get class-2 terms.
        """
        cfg = self.config
        sys = self.sys
        field_ = rt.task.predicate.field
        m = rt.m
        lie = lie_values(field_, m, sys, x)
        m0 = compute_m0(lie[1:], m)
        if rt.chain is not None and rt.chain.mode is Mode.CLASS1:
            m0 = min(m0, rt.chain.m0)
        budget = max(rt.task.deadline - t, cfg.min_budget)
        q1 = cfg.q_class1
        gains2 = self._class2_gains(rt)
        n_slots = 1
        while True:
            tau = budget / n_slots
            chain = make_chain(field_, gains2, [cfg.q_class2] * m, Mode.CLASS1, m0=m0, structure=Structure.GSTRUCTURE)
            finite: list[tuple[int, float]] = []
            for i in range(m0, m + 1):
                psi = psi_values(chain, sys, x)
                arg = psi[i - 1]
                if arg <= cfg.switch_eps:
                    p = abs(arg) ** (1 - q1) / (tau * (1 - q1) * cfg.budget_safety_factor)
                    if not cfg.p_min <= p <= cfg.p_max:
                        log.warning("%s: planned gain %.3g clamped to [%g, %g]", rt.id, p, cfg.p_min, cfg.p_max)
                        p = min(max(p, cfg.p_min), cfg.p_max)
                    spec = ClassKSpec(p, q1)
                    finite.append((i, arg))
                elif i < m:
                    dot = psi_derivatives(chain, sys, x)[i - 1]
                    spec = ClassKSpec(promoted_gain(arg, dot, cfg.q_class2, cfg.p_floor, cfg.margin), cfg.q_class2)
                else:
                    spec = ClassKSpec(gains2[i - 1], cfg.q_class2)
                chain = chain.with_level(i, spec)
            if len(finite) <= n_slots or single_slot:
                break
            n_slots = len(finite)
        chain = replace(chain, mode=classify(chain))
        rt.chain = chain
        rt.budget_partition = (tau,) * len(finite)
        rt.planned_budget = budget
        rt.planned_bound = sum(
            finite_time_bound(arg, chain.levels[i - 1].p, q1) for i, arg in finite if arg != 0
        )
        return rt

    def step_update(self, t: float, x) -> None:
        """Advance task lifecycles after the state has moved to x at time t."""
        cfg = self.config
        for rt in self.runtimes:
            if not rt.active:
                continue
            task = rt.task
            iv = task.interval
            holds = task.predicate.holds(x)
            if task.kind == "F":
                if holds and _in_window(task, t):
                    self._satisfy(rt, t, "predicate reached inside window")
                    continue
                if t > iv.b + TIME_EPS:
                    rt.violated = True
                    rt.state = TaskState.EXPIRED
                    self.emit(t, rt, "ViolationDetected", "window closed without satisfaction")
                    self.emit(t, rt, "Expired", "violated")
                    continue
            else:
                if t > iv.b + TIME_EPS:
                    rt.state = TaskState.EXPIRED
                    self.emit(t, rt, "Expired", "violated" if rt.violated else "ok")
                    continue
                value = task.predicate.value(x)
                if _in_window(task, t) and value < -cfg.violation_tol and not rt.violated:
                    rt.violated = True
                    self.emit(t, rt, "ViolationDetected", f"value={value:.4g}")
            self._maintain_chain(rt, t, x)
        self._close_groups(t, x)

    def _satisfy(self, rt: TaskRuntime, t: float, why: str):
        rt.state = TaskState.SATISFIED
        self.emit(t, rt, "Satisfied", why)
        for other in self.runtimes:
            if other.active and other.task.until_partner == rt.id:
                other.state = TaskState.SATISFIED
                self.emit(t, other, "Satisfied", f"until goal {rt.id} reached")

    def _close_groups(self, t: float, x):
        groups = {}
        for rt in self.active():
            gid = rt.task.disjunction_group
            if gid is not None:
                groups.setdefault(gid, []).append(rt)
        for gid, members in groups.items():
            winner = next((rt for rt in members if rt.task.predicate.holds(x) and _in_window(rt.task, t)
                           and rt.task.kind == "F"), None)
            if winner is None:
                continue
            for rt in members:
                rt.state = TaskState.SATISFIED
                self.emit(t, rt, "Satisfied", f"group {gid} met by {winner.id}")

    def _maintain_chain(self, rt: TaskRuntime, t: float, x):
        chain = rt.chain
        if chain is None or chain.mode is not Mode.CLASS1:
            return
        cfg = self.config
        if chain.m0 > 1:
            lie = lie_values(rt.task.predicate.field, rt.m, self.sys, x)
            if lie[chain.m0 - 1] > 0:
                old = chain.m0
                rt.chain = replace(chain, m0=old - 1)
                self.plan_parameters(rt, x, t)
                self.emit(t, rt, "Switched", f"m0 {old}->{rt.chain.m0} {fmt_gains(rt.chain)}")
                chain = rt.chain
        if cfg.switching:
            new = switch_update(chain, self.sys, x, cfg.switch_eps, cfg.q_class2, cfg.p_floor, cfg.margin)
            if new is not chain:
                rt.chain = new
                cls = "Class2" if new.mode is Mode.CLASS2 else "Class1"
                self.emit(t, rt, "Switched", f"{cls} {fmt_gains(new)}")

    # constraints
    def rows(self, x) -> list[tuple[TaskRuntime, ConstraintRow]]:
        out = []
        for rt in self.active():
            if rt.chain is None:
                continue
            row = constraint_row(rt.chain, self.sys, x, owner=rt.id, relaxable=rt.class1, strict=False)
            out.append((rt, row))
        return out

    def relaxation_order(self, rows, x) -> tuple[list[int], list[int]]:
        """(always relaxed, relaxable in priority order) as row indices.

        Non-best members of a disjunction group are always relaxed. The rest of
        the class-1 rows are relaxed latest-start first, ties by task id.
        Class-2 rows never appear.
        """
        forced: list[int] = []
        groups: dict = {}
        for j, (rt, _) in enumerate(rows):
            gid = rt.task.disjunction_group
            if gid is not None:
                groups.setdefault(gid, []).append(j)
        for members in groups.values():
            best = max(members, key=lambda j: (rows[j][0].task.predicate.value(x), rows[j][0].id))
            forced.extend(j for j in members if j != best and rows[j][0].class1)
        candidates = [j for j, (rt, _) in enumerate(rows) if rt.class1 and j not in forced]
        candidates.sort(key=lambda j: (-rows[j][0].task.priority_key, rows[j][0].id))
        return sorted(forced), candidates

    def resolve_conflicts(self, rows, x, n_relax: int) -> dict:
        """Slack assignment (row index -> slack index) relaxing ``n_relax`` rows beyond the forced ones."""
        forced, candidates = self.relaxation_order(rows, x)
        chosen = sorted(set(forced) | set(candidates[:n_relax]))
        assignment = {j: k for k, j in enumerate(chosen)}
        for j, (rt, _) in enumerate(rows):
            rt.slack_index = assignment.get(j)
        return assignment

    def note_relaxation(self, t: float, x, rows, assignment: dict) -> None:
        """Log relaxation episodes and re-validate tasks whose episode just ended."""
        relaxed_now = {rows[j][0].id for j in assignment}
        for rt in self.active():
            if rt.id in relaxed_now and not rt.relaxed:
                rt.relaxed = True
                self.emit(t, rt, "Relaxed", "slack assigned")
            elif rt.relaxed and rt.id not in relaxed_now:
                rt.relaxed = False
                self.revalidate(rt, t, x)

    def revalidate(self, rt: TaskRuntime, t: float, x) -> None:
        """Re-plan a class-1 task whose gains no longer meet its remaining budget."""
        if not rt.class1:
            return
        remaining = rt.task.deadline - t
        if rt.task.kind == "G" and remaining <= 0 and rt.task.predicate.holds(x):
            return
        bound, valid = finite_time_levels_bound(rt.chain, self.sys, x)
        if valid and bound <= max(remaining, 0.0):
            return
        self.plan_parameters(rt, x, t, single_slot=True)
        self.emit(t, rt, "Replanned", f"remaining={remaining:.4g} {fmt_gains(rt.chain)}")
        bound, valid = finite_time_levels_bound(rt.chain, self.sys, x)
        if remaining < self.config.min_budget or not valid or bound > remaining:
            self.emit(t, rt, "DeadlineAtRisk", f"bound={bound:.4g} remaining={remaining:.4g}")

    def event_log(self) -> str:
        return "\n".join(str(e) for e in self.events)

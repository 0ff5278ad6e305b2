"""Command line front end: scenario files, built-in experiments, trace export."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import dynamics, stl
from .barrier import Mode, make_chain
from .errors import ConfigError, HoclbfError
from .scheduler import Scheduler, SchedulerConfig, fmt_gains
from .sim import FixedTask, RunRecord, Scenario, run

log = logging.getLogger(__name__)

EXIT_SATISFIED = 0
EXIT_ERROR = 1
EXIT_VIOLATED = 2

_NUMBER = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_VECTOR = {"type": "array", "items": _NUMBER, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "system", "x0", "predicates"],
    "properties": {
        "schema": {"const": 1},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["unicycle", "single_integrator", "double_integrator"]},
                "v": _NUMBER,
                "dim": {"type": "integer", "minimum": 1},
                "u_min": _NUMBER,
                "u_max": _NUMBER,
            },
        },
        "x0": _VECTOR,
        "predicates": {"type": "object", "additionalProperties": {"type": "string"}},
        "formula": {"type": "string"},
        "chains": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["predicate", "p", "q"],
                "properties": {
                    "id": {"type": "string"},
                    "predicate": {"type": "string"},
                    "p": _VECTOR,
                    "q": _VECTOR,
                    "relaxable": {"type": "boolean"},
                },
            },
        },
        "switching": {"type": "boolean"},
        "integrator": {"enum": ["rk4", "rk45"]},
        "infeasible_policy": {"enum": ["hold", "least-violation"]},
        "parameters": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": _NUMBER,
                "dt": _NUMBER,
                "horizon": _NUMBER,
                "seed": {"type": "integer"},
                "q_class1": _NUMBER,
                "q_class2": _NUMBER,
                "p_class2": _NUMBER,
                "p_floor": _NUMBER,
                "slack_weight": _NUMBER,
                "budget_safety_factor": _NUMBER,
            },
        },
        "gains": {"type": "object", "additionalProperties": _VECTOR},
    },
}

_SYSTEMS = {
    "unicycle": dynamics.unicycle,
    "single_integrator": dynamics.single_integrator,
    "double_integrator": dynamics.double_integrator,
}


@dataclass
class LoadedScenario:
    scenario: Scenario
    formula: object
    source: str
    data: dict


def _number(value, where: str) -> float:
    """Numbers may be given as constant expressions such as "1/3" or "5*pi/4"."""
    if isinstance(value, (int, float)):
        return float(value)
    try:
        out = float(stl.compile_expr(stl.parse_expr(value, ()))(()))
    except HoclbfError as exc:
        raise ConfigError(f"{where}: cannot read {value!r} as a number ({exc})") from None
    if not math.isfinite(out):
        raise ConfigError(f"{where}: {value!r} is not finite")
    return out


def _vector(values, where: str) -> list[float]:
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(values)]


def builtin_names() -> list[str]:
    files = resources.files("hoclbf").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def _read_text(path: str) -> tuple[str, str]:
    if path in builtin_names():
        return resources.files("hoclbf").joinpath("scenarios", f"{path}.json").read_text(), path
    try:
        return Path(path).read_text(), path
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None


def load(path: str, dt: float | None = None, horizon: float | None = None, seed: int | None = None) -> LoadedScenario:
    """Read, validate and build a scenario from a file path or a built-in name."""
    text, source = _read_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{source}: field {where}: {exc.message}") from None
    return build(data, source, dt=dt, horizon=horizon, seed=seed)


def build(data: dict, source: str = "<memory>", dt: float | None = None, horizon: float | None = None,
          seed: int | None = None) -> LoadedScenario:
    sysdef = data["system"]
    kwargs = {}
    for key in ("v", "u_min", "u_max"):
        if key in sysdef:
            kwargs[key] = _number(sysdef[key], f"system/{key}")
    if "dim" in sysdef:
        if sysdef["type"] == "unicycle":
            raise ConfigError(f"{source}: field system/dim: the unicycle has a fixed dimension")
        kwargs["dim"] = sysdef["dim"]
    if "v" in kwargs and sysdef["type"] != "unicycle":
        raise ConfigError(f"{source}: field system/v: only the unicycle has a speed")
    try:
        system = _SYSTEMS[sysdef["type"]](**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{source}: field system: {exc}") from None

    names = system.state_names
    defs = stl.parse_definitions(data["predicates"], names)
    formula = None
    if "formula" in data:
        if not data["formula"].strip():
            raise ConfigError(f"{source}: field formula: empty formula")
        formula = stl.parse(data["formula"], names, defs)

    params = data.get("parameters", {})
    num = {k: _number(v, f"parameters/{k}") for k, v in params.items() if k != "seed"}
    if horizon is not None:
        num["horizon"] = horizon
    gains = {k: tuple(_vector(v, f"gains/{k}")) for k, v in data.get("gains", {}).items()}
    cfg_fields = {k: num[k] for k in ("horizon", "q_class1", "q_class2", "p_class2", "p_floor", "slack_weight",
                                      "budget_safety_factor") if k in num}
    switching = bool(data.get("switching", True))
    config = SchedulerConfig(switching=switching, gains=gains, **cfg_fields)

    fixed = []
    for j, ch in enumerate(data.get("chains", [])):
        label = ch["predicate"]
        if label not in defs:
            raise ConfigError(f"{source}: field chains/{j}/predicate: unknown predicate {label!r}")
        p = _vector(ch["p"], f"chains/{j}/p")
        q = _vector(ch["q"], f"chains/{j}/q")
        try:
            chain = make_chain(stl.definition_field(label, defs), p, q)
        except (ValueError, HoclbfError) as exc:
            raise ConfigError(f"{source}: field chains/{j}: {exc}") from None
        fixed.append(FixedTask(ch.get("id", label), chain, bool(ch.get("relaxable", False))))
    if formula is None and not fixed:
        raise ConfigError(f"{source}: give a formula or chains")

    x0 = _vector(data["x0"], "x0")
    if len(x0) != system.n:
        raise ConfigError(f"{source}: field x0: expected {system.n} values, got {len(x0)}")
    T = num.get("T", stl.horizon(formula) if formula is not None else None)
    if T is None:
        raise ConfigError(f"{source}: field parameters/T: required for chain scenarios")
    step = dt if dt is not None else num.get("dt", 0.1)
    if T <= 0 or step <= 0:
        raise ConfigError(f"{source}: field parameters: T and dt must be positive")
    scenario = Scenario(
        system=system, x0=tuple(x0), T=T, dt=step,
        formula=formula if not fixed else None, fixed=tuple(fixed),
        switching=switching, integrator=data.get("integrator", "rk4"), config=config,
        seed=seed if seed is not None else int(params.get("seed", 0)),
        name=data.get("name", Path(source).stem),
        infeasible_policy=data.get("infeasible_policy", "hold"),
    )
    return LoadedScenario(scenario, formula, source, data)


def verdict_of(loaded: LoadedScenario, record: RunRecord) -> bool | None:
    if record.verdict is not None:
        return record.verdict
    if loaded.formula is None:
        return None
    return stl.monitor(record.trajectory, loaded.formula, 0.0)


# trace export --------------------------------------------------------------

def trace_columns(record: RunRecord, state_names) -> list[str]:
    cols = ["t"] + list(state_names)
    cols += [f"u{i + 1}" for i in range(record.trajectory.controls.shape[1])]
    for tid in record.task_ids:
        cols += [f"psi{i}[{tid}]" for i in range(record.psi[tid].shape[1])]
    cols += [f"slack[{tid}]" for tid in record.task_ids]
    cols.append("active")
    return cols


def write_trace(record: RunRecord, path, state_names) -> None:
    """One row per sample; floats are written with repr so they read back exactly."""
    traj = record.trajectory
    N = traj.times.size
    nu = traj.controls.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(trace_columns(record, state_names))
        for k in range(N):
            u = traj.controls[k] if k < traj.controls.shape[0] else np.full(nu, np.nan)
            row = [traj.times[k], *traj.states[k], *u]
            for tid in record.task_ids:
                row += list(record.psi[tid][k])
            for tid in record.task_ids:
                row.append(record.slack[tid][k] if k < record.slack[tid].size else np.nan)
            w.writerow([repr(float(v)) for v in row] + [";".join(record.active[k])])


def read_trace(path) -> dict:
    """Columns of a trace CSV; numeric columns become float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        out[name] = col if name == "active" else np.array([float(v) for v in col])
    return out


# commands ------------------------------------------------------------------

def run_one(path: str, out_dir: str, dt=None, horizon=None, seed=None) -> tuple[int, str]:
    """Run one scenario; returns (exit code, report text)."""
    try:
        loaded = load(path, dt=dt, horizon=horizon, seed=seed)
        record = run(loaded.scenario)
    except HoclbfError as exc:
        return EXIT_ERROR, f"error: {type(exc).__name__}: {exc}"
    verdict = verdict_of(loaded, record)
    name = loaded.scenario.name or "scenario"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(record, out / f"{name}.csv", loaded.scenario.system.state_names)
    (out / f"{name}.events.log").write_text(record.event_log() + ("\n" if record.events else ""))
    qp = record.qp
    lines = [f"scenario {name}: {qp.solves} QPs, {qp.infeasible} infeasible, "
             f"{qp.relaxed_rows} relaxed rows, {qp.safety_relaxations} safety relaxations",
             f"trace {out / f'{name}.csv'}"]
    if verdict is None:
        lines.append("STL: NONE")
        return EXIT_SATISFIED, "\n".join(lines)
    lines.append(f"STL: {'SATISFIED' if verdict else 'VIOLATED'}")
    return (EXIT_SATISFIED if verdict else EXIT_VIOLATED), "\n".join(lines)


def describe(path: str, horizon=None) -> str:
    loaded = load(path, horizon=horizon)
    sc = loaded.scenario
    lines = [f"scenario {sc.name}", f"system {sc.system.name}", f"x0 {list(sc.x0)}",
             f"T {sc.T:g}  dt {sc.dt:g}  horizon {sc.config.horizon:g}  switching {sc.switching}"]
    if sc.fixed:
        lines.append("fixed chains:")
        for ft in sc.fixed:
            ch = ft.chain
            cls = "Class1" if ch.mode is Mode.CLASS1 else "Class2"
            lines.append(f"  {ft.id}  m={ch.m}  {cls}  {fmt_gains(ch)}")
        if loaded.formula is not None:
            lines.append(f"verdict formula {stl.to_text(loaded.formula)}")
        return "\n".join(lines)
    tasks, residual = stl.decompose(loaded.formula, sc.x0)
    sched = Scheduler(sc.system, tasks, sc.config, x0=sc.x0)
    x0 = np.asarray(sc.x0)
    header = f"  {'task':<16} {'kind':<4} {'interval':<10} {'deadline':<9} {'reldeg':<6} {'class':<7} planned (p; q)"
    lines += ["tasks:", header]
    for rt in sched.runtimes:
        task = rt.task
        deadline = "immediate" if task.deadline <= 0 else f"{task.deadline:g}"
        try:
            sched._build_chain(rt, x0, 0.0)
            cls = "Class1" if rt.class1 else "Class2"
            p = ",".join(f"{v:.4g}" for v in rt.chain.p)
            q = ",".join(f"{v:.4g}" for v in rt.chain.q)
            plan = f"({p}; {q})"
        except HoclbfError as exc:
            cls, plan = "-", f"unplannable: {exc}"
        lines.append(f"  {task.id:<16} {task.kind:<4} {str(task.interval):<10} {deadline:<9} {rt.m:<6} {cls:<7} {plan}")
    if residual:
        lines.append(f"residual (checked by the monitor only): {len(residual)}")
    return "\n".join(lines)


def _configure_logging() -> None:
    level = os.environ.get("HOCLBF_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hoclbf", description="Run STL control scenarios with barrier-function QPs.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate scenario files or built-in names")
    r.add_argument("files", nargs="+")
    r.add_argument("--out", default="hoclbf-out", help="output directory for traces and event logs")
    r.add_argument("--dt", type=float)
    r.add_argument("--horizon", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int, default=1, help="scenario files run in parallel")
    d = sub.add_parser("describe", help="print the task table of a scenario")
    d.add_argument("file")
    d.add_argument("--horizon", type=float)
    sub.add_parser("list-builtin", help="list the built-in scenarios")
    return ap


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if args.command == "list-builtin":
        for name in builtin_names():
            data = json.loads(resources.files("hoclbf").joinpath("scenarios", f"{name}.json").read_text())
            print(f"{name:<22} {data.get('description', '')}")
        return 0
    if args.command == "describe":
        try:
            print(describe(args.file, args.horizon))
        except HoclbfError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_ERROR
        return 0
    jobs = [(f, args.out, args.dt, args.horizon, args.seed) for f in args.files]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_one, *zip(*jobs)))
    else:
        results = [run_one(*j) for j in jobs]
    codes = []
    for code, text in results:
        print(text, file=sys.stderr if code == EXIT_ERROR else sys.stdout)
        codes.append(code)
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_VIOLATED if EXIT_VIOLATED in codes else EXIT_SATISFIED


if __name__ == "__main__":
    sys.exit(main())

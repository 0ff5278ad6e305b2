"""Barrier-function chains and QP control for signal temporal logic tasks."""

from __future__ import annotations

from .barrier import BarrierChain, ClassKSpec, Mode, classify, constraint_row, make_chain, switch_update
from .dynamics import AffineSystem, ScalarField, double_integrator, single_integrator, unicycle
from .errors import ConfigError, HoclbfError
from .qp import QpProblem, QpSolution, solve
from .scheduler import Scheduler, SchedulerConfig
from .sim import FixedTask, RunRecord, Scenario, run
from .stl import monitor, parse

__all__ = [
    "AffineSystem", "BarrierChain", "ClassKSpec", "ConfigError", "FixedTask", "HoclbfError", "Mode",
    "QpProblem", "QpSolution", "RunRecord", "ScalarField", "Scenario", "Scheduler", "SchedulerConfig",
    "classify", "constraint_row", "double_integrator", "make_chain", "monitor", "parse", "run",
    "single_integrator", "solve", "switch_update", "unicycle",
]
__version__ = "0.1.0"

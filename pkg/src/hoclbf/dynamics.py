"""Affine control systems and Lie derivatives computed with nested jets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jet
from .errors import HoclbfError
from .jet import Jet, level_of

#: Threshold below which an L_g row counts as "u absent".
RELDEG_TOL = 1e-9


@dataclass(frozen=True)
class AffineSystem:
    """Dynamics xdot = f(x) + g(x) u with box-bounded control.

    ``drift`` and ``input`` must accept sequences of floats *or* jets, so they
    should use the functions in :mod:`hoclbf.jet` instead of :mod:`math`.
    ``input`` returns an n-by-q nested sequence.
    """

    n: int
    q: int
    drift: Callable
    input: Callable
    u_min: tuple
    u_max: tuple
    state_names: tuple = ()
    name: str = ""

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.u_min))
        hi = tuple(float(v) for v in np.atleast_1d(self.u_max))
        if len(lo) != self.q or len(hi) != self.q:
            raise ValueError("control bounds must have length q")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("u_min must not exceed u_max")
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(f"x{i + 1}" for i in range(self.n)))

    def f(self, x) -> np.ndarray:
        return np.asarray(self.drift(list(map(float, x))), dtype=float)

    def g(self, x) -> np.ndarray:
        return np.asarray(self.input(list(map(float, x))), dtype=float).reshape(self.n, self.q)

    def xdot(self, x, u) -> np.ndarray:
        return self.f(x) + self.g(x) @ np.atleast_1d(np.asarray(u, dtype=float))

    def clip(self, u) -> np.ndarray:
        return np.clip(np.atleast_1d(u), self.u_min, self.u_max)


def unicycle(v: float = 1.732, u_min: float = -0.6, u_max: float = 0.6) -> AffineSystem:
    """Constant-speed unicycle; the control is the turn rate."""
    v = float(v)

    def drift(x):
        th = x[2]
        return [v * jet.cos(th), v * jet.sin(th), 0.0]

    def inp(x):
        return [[0.0], [0.0], [1.0]]

    return AffineSystem(3, 1, drift, inp, (u_min,), (u_max,), ("x", "y", "theta"), f"unicycle(v={v:g})")


def single_integrator(dim: int = 2, u_min: float = -1.0, u_max: float = 1.0) -> AffineSystem:
    def drift(x):
        return [0.0] * dim

    def inp(x):
        return [[1.0 if i == j else 0.0 for j in range(dim)] for i in range(dim)]

    names = tuple(f"x{i + 1}" for i in range(dim))
    return AffineSystem(dim, dim, drift, inp, (u_min,) * dim, (u_max,) * dim, names, "single_integrator")


def double_integrator(dim: int = 1, u_min: float = -1.0, u_max: float = 1.0) -> AffineSystem:
    """Positions x1..xd followed by velocities v1..vd; controls are accelerations."""

    def drift(x):
        return list(x[dim:]) + [0.0] * dim

    def inp(x):
        return [[0.0] * dim for _ in range(dim)] + [
            [1.0 if i == j else 0.0 for j in range(dim)] for i in range(dim)
        ]

    names = tuple(f"x{i + 1}" for i in range(dim)) + tuple(f"v{i + 1}" for i in range(dim))
    return AffineSystem(2 * dim, dim, drift, inp, (u_min,) * dim, (u_max,) * dim, names, "double_integrator")


@dataclass(frozen=True)
class ScalarField:
    """A map R^n -> R that can be evaluated on floats or jets.

    ``order`` is how many times the field may be differentiated. ``gradient``
    is an optional analytic override used by :func:`grad` on float inputs.
    """

    func: Callable
    order: int = 8
    gradient: Callable | None = field(default=None, compare=False)
    name: str = ""

    def __call__(self, x):
        return self.func(x)

    def value(self, x) -> float:
        return jet.real(self.func(list(x)))


def constant(c: float) -> ScalarField:
    return ScalarField(lambda x: c, order=1 << 30, name=f"{c:g}")


def _dot(a: Sequence, b: Sequence):
    total = 0.0
    for ai, bi in zip(a, b):
        total = total + ai * bi
    return total


def value_and_partials(field_, x):
    """Value and gradient of ``field_`` at ``x``; works for float and jet ``x``."""
    xs = list(x)
    lifted = jet.lift(xs)
    level = lifted[0].level if lifted else 1
    out = field_(lifted)
    if isinstance(out, Jet) and out.level == level:
        return out.value, list(out.partials)
    return out, [0.0] * len(xs)


def grad(field_: ScalarField, x, use_override: bool = True) -> tuple[float, np.ndarray]:
    """Value and gradient at a float point.

    Raises :class:`~hoclbf.errors.NonDifferentiable` when a fractional power is
    differentiated at exactly zero (unless the clamp policy is active).
    """
    xs = [float(v) for v in x]
    if use_override and field_.gradient is not None:
        return float(field_.value(xs)), np.asarray(field_.gradient(xs), dtype=float)
    val, g = value_and_partials(field_, xs)
    return jet.real(val), np.array([jet.real(gi) for gi in g], dtype=float)


def lie_f(field_: ScalarField, sys: AffineSystem) -> ScalarField:
    """The field x -> grad(field)(x) . f(x)."""
    if field_.order < 1:
        raise ValueError(f"field {field_.name!r} cannot be differentiated further")

    def func(x):
        _, g = value_and_partials(field_, x)
        return _dot(g, sys.drift(x))

    return ScalarField(func, field_.order - 1, name=f"Lf({field_.name})")


def lie_f_power(field_: ScalarField, sys: AffineSystem, k: int) -> ScalarField:
    for _ in range(k):
        field_ = lie_f(field_, sys)
    return field_


def lie_g_row(field_: ScalarField, sys: AffineSystem, x) -> np.ndarray:
    """grad(field)(x)^T g(x): the coefficient of u in the field's time derivative."""
    _, g = grad(field_, x)
    return g @ sys.g(x)


def check_relative_degree(field_: ScalarField, sys: AffineSystem, m: int, samples) -> bool:
    if m < 1:
        raise ValueError("relative degree is at least 1")
    samples = [np.asarray(s, dtype=float) for s in samples]
    if not samples:
        raise ValueError("need at least one sample state")
    try:
        h = field_
        for _ in range(m - 1):
            if any(np.linalg.norm(lie_g_row(h, sys, s)) >= RELDEG_TOL for s in samples):
                return False
            h = lie_f(h, sys)
        return any(np.linalg.norm(lie_g_row(h, sys, s)) > RELDEG_TOL for s in samples)
    except (ValueError, ArithmeticError, HoclbfError):
        return False


def relative_degree(field_: ScalarField, sys: AffineSystem, samples, max_order: int = 4) -> int | None:
    """Smallest m for which :func:`check_relative_degree` holds, or None."""
    for m in range(1, max_order + 1):
        if check_relative_degree(field_, sys, m, samples):
            return m
    return None


def sample_states(center, n_samples: int = 16, scale: float = 1.0, seed: int = 0) -> list[np.ndarray]:
    """Deterministic sample states scattered around ``center``."""
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=float)
    return [center + scale * rng.standard_normal(center.shape) for _ in range(n_samples)]


__all__ = [
    "AffineSystem",
    "ScalarField",
    "Jet",
    "check_relative_degree",
    "constant",
    "double_integrator",
    "grad",
    "level_of",
    "lie_f",
    "lie_f_power",
    "lie_g_row",
    "relative_degree",
    "sample_states",
    "single_integrator",
    "unicycle",
    "value_and_partials",
]

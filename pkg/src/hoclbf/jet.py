"""Nested forward-mode dual numbers.

A :class:`Jet` carries a value and its first-order partials with respect to
the variables lifted by one call to :func:`lift`. Values and partials may
themselves be jets from an enclosing lift, which is how higher derivatives
(Lie derivatives of Lie derivatives) are obtained without symbolic algebra.

Every jet is tagged with a ``level``. Jets created by an inner lift always
have a higher level than the quantities they wrap, so arithmetic between
jets of different levels treats the lower-level operand as a constant.
"""

from __future__ import annotations

import contextlib
import contextvars
import logging
import math

from .errors import NonDifferentiable

logger = logging.getLogger(__name__)

#: Derivative magnitude substituted for |s|^q, q < 1, at s == 0 under the "clamp" policy.
ZERO_CLAMP = 1e12

_zero_policy: contextvars.ContextVar[str] = contextvars.ContextVar("zero_power_policy", default="raise")


@contextlib.contextmanager
def zero_power_policy(policy: str):
    """Select how fractional powers behave at exactly zero ("raise" or "clamp")."""
    if policy not in ("raise", "clamp"):
        raise ValueError(f"unknown zero-power policy {policy!r}")
    token = _zero_policy.set(policy)
    try:
        yield
    finally:
        _zero_policy.reset(token)


def level_of(v) -> int:
    return v.level if isinstance(v, Jet) else 0


def real(v) -> float:
    while isinstance(v, Jet):
        v = v.value
    return float(v)


class Jet:
    __slots__ = ("value", "partials", "level")

    def __init__(self, value, partials, level: int):
        self.value = value
        self.partials = tuple(partials)
        self.level = level

    def __repr__(self):
        return f"Jet({self.value!r}, {list(self.partials)!r}, level={self.level})"

    def __float__(self):
        return real(self)

    # comparisons look only at the real part
    def __lt__(self, other):
        return real(self) < real(other)

    def __le__(self, other):
        return real(self) <= real(other)

    def __gt__(self, other):
        return real(self) > real(other)

    def __ge__(self, other):
        return real(self) >= real(other)

    def _scaled(self, value, factor):
        return Jet(value, [p * factor for p in self.partials], self.level)

    def __neg__(self):
        return Jet(-self.value, [-p for p in self.partials], self.level)

    def __pos__(self):
        return self

    def __add__(self, other):
        lo = level_of(other)
        if lo < self.level:
            return Jet(self.value + other, self.partials, self.level)
        if lo > self.level:
            return other.__radd__(self)
        return Jet(self.value + other.value,
                   [p + q for p, q in zip(self.partials, other.partials)], self.level)

    def __radd__(self, other):
        return Jet(other + self.value, self.partials, self.level)

    def __sub__(self, other):
        lo = level_of(other)
        if lo < self.level:
            return Jet(self.value - other, self.partials, self.level)
        if lo > self.level:
            return other.__rsub__(self)
        return Jet(self.value - other.value,
                   [p - q for p, q in zip(self.partials, other.partials)], self.level)

    def __rsub__(self, other):
        return Jet(other - self.value, [-p for p in self.partials], self.level)

    def __mul__(self, other):
        lo = level_of(other)
        if lo < self.level:
            return self._scaled(self.value * other, other)
        if lo > self.level:
            return other.__rmul__(self)
        a, b = self.value, other.value
        return Jet(a * b, [a * q + b * p for p, q in zip(self.partials, other.partials)], self.level)

    def __rmul__(self, other):
        return self._scaled(other * self.value, other)

    def reciprocal(self):
        inv = 1.0 / self.value
        return self._scaled(inv, -(inv * inv))

    def __truediv__(self, other):
        lo = level_of(other)
        if lo < self.level:
            inv = 1.0 / other
            return self._scaled(self.value * inv, inv)
        if lo > self.level:
            return other.__rtruediv__(self)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return other * self.reciprocal()

    def __pow__(self, r):
        if isinstance(r, Jet):
            return exp(r * log(self))
        if r == 0:
            return Jet(self.value ** 0, [0.0 * p for p in self.partials], self.level)
        if r == 1:
            return self
        if float(r).is_integer():
            r = int(r)
        return self._scaled(self.value ** r, r * self.value ** (r - 1))

    def __rpow__(self, base):
        return exp(self * log(base))

    def __abs__(self):
        s = math.copysign(1.0, real(self.value)) if real(self.value) != 0 else 0.0
        return self._scaled(abs(self.value), s)


def lift(xs, level: int | None = None) -> list[Jet]:
    """Seed one jet per coordinate of ``xs`` with a unit partial."""
    xs = list(xs)
    if level is None:
        level = 1 + max((level_of(v) for v in xs), default=0)
    n = len(xs)
    out = []
    for i, v in enumerate(xs):
        seed = [0.0] * n
        seed[i] = 1.0
        out.append(Jet(v, seed, level))
    return out


# elementary functions -----------------------------------------------------

def _unary(fn, dfn):
    def op(a):
        if isinstance(a, Jet):
            return a._scaled(op(a.value), dfn(a.value))
        return fn(a)
    op.__name__ = fn.__name__
    return op


sin = _unary(math.sin, lambda v: cos(v))
cos = _unary(math.cos, lambda v: -sin(v))
exp = _unary(math.exp, lambda v: exp(v))
log = _unary(math.log, lambda v: 1.0 / v)
sqrt = _unary(math.sqrt, lambda v: 0.5 / sqrt(v))
tan = _unary(math.tan, lambda v: 1.0 + tan(v) ** 2)


def _zero_derivative(q):
    if _zero_policy.get() == "raise":
        raise NonDifferentiable(f"|s|^{q:g} is not differentiable at s = 0")
    logger.warning("fractional power %.4g evaluated at exactly 0; derivative clamped to %g", q, ZERO_CLAMP)
    return ZERO_CLAMP


def spow(a, q: float):
    """Sign-preserving power sign(a)*|a|**q."""
    if isinstance(a, Jet):
        v = a.value
        if q < 1 and real(v) == 0.0:
            factor = _zero_derivative(q)
        else:
            factor = q * apow(v, q - 1)
        return a._scaled(spow(v, q), factor)
    a = float(a)
    if a == 0.0:
        return 0.0
    return math.copysign(abs(a) ** q, a)


def apow(a, r: float):
    """Absolute power |a|**r."""
    if isinstance(a, Jet):
        v = a.value
        if r == 0:
            factor = 0.0
        elif r < 1 and real(v) == 0.0:
            factor = _zero_derivative(r)
        else:
            factor = r * spow(v, r - 1)
        return a._scaled(apow(v, r), factor)
    a = abs(float(a))
    if a == 0.0:
        if r > 0:
            return 0.0
        return 1.0 if r == 0 else math.inf
    return a ** r

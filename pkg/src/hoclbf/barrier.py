"""psi-chains for high order barrier / Lyapunov-barrier functions.

A chain starts from a predicate b (psi_0 = b) and builds

    psi_i(x) = d/dt psi_{i-1}(x) + p_i * beta_i(psi_{i-1}(x))

along the drift. The last level is linear in u at a frozen state and becomes
one QP row. Class 1 chains carry at least one exponent in (0, 1) and reach the
set in finite time; Class 2 chains have all exponents >= 1.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import jet
from .dynamics import AffineSystem, ScalarField, value_and_partials, _dot
from .errors import DegenerateRow, InvalidExponent

log = logging.getLogger(__name__)

SWITCH_EPS = 1e-3
P_FLOOR = 0.1
SWITCH_MARGIN = 0.5


class Form(enum.Enum):
    PLAIN = "plain"
    SIGNED = "signed"


class Mode(enum.Enum):
    HOCBF = "hocbf"
    CLASS1 = "class1"
    CLASS2 = "class2"


class Structure(enum.Enum):
    STANDARD = "standard"
    # levels below m0 drop their class-K term
    GSTRUCTURE = "g"


def _is_odd_power(q: float) -> bool:
    for k in (q, 1.0 / q):
        r = round(k)
        if abs(k - r) < 1e-9 and r >= 1 and r % 2 == 1:
            return True
    return False


@dataclass(frozen=True)
class ClassKSpec:
    """Gain and exponent of one power-type class-K term, p * beta(s)."""

    p: float
    q: float = 1.0
    form: Form = Form.SIGNED

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("class-K gain must be non-negative")
        if self.q <= 0:
            raise InvalidExponent(f"exponent must be positive, got {self.q}")
        if self.form is Form.PLAIN and not _is_odd_power(self.q):
            raise InvalidExponent(f"plain power needs q = k or 1/k with odd k, got {self.q}")

    def beta(self, s):
        # an odd power and its sign-preserving counterpart coincide on the reals
        return jet.spow(s, self.q)

    def __call__(self, s):
        return self.p * self.beta(s)


@dataclass(frozen=True)
class BarrierChain:
    predicate: ScalarField
    m: int
    levels: tuple
    mode: Mode = Mode.HOCBF
    m0: int = 1
    structure: Structure = Structure.STANDARD

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.m < 1:
            raise ValueError("relative degree must be >= 1")
        if len(self.levels) != self.m:
            raise ValueError(f"need {self.m} class-K levels, got {len(self.levels)}")
        if not 1 <= self.m0 <= self.m:
            raise ValueError(f"m0 must lie in [1, {self.m}]")

    def has_term(self, i: int) -> bool:
        """Whether level i (1-based) adds its class-K term."""
        return not (self.structure is Structure.GSTRUCTURE and i < self.m0)

    @property
    def p(self):
        return tuple(lv.p for lv in self.levels)

    @property
    def q(self):
        return tuple(lv.q for lv in self.levels)

    def with_level(self, i: int, spec: ClassKSpec) -> "BarrierChain":
        levels = list(self.levels)
        levels[i - 1] = spec
        return replace(self, levels=tuple(levels))


def make_chain(predicate: ScalarField, p, q, mode: Mode | None = None, form: Form = Form.SIGNED,
               m0: int = 1, structure: Structure = Structure.STANDARD) -> BarrierChain:
    levels = tuple(ClassKSpec(float(pi), float(qi), form) for pi, qi in zip(p, q))
    if mode is None:
        mode = Mode.CLASS1 if any(0 < lv.q < 1 for lv in levels) else Mode.CLASS2
    return BarrierChain(predicate, len(levels), levels, mode, m0, structure)


def psi_fields(chain: BarrierChain, sys: AffineSystem) -> list[ScalarField]:
    """ScalarFields psi_0 .. psi_{m-1} of the chain."""
    fields = [chain.predicate]
    for i in range(1, chain.m):
        prev = fields[-1]
        spec = chain.levels[i - 1]
        use_term = chain.has_term(i)

        def func(x, prev=prev, spec=spec, use_term=use_term):
            val, g = value_and_partials(prev, x)
            out = _dot(g, sys.drift(x))
            if use_term:
                out = out + spec(val)
            return out

        fields.append(ScalarField(func, max(prev.order - 1, 0), name=f"psi{i}"))
    return fields


def psi_values(chain: BarrierChain, sys: AffineSystem, x) -> np.ndarray:
    """Values psi_0 .. psi_{m-1} at a float state."""
    fields = psi_fields(chain, sys)
    xs = [float(v) for v in x]
    with jet.zero_power_policy("clamp"):
        return np.array([f.value(xs) for f in fields], dtype=float)


def psi_derivatives(chain: BarrierChain, sys: AffineSystem, x) -> np.ndarray:
    """Drift derivatives d/dt psi_i along f for i < m-1 (these are u-free)."""
    fields = psi_fields(chain, sys)
    xs = [float(v) for v in x]
    out = []
    with jet.zero_power_policy("clamp"):
        for f in fields[:-1]:
            _, g = value_and_partials(f, xs)
            out.append(jet.real(_dot(g, sys.drift(xs))))
    return np.array(out, dtype=float)


@dataclass(frozen=True)
class ConstraintRow:
    """a . u + c >= 0 at a frozen state."""

    a: np.ndarray
    c: float
    owner: str = ""
    relaxable: bool = False
    psi: np.ndarray = field(default=None, compare=False, repr=False)


def constraint_row(chain: BarrierChain, sys: AffineSystem, x, owner: str = "", relaxable: bool = False,
                   strict: bool = True) -> ConstraintRow:
    """Linearize the last chain level in u.

    With ``strict`` a row with no control authority and a negative constant
    raises :class:`DegenerateRow`; otherwise the row is returned as is.
    """
    fields = psi_fields(chain, sys)
    xs = [float(v) for v in x]
    top = chain.levels[-1]
    with jet.zero_power_policy("clamp"):
        values = [f.value(xs) for f in fields[:-1]]
        val, g = value_and_partials(fields[-1], xs)
        val = jet.real(val)
        grad_ = np.array([jet.real(gi) for gi in g], dtype=float)
    values.append(val)
    a = grad_ @ sys.g(xs)
    c = float(grad_ @ sys.f(xs))
    if chain.has_term(chain.m):
        c += float(top(val))
    if strict and np.linalg.norm(a) < 1e-12 and c < 0:
        raise DegenerateRow(f"row for {owner or chain.predicate.name!r} has no control authority (c={c:.4g})", a, c)
    return ConstraintRow(a, c, owner, relaxable, np.array(values))


def classify(chain: BarrierChain) -> Mode:
    return Mode.CLASS1 if any(0 < lv.q < 1 for lv in chain.levels) else Mode.CLASS2


def compute_m0(psi0_values, m: int) -> int:
    """Smallest i in 1..m-1 with psi_i > 0 at the current time, else m."""
    for i, v in enumerate(list(psi0_values)[: m - 1], start=1):
        if v > 0:
            return i
    return m


def finite_time_bound(psi0: float, p: float, q: float) -> float:
    """Time at which the comparison bound for psi' = -p*beta(psi) reaches zero."""
    if not 0 < q < 1:
        raise InvalidExponent(f"finite-time bound needs q in (0, 1), got {q}")
    if p <= 0:
        raise ValueError("gain must be positive")
    return abs(psi0) ** (1 - q) / (p * (1 - q))


class LowerBound(NamedTuple):
    value: float
    past_horizon: bool = False


def closed_form_lower_bound(psi0: float, p: float, q: float, t: float) -> LowerBound:
    """Exact solution of psi' = -p * sign(psi)|psi|^q from psi0 at time t.

    For q < 1 the solution hits zero at :func:`finite_time_bound` and is reported
    as 0 with ``past_horizon`` set from then on.
    """
    if q <= 0:
        raise InvalidExponent(f"exponent must be positive, got {q}")
    if t < 0:
        raise ValueError("t must be non-negative")
    if psi0 == 0:
        return LowerBound(0.0)
    sgn = math.copysign(1.0, psi0)
    mag = abs(psi0)
    if q == 1:
        return LowerBound(psi0 * math.exp(-p * t))
    base = mag ** (1 - q) - p * (1 - q) * t
    if q > 1:
        return LowerBound(sgn * base ** (1.0 / (1 - q)))
    if base <= 0:
        return LowerBound(0.0, past_horizon=base < 0)
    return LowerBound(sgn * base ** (1.0 / (1 - q)))


def promoted_gain(psi_prev: float, psi_prev_dot: float, q: float, p_floor: float = P_FLOOR,
                  margin: float = SWITCH_MARGIN) -> float:
    """Gain making psi_prev' + p*psi_prev^q >= margin*psi_prev for positive psi_prev."""
    need = (-psi_prev_dot + margin * psi_prev) / jet.spow(psi_prev, q)
    return max(p_floor, need)


def switch_update(chain: BarrierChain, sys: AffineSystem, x, eps: float = SWITCH_EPS, q_class2: float = 1.0,
                  p_floor: float = P_FLOOR, margin: float = SWITCH_MARGIN) -> BarrierChain:
    """Promote finite-time levels whose argument has become positive.

    Levels are visited bottom-up because promoting level i changes psi_i, the
    argument of level i + 1. A level whose argument lies in (0, eps] is left
    alone. The returned chain is Class 2 once every level has q >= 1.
    """
    if chain.mode is not Mode.CLASS1:
        return chain
    for i in range(1, chain.m + 1):
        spec = chain.levels[i - 1]
        if spec.q >= 1 or not chain.has_term(i):
            continue
        psi = psi_values(chain, sys, x)
        arg = psi[i - 1]
        if arg <= eps:
            continue
        if i < chain.m:
            dots = psi_derivatives(chain, sys, x)
            p_new = promoted_gain(arg, dots[i - 1], q_class2, p_floor, margin)
        else:
            p_new = max(p_floor, spec.p)
        log.debug("promoting level %d: q %.3g -> %.3g, p %.3g -> %.3g", i, spec.q, q_class2, spec.p, p_new)
        chain = chain.with_level(i, ClassKSpec(p_new, q_class2, Form.SIGNED))
    if all(lv.q >= 1 for lv in chain.levels):
        chain = replace(chain, mode=Mode.CLASS2)
    return chain


def convergence_time_upper_bound(chain: BarrierChain, psi_at_crossings) -> float:
    """Sum of per-level finite-time bounds over levels 1..m0."""
    psi_at_crossings = list(psi_at_crossings)
    total = 0.0
    for i, psi in enumerate(psi_at_crossings, start=1):
        spec = chain.levels[i - 1]
        if psi == 0:
            continue
        total += finite_time_bound(psi, spec.p, spec.q)
    return total


def class2_chain(predicate: ScalarField, m: int, sys: AffineSystem, x, gains, q: float = 1.0,
                 p_floor: float = P_FLOOR, margin: float = SWITCH_MARGIN) -> BarrierChain:
    """Class 2 chain with every intermediate psi non-negative at ``x``.

    ``gains`` are the preferred gains; an intermediate gain is raised when
    needed so that x lies in the intersection of the chain's sets.
    """
    gains = list(gains) + [gains[-1]] * (m - len(gains))
    chain = make_chain(predicate, gains[:m], [q] * m, Mode.CLASS2)
    for i in range(1, m):
        psi = psi_values(chain, sys, x)
        arg = psi[i - 1]
        if arg <= 0:
            break
        dots = psi_derivatives(chain, sys, x)
        p_min = promoted_gain(arg, dots[i - 1], q, p_floor, margin)
        if chain.levels[i - 1].p < p_min:
            chain = chain.with_level(i, ClassKSpec(p_min, q))
    return chain


def eventually_positive_gain(psi0: float, psi0_dot: float, q: float) -> float:
    """Largest gain keeping psi0_dot + p*beta(psi0) >= 0 for negative psi0 (inf if unconstrained)."""
    if psi0 >= 0:
        return math.inf
    return psi0_dot / abs(psi0) ** q if psi0_dot > 0 else 0.0

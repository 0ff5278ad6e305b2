"""Negation-free signal temporal logic: parser, printer, sampled monitor and task decomposition.

Concrete grammar (whitespace-insensitive)::

    formula   := implies
    implies   := or ( "=>" implies )?
    or        := and ( "||" and )*
    and       := until ( "&&" until )*
    until     := unary ( "U" interval unary )?
    unary     := "G" interval unary | "F" interval unary | "(" formula ")" | predicate
    interval  := "[" number "," number "]"
    predicate := expr ( ">=" | "<=" | ">" | "<" ) expr
    expr      := arithmetic over numbers, pi, state names, named definitions,
                 + - * / ^, unary minus and sin cos tan sqrt abs exp log
"""

from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import jet
from .dynamics import ScalarField
from .errors import BadInterval, InsufficientHorizon, Intractable, NegationUnsupported, STLSyntaxError

#: Tolerance used when snapping quantifier windows to sample times.
TIME_EPS = 1e-9


# expression AST -----------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str
    index: int


@dataclass(frozen=True)
class Ref:
    """A named definition such as ``b1``; resolved when the field is compiled."""

    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


FUNCTIONS: dict[str, Callable] = {
    "sin": jet.sin,
    "cos": jet.cos,
    "tan": jet.tan,
    "sqrt": jet.sqrt,
    "exp": jet.exp,
    "log": jet.log,
    "abs": abs,
}

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _power(a, b):
    if isinstance(b, float) and b.is_integer():
        b = int(b)
    return a ** b


_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "^": _power,
}


def compile_expr(node, definitions: Mapping[str, object] | None = None, _stack=()) -> Callable:
    """Closure evaluating ``node`` on a state sequence of floats or jets."""
    definitions = definitions or {}
    if isinstance(node, Num):
        v = node.value
        return lambda x: v
    if isinstance(node, Var):
        i = node.index
        return lambda x: x[i]
    if isinstance(node, Ref):
        if node.name in _stack:
            raise STLSyntaxError(f"definition {node.name!r} refers to itself")
        if node.name not in definitions:
            raise STLSyntaxError(f"unknown definition {node.name!r}")
        return compile_expr(definitions[node.name], definitions, _stack + (node.name,))
    if isinstance(node, Neg):
        inner = compile_expr(node.arg, definitions, _stack)
        return lambda x: -inner(x)
    if isinstance(node, BinOp):
        lf = compile_expr(node.lhs, definitions, _stack)
        rf = compile_expr(node.rhs, definitions, _stack)
        op = _BINARY[node.op]
        return lambda x: op(lf(x), rf(x))
    if isinstance(node, Call):
        inner = compile_expr(node.arg, definitions, _stack)
        fn = FUNCTIONS[node.func]
        return lambda x: fn(inner(x))
    raise TypeError(f"not an expression node: {node!r}")


def _fmt_num(v: float) -> str:
    if v == math.pi:
        return "pi"
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def _expr_prec(node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg) or (isinstance(node, Num) and math.copysign(1.0, node.value) < 0):
        return _PREC["neg"]
    return _PREC["atom"]


def print_expr(node) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, (Var, Ref)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({print_expr(node.arg)})"
    if isinstance(node, Neg):
        inner = print_expr(node.arg)
        # a folded negative literal or another negation would merge with this sign
        if _expr_prec(node.arg) < _PREC["^"] or isinstance(node.arg, Num):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left, right = print_expr(node.lhs), print_expr(node.rhs)
        lp, rp = _expr_prec(node.lhs), _expr_prec(node.rhs)
        if lp < p or (node.op == "^" and lp <= p):
            left = f"({left})"
        if rp < p or (rp == p and node.op in "-/"):
            right = f"({right})"
        sep = "^" if node.op == "^" else f" {node.op} "
        return f"{left}{sep}{right}"
    raise TypeError(f"not an expression node: {node!r}")


# formula AST --------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not (0 <= self.a <= self.b) or not math.isfinite(self.b):
            raise BadInterval(f"interval [{self.a:g},{self.b:g}] must satisfy 0 <= a <= b < inf")

    def __str__(self):
        return f"[{_fmt_num(self.a)},{_fmt_num(self.b)}]"


@dataclass(frozen=True)
class Predicate:
    """``lhs op rhs``; the oriented field is lhs - rhs for >= and > and rhs - lhs otherwise."""

    lhs: object
    op: str
    rhs: object
    field: ScalarField | None = field(default=None, compare=False, repr=False)

    @property
    def strict(self) -> bool:
        return self.op in (">", "<")

    @property
    def label(self) -> str:
        if isinstance(self.lhs, Ref) and self.rhs == Num(0.0) and self.op in (">=", ">"):
            return self.lhs.name
        return print_expr(self.lhs) + f" {self.op} " + print_expr(self.rhs)

    def value(self, x) -> float:
        return self.field.value(x)

    def holds(self, x) -> bool:
        v = self.value(x)
        return v > 0 if self.strict else v >= 0


@dataclass(frozen=True)
class And:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Or:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Implies:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Always:
    interval: Interval
    arg: object


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    arg: object


@dataclass(frozen=True)
class Until:
    interval: Interval
    lhs: object
    rhs: object


def make_predicate(lhs, op: str, rhs, definitions: Mapping[str, object] | None = None,
                   name: str = "") -> Predicate:
    lf = compile_expr(lhs, definitions)
    rf = compile_expr(rhs, definitions)
    if op in (">=", ">"):
        func = lambda x: lf(x) - rf(x)  # noqa: E731
    else:
        func = lambda x: rf(x) - lf(x)  # noqa: E731
    pred = Predicate(lhs, op, rhs)
    f = ScalarField(func, name=name or pred.label)
    return Predicate(lhs, op, rhs, f)


def to_text(phi) -> str:
    """Text that parses back to a structurally equal formula."""
    if isinstance(phi, Predicate):
        return f"({print_expr(phi.lhs)} {phi.op} {print_expr(phi.rhs)})"
    if isinstance(phi, And):
        return f"({to_text(phi.lhs)} && {to_text(phi.rhs)})"
    if isinstance(phi, Or):
        return f"({to_text(phi.lhs)} || {to_text(phi.rhs)})"
    if isinstance(phi, Implies):
        return f"({to_text(phi.lhs)} => {to_text(phi.rhs)})"
    if isinstance(phi, Always):
        return f"G{phi.interval}{to_text(phi.arg)}"
    if isinstance(phi, Eventually):
        return f"F{phi.interval}{to_text(phi.arg)}"
    if isinstance(phi, Until):
        return f"({to_text(phi.lhs)} U{phi.interval} {to_text(phi.rhs)})"
    raise TypeError(f"not a formula node: {phi!r}")


def dump(phi, indent: int = 0) -> str:
    """Indented tree dump, one node per line."""
    pad = "  " * indent
    if isinstance(phi, Predicate):
        return f"{pad}Predicate {print_expr(phi.lhs)} {phi.op} {print_expr(phi.rhs)}"
    if isinstance(phi, (And, Or, Implies)):
        return "\n".join([f"{pad}{type(phi).__name__}", dump(phi.lhs, indent + 1), dump(phi.rhs, indent + 1)])
    if isinstance(phi, (Always, Eventually)):
        return "\n".join([f"{pad}{type(phi).__name__} {phi.interval}", dump(phi.arg, indent + 1)])
    if isinstance(phi, Until):
        return "\n".join([f"{pad}Until {phi.interval}", dump(phi.lhs, indent + 1), dump(phi.rhs, indent + 1)])
    raise TypeError(f"not a formula node: {phi!r}")


def horizon(phi) -> float:
    """Length of signal needed past the evaluation time."""
    if isinstance(phi, Predicate):
        return 0.0
    if isinstance(phi, (And, Or, Implies)):
        return max(horizon(phi.lhs), horizon(phi.rhs))
    if isinstance(phi, (Always, Eventually)):
        return phi.interval.b + horizon(phi.arg)
    if isinstance(phi, Until):
        return phi.interval.b + max(horizon(phi.lhs), horizon(phi.rhs))
    raise TypeError(f"not a formula node: {phi!r}")


def predicates(phi) -> list[Predicate]:
    if isinstance(phi, Predicate):
        return [phi]
    if isinstance(phi, (Always, Eventually)):
        return predicates(phi.arg)
    return predicates(phi.lhs) + predicates(phi.rhs)


# parser -------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>>=|<=|=>|&&|\|\||!=|[-+*/^()\[\],<>!]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise STLSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start))
        pos = m.end()
    toks.append(_Tok("eof", "", n))
    return toks


class _Parser:
    def __init__(self, text: str, state_names: Sequence[str], definitions: Mapping[str, object]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.names = {name: k for k, name in enumerate(state_names)}
        self.definitions = dict(definitions)
        self.furthest: STLSyntaxError | None = None

    # helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, expected: str, tok: _Tok | None = None) -> STLSyntaxError:
        tok = tok or self.tok
        got = tok.text or "end of input"
        err = STLSyntaxError(f"expected {expected}, got {got!r}", tok.pos, expected)
        if self.furthest is None or (err.position or 0) >= (self.furthest.position or 0):
            self.furthest = err
        return err

    def accept(self, text: str) -> bool:
        if self.tok.kind != "num" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            raise self.error(repr(text))

    def check_negation(self):
        t = self.tok
        if t.text in ("!", "!=") or (t.kind == "id" and t.text == "not"):
            raise NegationUnsupported("negation is not part of the supported grammar", t.pos, "formula")

    def temporal_keyword(self) -> str | None:
        t = self.tok
        if t.kind == "id" and t.text in ("G", "F", "U") and self.peek().text == "[":
            return t.text
        return None

    # formulas
    def formula(self):
        lhs = self.disjunction()
        if self.accept("=>"):
            return Implies(lhs, self.formula())
        return lhs

    def disjunction(self):
        node = self.conjunction()
        while self.accept("||"):
            node = Or(node, self.conjunction())
        return node

    def conjunction(self):
        node = self.until()
        while self.accept("&&"):
            node = And(node, self.until())
        return node

    def until(self):
        lhs = self.unary()
        if self.temporal_keyword() == "U":
            self.i += 1
            iv = self.interval()
            return Until(iv, lhs, self.unary())
        return lhs

    def unary(self):
        self.check_negation()
        kw = self.temporal_keyword()
        if kw in ("G", "F"):
            self.i += 1
            iv = self.interval()
            arg = self.unary()
            return Always(iv, arg) if kw == "G" else Eventually(iv, arg)
        if self.tok.text == "(":
            save = self.i
            try:
                self.i += 1
                node = self.formula()
                self.expect(")")
                return node
            except (NegationUnsupported, BadInterval):
                raise
            except STLSyntaxError:
                self.i = save
        return self.predicate()

    def interval(self) -> Interval:
        self.expect("[")
        a_tok = self.tok
        a = self.number()
        self.expect(",")
        b = self.number()
        self.expect("]")
        if a > b:
            raise BadInterval(f"interval lower bound {a:g} exceeds upper bound {b:g}", a_tok.pos, "t_a <= t_b")
        return Interval(a, b)

    def number(self) -> float:
        node = self.expr()
        try:
            v = compile_expr(node, self.definitions)([])
        except (IndexError, STLSyntaxError):
            raise self.error("a constant")
        return float(v)

    def predicate(self) -> Predicate:
        start = self.tok
        lhs = self.expr()
        op = self.tok.text
        if op not in (">=", "<=", ">", "<"):
            raise self.error("comparison '>=' or '<='")
        self.i += 1
        rhs = self.expr()
        try:
            return make_predicate(lhs, op, rhs, self.definitions)
        except STLSyntaxError as exc:
            raise STLSyntaxError(str(exc), start.pos) from None

    # arithmetic
    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        self.check_negation()
        if self.accept("-"):
            inner = self.factor()
            if isinstance(inner, Num):
                return Num(-inner.value)
            return Neg(inner)
        if self.accept("+"):
            return self.factor()
        base = self.atom()
        if self.accept("^"):
            return BinOp("^", base, self.factor())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "id" and self.temporal_keyword() is None:
            self.i += 1
            if t.text == "pi":
                return Num(math.pi)
            if t.text in FUNCTIONS and self.tok.text == "(":
                self.i += 1
                arg = self.expr()
                self.expect(")")
                return Call(t.text, arg)
            if t.text in self.names:
                return Var(t.text, self.names[t.text])
            if t.text in self.definitions:
                return Ref(t.text)
            self.i -= 1
            raise self.error("a state variable, definition or number")
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        raise self.error("an expression")


def parse(text: str, state_names: Sequence[str] = ("x", "y", "theta"),
          definitions: Mapping[str, object] | None = None):
    """Parse formula text into an AST whose predicates carry compiled ScalarFields.

    ``definitions`` maps names to expression ASTs (see :func:`parse_expr`) or
    expression strings; they may be referenced inside predicates.
    """
    definitions = parse_definitions(definitions or {}, state_names)
    p = _Parser(text, state_names, definitions)
    if p.tok.kind == "eof":
        raise STLSyntaxError("empty formula", 0, "formula")
    try:
        node = p.formula()
    except STLSyntaxError as exc:
        if type(exc) is STLSyntaxError and p.furthest is not None \
                and (p.furthest.position or 0) > (exc.position or 0):
            raise p.furthest from None
        raise
    if p.tok.kind != "eof":
        err = p.error("end of input")
        if p.furthest is not None and (p.furthest.position or 0) > (err.position or 0):
            raise p.furthest
        raise err
    return node


def parse_expr(text: str, state_names: Sequence[str] = ("x", "y", "theta"),
               definitions: Mapping[str, object] | None = None):
    p = _Parser(text, state_names, definitions or {})
    node = p.expr()
    if p.tok.kind != "eof":
        raise p.error("end of expression")
    return node


def parse_definitions(defs: Mapping[str, object], state_names: Sequence[str]) -> dict:
    """Parse string-valued definitions; later entries may use earlier ones."""
    out: dict = {}
    for name, value in defs.items():
        if name in state_names or name in FUNCTIONS or name in ("pi", "G", "F", "U", "not"):
            raise STLSyntaxError(f"definition name {name!r} is reserved")
        out[name] = parse_expr(value, state_names, out) if isinstance(value, str) else value
    return out


def definition_field(name: str, definitions: Mapping[str, object], order: int = 8) -> ScalarField:
    return ScalarField(compile_expr(Ref(name), definitions), order=order, name=name)


# monitor ------------------------------------------------------------------

@dataclass(frozen=True)
class SampledTrajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a non-empty 1-d sequence")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if x.shape[0] != t.size:
            raise ValueError("one state per sample is required")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)
        if self.controls is not None:
            u = np.asarray(self.controls, dtype=float)
            if u.ndim == 1:
                u = u[:, None]
            if u.shape[0] not in (t.size - 1, t.size):
                raise ValueError("controls must have one entry per step")
            object.__setattr__(self, "controls", u)


class _Monitor:
    def __init__(self, traj: SampledTrajectory):
        self.traj = traj
        self.times = traj.times.tolist()
        self.memo: dict = {}
        self.pred_cache: dict = {}

    def nearest(self, t: float) -> int:
        k = bisect.bisect_left(self.times, t)
        if k == 0:
            return 0
        if k >= len(self.times):
            return len(self.times) - 1
        return k if self.times[k] - t < t - self.times[k - 1] else k - 1

    def window(self, lo: float, hi: float) -> range:
        # snap outward: last sample <= lo, first sample >= hi
        i = bisect.bisect_right(self.times, lo + TIME_EPS) - 1
        j = bisect.bisect_left(self.times, hi - TIME_EPS)
        return range(max(i, 0), min(j, len(self.times) - 1) + 1)

    def predicate(self, pred: Predicate) -> np.ndarray:
        key = id(pred)
        if key not in self.pred_cache:
            vals = np.array([pred.value(x) for x in self.traj.states])
            self.pred_cache[key] = vals > 0 if pred.strict else vals >= 0
        return self.pred_cache[key]

    def sat(self, phi, k: int) -> bool:
        key = (id(phi), k)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        out = self._sat(phi, k)
        self.memo[key] = out
        return out

    def _sat(self, phi, k: int) -> bool:
        t = self.times[k]
        if isinstance(phi, Predicate):
            return bool(self.predicate(phi)[k])
        if isinstance(phi, And):
            return self.sat(phi.lhs, k) and self.sat(phi.rhs, k)
        if isinstance(phi, Or):
            return self.sat(phi.lhs, k) or self.sat(phi.rhs, k)
        if isinstance(phi, Implies):
            return (not self.sat(phi.lhs, k)) or self.sat(phi.rhs, k)
        if isinstance(phi, Always):
            iv = phi.interval
            return all(self.sat(phi.arg, j) for j in self.window(t + iv.a, t + iv.b))
        if isinstance(phi, Eventually):
            iv = phi.interval
            return any(self.sat(phi.arg, j) for j in self.window(t + iv.a, t + iv.b))
        if isinstance(phi, Until):
            iv = phi.interval
            # the hold segment starts at the interval's own lower bound
            start = self.window(iv.a, iv.a).start
            for j in self.window(t + iv.a, t + iv.b):
                if self.sat(phi.rhs, j) and all(self.sat(phi.lhs, i) for i in range(start, j + 1)):
                    return True
            return False
        raise TypeError(f"not a formula node: {phi!r}")


def monitor(traj: SampledTrajectory, phi, t: float = 0.0) -> bool:
    """Boolean satisfaction of ``phi`` by the sampled trajectory at time ``t``."""
    need = t + horizon(phi)
    if traj.times[-1] < need - TIME_EPS or t < traj.times[0] - TIME_EPS:
        raise InsufficientHorizon(
            f"trajectory covers [{traj.times[0]:g}, {traj.times[-1]:g}] but [{t:g}, {need:g}] is needed")
    m = _Monitor(traj)
    return m.sat(phi, m.nearest(t))


# decomposition ------------------------------------------------------------

@dataclass(frozen=True)
class AtomicTask:
    id: str
    kind: str  # "G" or "F"
    interval: Interval
    predicate: Predicate
    disjunction_group: str | None = None
    #: id of the F task whose first satisfaction ends this G segment
    until_partner: str | None = None

    def __post_init__(self):
        if self.kind not in ("G", "F"):
            raise ValueError(f"task kind must be 'G' or 'F', got {self.kind!r}")

    @property
    def deadline(self) -> float:
        return self.interval.a if self.kind == "G" else self.interval.b

    @property
    def priority_key(self) -> float:
        return self.interval.a

    @property
    def name(self) -> str:
        return self.predicate.label

    @property
    def formula(self):
        cls = Always if self.kind == "G" else Eventually
        return cls(self.interval, self.predicate)


class _Decomposer:
    def __init__(self, x0):
        self.x0 = [float(v) for v in x0]
        self.ids: dict[str, int] = {}
        self.groups = 0

    def task_id(self, pred: Predicate, kind: str, iv: Interval) -> str:
        base = f"{pred.label}@{kind}{iv}"
        n = self.ids.get(base, 0) + 1
        self.ids[base] = n
        return base if n == 1 else f"{base}#{n}"

    def atomic(self, phi) -> list[AtomicTask] | None:
        """Tasks for a single G/F formula over predicates, or None if phi is not of that shape."""
        if isinstance(phi, (Always, Eventually)):
            kind = "G" if isinstance(phi, Always) else "F"
            arg = phi.arg
            if isinstance(arg, Predicate):
                return [AtomicTask(self.task_id(arg, kind, phi.interval), kind, phi.interval, arg)]
            if kind == "G" and _is_conjunction_of_predicates(arg):
                # G distributes over conjunction
                preds = _conjuncts(arg)
                return [AtomicTask(self.task_id(p, "G", phi.interval), "G", phi.interval, p) for p in preds]
            if _has_temporal(arg):
                raise Intractable(f"nested temporal operators in {to_text(phi)}")
            raise Intractable(f"{to_text(phi)} is not an atomic G/F formula")
        return None

    def run(self, phi) -> tuple[list[AtomicTask], list]:
        if isinstance(phi, Predicate):
            return [], [phi]
        if isinstance(phi, And):
            t1, r1 = self.run(phi.lhs)
            t2, r2 = self.run(phi.rhs)
            return t1 + t2, r1 + r2
        if isinstance(phi, Implies):
            if _has_temporal(phi.lhs):
                raise Intractable("only time-0 predicate antecedents are supported for '=>'")
            if _eval_static(phi.lhs, self.x0):
                return self.run(phi.rhs)
            return [], []
        if isinstance(phi, Or):
            members = _disjuncts(phi)
            if all(not _has_temporal(m) for m in members):
                return [], [phi]
            tasks: list[AtomicTask] = []
            for m in members:
                got = self.atomic(m)
                if got is None or len(got) != 1:
                    raise Intractable(f"disjunction member {to_text(m)} is not a single atomic task")
                tasks.extend(got)
            self.groups += 1
            gid = f"or{self.groups}"
            return [_with(t, disjunction_group=gid) for t in tasks], []
        if isinstance(phi, Until):
            lhs, rhs = phi.lhs, phi.rhs
            if not (isinstance(lhs, Predicate) and isinstance(rhs, Predicate)):
                raise Intractable("until operands must be predicates")
            f_task = AtomicTask(self.task_id(rhs, "F", phi.interval), "F", phi.interval, rhs)
            g_iv = Interval(phi.interval.a, phi.interval.b)
            g_task = AtomicTask(self.task_id(lhs, "G", g_iv), "G", g_iv, lhs, until_partner=f_task.id)
            return [g_task, f_task], []
        got = self.atomic(phi)
        if got is None:
            raise Intractable(f"cannot decompose {to_text(phi)}")
        return got, []


def _with(task: AtomicTask, **kw) -> AtomicTask:
    from dataclasses import replace

    return replace(task, **kw)


def _has_temporal(phi) -> bool:
    if isinstance(phi, Predicate):
        return False
    if isinstance(phi, (Always, Eventually, Until)):
        return True
    return _has_temporal(phi.lhs) or _has_temporal(phi.rhs)


def _is_conjunction_of_predicates(phi) -> bool:
    if isinstance(phi, Predicate):
        return True
    return isinstance(phi, And) and _is_conjunction_of_predicates(phi.lhs) and _is_conjunction_of_predicates(phi.rhs)


def _conjuncts(phi) -> list:
    if isinstance(phi, And):
        return _conjuncts(phi.lhs) + _conjuncts(phi.rhs)
    return [phi]


def _disjuncts(phi) -> list:
    if isinstance(phi, Or):
        return _disjuncts(phi.lhs) + _disjuncts(phi.rhs)
    return [phi]


def _eval_static(phi, x) -> bool:
    if isinstance(phi, Predicate):
        return phi.holds(x)
    if isinstance(phi, And):
        return _eval_static(phi.lhs, x) and _eval_static(phi.rhs, x)
    if isinstance(phi, Or):
        return _eval_static(phi.lhs, x) or _eval_static(phi.rhs, x)
    if isinstance(phi, Implies):
        return (not _eval_static(phi.lhs, x)) or _eval_static(phi.rhs, x)
    raise Intractable("temporal operator in a time-0 condition")


def decompose(phi, x0) -> tuple[list[AtomicTask], list]:
    """Split a formula into timed atomic tasks plus formulas that are only monitored.

    Implications are dispatched on their antecedent at ``x0``; disjunctions of
    atomic tasks share a ``disjunction_group``; an until yields a G task for the
    hold condition paired with an F task for the goal.
    """
    return _Decomposer(x0).run(phi)

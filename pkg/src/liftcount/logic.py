"""Syntax of the input language: formulas, problems, parser and printer.

Formulas are function-free and constant-free, use at most the two variables
``x`` and ``y`` and may contain counting quantifiers ``exists[=k] v.``.
Ground formulas (used by the kernel and the oracle) reuse the same node types
with integer domain elements in place of variable names.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from gmpy2 import mpq

from .algebra import rational
from .errors import ParseError, ValidationError

VARIABLES = ("x", "y")
COMPARATORS = ("<=", "=", ">=")

Term = Union[str, int]


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Formula:
    __slots__ = ()

    def __and__(self, other):
        return conj(self, other)

    def __or__(self, other):
        return disj(self, other)

    def __invert__(self):
        return Not(self)

    def __str__(self) -> str:
        return pretty(self)


@dataclass(frozen=True)
class Const(Formula):
    value: bool


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class Atom(Formula):
    pred: str
    args: Tuple[Term, ...]


@dataclass(frozen=True)
class Eq(Formula):
    left: Term
    right: Term


@dataclass(frozen=True)
class Not(Formula):
    body: Formula


@dataclass(frozen=True)
class And(Formula):
    parts: Tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    parts: Tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Iff(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class CountExists(Formula):
    cmp: str
    k: int
    var: str
    body: Formula


def conj(*parts: Formula) -> Formula:
    flat: List[Formula] = []
    for p in parts:
        if isinstance(p, And):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if not flat:
        return TRUE
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def disj(*parts: Formula) -> Formula:
    flat: List[Formula] = []
    for p in parts:
        if isinstance(p, Or):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if not flat:
        return FALSE
    return flat[0] if len(flat) == 1 else Or(tuple(flat))


def forall(vars_: str, body: Formula) -> Formula:
    for v in reversed(vars_.split()):
        body = Forall(v, body)
    return body


QUANTIFIERS = (Forall, Exists, CountExists)


def children(f: Formula) -> Tuple[Formula, ...]:
    if isinstance(f, (And, Or)):
        return f.parts
    if isinstance(f, (Implies, Iff)):
        return (f.left, f.right)
    if isinstance(f, Not):
        return (f.body,)
    if isinstance(f, QUANTIFIERS):
        return (f.body,)
    return ()


def walk(f: Formula) -> Iterator[Formula]:
    stack = [f]
    while stack:
        g = stack.pop()
        yield g
        stack.extend(reversed(children(g)))


def atoms(f: Formula) -> Iterator[Atom]:
    for g in walk(f):
        if isinstance(g, Atom):
            yield g


def predicates_of(f: Formula) -> Dict[str, int]:
    out: Dict[str, int] = {}
    for a in atoms(f):
        out.setdefault(a.pred, len(a.args))
    return out


def free_vars(f: Formula) -> frozenset:
    if isinstance(f, Atom):
        return frozenset(a for a in f.args if isinstance(a, str))
    if isinstance(f, Eq):
        return frozenset(a for a in (f.left, f.right) if isinstance(a, str))
    if isinstance(f, QUANTIFIERS):
        return free_vars(f.body) - {f.var}
    out: frozenset = frozenset()
    for c in children(f):
        out |= free_vars(c)
    return out


def variables_of(f: Formula) -> List[str]:
    """Every variable symbol occurring in ``f``, bound or free, in first-seen order."""
    seen: List[str] = []
    for g in walk(f):
        names: Sequence[Term] = ()
        if isinstance(g, Atom):
            names = g.args
        elif isinstance(g, Eq):
            names = (g.left, g.right)
        elif isinstance(g, QUANTIFIERS):
            names = (g.var,)
        for v in names:
            if isinstance(v, str) and v not in seen:
                seen.append(v)
    return seen


def substitute(f: Formula, mapping: Dict[str, Term]) -> Formula:
    """Replace free occurrences of variables (bound ones shadow the mapping)."""
    if not mapping:
        return f
    if isinstance(f, Atom):
        return Atom(f.pred, tuple(mapping.get(a, a) if isinstance(a, str) else a for a in f.args))
    if isinstance(f, Eq):
        m = lambda t: mapping.get(t, t) if isinstance(t, str) else t
        return Eq(m(f.left), m(f.right))
    if isinstance(f, Const):
        return f
    if isinstance(f, Not):
        return Not(substitute(f.body, mapping))
    if isinstance(f, And):
        return And(tuple(substitute(p, mapping) for p in f.parts))
    if isinstance(f, Or):
        return Or(tuple(substitute(p, mapping) for p in f.parts))
    if isinstance(f, Implies):
        return Implies(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, Iff):
        return Iff(substitute(f.left, mapping), substitute(f.right, mapping))
    inner = {k: v for k, v in mapping.items() if k != f.var}
    body = substitute(f.body, inner)
    if isinstance(f, CountExists):
        return CountExists(f.cmp, f.k, f.var, body)
    return type(f)(f.var, body)


def swap_xy(f: Formula) -> Formula:
    """Rename x <-> y everywhere, bound occurrences included."""
    ren = {"x": "y", "y": "x"}

    def go(g: Formula) -> Formula:
        if isinstance(g, Atom):
            return Atom(g.pred, tuple(ren.get(a, a) if isinstance(a, str) else a for a in g.args))
        if isinstance(g, Eq):
            r = lambda t: ren.get(t, t) if isinstance(t, str) else t
            return Eq(r(g.left), r(g.right))
        if isinstance(g, Const):
            return g
        if isinstance(g, Not):
            return Not(go(g.body))
        if isinstance(g, And):
            return And(tuple(go(p) for p in g.parts))
        if isinstance(g, Or):
            return Or(tuple(go(p) for p in g.parts))
        if isinstance(g, Implies):
            return Implies(go(g.left), go(g.right))
        if isinstance(g, Iff):
            return Iff(go(g.left), go(g.right))
        if isinstance(g, CountExists):
            return CountExists(g.cmp, g.k, ren.get(g.var, g.var), go(g.body))
        return type(g)(ren.get(g.var, g.var), go(g.body))

    return go(f)


# ---------------------------------------------------------------------------
# Two-variable check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariableReport:
    ok: bool
    offending: Tuple[str, ...] = ()
    subformula: Optional[Formula] = None

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return f"variables {', '.join(self.offending)} outside {{x, y}} in: {pretty(self.subformula)}"


def check_two_variable(f: Formula) -> VariableReport:
    """Accept iff only ``x`` and ``y`` occur; otherwise point at the first binder
    (or atom, for free occurrences) that introduces another variable."""
    bad = [v for v in variables_of(f) if v not in VARIABLES]
    if not bad:
        return VariableReport(True)
    for g in walk(f):
        if isinstance(g, QUANTIFIERS) and g.var in bad:
            return VariableReport(False, tuple(bad), g)
    for g in walk(f):
        if isinstance(g, (Atom, Eq)) and set(variables_of(g)) & set(bad):
            return VariableReport(False, tuple(bad), g)
    return VariableReport(False, tuple(bad), f)


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

def _term(t: Term) -> str:
    return str(t)


def pretty(f: Formula) -> str:
    """Canonical text form; ``parse_formula(pretty(f)) == f``."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f"{f.pred}({','.join(_term(a) for a in f.args)})"
    if isinstance(f, Eq):
        return f"{_term(f.left)} = {_term(f.right)}"
    if isinstance(f, Not):
        inner = f.body
        if isinstance(inner, (Atom, Const)):
            return "!" + pretty(inner)
        return f"!({pretty(inner)})"
    if isinstance(f, And):
        return " & ".join(_operand(p) for p in f.parts)
    if isinstance(f, Or):
        return " | ".join(_operand(p) for p in f.parts)
    if isinstance(f, Implies):
        return f"{_operand(f.left)} -> {_operand(f.right)}"
    if isinstance(f, Iff):
        return f"{_operand(f.left)} <-> {_operand(f.right)}"
    if isinstance(f, Forall):
        return f"forall {f.var}. {pretty(f.body)}"
    if isinstance(f, Exists):
        return f"exists {f.var}. {pretty(f.body)}"
    if isinstance(f, CountExists):
        return f"exists[{f.cmp}{f.k}] {f.var}. {pretty(f.body)}"
    raise TypeError(f"not a formula: {f!r}")


def _operand(f: Formula) -> str:
    if isinstance(f, (Atom, Const, Not)):
        return pretty(f)
    return f"({pretty(f)})"


# ---------------------------------------------------------------------------
# Formula parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<iff><->|<=>|⇔|↔)
  | (?P<imp>->|=>|⇒|→)
  | (?P<count>exists\s*\[\s*(?:<=|>=|=|≤|≥)\s*\d+\s*\])
  | (?P<neq>!=|≠)
  | (?P<op>[&|!~(),.:=∧∨¬])
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<num>\d+)
""", re.VERBOSE)

_SYMBOL_ALIASES = {"∧": "&", "∨": "|", "¬": "!", "~": "!"}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str, base: int = 0) -> List[_Tok]:
    toks: List[_Tok] = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise _LocalError(f"unexpected character {text[i]!r}", base + i)
        kind = m.lastgroup
        if kind != "ws":
            t = m.group(kind)
            if kind == "op":
                t = _SYMBOL_ALIASES.get(t, t)
            toks.append(_Tok(kind, t, base + i))
        i = m.end()
    return toks


class _LocalError(Exception):
    def __init__(self, message: str, pos: int):
        super().__init__(message)
        self.pos = pos


class _FormulaParser:
    def __init__(self, toks: List[_Tok], end: int):
        self.toks = toks
        self.i = 0
        self.end = end

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def pos(self) -> int:
        t = self.peek()
        return t.pos if t else self.end

    def take(self, text: Optional[str] = None) -> _Tok:
        t = self.peek()
        if t is None:
            raise _LocalError(f"unexpected end of formula{f', expected {text!r}' if text else ''}", self.end)
        if text is not None and t.text != text:
            raise _LocalError(f"expected {text!r}, found {t.text!r}", t.pos)
        self.i += 1
        return t

    def parse(self) -> Formula:
        f = self.iff()
        if self.peek() is not None:
            raise _LocalError(f"unexpected {self.peek().text!r}", self.pos())
        return f

    def iff(self) -> Formula:
        left = self.implication()
        t = self.peek()
        if t is not None and t.kind == "iff":
            self.take()
            return Iff(left, self.iff())
        return left

    def implication(self) -> Formula:
        left = self.disjunction()
        t = self.peek()
        if t is not None and t.kind == "imp":
            self.take()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.peek() is not None and self.peek().text == "|":
            self.take()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> Formula:
        parts = [self.unary()]
        while self.peek() is not None and self.peek().text == "&":
            self.take()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self) -> Formula:
        t = self.peek()
        if t is None:
            raise _LocalError("unexpected end of formula", self.end)
        if t.text == "!":
            self.take()
            return Not(self.unary())
        if t.kind == "count":
            self.take()
            m = re.match(r"exists\s*\[\s*(<=|>=|=|≤|≥)\s*(\d+)\s*\]", t.text)
            cmp = {"≤": "<=", "≥": ">="}.get(m.group(1), m.group(1))
            var = self.variable()
            return CountExists(cmp, int(m.group(2)), var, self.quantifier_body())
        if t.kind == "word" and t.text in ("forall", "exists"):
            self.take()
            var = self.variable()
            body = self.quantifier_body()
            return Forall(var, body) if t.text == "forall" else Exists(var, body)
        return self.primary()

    def variable(self) -> str:
        t = self.take()
        if t.kind != "word" or not t.text[0].islower() or t.text in ("forall", "exists", "true", "false"):
            raise _LocalError(f"expected a variable, found {t.text!r}", t.pos)
        return t.text

    def quantifier_body(self) -> Formula:
        t = self.peek()
        if t is not None and t.text in (".", ":"):
            self.take()
        return self.iff()

    def primary(self) -> Formula:
        t = self.take()
        if t.text == "(":
            f = self.iff()
            self.take(")")
            return f
        if t.kind == "word" and t.text == "true":
            return TRUE
        if t.kind == "word" and t.text == "false":
            return FALSE
        if t.kind == "word" and t.text[0].isupper():
            nxt = self.peek()
            if nxt is None or nxt.text != "(":
                raise _LocalError(f"predicate {t.text} needs arguments; arity-0 predicates are not supported", t.pos)
            self.take("(")
            args = [self.term()]
            while self.peek() is not None and self.peek().text == ",":
                self.take()
                args.append(self.term())
            self.take(")")
            return Atom(t.text, tuple(args))
        if t.kind == "word" and t.text[0].islower():
            nxt = self.peek()
            if nxt is not None and nxt.text == "=":
                self.take()
                return Eq(t.text, self.term())
            if nxt is not None and nxt.kind == "neq":
                self.take()
                return Not(Eq(t.text, self.term()))
            raise _LocalError(f"variable {t.text!r} used as a formula", t.pos)
        raise _LocalError(f"unexpected {t.text!r}", t.pos)

    def term(self) -> str:
        t = self.take()
        if t.kind != "word":
            raise _LocalError(f"expected a variable, found {t.text!r}", t.pos)
        if t.text[0].isupper():
            raise _LocalError(f"constants are not supported ({t.text!r})", t.pos)
        return t.text


def _line_col(text: str, pos: int) -> Tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def parse_formula(text: str, canonical: bool = True) -> Formula:
    """Parse one formula. With ``canonical`` the bound variables are renamed
    onto ``x``/``y`` (error if three are simultaneously in scope)."""
    try:
        f = _FormulaParser(_tokenize(text), len(text)).parse()
    except _LocalError as e:
        line, col = _line_col(text, e.pos)
        raise ParseError(str(e), line, col) from None
    return canonicalize(f) if canonical else f


def canonicalize(f: Formula) -> Formula:
    """Rename bound variables onto ``x``/``y`` keeping existing x/y names when free."""

    def go(g: Formula, env: Dict[str, str]) -> Formula:
        if isinstance(g, Atom):
            return Atom(g.pred, tuple(_lookup(a, env) for a in g.args))
        if isinstance(g, Eq):
            return Eq(_lookup(g.left, env), _lookup(g.right, env))
        if isinstance(g, Const):
            return g
        if isinstance(g, Not):
            return Not(go(g.body, env))
        if isinstance(g, And):
            return And(tuple(go(p, env) for p in g.parts))
        if isinstance(g, Or):
            return Or(tuple(go(p, env) for p in g.parts))
        if isinstance(g, Implies):
            return Implies(go(g.left, env), go(g.right, env))
        if isinstance(g, Iff):
            return Iff(go(g.left, env), go(g.right, env))
        outer = {k: v for k, v in env.items() if k != g.var}
        # only variables still occurring in the body block a name
        live = free_vars(g.body) - {g.var}
        taken = {outer[v] for v in live if v in outer}
        if g.var in VARIABLES and g.var not in taken:
            name = g.var
        else:
            free = [v for v in VARIABLES if v not in taken]
            if not free:
                raise ValidationError(
                    f"third variable {g.var!r} in scope of {sorted(outer)}: "
                    f"only two-variable sentences are supported")
            name = free[0]
        inner = dict(outer)
        inner[g.var] = name
        body = go(g.body, inner)
        if isinstance(g, CountExists):
            return CountExists(g.cmp, g.k, name, body)
        return type(g)(name, body)

    return go(f, {})


def _lookup(t: Term, env: Dict[str, str]) -> Term:
    if isinstance(t, str):
        if t not in env:
            raise ValidationError(f"free variable {t!r}: input formulas must be sentences")
        return env[t]
    return t


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Predicate:
    name: str
    arity: int


@dataclass(frozen=True)
class Bound:
    """``a * n + b``; parameters such as ``m`` are folded into ``b`` at parse time."""

    a: int = 0
    b: int = 0

    def value(self, n: int) -> int:
        return self.a * n + self.b

    def __str__(self) -> str:
        if self.a == 0:
            return str(self.b)
        head = "n" if self.a == 1 else f"{self.a}n"
        if self.b == 0:
            return head
        return f"{head}{'+' if self.b > 0 else '-'}{abs(self.b)}"


@dataclass(frozen=True)
class CardinalityConstraint:
    pred: str
    cmp: str
    bound: Bound

    def admits(self, count: int, n: int) -> bool:
        k = self.bound.value(n)
        if self.cmp == "=":
            return count == k
        if self.cmp == "<=":
            return count <= k
        return count >= k

    def __str__(self) -> str:
        return f"|{self.pred}| {self.cmp} {self.bound}"


@dataclass(frozen=True)
class Symbol:
    """A weight left symbolic; it becomes a polynomial variable of the result.

    ``limit`` caps the degree kept for the variable. Only set it when no
    wanted coefficient can have a higher degree.
    """

    name: str
    limit: Optional[int] = field(default=None, compare=False)

    def __str__(self) -> str:
        return self.name


Weight = Union[mpq, Symbol]


@dataclass(frozen=True)
class Axioms:
    linear: Optional[str] = None
    pred: Optional[str] = None
    pred2: Optional[str] = None

    def __bool__(self) -> bool:
        return bool(self.linear or self.pred or self.pred2)


@dataclass
class Problem:
    predicates: Dict[str, Predicate] = field(default_factory=dict)
    sentences: List[Formula] = field(default_factory=list)
    constraints: List[CardinalityConstraint] = field(default_factory=list)
    axioms: Axioms = field(default_factory=Axioms)
    weights: Dict[str, Tuple[Weight, Weight]] = field(default_factory=dict)
    n: Optional[int] = None
    params: Dict[str, int] = field(default_factory=dict)

    def weight(self, pred: str) -> Tuple[Weight, Weight]:
        return self.weights.get(pred, (mpq(1), mpq(1)))

    def with_n(self, n: int) -> "Problem":
        return Problem(dict(self.predicates), list(self.sentences), list(self.constraints),
                       self.axioms, dict(self.weights), n, dict(self.params))

    def validate(self) -> "Problem":
        for f in self.sentences:
            report = check_two_variable(f)
            if not report:
                raise ValidationError(str(report))
            if free_vars(f):
                raise ValidationError(f"sentence has free variables: {pretty(f)}")
            for name, arity in predicates_of(f).items():
                p = self.predicates.get(name)
                if p is None:
                    self.predicates[name] = Predicate(name, arity)
            for a in atoms(f):
                p = self.predicates[a.pred]
                if len(a.args) != p.arity:
                    raise ValidationError(
                        f"arity mismatch for {a.pred}: declared {p.arity}, used with {len(a.args)}")
        for p in self.predicates.values():
            if p.arity not in (1, 2):
                raise ValidationError(f"predicate {p.name}/{p.arity}: arity must be 1 or 2")
        ax = self.axioms
        for role, name in (("linear", ax.linear), ("pred", ax.pred), ("pred2", ax.pred2)):
            if name is None:
                continue
            p = self.predicates.setdefault(name, Predicate(name, 2))
            if p.arity != 2:
                raise ValidationError(f"axiom {role}({name}) needs a binary predicate")
        if (ax.pred or ax.pred2) and not ax.linear:
            raise ValidationError("pred/pred2 axioms require a linear(...) axiom")
        if len({n for n in (ax.linear, ax.pred, ax.pred2) if n}) != len([n for n in (ax.linear, ax.pred, ax.pred2) if n]):
            raise ValidationError("axioms must name distinct predicates")
        for c in self.constraints:
            if c.pred not in self.predicates:
                raise ValidationError(f"constraint on unknown predicate {c.pred}")
        for name in self.weights:
            if name not in self.predicates:
                raise ValidationError(f"weight for unknown predicate {name}")
        if ax.linear:
            w = self.weight(ax.linear)
            if w != (1, 1):
                raise ValidationError(f"order predicate {ax.linear} must have weights (1, 1)")
        if self.n is not None and self.n < 0:
            raise ValidationError("domain size must be non-negative")
        return self

    def to_text(self) -> str:
        lines = [f"predicate {p.name}/{p.arity}" for p in self.predicates.values()]
        for name, (w, wb) in self.weights.items():
            lines.append(f"weight {name} = {_weight_text(w)}, {_weight_text(wb)}")
        for k, v in self.params.items():
            lines.append(f"param {k} = {v}")
        lines += [f"sentence {pretty(f)}" for f in self.sentences]
        lines += [f"constraint {c}" for c in self.constraints]
        ax = self.axioms
        for role in ("linear", "pred", "pred2"):
            if getattr(ax, role):
                lines.append(f"axiom {role}({getattr(ax, role)})")
        if self.n is not None:
            lines.append(f"n = {self.n}")
        return "\n".join(lines) + "\n"


def _weight_text(w: Weight) -> str:
    if isinstance(w, Symbol):
        return "symbolic"
    w = mpq(w)
    return str(w.numerator) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"


# ---------------------------------------------------------------------------
# Problem parser
# ---------------------------------------------------------------------------

_KEYWORDS = ("predicate", "weight", "sentence", "constraint", "axiom", "param")


def _statements(text: str) -> Iterator[Tuple[str, int]]:
    """Split into statements (newline or ';'), yielding (text, absolute offset)."""
    pos = 0
    for raw_line in text.splitlines(keepends=True):
        line = raw_line
        hash_at = line.find("#")
        if hash_at >= 0:
            line = line[:hash_at]
        start = 0
        for piece in line.split(";"):
            stripped = piece.strip()
            if stripped:
                yield stripped, pos + start + (len(piece) - len(piece.lstrip()))
            start += len(piece) + 1
        pos += len(raw_line)


def _parse_bound(expr: str, params: Dict[str, int]) -> Bound:
    s = expr.replace(" ", "")
    if not s:
        raise ValueError("empty bound")
    a = b = 0
    for sign, body in re.findall(r"([+-]?)([^+-]+)", s):
        mult = -1 if sign == "-" else 1
        m = re.fullmatch(r"(\d*)\*?([A-Za-z_][A-Za-z0-9_]*)?", body)
        if not m or (not m.group(1) and not m.group(2)):
            raise ValueError(f"cannot read bound term {body!r}")
        coef = int(m.group(1)) if m.group(1) else 1
        name = m.group(2)
        if name is None:
            b += mult * coef
        elif name == "n":
            a += mult * coef
        elif name in params:
            b += mult * coef * params[name]
        else:
            raise ValueError(f"unbound parameter {name!r} (declare it with 'param {name} = <int>')")
    if "".join(sign + body for sign, body in re.findall(r"([+-]?)([^+-]+)", s)).lstrip("+") != s.lstrip("+"):
        raise ValueError(f"cannot read bound {expr!r}")
    return Bound(a, b)


def _parse_weight(token: str, pred: str, positive: bool) -> Weight:
    token = token.strip()
    if token == "symbolic":
        return Symbol(("w_" if positive else "wbar_") + pred)
    return rational(token)


def parse_problem(text: str) -> Problem:
    """Parse the declaration language into a validated :class:`Problem`."""
    statements = list(_statements(text))
    params: Dict[str, int] = {}
    for stmt, pos in statements:
        m = re.fullmatch(r"param\s+([A-Za-z_]\w*)\s*=\s*(-?\d+)", stmt)
        if m:
            if m.group(1) == "n":
                raise ParseError("'n' is reserved for the domain size", *_line_col(text, pos))
            params[m.group(1)] = int(m.group(2))
    problem = Problem(params=params)

    def fail(message: str, pos: int):
        raise ParseError(message, *_line_col(text, pos))

    for stmt, pos in statements:
        head = stmt.split(None, 1)[0] if stmt.split() else ""
        if head == "param":
            if not re.fullmatch(r"param\s+([A-Za-z_]\w*)\s*=\s*(-?\d+)", stmt):
                fail(f"malformed parameter declaration {stmt!r}", pos)
            continue
        if head == "predicate":
            m = re.fullmatch(r"predicate\s+([A-Z]\w*)\s*/\s*(\d+)", stmt)
            if not m:
                fail(f"malformed predicate declaration {stmt!r} (expected 'predicate Name/arity')", pos)
            name, arity = m.group(1), int(m.group(2))
            if arity not in (1, 2):
                fail(f"predicate {name}/{arity}: arity must be 1 or 2", pos)
            if name in problem.predicates and problem.predicates[name].arity != arity:
                fail(f"predicate {name} redeclared with arity {arity}", pos)
            problem.predicates[name] = Predicate(name, arity)
            continue
        if head == "weight":
            m = re.fullmatch(r"weight\s+([A-Z]\w*)\s*=\s*([^,]+?)\s*,\s*(.+)", stmt)
            if not m:
                fail(f"malformed weight {stmt!r} (expected 'weight Name = w, wbar')", pos)
            name = m.group(1)
            try:
                problem.weights[name] = (_parse_weight(m.group(2), name, True),
                                         _parse_weight(m.group(3), name, False))
            except (ValueError, ZeroDivisionError) as e:
                fail(f"bad weight value in {stmt!r}: {e}", pos)
            continue
        if head == "constraint":
            m = re.fullmatch(r"constraint\s+\|\s*([A-Z]\w*)\s*\|\s*(<=|>=|=)\s*(.+)", stmt)
            if not m:
                fail(f"malformed constraint {stmt!r} (expected 'constraint |Name| <= k')", pos)
            try:
                bound = _parse_bound(m.group(3), params)
            except ValueError as e:
                fail(str(e), pos)
            problem.constraints.append(CardinalityConstraint(m.group(1), m.group(2), bound))
            continue
        if head == "axiom":
            m = re.fullmatch(r"axiom\s+(linear|pred|pred2)\s*\(\s*([A-Z]\w*)\s*\)", stmt)
            if not m:
                fail(f"malformed axiom {stmt!r} (expected linear(Name), pred(Name) or pred2(Name))", pos)
            role, name = m.group(1), m.group(2)
            current = getattr(problem.axioms, role)
            if current is not None and current != name:
                fail(f"axiom {role} declared twice", pos)
            problem.axioms = Axioms(**{**problem.axioms.__dict__, role: name})
            continue
        m = re.fullmatch(r"n\s*=\s*(\S*)", stmt)
        if m:
            if not m.group(1).isdigit():
                fail(f"domain size must be a non-negative integer, got {m.group(1)!r}", pos)
            problem.n = int(m.group(1))
            continue
        body, offset = stmt, pos
        if head == "sentence":
            body = stmt[len("sentence"):]
            offset = pos + len("sentence") + (len(body) - len(body.lstrip()))
            body = body.strip()
        try:
            f = _FormulaParser(_tokenize(body, offset), offset + len(body)).parse()
        except _LocalError as e:
            fail(str(e), e.pos)
        try:
            f = canonicalize(f)
        except ValidationError as e:
            raise ParseError(str(e), *_line_col(text, pos)) from None
        problem.sentences.append(f)

    for f in problem.sentences:
        for a in atoms(f):
            if len(a.args) not in (1, 2):
                raise ValidationError(f"predicate {a.pred}/{len(a.args)}: arity must be 1 or 2")
    return problem.validate()

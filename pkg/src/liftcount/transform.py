"""From input problems to a single quantifier-free matrix.

The pipeline is: expand axiom declarations into sentences, replace the
supported counting quantifiers, convert to negation normal form, prenex each
sentence within two variables (introducing defined auxiliary predicates when a
sentence needs more), and finally eliminate existential quantifiers with the
weighted Skolemization: ``forall u exists v. phi`` becomes
``forall u forall v. S(u) | !phi`` with ``w(S) = 1`` and ``wbar(S) = -1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from gmpy2 import mpq

from .errors import InfeasibleError, OutOfScopeError, ValidationError
from .logic import (FALSE, TRUE, And, Atom, Axioms, Bound, CardinalityConstraint,
                    Const, CountExists, Eq, Exists, Forall, Formula, Iff, Implies,
                    Not, Or, Predicate, Problem, QUANTIFIERS, Symbol, Weight, atoms, conj,
                    disj, free_vars, predicates_of, pretty)

SKOLEM_WEIGHTS = (mpq(1), mpq(-1))
UNIT = (mpq(1), mpq(1))


# ---------------------------------------------------------------------------
# Negation normal form and prenexing
# ---------------------------------------------------------------------------

def nnf(f: Formula, negate: bool = False) -> Formula:
    """Push negations to atoms; removes implications and equivalences."""
    if isinstance(f, Const):
        return Const(f.value != negate)
    if isinstance(f, (Atom, Eq)):
        return Not(f) if negate else f
    if isinstance(f, Not):
        return nnf(f.body, not negate)
    if isinstance(f, And):
        parts = [nnf(p, negate) for p in f.parts]
        return _simplify_or(parts) if negate else _simplify_and(parts)
    if isinstance(f, Or):
        parts = [nnf(p, negate) for p in f.parts]
        return _simplify_and(parts) if negate else _simplify_or(parts)
    if isinstance(f, Implies):
        return nnf(Or((Not(f.left), f.right)), negate)
    if isinstance(f, Iff):
        both = And((f.left, f.right))
        neither = And((Not(f.left), Not(f.right)))
        if negate:
            return nnf(Or((And((f.left, Not(f.right))), And((Not(f.left), f.right)))))
        return nnf(Or((both, neither)))
    if isinstance(f, Forall):
        body = nnf(f.body, negate)
        return Exists(f.var, body) if negate else Forall(f.var, body)
    if isinstance(f, Exists):
        body = nnf(f.body, negate)
        return Forall(f.var, body) if negate else Exists(f.var, body)
    if isinstance(f, CountExists):
        raise OutOfScopeError(
            f"counting quantifier left after reduction: {pretty(f)}")
    raise TypeError(f"not a formula: {f!r}")


def _simplify_and(parts: List[Formula]) -> Formula:
    if any(p == FALSE for p in parts):
        return FALSE
    return conj(*[p for p in parts if p != TRUE])


def _simplify_or(parts: List[Formula]) -> Formula:
    if any(p == TRUE for p in parts):
        return TRUE
    return disj(*[p for p in parts if p != FALSE])


class _Clash(Exception):
    """Raised when prenexing would need a third variable; carries the
    quantified subformula that should be replaced by a defined predicate."""

    def __init__(self, node: Formula):
        super().__init__(pretty(node))
        self.node = node


Prefix = List[Tuple[str, str]]  # ("forall" | "exists", var)


def _prenex(f: Formula) -> Tuple[Prefix, Formula]:
    if isinstance(f, (Forall, Exists)):
        prefix, matrix = _prenex(f.body)
        if any(v == f.var for _, v in prefix):
            raise _Clash(_first_quantified(f.body))
        kind = "forall" if isinstance(f, Forall) else "exists"
        return [(kind, f.var)] + prefix, matrix
    if isinstance(f, (And, Or)):
        results = [_prenex(p) for p in f.parts]
        quantified = [i for i, (pre, _) in enumerate(results) if pre]
        matrices = [m for _, m in results]
        combine = conj if isinstance(f, And) else disj
        if not quantified:
            return [], combine(*matrices)
        prefix = results[quantified[0]][0]
        if len(quantified) > 1:
            mergeable = "forall" if isinstance(f, And) else "exists"
            same = all(results[i][0] == prefix for i in quantified)
            if not (same and len(prefix) == 1 and prefix[0][0] == mergeable):
                raise _Clash(f.parts[quantified[-1]])
        bound = {v for _, v in prefix}
        for i, p in enumerate(f.parts):
            if i not in quantified and free_vars(p) & bound:
                raise _Clash(f.parts[quantified[0]])
        return list(prefix), combine(*matrices)
    return [], f


def _first_quantified(f: Formula) -> Formula:
    if isinstance(f, QUANTIFIERS):
        return f
    if isinstance(f, (And, Or)):
        for p in f.parts:
            if _has_quantifier(p):
                return _first_quantified(p)
    return f


def _has_quantifier(f: Formula) -> bool:
    if isinstance(f, QUANTIFIERS):
        return True
    if isinstance(f, (And, Or, Not)):
        return any(_has_quantifier(p) for p in (f.parts if not isinstance(f, Not) else (f.body,)))
    return False


def _rebuild(prefix: Prefix, matrix: Formula) -> Formula:
    for kind, v in reversed(prefix):
        matrix = Forall(v, matrix) if kind == "forall" else Exists(v, matrix)
    return matrix


def to_prenex_nnf(f: Formula) -> Formula:
    """Prenex form with an NNF matrix, without leaving the two variables.

    Raises :class:`OutOfScopeError` when that is impossible without auxiliary
    predicates (use :func:`normalize` which introduces them).
    """
    g = nnf(f)
    try:
        prefix, matrix = _prenex(g)
    except _Clash as e:
        raise OutOfScopeError(f"cannot prenex within two variables at: {e}") from None
    return _rebuild(prefix, matrix)


# ---------------------------------------------------------------------------
# Counting quantifiers
# ---------------------------------------------------------------------------

def reduce_exactly_one(f: Formula) -> Tuple[Formula, List[CardinalityConstraint]]:
    """Replace ``forall u exists[=1] v. P(..)`` (P binary over u and v) by a plain
    existential plus ``|P| = n``. Counting quantifiers with bound 0 or ``>= 1``
    are rewritten to ordinary quantifiers; anything else is out of scope."""
    constraints: List[CardinalityConstraint] = []

    def record(pred: str):
        c = CardinalityConstraint(pred, "=", Bound(1, 0))
        if c not in constraints:
            constraints.append(c)

    def go(g: Formula, outer: Optional[Formula]) -> Formula:
        if isinstance(g, CountExists):
            body = go(g.body, g)
            if g.cmp == ">=" and g.k == 0:
                return TRUE
            if (g.cmp == ">=" and g.k == 1):
                return Exists(g.var, body)
            if g.k == 0 and g.cmp in ("=", "<="):
                return Not(Exists(g.var, body))
            if g.cmp == "=" and g.k == 1 and isinstance(outer, Forall):
                b = g.body
                u, v = outer.var, g.var
                if (isinstance(b, Atom) and len(b.args) == 2 and u != v
                        and set(b.args) == {u, v}):
                    record(b.pred)
                    return Exists(v, b)
            raise OutOfScopeError(
                f"unsupported counting quantifier in: {pretty(outer if outer is not None else g)}")
        if isinstance(g, Forall):
            body = g.body
            if isinstance(body, CountExists):
                return Forall(g.var, go(body, g))
            return Forall(g.var, go(body, g))
        if isinstance(g, Exists):
            return Exists(g.var, go(g.body, g))
        if isinstance(g, Not):
            return Not(go(g.body, g))
        if isinstance(g, And):
            return And(tuple(go(p, g) for p in g.parts))
        if isinstance(g, Or):
            return Or(tuple(go(p, g) for p in g.parts))
        if isinstance(g, Implies):
            return Implies(go(g.left, g), go(g.right, g))
        if isinstance(g, Iff):
            return Iff(go(g.left, g), go(g.right, g))
        return g

    return go(f, None), constraints


# ---------------------------------------------------------------------------
# Normalized problems
# ---------------------------------------------------------------------------

@dataclass
class NormalizedProblem:
    """A conjunction of universally quantified clauses over ``x, y``.

    ``vocabulary`` maps every predicate (declared, auxiliary, Skolem) to its
    arity; arity 0 occurs only for auxiliary predicates of closed subformulas.
    """

    matrix: Formula
    sentences: List[Formula]
    vocabulary: Dict[str, int]
    weights: Dict[str, Tuple[Weight, Weight]]
    constraints: List[CardinalityConstraint] = field(default_factory=list)
    linear: Optional[str] = None
    correction: mpq = mpq(1)
    n: Optional[int] = None
    skolems: List[str] = field(default_factory=list)
    auxiliary: List[str] = field(default_factory=list)

    def weight(self, pred: str) -> Tuple[Weight, Weight]:
        return self.weights.get(pred, UNIT)

    def with_n(self, n: int) -> "NormalizedProblem":
        return NormalizedProblem(self.matrix, list(self.sentences), dict(self.vocabulary),
                                 dict(self.weights), list(self.constraints), self.linear,
                                 self.correction, n, list(self.skolems), list(self.auxiliary))

    def to_problem(self) -> Problem:
        """The same theory as a plain problem (nullary predicates excluded)."""
        preds = {p: Predicate(p, a) for p, a in self.vocabulary.items()}
        return Problem(preds, [_close(s) for s in self.sentences], list(self.constraints),
                       Axioms(linear=self.linear), dict(self.weights), self.n)

    def to_text(self) -> str:
        lines = []
        for name in sorted(self.vocabulary):
            w, wb = self.weight(name)
            tag = " skolem" if name in self.skolems else (" aux" if name in self.auxiliary else "")
            lines.append(f"predicate {name}/{self.vocabulary[name]}  # weights {w}, {wb}{tag}")
        for s in self.sentences:
            lines.append(f"clause {pretty(s)}")
        for c in self.constraints:
            lines.append(f"constraint {c}")
        if self.linear:
            lines.append(f"axiom linear({self.linear})")
        if self.correction != 1:
            lines.append(f"correction {self.correction}")
        if self.n is not None:
            lines.append(f"n = {self.n}")
        return "\n".join(lines) + "\n"


def _close(matrix: Formula) -> Formula:
    out = matrix
    for v in sorted(free_vars(matrix), reverse=True):
        out = Forall(v, out)
    return out


class _Names:
    def __init__(self, taken: Iterable[str]):
        self.taken = set(taken)

    def fresh(self, stem: str, numbered: bool = True) -> str:
        if not numbered and stem not in self.taken:
            self.taken.add(stem)
            return stem
        i = 1
        while f"{stem}{i}" in self.taken:
            i += 1
        name = f"{stem}{i}"
        self.taken.add(name)
        return name

    def fresh_exact(self, name: str) -> str:
        """``name`` itself if free, else ``name_1``, ``name_2``..."""
        if name not in self.taken:
            self.taken.add(name)
            return name
        i = 1
        while f"{name}_{i}" in self.taken:
            i += 1
        self.taken.add(f"{name}_{i}")
        return f"{name}_{i}"


def skolemize_wfomc(f: Formula, weights: Optional[Dict[str, Tuple[Weight, Weight]]] = None,
                    names: Optional[_Names] = None) -> Tuple[Formula, Dict[str, Tuple[Weight, Weight]]]:
    """Eliminate the existential quantifiers of a prenex sentence.

    Quantifiers are removed leftmost first; a leading existential produces a
    nullary Skolem predicate. Returns the universally quantified sentence and
    the weights extended with the Skolem predicates.
    """
    weights = dict(weights or {})
    if names is None:
        taken = set(weights) | set(predicates_of(f))
        names = _Names(taken)
    prefix, matrix = _split_prefix(f)
    while any(kind == "exists" for kind, _ in prefix):
        i = next(i for i, (kind, _) in enumerate(prefix) if kind == "exists")
        universal = [v for _, v in prefix[:i]]
        name = names.fresh("S")
        weights[name] = SKOLEM_WEIGHTS
        rest = [("exists" if kind == "forall" else "forall", v) for kind, v in prefix[i + 1:]]
        matrix = disj(Atom(name, tuple(universal)), nnf(matrix, negate=True))
        prefix = prefix[:i] + [("forall", prefix[i][1])] + rest
        # the eliminated variable stays universally bound: S(u) | !phi(u, v)
    return _rebuild(prefix, matrix), weights


def _split_prefix(f: Formula) -> Tuple[Prefix, Formula]:
    prefix: Prefix = []
    while isinstance(f, (Forall, Exists)):
        prefix.append(("forall" if isinstance(f, Forall) else "exists", f.var))
        f = f.body
    if _has_quantifier(f):
        raise ValueError(f"not in prenex form: {pretty(f)}")
    return prefix, f


# ---------------------------------------------------------------------------
# Axiom theories
# ---------------------------------------------------------------------------

def _p(text: str, **names: str) -> Formula:
    from .logic import parse_formula
    for key, value in names.items():
        text = text.replace("{" + key + "}", value)
    return parse_formula(text)


def axiom_theory(p: Problem, names: _Names) -> Tuple[List[Formula], List[CardinalityConstraint],
                                                       Dict[str, int], mpq]:
    """Sentences, constraints and new predicates that define the declared
    successor relations; the last item is the correction factor."""
    ax = p.axioms
    sentences: List[Formula] = []
    constraints: List[CardinalityConstraint] = []
    new: Dict[str, int] = {}
    correction = mpq(1)
    if not (ax.pred or ax.pred2):
        return sentences, constraints, new, correction
    n = p.n
    leq = ax.linear
    pred = ax.pred or names.fresh_exact("Pred")
    if ax.pred is None:
        new[pred] = 2
    if n is not None and n < 2:
        raise InfeasibleError(f"the successor relation needs a domain of at least 2 elements (n = {n})")
    perm = names.fresh_exact("Perm")
    new[perm] = 2
    sentences += [
        _p("forall x. !{perm}(x,x)", perm=perm),
        _p("forall x. exists[=1] y. {perm}(x,y)", perm=perm),
        _p("forall y. exists[=1] x. {perm}(x,y)", perm=perm),
        _p("forall x. forall y. {pred}(x,y) -> {perm}(x,y)", perm=perm, pred=pred),
        _p("forall x. forall y. {pred}(x,y) -> {leq}(x,y)", pred=pred, leq=leq),
    ]
    constraints.append(CardinalityConstraint(pred, "=", Bound(1, -1)))
    if ax.pred2:
        if n is not None and n < 4:
            raise InfeasibleError(f"the second successor relation needs a domain of at least 4 elements (n = {n})")
        pred2 = ax.pred2
        perm2 = names.fresh_exact("Perm2")
        inv = names.fresh_exact("Inv")
        red = names.fresh_exact("Red")
        blue = names.fresh_exact("Blue")
        new.update({perm2: 2, inv: 2, red: 1, blue: 1})
        kw = dict(perm2=perm2, inv=inv, red=red, blue=blue, pred=pred, pred2=pred2, leq=leq)
        for text in (
            "forall x. !{perm2}(x,x)",
            "forall x. exists[=1] y. {perm2}(x,y)",
            "forall y. exists[=1] x. {perm2}(x,y)",
            "forall x. forall y. {inv}(x,y) <-> ({leq}(y,x) & {perm2}(x,y))",
            "forall x. {red}(x) | {blue}(x)",
            "forall x. !{red}(x) | !{blue}(x)",
            "forall x. forall y. {red}(x) & {pred}(x,y) -> {blue}(y)",
            "forall x. forall y. {blue}(x) & {pred}(x,y) -> {red}(y)",
            "forall x. forall y. {red}(x) & {perm2}(x,y) -> {red}(y)",
            "forall x. forall y. {blue}(x) & {perm2}(x,y) -> {blue}(y)",
            "forall x. forall y. {pred2}(x,y) -> {perm2}(x,y)",
            "forall x. forall y. {pred2}(x,y) -> {leq}(x,y)",
        ):
            sentences.append(_p(text, **kw))
        constraints.append(CardinalityConstraint(inv, "=", Bound(0, 2)))
        constraints.append(CardinalityConstraint(pred2, "=", Bound(1, -2)))
        # the two colourings of the successor chain give two models per ordering
        correction = mpq(1, 2)
    return sentences, constraints, new, correction


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def _split_conjuncts(f: Formula) -> List[Formula]:
    if isinstance(f, And):
        out = []
        for p in f.parts:
            out.extend(_split_conjuncts(p))
        return out
    if isinstance(f, Forall) and isinstance(f.body, And) and not isinstance(f.body, QUANTIFIERS):
        # forall v (A & B) == (forall v A) & (forall v B)
        return [g for p in f.body.parts for g in _split_conjuncts(Forall(f.var, p))]
    if f == TRUE:
        return []
    return [f]


def _replace(f: Formula, node: Formula, by: Formula) -> Formula:
    if f is node or f == node:
        return by
    if isinstance(f, Not):
        return Not(_replace(f.body, node, by))
    if isinstance(f, And):
        return And(tuple(_replace(p, node, by) for p in f.parts))
    if isinstance(f, Or):
        return Or(tuple(_replace(p, node, by) for p in f.parts))
    if isinstance(f, Forall):
        return Forall(f.var, _replace(f.body, node, by))
    if isinstance(f, Exists):
        return Exists(f.var, _replace(f.body, node, by))
    return f


def _universal_sentences(f: Formula, names: _Names, weights: Dict[str, Tuple[Weight, Weight]],
                         vocabulary: Dict[str, int], skolems: List[str],
                         auxiliary: List[str]) -> List[Formula]:
    """Turn one NNF sentence into quantifier-free clauses (implicitly universal)."""
    out: List[Formula] = []
    work = _split_conjuncts(f)
    while work:
        g = work.pop(0)
        try:
            prefix, matrix = _prenex(g)
        except _Clash as clash:
            node = clash.node
            args = tuple(sorted(free_vars(node)))
            aux = names.fresh("Aux")
            vocabulary[aux] = len(args)
            weights[aux] = UNIT
            auxiliary.append(aux)
            a = Atom(aux, args)
            g = _replace(g, node, a)
            work.insert(0, g)
            # a(u) <-> node, as two sentences in NNF
            for part in (disj(Not(a), node), disj(a, nnf(node, negate=True))):
                closed = part
                for v in reversed(args):
                    closed = Forall(v, closed)
                work.extend(_split_conjuncts(closed))
            continue
        sk, new_weights = skolemize_wfomc(_rebuild(prefix, matrix), weights, names)
        for name in new_weights:
            if name not in weights:
                skolems.append(name)
        weights.update(new_weights)
        prefix2, m = _split_prefix(sk)
        for a in atoms(m):
            vocabulary.setdefault(a.pred, len(a.args))
        if m != TRUE:
            out.append(m)
    return out


def normalize(p: Problem) -> NormalizedProblem:
    """Full pipeline from a validated :class:`Problem` to a matrix."""
    names = _Names(set(p.predicates) | set(p.weights))
    names.taken.add("n")
    extra_sentences, extra_constraints, new_preds, correction = axiom_theory(p, names)
    vocabulary: Dict[str, int] = {q.name: q.arity for q in p.predicates.values()}
    vocabulary.update(new_preds)
    weights: Dict[str, Tuple[Weight, Weight]] = dict(p.weights)
    constraints = list(p.constraints) + extra_constraints
    skolems: List[str] = []
    auxiliary: List[str] = []
    clauses: List[Formula] = []
    for sentence in list(p.sentences) + extra_sentences:
        reduced, cs = reduce_exactly_one(sentence)
        for c in cs:
            if c not in constraints:
                constraints.append(c)
        clauses += _universal_sentences(nnf(reduced), names, weights, vocabulary, skolems, auxiliary)
    _check_constraints(constraints)
    matrix = conj(*clauses) if clauses else TRUE
    return NormalizedProblem(matrix, clauses, vocabulary, weights, constraints,
                             p.axioms.linear, correction, p.n, skolems, auxiliary)


def _check_constraints(constraints: Sequence[CardinalityConstraint]) -> None:
    seen: Dict[str, CardinalityConstraint] = {}
    for c in constraints:
        if c.pred in seen and seen[c.pred] != c:
            # several bounds on one predicate are fine: all must hold
            continue
        seen[c.pred] = c


def expand_axioms(p: Problem) -> NormalizedProblem:
    """Expand declared successor axioms and normalize the whole problem."""
    return normalize(p)


def mln_to_wfomc(soft: Sequence[Tuple[object, Formula]], hard: Sequence[Formula],
                 constraints: Sequence[CardinalityConstraint] = (), n: Optional[int] = None,
                 axioms: Axioms = Axioms(),
                 weights: Optional[Dict[str, Tuple[Weight, Weight]]] = None,
                 predicates: Optional[Dict[str, int]] = None) -> NormalizedProblem:
    """Reduce an MLN to weighted counting.

    Each soft rule ``(w, alpha)`` becomes ``xi(v) <-> alpha`` for a fresh
    predicate ``xi`` over the free variables of ``alpha`` with ``w(xi) = w``
    (the multiplicative weight) and ``wbar(xi) = 1``. Hard rules are kept.
    """
    problem = Problem(axioms=axioms, n=n)
    for name, arity in (predicates or {}).items():
        problem.predicates[name] = Predicate(name, arity)
    problem.weights = dict(weights or {})
    taken = set(problem.predicates)
    for _, alpha in soft:
        taken |= set(predicates_of(alpha))
    for f in hard:
        taken |= set(predicates_of(f))
    names = _Names(taken)
    for f in hard:
        problem.sentences.append(f)
    for w, alpha in soft:
        if _has_quantifier(alpha) or any(isinstance(g, CountExists) for g in [alpha]):
            raise ValidationError(f"soft rule must be quantifier-free: {pretty(alpha)}")
        args = tuple(sorted(free_vars(alpha)))
        if not args:
            raise ValidationError(f"soft rule without variables: {pretty(alpha)}")
        xi = names.fresh("Xi")
        problem.predicates[xi] = Predicate(xi, len(args))
        problem.weights[xi] = (w if isinstance(w, Symbol) else mpq(w), mpq(1))
        s: Formula = Iff(Atom(xi, args), alpha)
        for v in reversed(args):
            s = Forall(v, s)
        problem.sentences.append(s)
    problem.constraints = list(constraints)
    problem.validate()
    return normalize(problem)

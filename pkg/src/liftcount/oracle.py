"""Brute-force reference counts.

Worlds are enumerated atom by atom. Every sentence is grounded over the domain
into a small tree with native counting nodes, and each ground conjunct is
evaluated in three-valued logic as atoms get assigned, so a branch is dropped
as soon as some conjunct is false. Once every conjunct is true the remaining
atoms are summed in closed form. Nothing here shares code with the lifted
pipeline beyond the formula syntax tree.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

from gmpy2 import mpq

from .algebra import Poly, PolyRing, collapse, normalize_scalar
from .errors import InfeasibleError, OracleLimitError, UnsatisfiableError, ValidationError
from .logic import (And, Atom, CardinalityConstraint, Const, CountExists, Eq, Exists,
                    Forall, Formula, Iff, Implies, Not, Or, Problem, Symbol, Weight)
from .transform import NormalizedProblem, _close

MAX_ATOMS = 26

GroundAtom = Tuple[str, Tuple[int, ...]]


@dataclass
class _Theory:
    vocabulary: Dict[str, int]
    sentences: List[Formula]
    constraints: List[CardinalityConstraint]
    weights: Dict[str, Tuple[Weight, Weight]]
    n: int
    linear: Optional[str] = None
    pred: Optional[str] = None
    pred2: Optional[str] = None

    def weight(self, p: str) -> Tuple[Weight, Weight]:
        return self.weights.get(p, (mpq(1), mpq(1)))


def _theory(p: Union[Problem, NormalizedProblem], n: Optional[int]) -> _Theory:
    if isinstance(p, NormalizedProblem):
        size = p.n if n is None else n
        if size is None:
            raise ValidationError("domain size n is not set")
        sentences = [_close(s) for s in p.sentences]
        return _Theory(dict(p.vocabulary), sentences, list(p.constraints), dict(p.weights),
                       size, p.linear)
    size = p.n if n is None else n
    if size is None:
        raise ValidationError("domain size n is not set")
    vocab = {name: pr.arity for name, pr in p.predicates.items()}
    ax = p.axioms
    for name in (ax.linear, ax.pred, ax.pred2):
        if name:
            vocab.setdefault(name, 2)
    return _Theory(vocab, list(p.sentences), list(p.constraints), dict(p.weights), size,
                   ax.linear, ax.pred, ax.pred2)


# ---------------------------------------------------------------------------
# Ground trees: True / False, ("v", i), ("!", f), ("&", parts), ("|", parts),
# ("=", a, b) for equivalence, ("#", cmp, k, parts) for counting
# ---------------------------------------------------------------------------

def _neg(f):
    if isinstance(f, bool):
        return not f
    if f[0] == "!":
        return f[1]
    return ("!", f)


def _nary(tag: str, parts) -> object:
    unit, zero = (True, False) if tag == "&" else (False, True)
    out = []
    for p in parts:
        if p is zero:
            return zero
        if p is unit:
            continue
        if isinstance(p, tuple) and p[0] == tag:
            out.extend(p[1])
        else:
            out.append(p)
    if not out:
        return unit
    return out[0] if len(out) == 1 else (tag, tuple(out))


def _cmp(count: int, cmp: str, k: int) -> bool:
    if cmp == "=":
        return count == k
    if cmp == "<=":
        return count <= k
    return count >= k


class _Grounder:
    def __init__(self, n: int, index):
        self.n = n
        self.index = index

    def ground(self, f: Formula, env: Dict[str, int]):
        if isinstance(f, Const):
            return f.value
        if isinstance(f, Atom):
            args = tuple(env[a] if isinstance(a, str) else a for a in f.args)
            return ("v", self.index((f.pred, args)))
        if isinstance(f, Eq):
            left = env[f.left] if isinstance(f.left, str) else f.left
            right = env[f.right] if isinstance(f.right, str) else f.right
            return left == right
        if isinstance(f, Not):
            return _neg(self.ground(f.body, env))
        if isinstance(f, And):
            return _nary("&", [self.ground(p, env) for p in f.parts])
        if isinstance(f, Or):
            return _nary("|", [self.ground(p, env) for p in f.parts])
        if isinstance(f, Implies):
            return _nary("|", [_neg(self.ground(f.left, env)), self.ground(f.right, env)])
        if isinstance(f, Iff):
            a = self.ground(f.left, env)
            b = self.ground(f.right, env)
            if isinstance(a, bool):
                return b if a else _neg(b)
            if isinstance(b, bool):
                return a if b else _neg(a)
            return ("=", a, b)
        if isinstance(f, (Forall, Exists)):
            tag = "&" if isinstance(f, Forall) else "|"
            return _nary(tag, [self.ground(f.body, {**env, f.var: c}) for c in range(self.n)])
        if isinstance(f, CountExists):
            parts = [self.ground(f.body, {**env, f.var: c}) for c in range(self.n)]
            fixed = sum(1 for p in parts if p is True)
            rest = tuple(p for p in parts if not isinstance(p, bool))
            k = f.k - fixed
            if not rest:
                return _cmp(0, f.cmp, k)
            return ("#", f.cmp, k, rest)
        raise TypeError(f"cannot ground {f!r}")


def _eval(f, val: List[int]):
    """Three-valued value of a ground tree: 1, 0 or None."""
    if f is True:
        return 1
    if f is False:
        return 0
    tag = f[0]
    if tag == "v":
        v = val[f[1]]
        return None if v < 0 else v
    if tag == "!":
        r = _eval(f[1], val)
        return None if r is None else 1 - r
    if tag == "&":
        unknown = False
        for p in f[1]:
            r = _eval(p, val)
            if r == 0:
                return 0
            if r is None:
                unknown = True
        return None if unknown else 1
    if tag == "|":
        unknown = False
        for p in f[1]:
            r = _eval(p, val)
            if r == 1:
                return 1
            if r is None:
                unknown = True
        return None if unknown else 0
    if tag == "=":
        a = _eval(f[1], val)
        if a is None:
            return None
        b = _eval(f[2], val)
        if b is None:
            return None
        return 1 if a == b else 0
    if tag == "#":
        _, cmp, k, parts = f
        true = unknown = 0
        for p in parts:
            r = _eval(p, val)
            if r == 1:
                true += 1
            elif r is None:
                unknown += 1
        outcomes = {_cmp(c, cmp, k) for c in range(true, true + unknown + 1)}
        if len(outcomes) == 2:
            return None
        return 1 if outcomes.pop() else 0
    raise ValueError(f"bad ground node {tag!r}")


def _variables(f, out: set) -> set:
    if isinstance(f, bool):
        return out
    tag = f[0]
    if tag == "v":
        out.add(f[1])
    elif tag == "!":
        _variables(f[1], out)
    elif tag in ("&", "|"):
        for p in f[1]:
            _variables(p, out)
    elif tag == "=":
        _variables(f[1], out)
        _variables(f[2], out)
    else:
        for p in f[3]:
            _variables(p, out)
    return out


# ---------------------------------------------------------------------------
# Order axioms, written directly as ground trees
# ---------------------------------------------------------------------------

def _order_conjuncts(th: _Theory, index) -> List[object]:
    n = th.n
    out: List[object] = []
    if th.linear is None:
        return out

    def leq(a, b):
        return ("v", index((th.linear, (a, b))))

    for a in range(n):
        out.append(leq(a, a))
    for a, b in itertools.combinations(range(n), 2):
        out.append(_nary("|", [leq(a, b), leq(b, a)]))
        out.append(_nary("|", [_neg(leq(a, b)), _neg(leq(b, a))]))
    for a, b, c in itertools.permutations(range(n), 3):
        out.append(_nary("|", [_neg(leq(a, b)), _neg(leq(b, c)), leq(a, c)]))

    def succ(a, b):
        if a == b:
            return False
        between = [_neg(_nary("&", [leq(a, c), leq(c, b)])) for c in range(n) if c not in (a, b)]
        return _nary("&", [leq(a, b)] + between)

    if th.pred:
        for a in range(n):
            for b in range(n):
                atom = ("v", index((th.pred, (a, b))))
                rhs = succ(a, b)
                out.append(_iff(atom, rhs))
    if th.pred2:
        for a in range(n):
            for b in range(n):
                atom = ("v", index((th.pred2, (a, b))))
                rhs = False if a == b else _nary(
                    "|", [_nary("&", [succ(a, c), succ(c, b)]) for c in range(n) if c not in (a, b)])
                out.append(_iff(atom, rhs))
    return out


def _iff(a, b):
    if isinstance(b, bool):
        return a if b else _neg(a)
    return ("=", a, b)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

def herbrand_base(th: _Theory) -> List[GroundAtom]:
    out = []
    for name in sorted(th.vocabulary):
        arity = th.vocabulary[name]
        for args in itertools.product(range(th.n), repeat=arity):
            out.append((name, args))
    return out


class _Search:
    def __init__(self, th: _Theory, query: Optional[str] = None,
                 tally_orderings: bool = False):
        self.th = th
        base = herbrand_base(th)
        # successor atoms are a function of the order, so they do not count
        defined = {th.pred, th.pred2} - {None}
        free = sum(1 for name, _ in base if name not in defined)
        if free > MAX_ATOMS:
            raise OracleLimitError(
                f"Herbrand base has {free} ground atoms; the oracle stops at {MAX_ATOMS}")
        # order atoms first, then by the largest element mentioned
        def rank(key):
            name, args = key
            return (0 if name == th.linear else 1, max(args, default=-1), name, args)

        self.atoms = sorted(base, key=rank)
        self.ids = {key: i for i, key in enumerate(self.atoms)}
        grounder = _Grounder(th.n, self.ids.__getitem__)
        conjuncts: List[object] = []
        for s in th.sentences:
            g = grounder.ground(s, {})
            if isinstance(g, tuple) and g[0] == "&":
                conjuncts.extend(g[1])
            else:
                conjuncts.append(g)
        conjuncts.extend(_order_conjuncts(th, self.ids.__getitem__))
        self.unsat = any(c is False for c in conjuncts)
        self.conjuncts = [c for c in conjuncts if c is not True]
        self.watch: List[List[int]] = [[] for _ in self.atoms]
        for ci, c in enumerate(self.conjuncts):
            for v in _variables(c, set()):
                self.watch[v].append(ci)
        self.query = query
        self.tally = tally_orderings and th.linear is not None
        self.n_order_atoms = th.n * th.n if th.linear else 0

        # weights, possibly symbolic
        symbols: Dict[str, int] = {}
        for name, arity in th.vocabulary.items():
            for w in th.weight(name):
                if isinstance(w, Symbol):
                    symbols[w.name] = symbols.get(w.name, 0) + th.n ** arity
        self.ring = PolyRing(list(symbols), list(symbols.values()), list(symbols.values())) if symbols else None

        def lift(w):
            if isinstance(w, Symbol):
                return self.ring.var(w.name)
            return mpq(w)

        self.pred_weights = {name: tuple(lift(w) for w in th.weight(name)) for name in th.vocabulary}
        self.atom_weights = [self.pred_weights[name] for name, _ in self.atoms]
        self.constrained = sorted({c.pred for c in th.constraints})
        self.val = [-1] * len(self.atoms)
        self.true_count = {name: 0 for name in th.vocabulary}
        self.free_count = {name: th.n ** a for name, a in th.vocabulary.items()}
        self.decided = [False] * len(self.conjuncts)
        self.undecided = len(self.conjuncts)
        self.results: Dict[object, object] = {}

    # -- cardinality helpers -------------------------------------------------
    def _feasible(self, name: str) -> bool:
        mine = [c for c in self.th.constraints if c.pred == name]
        if not mine:
            return True
        t, u = self.true_count[name], self.free_count[name]
        return any(all(c.admits(d, self.th.n) for c in mine) for d in range(t, t + u + 1))

    def _completion(self) -> Dict[int, object]:
        """Weight of the unassigned atoms, keyed by how many query atoms end
        up true (key 0 when there is no query)."""
        th = self.th
        total: Dict[int, object] = {0: 1}
        for name in sorted(th.vocabulary):
            u = self.free_count[name]
            t = self.true_count[name]
            w, wb = self.pred_weights[name]
            mine = [c for c in th.constraints if c.pred == name]
            if name == self.query or mine:
                options: Dict[int, object] = {}
                for d in range(u + 1):
                    if mine and not all(c.admits(t + d, th.n) for c in mine):
                        continue
                    key = t + d if name == self.query else 0
                    options[key] = options.get(key, 0) + math.comb(u, d) * _pow(w, d) * _pow(wb, u - d)
            else:
                options = {0: _pow(w + wb, u)}
            nxt: Dict[int, object] = {}
            for k1, v1 in total.items():
                for k2, v2 in options.items():
                    nxt[k1 + k2] = nxt.get(k1 + k2, 0) + v1 * v2
            total = nxt
        return total

    def _record(self, weight) -> None:
        comp = self._completion()
        if self.tally:
            order = self._ordering()
            for k, v in comp.items():
                key = (order, k)
                self.results[key] = self.results.get(key, 0) + weight * v
        else:
            for k, v in comp.items():
                self.results[k] = self.results.get(k, 0) + weight * v

    def _ordering(self) -> Tuple[int, ...]:
        th = self.th
        below = [sum(self.val[self.ids[(th.linear, (b, a))]] for b in range(th.n))
                 for a in range(th.n)]
        return tuple(sorted(range(th.n), key=lambda a: below[a]))

    # -- main loop --------------------------------------------------------------
    def run(self):
        if self.unsat:
            return self.results
        self._walk(0, 1)
        return self.results

    def _walk(self, pos: int, weight) -> None:
        if self.undecided == 0 and pos >= self.n_order_atoms:
            self._record(weight)
            return
        if pos == len(self.atoms):
            return
        atom = pos
        name = self.atoms[atom][0]
        w, wb = self.atom_weights[atom]
        self.free_count[name] -= 1
        for value in (1, 0):
            factor = w if value else wb
            if not factor:
                continue
            self.val[atom] = value
            self.true_count[name] += value
            newly: List[int] = []
            ok = True
            for ci in self.watch[atom]:
                if self.decided[ci]:
                    continue
                r = _eval(self.conjuncts[ci], self.val)
                if r == 0:
                    ok = False
                    break
                if r == 1:
                    self.decided[ci] = True
                    newly.append(ci)
            if ok and self._feasible(name):
                self.undecided -= len(newly)
                self._walk(pos + 1, weight * factor)
                self.undecided += len(newly)
            for ci in newly:
                self.decided[ci] = False
            self.true_count[name] -= value
        self.val[atom] = -1
        self.free_count[name] += 1


def _pow(base, e: int):
    if e == 0:
        return 1
    return base ** e


def _finish(x):
    if isinstance(x, Poly):
        return collapse(x)
    return normalize_scalar(mpq(x)) if not isinstance(x, int) else x


def brute_force_wfomc(p: Union[Problem, NormalizedProblem], n: Optional[int] = None):
    """Sum of world weights over all models, by enumeration.

    A normalized problem is counted as written: Skolem predicates keep their
    negative weight and the correction factor is *not* applied.
    """
    th = _theory(p, n)
    s = _Search(th)
    return _finish(sum(s.run().values(), 0))


def brute_force_distribution(p: Union[Problem, NormalizedProblem], query: str,
                             n: Optional[int] = None) -> List[mpq]:
    """``Pr(|query| = k)`` for ``k = 0 .. n**arity``."""
    th = _theory(p, n)
    if query not in th.vocabulary:
        raise ValidationError(f"unknown query predicate {query}")
    s = _Search(th, query=query)
    raw = s.run()
    g = th.n ** th.vocabulary[query]
    z = sum(raw.values(), 0)
    if isinstance(z, Poly):
        raise ValidationError("distribution needs numeric weights")
    if z == 0:
        raise UnsatisfiableError("unsatisfiable theory: the partition function is zero")
    return [mpq(raw.get(k, 0)) / z for k in range(g + 1)]


def per_ordering_counts(p: Union[Problem, NormalizedProblem], n: Optional[int] = None
                        ) -> Dict[Tuple[int, ...], object]:
    """World weight split by the linear order the world induces, listed as the
    elements from smallest to largest."""
    th = _theory(p, n)
    if th.linear is None:
        raise ValidationError("per-ordering counts need a linear order axiom")
    s = _Search(th, tally_orderings=True)
    out: Dict[Tuple[int, ...], object] = {order: 0 for order in itertools.permutations(range(th.n))}
    for (order, _), v in s.run().items():
        out[order] = out[order] + v
    return {k: _finish(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# Smokers on ring graphs
# ---------------------------------------------------------------------------

def ring_graphs(n: int, m: int) -> List[frozenset]:
    """Undirected graphs made of the cycle ``0-1-...-(n-1)-0`` plus ``m`` more edges."""
    cycle = {frozenset((i, (i + 1) % n)) for i in range(n)}
    if n < 3 or len(cycle) != n:
        raise InfeasibleError(f"no ring on {n} elements")
    others = [frozenset(e) for e in itertools.combinations(range(n), 2) if frozenset(e) not in cycle]
    if m < 0 or m > len(others):
        raise InfeasibleError(f"m = {m} extra edges do not fit: at most {len(others)} for n = {n}")
    return [frozenset(cycle | set(extra)) for extra in itertools.combinations(others, m)]


def random_graphs(n: int, m: int) -> List[frozenset]:
    """All simple undirected graphs with ``n + m`` edges."""
    pairs = [frozenset(e) for e in itertools.combinations(range(n), 2)]
    if m < 0 or n + m > len(pairs):
        raise InfeasibleError(f"{n + m} edges do not fit on {n} elements")
    return [frozenset(c) for c in itertools.combinations(pairs, n + m)]


def smokers_oracle(n: int, m: int, w, kind: str = "ring") -> List[mpq]:
    """``Pr(|Sm| = k)`` over ring or random graphs, each world weighted by
    ``w`` to the number of satisfied groundings of ``Sm(x) & E(x,y) -> Sm(y)``."""
    w = mpq(w)
    if kind not in ("ring", "random"):
        raise ValidationError(f"unknown graph model {kind!r}")
    graphs = ring_graphs(n, m) if kind == "ring" else random_graphs(n, m)
    raw = [mpq(0)] * (n + 1)
    for graph in graphs:
        edges = [tuple(e) for e in graph]
        for smokers in range(1 << n):
            cut = sum(1 for a, b in edges if ((smokers >> a) ^ (smokers >> b)) & 1)
            raw[bin(smokers).count("1")] += w ** (n * n - cut)
    z = sum(raw, mpq(0))
    return [v / z for v in raw]

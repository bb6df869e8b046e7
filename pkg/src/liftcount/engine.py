"""The counting core.

``incremental_wfomc`` adds domain elements one at a time, keeping a table from
p-vectors (how many elements sit in each cell) to the weight of all partial
worlds with that profile. ``closed_form_wfomc`` evaluates the same quantity
directly as a sum over p-vectors and only applies when the parameters are
symmetric (no order predicate).

``wfomc`` runs the whole pipeline on a normalized problem: nullary predicates
are summed out, cardinality-constrained predicates get a polynomial variable,
the result of one ordering is multiplied by ``n!`` when a linear order is
declared, and finally the admissible coefficients are re-weighted.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from gmpy2 import mpq

from .algebra import (Poly, PolyRing, collapse, multinomial, normalize_scalar,
                      poly_coeff, power)
from .errors import UnsatisfiableError, ValidationError
from .kernel import CellParams, build_params, factor_pairs
from .modular import Factorization, incremental_grouped, plain_factorization
from .logic import (And, Atom, Bound, CardinalityConstraint, Const, Formula, Not, Or,
                    Symbol, atoms)
from .transform import NormalizedProblem

PVector = Tuple[int, ...]

# "compiled" runs the incremental tables modulo word-sized primes; "python"
# keeps exact rationals throughout and serves as its cross-check
_SMALL_TABLE = 500
BACKENDS = ("auto", "compiled", "python")


@dataclass
class EngineStats:
    method: str = ""
    cells: int = 0
    level_sizes: List[int] = field(default_factory=list)

    @property
    def peak_table(self) -> int:
        return max(self.level_sizes, default=0)


# ---------------------------------------------------------------------------
# Algorithm on cell parameters
# ---------------------------------------------------------------------------

def _is_zero(v) -> bool:
    return not v


def _is_one(v) -> bool:
    return not isinstance(v, Poly) and v == 1


def incremental_tables(params: CellParams, n: int) -> Iterator[Dict[PVector, object]]:
    """Yield the tables ``T_1 .. T_n``.

    ``T_i`` maps a p-vector with entries summing to ``i`` to the total weight of
    the structures on the first ``i`` elements with that profile. Zero entries
    are not stored.
    """
    p = params.p
    if n < 1 or p == 0:
        return
    w, r = params.w, params.r
    # powers[j][l][e] = r_jl ** e, filled lazily; None marks the all-ones row
    powers: List[List[Optional[List[object]]]] = [[None] * p for _ in range(p)]
    for j in range(p):
        for l in range(p):
            if not _is_one(r[j][l]):
                powers[j][l] = [1, r[j][l]]
    zero_cols = [[l for l in range(p) if _is_zero(r[j][l])] for j in range(p)]
    factors = [[l for l in range(p) if powers[j][l] is not None and not _is_zero(r[j][l])]
               for j in range(p)]

    def rpow(j: int, l: int, e: int):
        pw = powers[j][l]
        while len(pw) <= e:
            pw.append(pw[-1] * pw[1])
        return pw[e]

    table: Dict[PVector, object] = {}
    for j in range(p):
        if not _is_zero(w[j]):
            key = tuple(1 if l == j else 0 for l in range(p))
            table[key] = w[j]
    yield table
    for _ in range(2, n + 1):
        new: Dict[PVector, object] = {}
        for j in range(p):
            wj = w[j]
            if _is_zero(wj):
                continue
            zeros = zero_cols[j]
            fs = factors[j]
            for k_old, w_old in table.items():
                if any(k_old[l] for l in zeros):
                    continue
                factor = wj
                for l in fs:
                    e = k_old[l]
                    if e:
                        factor = factor * rpow(j, l, e)
                k_new = k_old[:j] + (k_old[j] + 1,) + k_old[j + 1:]
                value = w_old * factor
                if k_new in new:
                    value = new[k_new] + value
                    if not value:
                        del new[k_new]
                        continue
                elif not value:
                    continue
                new[k_new] = value
        table = new
        yield table


def incremental_wfomc(params: CellParams, n: int, stats: Optional[EngineStats] = None):
    """Sum of the last table; one fixed ordering when the parameters are ordered."""
    if n == 0:
        return 1
    total = 0
    last: Dict[PVector, object] = {}
    for table in incremental_tables(params, n):
        if stats is not None:
            stats.level_sizes.append(len(table))
        last = table
    for v in last.values():
        total = total + v
    return _tidy(total)


def pvectors(n: int, p: int) -> Iterator[PVector]:
    """All length-p vectors of non-negative integers summing to n, lexicographically."""
    if p == 0:
        if n == 0:
            yield ()
        return
    if p == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in pvectors(n - first, p - 1):
            yield (first,) + rest


def closed_form_term(params: CellParams, k: PVector):
    term = multinomial(k)
    p = params.p
    for i in range(p):
        if k[i] == 0:
            continue
        term = term * power(params.w[i], k[i]) * power(params.r[i][i], k[i] * (k[i] - 1) // 2)
        for j in range(i + 1, p):
            if k[j]:
                term = term * power(params.r[i][j], k[i] * k[j])
        if not term:
            return 0
    return term


def closed_form_terms(params: CellParams, n: int) -> Dict[PVector, object]:
    if params.ordered:
        raise ValidationError("the closed form needs symmetric (unordered) parameters")
    out = {}
    for k in pvectors(n, params.p):
        t = closed_form_term(params, k)
        if t:
            out[k] = t
    return out


def closed_form_wfomc(params: CellParams, n: int, stats: Optional[EngineStats] = None):
    if n == 0:
        return 1
    terms = closed_form_terms(params, n)
    if stats is not None:
        stats.level_sizes.append(len(terms))
    total = 0
    for v in terms.values():
        total = total + v
    return _tidy(total)


def _tidy(v):
    if isinstance(v, Poly):
        return v if not v.is_constant() else normalize_scalar(v.constant_term())
    return normalize_scalar(v)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def _ground_count(arity: int, n: int) -> int:
    return n ** arity


def _substitute_nullary(f: Formula, values: Mapping[str, bool]) -> Formula:
    if isinstance(f, Atom) and not f.args and f.pred in values:
        return Const(values[f.pred])
    if isinstance(f, Not):
        return Not(_substitute_nullary(f.body, values))
    if isinstance(f, And):
        return And(tuple(_substitute_nullary(p, values) for p in f.parts))
    if isinstance(f, Or):
        return Or(tuple(_substitute_nullary(p, values) for p in f.parts))
    if hasattr(f, "left") and hasattr(f, "right") and not isinstance(f.left, (str, int)):
        return type(f)(_substitute_nullary(f.left, values), _substitute_nullary(f.right, values))
    return f


@dataclass
class _Setup:
    ring: PolyRing
    kernel_weights: Dict[str, Tuple[object, object]]
    unary_tracked: List[str]          # degree read off the p-vector
    binary_tracked: List[str]         # degree carried by a ring variable
    vocabulary: Dict[str, int]
    outside_factor: object            # predicates absent from the matrix


def _setup(np_: NormalizedProblem, n: int, tracked: Sequence[str]) -> _Setup:
    in_matrix = {a.pred for a in atoms(np_.matrix)}
    keep = set(in_matrix) | set(tracked)
    if np_.linear:
        keep.add(np_.linear)
    vocab = {p: a for p, a in np_.vocabulary.items() if p in keep and a > 0}

    symbols: List[Tuple[str, int]] = []
    symbol_limits: Dict[str, int] = {}
    for p, a in np_.vocabulary.items():
        for w in np_.weight(p):
            if isinstance(w, Symbol):
                if w.name not in [s for s, _ in symbols]:
                    symbols.append((w.name, _ground_count(a, n)))
                if w.limit is not None:
                    symbol_limits[w.name] = min(w.limit, symbol_limits.get(w.name, w.limit))

    unary = sorted(p for p in tracked if vocab.get(p) == 1)
    binary = sorted(p for p in tracked if vocab.get(p) == 2)
    names, limits, caps = [], [], []
    for p in unary + binary:
        g = _ground_count(vocab[p], n)
        names.append(f"|{p}|")
        caps.append(g)
        limits.append(min([g] + [_upper(c, n) for c in np_.constraints if c.pred == p]))
    for s, g in symbols:
        if s in names:
            continue
        names.append(s)
        # a symbol may weigh several predicates; bound by the largest ground count
        total = sum(_ground_count(a, n) for q, a in np_.vocabulary.items()
                    if any(isinstance(w, Symbol) and w.name == s for w in np_.weight(q)))
        caps.append(total)
        limits.append(min(total, symbol_limits.get(s, total)))
    ring = PolyRing(names, [max(0, l) for l in limits], caps)

    def lift(w):
        if isinstance(w, Symbol):
            return ring.var(w.name)
        return w

    kernel_weights: Dict[str, Tuple[object, object]] = {}
    for p in vocab:
        if p in unary:
            kernel_weights[p] = (1, 1)
        elif p in binary:
            kernel_weights[p] = (ring.var(f"|{p}|"), 1)
        else:
            w, wb = np_.weight(p)
            kernel_weights[p] = (lift(w), lift(wb))
    outside = 1
    for p, a in np_.vocabulary.items():
        if p in vocab or a == 0:
            continue
        w, wb = np_.weight(p)
        outside = outside * power(lift(w) + lift(wb), _ground_count(a, n))
    return _Setup(ring, kernel_weights, unary, binary, vocab, outside)


def _upper(c: CardinalityConstraint, n: int) -> int:
    if c.cmp in ("=", "<="):
        return max(-1, c.bound.value(n))
    return 1 << 62


def _lift_weight(ring: PolyRing, w):
    if isinstance(w, Symbol):
        return ring.var(w.name)
    return w


def raw_count(np_: NormalizedProblem, tracked: Sequence[str] = (), method: str = "auto",
              stats: Optional[EngineStats] = None, backend: str = "auto",
              wanted: Optional[Dict[str, Sequence[int]]] = None) -> Tuple[object, _Setup]:
    """Weighted count with the tracked predicates' positive weight replaced by
    a variable ``|P|`` and negative weight by one. Includes ``n!`` for ordered
    problems and the correction factor; constraints are not yet applied."""
    n = np_.n
    if n is None:
        raise ValidationError("domain size n is not set")
    setup = _setup(np_, n, tracked)
    ring = setup.ring
    nullary = sorted(p for p, a in np_.vocabulary.items() if a == 0)
    if method == "auto":
        method = "incremental" if np_.linear else "closed-form"
    if method not in ("incremental", "closed-form"):
        raise ValidationError(f"unknown method {method!r}")
    if backend not in BACKENDS:
        raise ValidationError(f"unknown backend {backend!r}")
    if method == "closed-form" and np_.linear:
        raise ValidationError("the closed form does not apply with a linear order axiom")
    if stats is not None:
        stats.method = method

    total = 0
    for values in itertools.product((True, False), repeat=len(nullary)):
        assignment = dict(zip(nullary, values))
        weight = 1
        for p, v in assignment.items():
            w, wb = np_.weight(p)
            weight = weight * _lift_weight(ring, w if v else wb)
        if not weight:
            continue
        matrix = _substitute_nullary(np_.matrix, assignment) if nullary else np_.matrix
        if n == 0:
            part = 1
        else:
            params = build_params(matrix, setup.vocabulary, setup.kernel_weights, np_.linear)
            if stats is not None:
                stats.cells = max(stats.cells, params.p)
            part = _grouped_sum(params, n, setup, method, stats, backend, matrix, np_.linear,
                                wanted)
        total = total + weight * part
    if np_.linear:
        total = total * math.factorial(n)
    if np_.correction != 1:
        total = total * np_.correction
    total = total * setup.outside_factor
    return total, setup


def _grouped_sum(params: CellParams, n: int, setup: _Setup, method: str,
                 stats: Optional[EngineStats], backend: str = "auto",
                 matrix: Optional[Formula] = None, linear: Optional[str] = None,
                 wanted: Optional[Dict[str, Sequence[int]]] = None):
    if method == "incremental" and backend == "auto":
        # small tables are done before the compiled kernels would even load
        small = params.p == 0 or math.comb(n + params.p - 1, params.p - 1) <= _SMALL_TABLE
        backend = "python" if small else "compiled"
    if method == "incremental" and backend == "compiled":
        return _grouped_modular(params, n, setup, stats, matrix, linear, wanted)
    if method == "incremental":
        last: Dict[PVector, object] = {}
        for table in incremental_tables(params, n):
            if stats is not None:
                stats.level_sizes.append(len(table))
            last = table
    else:
        last = closed_form_terms(params, n)
        if stats is not None:
            stats.level_sizes.append(len(last))
    if not setup.unary_tracked:
        total = 0
        for v in last.values():
            total = total + v
        return total
    ring = setup.ring
    masks = [[c[p] for c in params.cells] for p in setup.unary_tracked]
    groups: Dict[Tuple[int, ...], object] = {}
    for k, v in last.items():
        key = tuple(sum(kk for kk, m in zip(k, mask) if m) for mask in masks)
        groups[key] = groups.get(key, 0) + v
    total = ring.const(0)
    base = [ring.index(f"|{p}|") for p in setup.unary_tracked]
    for key, v in groups.items():
        exps = [0] * len(ring.names)
        for i, d in zip(base, key):
            exps[i] = d
        total = total + ring.from_terms({tuple(exps): 1}) * v
    return total


def _grouped_modular(params: CellParams, n: int, setup: _Setup,
                     stats: Optional[EngineStats], matrix: Optional[Formula],
                     linear: Optional[str], wanted: Optional[Dict[str, Sequence[int]]] = None):
    ring = setup.ring if setup.ring.names else None
    split = None
    if matrix is not None:
        split = factor_pairs(matrix, params, setup.vocabulary, setup.kernel_weights,
                             linear, setup.unary_tracked)
    sigma = None
    if split is None:
        fact = plain_factorization(params.r)
        masks = [[1 if c[p] else 0 for c in params.cells] for p in setup.unary_tracked]
        sigma = cell_symmetry(params)
    else:
        fact = Factorization(split.class_of, split.tables)
        masks = [_feature_mask(split, params, p) for p in setup.unary_tracked]
        sigma = _class_symmetry(fact, cell_symmetry(params))
    if wanted:
        # unary counts come from the groups, never from ring degrees
        grouped = {f"|{p}|" for p in setup.unary_tracked}
        wanted = {k: v for k, v in wanted.items() if k not in grouped}
    sizes: List[int] = []
    groups = incremental_grouped(params.w, fact, ring, n, masks, sizes, wanted, sigma)
    if stats is not None:
        stats.level_sizes.extend(sizes)
    if not setup.unary_tracked:
        return groups.get((), 0)
    total = setup.ring.const(0)
    base = [setup.ring.index(f"|{p}|") for p in setup.unary_tracked]
    for key, v in groups.items():
        exps = [0] * len(setup.ring.names)
        for i, d in zip(base, key):
            exps[i] = d
        total = total + setup.ring.from_terms({tuple(exps): 1}) * v
    return total


def cell_symmetry(params: CellParams) -> Optional[List[int]]:
    """A permutation of the cells that flips one atom and keeps every weight
    and every pair weight, if there is one."""
    cells = params.cells
    if not cells:
        return None
    index = {c.values: i for i, c in enumerate(cells)}
    for pos in range(len(cells[0].values)):
        sigma = []
        for c in cells:
            flipped = c.values[:pos] + (not c.values[pos],) + c.values[pos + 1:]
            if flipped not in index:
                break
            sigma.append(index[flipped])
        else:
            p = len(cells)
            if all(params.w[sigma[j]] == params.w[j] for j in range(p)) and \
                    all(params.r[sigma[j]][sigma[l]] == params.r[j][l]
                        for j in range(p) for l in range(p)):
                return sigma
    return None


def _class_symmetry(fact: Factorization, sigma: Optional[List[int]]) -> Optional[List[int]]:
    """The permutation of factor classes that a cell symmetry induces, if
    every factor table respects it."""
    if sigma is None:
        return None
    out: List[int] = []
    for classes, table in zip(fact.class_of, fact.factors):
        size = max(classes) + 1
        cmap: List[Optional[int]] = [None] * size
        for j, a in enumerate(classes):
            b = classes[sigma[j]]
            if cmap[a] not in (None, b):
                return None
            cmap[a] = b
        if any(b is None for b in cmap):
            return None
        if any(table[sigma[j]][cmap[a]] != table[j][a] for j in range(len(classes))
               for a in range(size)):
            return None
        offset = len(out)
        out.extend(offset + b for b in cmap)
    return out


def _feature_mask(split, params: CellParams, pred: str) -> List[int]:
    """0/1 mask over state dimensions counting elements that satisfy ``pred``."""
    key = (pred, (1,))
    offset = 0
    for feats, classes in zip(split.features, split.class_of):
        size = max(classes) + 1
        if key in feats:
            mask = [0] * size
            for cell, c in zip(params.cells, classes):
                mask[c] = 1 if cell[pred] else 0
            total = sum(max(cl) + 1 for cl in split.class_of)
            out = [0] * total
            out[offset:offset + size] = mask
            return out
        offset += size
    raise ValidationError(f"no factor keeps track of {pred}")


def enforce_cardinality(result, constraints: Sequence[CardinalityConstraint],
                        weights: Mapping[str, Tuple[object, object]],
                        ground_counts: Mapping[str, int], n: int):
    """Keep the admissible degrees of each ``|P|`` variable and re-weight:
    ``sum_d coeff_d * w(P)^d * wbar(P)^(G_P - d)``."""
    preds = []
    for c in constraints:
        if c.pred not in preds:
            preds.append(c.pred)
    for p in preds:
        var = f"|{p}|"
        mine = [c for c in constraints if c.pred == p]
        g = ground_counts[p]
        w, wb = weights[p]
        total = 0
        for d in range(g + 1):
            if not all(c.admits(d, n) for c in mine):
                continue
            coeff = poly_coeff(result, var, d) if isinstance(result, Poly) else (result if d == 0 else 0)
            if not _nonzero(coeff):
                continue
            total = total + coeff * _embed(coeff, w, d) * _embed(coeff, wb, g - d)
        result = collapse(total) if isinstance(total, Poly) else normalize_scalar(total)
        if isinstance(result, Poly) and var in result.ring.names:
            result = poly_coeff(result, var, 0)
    return result


def _nonzero(v) -> bool:
    return bool(v)


def _embed(context, w, e):
    """``w ** e`` expressed in the ring of ``context`` (symbols become variables)."""
    if isinstance(w, Symbol):
        if not isinstance(context, Poly):
            raise ValidationError(f"symbolic weight {w} outside a polynomial context")
        return context * 0 + context.ring.var(w.name) ** e
    return power(w, e)


def wfomc(np_: NormalizedProblem, method: str = "auto", stats: Optional[EngineStats] = None,
          backend: str = "auto"):
    """Exact weighted model count of a normalized problem."""
    n = np_.n
    if n is None:
        raise ValidationError("domain size n is not set")
    if n == 0:
        return 1
    tracked = sorted({c.pred for c in np_.constraints})
    result, setup = raw_count(np_, tracked, method, stats, backend,
                              _wanted_degrees(np_, [np_.constraints], tracked))
    if not tracked:
        return _tidy(result)
    weights = {p: np_.weight(p) for p in tracked}
    counts = {p: _ground_count(np_.vocabulary[p], n) for p in tracked}
    out = _enforce(result, np_.constraints, weights, counts, n, setup)
    return _tidy(out)


def _wanted_degrees(np_: NormalizedProblem, constraint_sets, preds: Sequence[str]) -> Dict[str, List[int]]:
    """Degrees of each ``|P|`` that some constraint set will read."""
    out: Dict[str, List[int]] = {}
    n = np_.n
    for p in preds:
        g = _ground_count(np_.vocabulary[p], n)
        degrees: Optional[set] = set()
        for cs in constraint_sets:
            mine = [c for c in cs if c.pred == p]
            if not mine:
                degrees = None
                break
            degrees |= {d for d in range(g + 1) if all(c.admits(d, n) for c in mine)}
        if degrees is not None:
            out[f"|{p}|"] = sorted(degrees)
    return out


def _enforce(result, constraints, weights, counts, n, setup: _Setup):
    ring = setup.ring
    for c in constraints:
        if f"|{c.pred}|" not in ring.names:
            raise ValidationError(f"no variable for constrained predicate {c.pred}")
    value = result
    done = []
    for c in constraints:
        if c.pred in done:
            continue
        done.append(c.pred)
        value = enforce_cardinality(value, [d for d in constraints if d.pred == c.pred],
                                    weights, counts, n)
    return value


def cardinality_coefficients(np_: NormalizedProblem, query: str,
                             constraint_sets: Optional[Sequence[Sequence[CardinalityConstraint]]] = None,
                             method: str = "auto", stats: Optional[EngineStats] = None,
                             backend: str = "auto") -> List[List[object]]:
    """Unnormalized weight of ``|query| = k`` for ``k = 0 .. G``.

    One engine run serves every entry of ``constraint_sets`` (default: the
    problem's own constraints). A set may only ask for degrees within the
    truncation that the problem's constraints imply. Symbolic weights other
    than the query's stay symbolic in the returned coefficients.
    """
    n = np_.n
    if n is None:
        raise ValidationError("domain size n is not set")
    if query not in np_.vocabulary or np_.vocabulary[query] == 0:
        raise ValidationError(f"unknown query predicate {query}")
    if constraint_sets is None:
        constraint_sets = [np_.constraints]
    for cs in [np_.constraints, *constraint_sets]:
        if any(c.pred == query for c in cs):
            raise ValidationError(f"query predicate {query} is itself cardinality constrained")
    qw, qwb = np_.weight(query)
    if isinstance(qw, Symbol) or isinstance(qwb, Symbol):
        raise ValidationError("distribution needs numeric weights for the query predicate")
    g = _ground_count(np_.vocabulary[query], n)
    if n == 0:
        return [[1] for _ in constraint_sets]
    constrained = sorted({c.pred for c in np_.constraints})
    tracked = sorted(set(constrained) | {query})
    result, setup = raw_count(np_, tracked, method, stats, backend,
                              _wanted_degrees(np_, constraint_sets, constrained))
    out = []
    for cs in constraint_sets:
        preds = sorted({c.pred for c in cs})
        for c in cs:
            if c.pred not in constrained:
                raise ValidationError(f"constraint on {c.pred} needs a rerun: it was not tracked")
            limit = setup.ring.limits[setup.ring.index(f"|{c.pred}|")]
            count = _ground_count(np_.vocabulary[c.pred], n)
            if any(c.admits(d, n) for d in range(limit + 1, count + 1)):
                raise ValidationError(f"{c} admits degrees beyond the truncation at {limit}")
        weights = {p: np_.weight(p) for p in preds}
        counts = {p: _ground_count(np_.vocabulary[p], n) for p in preds}
        value = _enforce(result, cs, weights, counts, n, setup) if cs else result
        for p in constrained:
            if p not in preds:
                # unconstrained in this set: every degree counts with its weight
                w, wb = np_.weight(p)
                value = enforce_cardinality(value, [CardinalityConstraint(p, ">=", Bound(0, 0))],
                                            {p: (w, wb)}, {p: _ground_count(np_.vocabulary[p], n)}, n)
        var = f"|{query}|"
        row = []
        for d in range(g + 1):
            coeff = poly_coeff(value, var, d) if isinstance(value, Poly) else (value if d == 0 else 0)
            row.append(_tidy(coeff * power(mpq(qw), d) * power(mpq(qwb), g - d)))
        out.append(row)
    return out


def distribution_by_cardinality(np_: NormalizedProblem, query: str, method: str = "auto",
                                stats: Optional[EngineStats] = None,
                                backend: str = "auto") -> List[mpq]:
    """``Pr(|query| = k)`` for ``k = 0 .. G`` from a single run."""
    raw = cardinality_coefficients(np_, query, None, method, stats, backend)[0]
    if any(isinstance(v, Poly) for v in raw):
        raise ValidationError("distribution needs numeric weights throughout")
    raw = [mpq(v) for v in raw]
    z = sum(raw, mpq(0))
    if z == 0:
        raise UnsatisfiableError("unsatisfiable theory: the partition function is zero")
    return [v / z for v in raw]

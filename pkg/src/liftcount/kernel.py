"""Cells and the per-cell parameters ``w_k`` and ``r_ij``.

A cell is a full assignment to the single-variable atoms of a vocabulary: the
unary atoms ``P(x)`` and the reflexive binary atoms ``P(x,x)``. It is valid if
it satisfies the matrix with both variables bound to the same element.

``w_k`` is the weight of a lone element in cell ``k`` and ``r_ij`` is the
weighted count of the atoms linking two distinct elements, one in cell ``i``
(the element being added) and one in cell ``j`` (an element already placed).
Ground weighted model counting is plain Shannon expansion with memoization,
which is ample for the dozen or so atoms linking two constants.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .algebra import normalize_scalar
from .logic import (And, Atom, Const, Eq, Formula, Iff, Implies, Not, Or,
                    QUANTIFIERS, pretty)

GroundAtom = Tuple[str, Tuple[int, ...]]

# Compiled ground formulas are nested tuples:
#   True / False, ("v", i), ("!", f), ("&", (f, ...)), ("|", (f, ...))


def compile_ground(f: Formula, env: Mapping[str, int], index: Callable[[GroundAtom], object]):
    """Ground ``f`` under ``env`` and compile it. ``index`` maps a ground atom
    either to a bool (fixed atom) or to a variable id."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Atom):
        key = (f.pred, tuple(env[a] if isinstance(a, str) else a for a in f.args))
        v = index(key)
        return v if isinstance(v, bool) else ("v", v)
    if isinstance(f, Eq):
        left = env[f.left] if isinstance(f.left, str) else f.left
        right = env[f.right] if isinstance(f.right, str) else f.right
        return left == right
    if isinstance(f, Not):
        return _neg(compile_ground(f.body, env, index))
    if isinstance(f, And):
        return _and([compile_ground(p, env, index) for p in f.parts])
    if isinstance(f, Or):
        return _or([compile_ground(p, env, index) for p in f.parts])
    if isinstance(f, Implies):
        return _or([_neg(compile_ground(f.left, env, index)), compile_ground(f.right, env, index)])
    if isinstance(f, Iff):
        a = compile_ground(f.left, env, index)
        b = compile_ground(f.right, env, index)
        return _or([_and([a, b]), _and([_neg(a), _neg(b)])])
    if isinstance(f, QUANTIFIERS):
        raise ValueError(f"quantifier inside a matrix: {pretty(f)}")
    raise TypeError(f"cannot compile {f!r}")


def _neg(f):
    if isinstance(f, bool):
        return not f
    if f[0] == "!":
        return f[1]
    return ("!", f)


def _and(parts):
    out = []
    for p in parts:
        if p is False:
            return False
        if p is True:
            continue
        if p[0] == "&":
            out.extend(p[1])
        else:
            out.append(p)
    if not out:
        return True
    return out[0] if len(out) == 1 else ("&", tuple(out))


def _or(parts):
    out = []
    for p in parts:
        if p is True:
            return True
        if p is False:
            continue
        if p[0] == "|":
            out.extend(p[1])
        else:
            out.append(p)
    if not out:
        return False
    return out[0] if len(out) == 1 else ("|", tuple(out))


def condition(f, var: int, value: bool):
    if isinstance(f, bool):
        return f
    tag = f[0]
    if tag == "v":
        return value if f[1] == var else f
    if tag == "!":
        return _neg(condition(f[1], var, value))
    parts = [condition(p, var, value) for p in f[1]]
    return _and(parts) if tag == "&" else _or(parts)


def variables(f, out: Optional[set] = None) -> set:
    if out is None:
        out = set()
    if isinstance(f, bool):
        return out
    if f[0] == "v":
        out.add(f[1])
    elif f[0] == "!":
        variables(f[1], out)
    else:
        for p in f[1]:
            variables(p, out)
    return out


def _pick(f) -> int:
    """Branch on a variable of the first clause-like part (usually forces units)."""
    while not isinstance(f, bool):
        if f[0] == "v":
            return f[1]
        f = f[1] if f[0] == "!" else min(f[1], key=_size)
    raise ValueError("constant formula has no variable")


def _size(f) -> int:
    if isinstance(f, bool):
        return 0
    if f[0] == "v":
        return 1
    if f[0] == "!":
        return _size(f[1])
    return sum(_size(p) for p in f[1])


def wmc(f, weights: Sequence[Tuple[object, object]], free: Sequence[int]):
    """Weighted model count of compiled ``f`` over the variables ``free``.

    ``weights[v]`` is ``(w, wbar)``. Variables not mentioned by ``f`` contribute
    ``w + wbar``. Every variable of ``f`` must be listed in ``free``.
    """
    memo: Dict[object, object] = {}

    def count(g):
        # weighted count over exactly variables(g)
        if g is True:
            return 1
        if g is False:
            return 0
        hit = memo.get(g)
        if hit is not None:
            return hit
        vs = variables(g)
        v = _pick(g)
        total = 0
        for value in (True, False):
            h = condition(g, v, value)
            part = count(h)
            if not part:
                continue
            for u in vs - variables(h) - {v}:
                part = part * (weights[u][0] + weights[u][1])
            w = weights[v][0] if value else weights[v][1]
            total = total + part * w
        memo[g] = total
        return total

    mentioned = variables(f)
    missing = mentioned - set(free)
    if missing:
        raise ValueError(f"formula mentions non-free variables {sorted(missing)}")
    result = count(f)
    for u in free:
        if u not in mentioned and result:
            result = result * (weights[u][0] + weights[u][1])
    return result


def wmc_ground(f: Formula, weights: Mapping[str, Tuple[object, object]],
               fixed: Optional[Mapping[GroundAtom, bool]] = None):
    """WMC of a ground formula (integer arguments) over the atoms it mentions.

    Atoms listed in ``fixed`` are conditioned on and carry weight one.
    """
    fixed = dict(fixed or {})
    ids: Dict[GroundAtom, int] = {}

    def index(key):
        if key in fixed:
            return fixed[key]
        return ids.setdefault(key, len(ids))

    compiled = compile_ground(f, {}, index)
    table = [None] * len(ids)
    for key, i in ids.items():
        table[i] = weights.get(key[0], (1, 1))
    return normalize_scalar(wmc(compiled, table, list(range(len(ids)))))


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    """Polarities for ``atoms`` (names of unary predicates and of binary
    predicates read reflexively)."""

    atoms: Tuple[Tuple[str, int], ...]
    values: Tuple[bool, ...]

    def __getitem__(self, pred: str) -> bool:
        for (name, _), v in zip(self.atoms, self.values):
            if name == pred:
                return v
        raise KeyError(pred)

    def literals(self, element: int) -> Dict[GroundAtom, bool]:
        out = {}
        for (name, arity), v in zip(self.atoms, self.values):
            out[(name, (element,) * arity)] = v
        return out

    def __str__(self) -> str:
        parts = []
        for (name, arity), v in zip(self.atoms, self.values):
            atom = f"{name}(x)" if arity == 1 else f"{name}(x,x)"
            parts.append(atom if v else "!" + atom)
        return " & ".join(parts) if parts else "true"


def cell_atoms(vocabulary: Mapping[str, int]) -> Tuple[Tuple[str, int], ...]:
    unary = sorted(p for p, a in vocabulary.items() if a == 1)
    binary = sorted(p for p, a in vocabulary.items() if a == 2)
    return tuple((p, 1) for p in unary) + tuple((p, 2) for p in binary)


def enumerate_valid_cells(matrix: Formula, vocabulary: Mapping[str, int],
                          linear: Optional[str] = None) -> List[Cell]:
    """All valid cells in lexicographic order (positive literal first)."""
    atoms = cell_atoms(vocabulary)
    if linear is not None and vocabulary.get(linear) != 2:
        raise ValueError(f"order predicate {linear} missing from the vocabulary")
    cells = []
    for values in itertools.product((True, False), repeat=len(atoms)):
        cell = Cell(atoms, values)
        if linear is not None and not cell[linear]:
            continue
        lits = cell.literals(0)
        compiled = compile_ground(matrix, {"x": 0, "y": 0}, lambda key: lits[key])
        if compiled is True:
            cells.append(cell)
    return cells


def compute_w(cell: Cell, weights: Mapping[str, Tuple[object, object]]):
    """Weight of one element in ``cell``: the product of its literal weights."""
    result = 1
    for (name, _), v in zip(cell.atoms, cell.values):
        w, wbar = weights.get(name, (1, 1))
        result = result * (w if v else wbar)
    return normalize_scalar(result) if not hasattr(result, "ring") else result


def pair_atoms(vocabulary: Mapping[str, int], a: int, b: int) -> List[GroundAtom]:
    out = []
    for p in sorted(q for q, ar in vocabulary.items() if ar == 2):
        out.append((p, (a, b)))
        out.append((p, (b, a)))
    return out


def compute_r(matrix: Formula, ci: Cell, cj: Cell, vocabulary: Mapping[str, int],
              weights: Mapping[str, Tuple[object, object]], linear: Optional[str] = None):
    """WMC of the atoms linking a new element A (cell ``ci``) and an old
    element B (cell ``cj``). With ``linear`` the order literals are fixed to
    ``B <= A`` and ``not A <= B``; otherwise the result is symmetric in i, j."""
    A, B = 0, 1
    fixed: Dict[GroundAtom, bool] = {}
    fixed.update(ci.literals(A))
    fixed.update(cj.literals(B))
    if linear is not None:
        fixed[(linear, (B, A))] = True
        fixed[(linear, (A, B))] = False
    free = [key for key in pair_atoms(vocabulary, A, B) if key not in fixed]
    ids = {key: i for i, key in enumerate(free)}

    def index(key):
        if key in fixed:
            return fixed[key]
        return ids[key]

    f = _and([compile_ground(matrix, {"x": A, "y": B}, index),
              compile_ground(matrix, {"x": B, "y": A}, index)])
    table = [weights.get(key[0], (1, 1)) for key in free]
    return wmc(f, table, list(range(len(free))))


@dataclass
class CellParams:
    cells: List[Cell]
    w: List[object]
    r: List[List[object]]
    ordered: bool

    @property
    def p(self) -> int:
        return len(self.cells)

    def dump(self) -> str:
        lines = [f"cells: {self.p}" + (" (ordered)" if self.ordered else "")]
        for k, c in enumerate(self.cells):
            lines.append(f"  C{k + 1}: {c}")
        lines.append("w:")
        for k, w in enumerate(self.w):
            lines.append(f"  w{k + 1} = {w}")
        lines.append("r:")
        for i, row in enumerate(self.r):
            lines.append("  " + "  ".join(f"r{i + 1}{j + 1}={v}" for j, v in enumerate(row)))
        return "\n".join(lines) + "\n"


def build_params(matrix: Formula, vocabulary: Mapping[str, int],
                 weights: Mapping[str, Tuple[object, object]],
                 linear: Optional[str] = None) -> CellParams:
    cells = enumerate_valid_cells(matrix, vocabulary, linear)
    w = [compute_w(c, weights) for c in cells]
    r: List[List[object]] = [[None] * len(cells) for _ in cells]
    for i, ci in enumerate(cells):
        for j, cj in enumerate(cells):
            if linear is None and j < i:
                r[i][j] = r[j][i]
                continue
            r[i][j] = _tidy(compute_r(matrix, ci, cj, vocabulary, weights, linear))
    return CellParams(cells, w, r, linear is not None)


def _tidy(v):
    if hasattr(v, "ring"):
        if v.is_constant():
            return normalize_scalar(v.constant_term())
        return v
    return normalize_scalar(v)


# ---------------------------------------------------------------------------
# Factoring the pair weight
# ---------------------------------------------------------------------------

@dataclass
class PairFactors:
    """``r_jl = prod_c tables[c][j][class_of[c][l]]`` for all cells ``j, l``.

    ``features[c]`` names the atoms of the old element that factor ``c``
    looks at; cells agreeing on them share a class.
    """

    features: List[Tuple[GroundAtom, ...]]
    class_of: List[List[int]]
    tables: List[List[List[object]]]


def _literal_atom(f):
    if isinstance(f, tuple) and f[0] == "v":
        return f[1], True
    if isinstance(f, tuple) and f[0] == "!" and f[1][0] == "v":
        return f[1][1], False
    return None


def factor_pairs(matrix: Formula, params: CellParams, vocabulary: Mapping[str, int],
                 weights: Mapping[str, Tuple[object, object]], linear: Optional[str] = None,
                 extra_features: Sequence[str] = ()) -> Optional[PairFactors]:
    """Split ``r`` into factors over independent groups of pair atoms.

    Pair atoms forced by the order literals alone are fixed first. The
    remaining ones are grouped by shared clauses; each group only depends on
    the new element's cell and on the old element's atoms it mentions.
    ``extra_features`` adds a trivial factor for unary predicates whose counts
    must stay readable from the state. Returns ``None`` if the check against
    ``params.r`` fails.
    """
    A, B = 0, 1
    fixed: Dict[GroundAtom, bool] = {}
    if linear is not None:
        fixed[(linear, (B, A))] = True
        fixed[(linear, (A, B))] = False
    ids: Dict[GroundAtom, int] = {}

    def index(key):
        if key in fixed:
            return fixed[key]
        return ids.setdefault(key, len(ids))

    whole = _and([compile_ground(matrix, {"x": A, "y": B}, index),
                  compile_ground(matrix, {"x": B, "y": A}, index)])
    atom_of = {i: key for key, i in ids.items()}
    pair = {i for i, (_, args) in atom_of.items() if len(set(args)) == 2}
    table = [weights.get(atom_of[i][0], (1, 1)) for i in range(len(ids))]

    if whole is False:
        return None
    parts = list(whole[1]) if isinstance(whole, tuple) and whole[0] == "&" else [whole]
    constant = 1
    changed = True
    while changed:
        changed = False
        for part in parts:
            lit = _literal_atom(part)
            if lit is not None and lit[0] in pair:
                v, value = lit
                constant = constant * (table[v][0] if value else table[v][1])
                parts = [condition(p, v, value) for p in parts]
                if any(p is False for p in parts):
                    return None
                parts = [p for p in parts if p is not True]
                pair.discard(v)
                changed = True
                break

    # union-find over pair atoms sharing a clause
    parent = {v: v for v in pair}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    groups: Dict[object, List[object]] = {}
    loose: List[object] = []
    for part in parts:
        vs = [v for v in variables(part) if v in pair]
        for v in vs[1:]:
            parent[find(v)] = find(vs[0])
    for part in parts:
        vs = [v for v in variables(part) if v in pair]
        if vs:
            groups.setdefault(find(vs[0]), []).append(part)
        else:
            loose.append(part)
    used_pairs = {v for part in parts for v in variables(part) if v in pair}
    for v in pair - used_pairs:
        constant = constant * (table[v][0] + table[v][1])

    def b_atoms(fs) -> Tuple[int, ...]:
        out = set()
        for f in fs:
            for v in variables(f):
                if v not in pair and atom_of[v][1][0] == B:
                    out.add(v)
        return tuple(sorted(out, key=lambda v: atom_of[v]))

    comps: Dict[Tuple[int, ...], List[Tuple[List[object], List[int]]]] = {}
    for root, fs in groups.items():
        members = sorted({v for f in fs for v in variables(f) if v in pair})
        comps.setdefault(b_atoms(fs), []).append((fs, members))
    for f in loose:
        feats = b_atoms([f])
        has_a = any(atom_of[v][1][0] == A for v in variables(f))
        if feats and has_a:
            comps.setdefault(feats, []).append(([f], []))
    wanted = []
    for p in extra_features:
        key = (p, (B,))
        if key in ids and not any(ids[key] in feats for feats in comps):
            wanted.append(ids[key])
    if wanted:
        comps.setdefault(tuple(sorted(wanted, key=lambda v: atom_of[v])), [])
    if not comps:
        comps[()] = []

    cells = params.cells
    features: List[Tuple[GroundAtom, ...]] = []
    class_of: List[List[int]] = []
    tables: List[List[List[object]]] = []
    for c, (feats, members) in enumerate(sorted(comps.items(), key=lambda t: [atom_of[v] for v in t[0]])):
        keys = [atom_of[v] for v in feats]
        proj = [tuple(cell.literals(B)[k] for k in keys) for cell in cells]
        classes = sorted(set(proj), reverse=True)
        cls = [classes.index(t) for t in proj]
        rows = []
        for ci in cells:
            lits_a = ci.literals(A)
            row = []
            for values in classes:
                val = 1
                for fs, pair_vars in members:
                    g = _and(fs)
                    for v in variables(g):
                        if v in pair:
                            continue
                        key = atom_of[v]
                        lit = lits_a.get(key) if key[1][0] == A else dict(zip(keys, values)).get(key)
                        if lit is None:
                            raise ValueError(f"unassigned atom {key} in a pair factor")
                        g = condition(g, v, lit)
                    val = val * wmc(g, table, pair_vars)
                row.append(val)
            rows.append(row)
        features.append(tuple(keys))
        class_of.append(cls)
        tables.append(rows)
    # fold the constant into the first factor
    tables[0] = [[v * constant for v in row] for row in tables[0]]
    tables = [[[_tidy(v) for v in row] for row in t] for t in tables]

    for j in range(len(cells)):
        for l in range(len(cells)):
            prod = 1
            for c in range(len(tables)):
                prod = prod * tables[c][j][class_of[c][l]]
            if _tidy(prod - params.r[j][l]) != 0:
                return None
    return PairFactors(features, class_of, tables)

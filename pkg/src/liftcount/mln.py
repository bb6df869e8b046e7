"""Friends-and-smokers MLNs and the smoker-count experiment.

Two models share the soft rule ``Sm(x) & E(x,y) -> Sm(y)`` and differ in the
graph. In the ring model every world contains a Hamiltonian cycle along the
linear order plus ``m`` extra undirected edges. In the random model the
``n + m`` undirected edges are arbitrary.

The experiment keeps the soft weight symbolic and tracks ``|E|`` up to the
largest ``m`` asked for, so one engine run per model covers the whole grid.
"""

from __future__ import annotations

import csv
import decimal
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from gmpy2 import mpq

from .algebra import Poly
from .engine import EngineStats, cardinality_coefficients
from .errors import InfeasibleError, ValidationError
from .logic import (Axioms, Bound, CardinalityConstraint, Formula, Symbol,
                    parse_formula)
from .transform import NormalizedProblem, mln_to_wfomc

RATIONAL_DIGITS = 20
DECIMAL_DIGITS = 12
SOFT_RULE = "Sm(x) & E(x,y) -> Sm(y)"

RING_HARD = (
    "forall x. !Perm(x,x)",
    "forall x. exists y. Perm(x,y)",
    "forall y. exists x. Perm(x,y)",
    "forall x. forall y. Pred(x,y) -> Perm(x,y)",
    "forall x. forall y. Pred(x,y) -> Leq(x,y)",
    "forall x. forall y. Perm(x,y) -> E(x,y)",
    "forall x. forall y. E(x,y) -> E(y,x)",
    "forall x. !E(x,x)",
)
RANDOM_HARD = (
    "forall x. forall y. E(x,y) -> E(y,x)",
    "forall x. !E(x,x)",
)


@dataclass
class MlnModel:
    """Soft rules carry the exact multiplicative weight of one satisfied grounding."""

    kind: str
    n: int
    m: int
    soft: List[Tuple[Union[mpq, Symbol], Formula]]
    hard: List[Formula]
    constraints: List[CardinalityConstraint]
    axioms: Axioms = field(default_factory=Axioms)
    predicates: Dict[str, int] = field(default_factory=dict)

    def to_wfomc(self) -> NormalizedProblem:
        return mln_to_wfomc(self.soft, self.hard, self.constraints, self.n, self.axioms,
                            predicates=self.predicates)


def max_extra_edges(n: int) -> int:
    return n * (n - 1) // 2 - n


def _edge_constraint(m: int) -> CardinalityConstraint:
    return CardinalityConstraint("E", "=", Bound(2, 2 * m))


def _check_m(n: int, m: int) -> None:
    cap = max_extra_edges(n)
    if m < 0 or m > cap:
        raise InfeasibleError(
            f"m = {m} is infeasible for n = {n}: the n + m undirected edges need 0 <= m <= {cap}")


def _weight(w) -> Union[mpq, Symbol]:
    return w if isinstance(w, Symbol) else mpq(w)


def build_ring_mln(n: int, m: int, w) -> MlnModel:
    """Hamiltonian cycle along the order, made undirected, plus ``m`` edges."""
    _check_m(n, m)
    hard = [parse_formula(t) for t in RING_HARD]
    constraints = [
        CardinalityConstraint("Perm", "=", Bound(1, 0)),
        CardinalityConstraint("Pred", "=", Bound(1, -1)),
        _edge_constraint(m),
    ]
    preds = {"Leq": 2, "Perm": 2, "Pred": 2, "E": 2, "Sm": 1}
    return MlnModel("ring", n, m, [(_weight(w), parse_formula(SOFT_RULE, canonical=False))], hard, constraints,
                    Axioms(linear="Leq"), preds)


def build_random_mln(n: int, m: int, w) -> MlnModel:
    """Any simple undirected graph with ``n + m`` edges."""
    _check_m(n, m)
    hard = [parse_formula(t) for t in RANDOM_HARD]
    return MlnModel("random", n, m, [(_weight(w), parse_formula(SOFT_RULE, canonical=False))], hard,
                    [_edge_constraint(m)], Axioms(), {"E": 2, "Sm": 1})


BUILDERS = {"ring": build_ring_mln, "random": build_random_mln}


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    label: str
    value: mpq
    exact: bool

    def metadata(self) -> Dict[str, object]:
        return {"label": self.label, "value": _fraction_text(self.value), "exact": self.exact,
                "significant_digits": None if self.exact else RATIONAL_DIGITS}


def _rationalize(d: decimal.Decimal) -> mpq:
    return mpq(Fraction(d))


def parse_weight_spec(text: str) -> WeightSpec:
    """``ln2``, ``e`` or an exact number such as ``3``, ``3/2``, ``0.25``.

    Irrational constants are rounded to twenty significant digits.
    """
    t = str(text).strip().replace(" ", "").lower()
    ctx = decimal.Context(prec=RATIONAL_DIGITS)
    if t in ("ln2", "log2", "ln(2)"):
        return WeightSpec("ln2", _rationalize(ctx.ln(decimal.Decimal(2))), False)
    if t == "e":
        return WeightSpec("e", _rationalize(ctx.exp(decimal.Decimal(1))), False)
    try:
        value = mpq(Fraction(t))
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"cannot read weight {text!r}") from None
    if value <= 0:
        raise ValidationError(f"soft weights must be positive, got {text!r}")
    return WeightSpec(t, value, True)


def _fraction_text(q: mpq) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def decimal_text(q: mpq, digits: int = DECIMAL_DIGITS) -> str:
    ctx = decimal.Context(prec=digits + 30, rounding=decimal.ROUND_HALF_EVEN)
    value = ctx.divide(decimal.Decimal(int(q.numerator)), decimal.Decimal(int(q.denominator)))
    return str(value.quantize(decimal.Decimal(1).scaleb(-digits), context=ctx))


# ---------------------------------------------------------------------------
# Experiment
# ---------------------------------------------------------------------------

WEIGHT_SYMBOL = Symbol("w_soft")
VIOLATION_SYMBOL = "v_soft"


def _count_violations(np_: NormalizedProblem, limit: int) -> None:
    """Move the soft weight onto violated groundings: ``(w, 1)`` becomes
    ``(1, 1/w)``. The missing factor ``w**groundings`` is common to every
    world, and the degree of ``1/w`` is the number of violations, which is
    small where the degree of ``w`` is not."""
    for pred, (w, wb) in list(np_.weights.items()):
        if w == WEIGHT_SYMBOL and wb == 1:
            np_.weights[pred] = (mpq(1), Symbol(VIOLATION_SYMBOL, limit))


def symbolic_distributions(kind: str, n: int, m_list: Sequence[int],
                           stats: Optional[EngineStats] = None) -> Dict[int, List[object]]:
    """Unnormalized ``|Sm| = k`` weights, one row per ``m``, from a single
    engine run. Entries are polynomials in ``v_soft``, the reciprocal of the
    soft weight; see :func:`normalize_row`."""
    if not m_list:
        return {}
    build = BUILDERS[kind]
    for m in m_list:
        build(n, m, 1)
    model = build(n, max(m_list), WEIGHT_SYMBOL)
    np_ = model.to_wfomc()
    # a grounding is violated only across an edge and only in one direction,
    # so a world with n + m undirected edges violates at most n + m of them
    _count_violations(np_, n + max(m_list))
    sets = []
    for m in m_list:
        sets.append([c if c.pred != "E" else _edge_constraint(m) for c in np_.constraints])
    rows = cardinality_coefficients(np_, "Sm", sets, stats=stats)
    return dict(zip(m_list, rows))


def _evaluate(v, w: mpq) -> mpq:
    if isinstance(v, Poly):
        return mpq(v.evaluate({VIOLATION_SYMBOL: 1 / w}))
    return mpq(v)


def normalize_row(row: Sequence[object], w: mpq) -> List[mpq]:
    """Probabilities of a row from :func:`symbolic_distributions` at soft weight ``w``."""
    values = [_evaluate(v, w) for v in row]
    z = sum(values, mpq(0))
    if z == 0:
        raise InfeasibleError("the model has no worlds")
    return [v / z for v in values]


@dataclass
class SmokersRow:
    model: str
    n: int
    m: int
    w: str
    k: int
    prob: mpq

    def record(self) -> Dict[str, object]:
        return {"model": self.model, "n": self.n, "m": self.m, "w": self.w, "k": self.k,
                "prob_numerator": str(self.prob.numerator),
                "prob_denominator": str(self.prob.denominator),
                "prob_decimal": decimal_text(self.prob)}


@dataclass
class SmokersTable:
    n: int
    rows: List[SmokersRow]
    weights: List[WeightSpec]
    seconds: Dict[str, float] = field(default_factory=dict)

    COLUMNS = ("model", "n", "m", "w", "k", "prob_numerator", "prob_denominator", "prob_decimal")

    def distribution(self, model: str, m: int, w: str) -> List[mpq]:
        out = [r.prob for r in self.rows if (r.model, r.m, r.w) == (model, m, w)]
        if not out:
            raise KeyError((model, m, w))
        return out

    def keys(self) -> List[Tuple[str, int, str]]:
        seen: List[Tuple[str, int, str]] = []
        for r in self.rows:
            key = (r.model, r.m, r.w)
            if key not in seen:
                seen.append(key)
        return seen

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow(r.record())
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"rows": [r.record() for r in self.rows],
               "weights": [s.metadata() for s in self.weights]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        lines = []
        for model, m, w in self.keys():
            probs = " ".join(decimal_text(p, 4) for p in self.distribution(model, m, w))
            lines.append(f"{model:6} n={self.n} m={m:<3} w={w:<6} {probs}")
        return "\n".join(lines)


def smokers_experiment(n: int, m_list: Sequence[int], w_list: Iterable,
                       models: Sequence[str] = ("ring", "random"),
                       stats: Optional[Dict[str, EngineStats]] = None) -> SmokersTable:
    """``Pr(|Sm| = k)`` for every model, ``m`` and soft weight."""
    import time

    specs = [w if isinstance(w, WeightSpec) else parse_weight_spec(w) for w in w_list]
    m_list = list(dict.fromkeys(m_list))
    for kind in models:
        if kind not in BUILDERS:
            raise ValidationError(f"unknown model {kind!r}")
        for m in m_list:
            BUILDERS[kind](n, m, 1)
    rows: List[SmokersRow] = []
    seconds: Dict[str, float] = {}
    for kind in models:
        st = EngineStats()
        start = time.perf_counter()
        family = symbolic_distributions(kind, n, m_list, st)
        seconds[kind] = time.perf_counter() - start
        if stats is not None:
            stats[kind] = st
        for m in m_list:
            for spec in specs:
                for k, p in enumerate(normalize_row(family[m], spec.value)):
                    rows.append(SmokersRow(kind, n, m, spec.label, k, p))
    return SmokersTable(n, rows, specs, seconds)


def binomial_row(n: int) -> List[mpq]:
    return [mpq(math.comb(n, k), 2 ** n) for k in range(n + 1)]

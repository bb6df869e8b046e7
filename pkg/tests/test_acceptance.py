"""Acceptance criteria, each checked at exact equality.

Run with ``pytest -v tests/test_acceptance.py``; the terminal summary lists
one PASS/FAIL line per criterion.
"""

import math
import random
import time

import pytest
from gmpy2 import mpq

from liftcount.algebra import PolyRing
from liftcount.errors import OracleLimitError
from liftcount.engine import EngineStats, distribution_by_cardinality, incremental_tables, wfomc
from liftcount.kernel import CellParams
from liftcount.logic import parse_problem
from liftcount.mln import binomial_row, parse_weight_spec, smokers_experiment
from liftcount.oracle import (brute_force_distribution, brute_force_wfomc, per_ordering_counts,
                              smokers_oracle)
from liftcount.transform import normalize

THREE_WAY = """predicate H/1; predicate T/1; predicate Leq/2
axiom linear(Leq)
forall x. !H(x) | !T(x)
forall x. forall y. H(y) & Leq(x,y) -> H(x)
forall x. forall y. T(x) & Leq(x,y) -> T(y)
"""

HEAD_TAIL = """predicate H/1; predicate Leq/2
axiom linear(Leq)
forall x. forall y. H(y) & Leq(x,y) -> H(x)
"""


def _problem(text, n):
    return parse_problem(text).with_n(n)


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    value = fn(*args, **kwargs)
    return value, time.perf_counter() - start


# -- 1 ----------------------------------------------------------------------

@pytest.mark.criterion(1, "three-way split: 10 per ordering, 60 in total, symbolic T_2 and T_3")
def test_three_way_split_counts():
    p = _problem(THREE_WAY, 3)
    total, seconds = _timed(wfomc, normalize(p))
    assert total == 60
    assert total / math.factorial(3) == 10
    assert set(per_ordering_counts(p).values()) == {10}
    assert brute_force_wfomc(p) == 60
    assert seconds < 1.0


@pytest.mark.criterion(1, "three-way split: 10 per ordering, 60 in total, symbolic T_2 and T_3")
def test_three_way_split_symbolic_tables():
    names = ["w1", "w2", "w3"] + [f"r{j}{l}" for j in range(1, 4) for l in range(1, 4)]
    ring = PolyRing(names)
    v = {name: ring.var(name) for name in names}
    w = [v["w1"], v["w2"], v["w3"]]
    r = [[v[f"r{j}{l}"] for l in range(1, 4)] for j in range(1, 4)]
    t1, t2, t3 = incremental_tables(CellParams([None] * 3, w, r, True), 3)

    w1, w2, w3 = w
    r12, r13, r21, r23, r31, r32 = (v[k] for k in ("r12", "r13", "r21", "r23", "r31", "r32"))
    assert t2[(1, 1, 0)] == w1 * w2 * (r12 + r21)
    assert t3[(1, 1, 1)] == w1 * w2 * w3 * (r12 * r13 * (r23 + r32) + r21 * r23 * (r13 + r31)
                                            + r31 * r32 * (r12 + r21))
    assert t3[(2, 1, 0)] == w1 ** 2 * w2 * v["r11"] * (r12 * (r12 + r21) + r21 ** 2)

    # unit weights and the split's pair weights give 10
    unit = {name: 1 for name in names}
    unit.update({"r12": 0, "r13": 0, "r32": 0})
    assert sum(value.evaluate(unit) for value in t3.values()) == 10


# -- 2 ----------------------------------------------------------------------

@pytest.mark.criterion(2, "head/tail split: (n+1)*n! for n = 1..12")
@pytest.mark.parametrize("n", range(1, 13))
def test_head_tail(n):
    p = _problem(HEAD_TAIL, n)
    value, seconds = _timed(wfomc, normalize(p))
    assert value == (n + 1) * math.factorial(n)
    assert seconds < 1.0
    if n <= 3:
        assert brute_force_wfomc(p) == value


# -- 3 ----------------------------------------------------------------------

PRED = """predicate Leq/2; predicate Pred/2
axiom linear(Leq); axiom pred(Pred)
"""


@pytest.mark.criterion(3, "predecessor theory has n! models, n = 2..8")
@pytest.mark.parametrize("n", range(2, 9))
def test_predecessor(n):
    value, seconds = _timed(wfomc, normalize(_problem(PRED, n)))
    assert value == math.factorial(n)
    assert seconds < 10.0


# -- 4 ----------------------------------------------------------------------

PRED2 = """predicate Leq/2; predicate Pred2/2
axiom linear(Leq); axiom pred2(Pred2)
"""


@pytest.mark.criterion(4, "predecessor-of-predecessor: 2*n! raw, n! corrected, 32 cells, n = 4..7")
@pytest.mark.parametrize("n", range(4, 8))
def test_predecessor_of_predecessor(n):
    np_ = normalize(_problem(PRED2, n))
    assert np_.correction == mpq(1, 2)
    stats = EngineStats()
    value, seconds = _timed(wfomc, np_, stats=stats)
    assert stats.cells == 32
    assert value == math.factorial(n)
    assert value / np_.correction == 2 * math.factorial(n)
    # same desktop budget as the smokers run
    assert seconds <= 15 * 60


# -- 5 ----------------------------------------------------------------------

def _random_matrix(rng):
    unary = ["U1", "U2"][:rng.randint(1, 2)]
    binary = ["B1", "B2"][:rng.randint(1, 2)]
    lits = [f"{u}({v})" for u in unary for v in "xy"]
    lits += [f"{b}({a},{c})" for b in binary for a, c in ("xy", "yx", "xx", "yy")]
    lits += ["x = y"]
    clauses = []
    for _ in range(rng.randint(1, 3)):
        picked = rng.sample(lits, rng.randint(1, 3))
        clauses.append("(" + " | ".join(("!" if rng.random() < 0.5 else "") + a
                                         for a in picked) + ")")
    decl = "; ".join([f"predicate {u}/1" for u in unary] + [f"predicate {b}/2" for b in binary])
    weights = []
    for pred in unary + binary:
        w = mpq(rng.randint(1, 5), rng.randint(1, 4))
        wb = mpq(rng.randint(-3, 4), rng.randint(1, 3))
        weights.append(f"weight {pred} = {w}, {wb}")
    return "\n".join([decl, "forall x. forall y. " + " & ".join(clauses)] + weights)


@pytest.mark.criterion(5, "incremental = closed form on random matrices")
def test_incremental_matches_closed_form():
    rng = random.Random(20240)
    checked = 0
    for trial in range(24):
        text = _random_matrix(rng)
        n = rng.randint(1, 8 if trial % 2 else 5)
        np_ = normalize(_problem(text, n))
        incremental = wfomc(np_, method="incremental")
        exact = wfomc(np_, method="incremental", backend="python")
        closed = wfomc(np_, method="closed-form")
        assert incremental == exact == closed, text
        checked += 1
    assert checked >= 20


# -- 6 ----------------------------------------------------------------------

ORACLE_SUITE = [
    # no axiom
    ("predicate P/1; predicate R/2\nforall x. forall y. P(x) & R(x,y) -> P(y)", 3),
    ("predicate F/2; predicate S/1\nforall x. forall y. F(x,y) -> F(y,x)\n"
     "forall x. forall y. S(x) & F(x,y) -> S(y)\nweight S = 2, 1", 3),
    # existential quantifiers: Skolem predicates with weight -1
    ("predicate R/2\nforall x. exists y. R(x,y)", 3),
    ("predicate R/2; predicate P/1\nforall x. exists y. R(x,y) & P(y)\nweight R = 1/2, 3", 3),
    ("predicate R/2\nforall x. exists[=1] y. R(x,y)", 3),
    # explicit negative weights
    ("predicate P/1; predicate R/2\nforall x. forall y. R(x,y) -> P(x)\nweight P = -2, 3\n"
     "weight R = 1, -1/2", 3),
    # linear order only
    (HEAD_TAIL, 3),
    (THREE_WAY, 3),
    ("predicate Leq/2; predicate R/2\naxiom linear(Leq)\nforall x. forall y. R(x,y) -> Leq(x,y)", 3),
    # linear order with predecessor
    (PRED, 3),
    ("predicate Leq/2; predicate Pred/2; predicate P/1\naxiom linear(Leq); axiom pred(Pred)\n"
     "forall x. forall y. Pred(x,y) & P(x) -> P(y)", 3),
    # cardinality constraints
    ("predicate R/2\nforall x. forall y. R(x,y) -> R(y,x)\nconstraint |R| = 2", 3),
    ("predicate P/1; predicate R/2\nforall x. forall y. R(x,y) -> P(x)\nconstraint |P| <= 1\n"
     "constraint |R| >= 2", 3),
]


@pytest.mark.criterion(6, "engine = brute-force oracle on a fixed suite")
@pytest.mark.parametrize("text,n", ORACLE_SUITE)
def test_oracle_suite(text, n):
    p = _problem(text, n)
    np_ = normalize(p)
    value = wfomc(np_)
    assert value == brute_force_wfomc(p)
    try:
        # the normalized theory, Skolem predicates and all, counts the same
        assert value == brute_force_wfomc(np_) * np_.correction
    except OracleLimitError:
        pass


@pytest.mark.criterion(6, "engine = brute-force oracle on a fixed suite")
@pytest.mark.parametrize("text,n,query", [
    ("predicate F/2; predicate S/1\nforall x. forall y. F(x,y) -> F(y,x)\n"
     "forall x. forall y. S(x) & F(x,y) -> S(y)\nweight S = 2, 1", 3, "S"),
    ("predicate R/2; predicate P/1\nforall x. exists y. R(x,y)\n"
     "forall x. forall y. R(x,y) -> P(y)", 3, "R"),
    ("predicate Leq/2; predicate H/1\naxiom linear(Leq)\n"
     "forall x. forall y. H(y) & Leq(x,y) -> H(x)\nweight H = 3, 1", 3, "H"),
])
def test_oracle_distribution(text, n, query):
    p = _problem(text, n)
    assert distribution_by_cardinality(normalize(p), query) == brute_force_distribution(p, query)


@pytest.mark.criterion(6, "engine = brute-force oracle on a fixed suite")
def test_oracle_suite_size():
    assert len(ORACLE_SUITE) + 3 >= 10


# -- 7 ----------------------------------------------------------------------

SMOKER_WEIGHTS = ["ln2", "2", "e", "3"]
SMOKER_M = [5, 8, 10]


@pytest.fixture(scope="module")
def smokers_table():
    start = time.perf_counter()
    table = smokers_experiment(10, SMOKER_M, SMOKER_WEIGHTS + ["1"])
    return table, time.perf_counter() - start


@pytest.mark.criterion(7, "smokers at n = 10: exact properties and oracle equality at n = 5")
def test_smokers_distributions_sum_to_one(smokers_table):
    table, _ = smokers_table
    for model, m, w in table.keys():
        assert sum(table.distribution(model, m, w)) == 1


@pytest.mark.criterion(7, "smokers at n = 10: exact properties and oracle equality at n = 5")
def test_smokers_symmetry(smokers_table):
    table, _ = smokers_table
    for key in table.keys():
        dist = table.distribution(*key)
        assert len(dist) == 11
        assert all(dist[k] == dist[10 - k] for k in range(11))


@pytest.mark.criterion(7, "smokers at n = 10: exact properties and oracle equality at n = 5")
def test_smokers_unit_weight_is_binomial(smokers_table):
    table, _ = smokers_table
    for model in ("ring", "random"):
        for m in SMOKER_M:
            assert table.distribution(model, m, "1") == binomial_row(10)


@pytest.mark.criterion(7, "smokers at n = 10: exact properties and oracle equality at n = 5")
def test_smokers_ring_prefers_extremes(smokers_table):
    table, _ = smokers_table
    for m in SMOKER_M:
        ring = table.distribution("ring", m, "3")
        rand = table.distribution("random", m, "3")
        assert ring[0] + ring[10] > rand[0] + rand[10]


@pytest.mark.criterion(7, "smokers at n = 10: exact properties and oracle equality at n = 5")
def test_smokers_runtime(smokers_table):
    _, seconds = smokers_table
    assert seconds <= 15 * 60


@pytest.mark.criterion(7, "smokers at n = 10: exact properties and oracle equality at n = 5")
def test_smokers_match_oracle_at_five():
    table = smokers_experiment(5, [2], SMOKER_WEIGHTS)
    for model in ("ring", "random"):
        for w in SMOKER_WEIGHTS:
            expected = smokers_oracle(5, 2, parse_weight_spec(w).value, model)
            assert table.distribution(model, 2, w) == expected


# -- 8 ----------------------------------------------------------------------

@pytest.mark.criterion(8, "head/tail at n = 40 under 5 s with polynomially bounded tables")
def test_head_tail_complexity():
    n = 40
    stats = EngineStats()
    value, seconds = _timed(wfomc, normalize(_problem(HEAD_TAIL, n)), stats=stats)
    assert value == (n + 1) * math.factorial(n)
    assert seconds < 5.0
    p = stats.cells
    assert len(stats.level_sizes) == n
    for i, size in enumerate(stats.level_sizes, start=1):
        assert size <= math.comb(i + p - 1, p - 1)


@pytest.mark.criterion(8, "head/tail at n = 40 under 5 s with polynomially bounded tables")
def test_head_tail_tables_exact_backend():
    n = 40
    stats = EngineStats()
    value = wfomc(normalize(_problem(HEAD_TAIL, n)), backend="python", stats=stats)
    assert value == (n + 1) * math.factorial(n)
    for i, size in enumerate(stats.level_sizes, start=1):
        assert size <= math.comb(i + stats.cells - 1, stats.cells - 1)


import math

import pytest
from gmpy2 import mpq

from liftcount.errors import InfeasibleError, OracleLimitError, ValidationError
from liftcount.logic import parse_problem
from liftcount.mln import binomial_row
from liftcount.oracle import (brute_force_distribution, brute_force_wfomc, per_ordering_counts,
                              random_graphs, ring_graphs, smokers_oracle)


def _p(text, n):
    return parse_problem(text).with_n(n)


def test_empty_theory_counts_the_herbrand_base():
    assert brute_force_wfomc(_p("predicate P/1", 2)) == 4
    assert brute_force_wfomc(_p("predicate P/1; predicate R/2", 2)) == 2 ** 6


def test_weights_multiply_per_atom():
    assert brute_force_wfomc(_p("predicate P/1\nweight P = 3, 2", 3)) == 5 ** 3
    assert brute_force_wfomc(_p("predicate P/1\nweight P = -1, 1", 3)) == 0


def test_linear_order_alone_has_n_factorial_models():
    for n in range(1, 5):
        assert brute_force_wfomc(_p("predicate Leq/2\naxiom linear(Leq)", n)) == math.factorial(n)


def test_successor_is_unique_per_order():
    text = "predicate Leq/2; predicate Pred/2\naxiom linear(Leq); axiom pred(Pred)"
    assert brute_force_wfomc(_p(text, 4)) == 24
    counts = per_ordering_counts(_p(text, 3))
    assert len(counts) == 6 and set(counts.values()) == {1}


def test_existential_and_counting_quantifiers():
    # every element has at least one out-neighbour: (2^n - 1)^n
    assert brute_force_wfomc(_p("predicate R/2\nforall x. exists y. R(x,y)", 3)) == 7 ** 3
    # exactly one out-neighbour: n^n functions
    assert brute_force_wfomc(_p("predicate R/2\nforall x. exists[=1] y. R(x,y)", 3)) == 27


def test_cardinality_constraints():
    assert brute_force_wfomc(_p("predicate P/1\nconstraint |P| = 2", 4)) == 6
    assert brute_force_wfomc(_p("predicate P/1\nconstraint |P| <= 1", 4)) == 5
    assert brute_force_wfomc(_p("predicate P/1\nconstraint |P| >= 3\nconstraint |P| <= 3", 4)) == 4


def test_distribution():
    dist = brute_force_distribution(_p("predicate P/1", 4), "P")
    assert dist == binomial_row(4)
    with pytest.raises(ValidationError):
        brute_force_distribution(_p("predicate P/1", 2), "Q")


def test_atom_cap():
    with pytest.raises(OracleLimitError):
        brute_force_wfomc(_p("predicate R/2", 6))
    with pytest.raises(ValidationError):
        per_ordering_counts(_p("predicate P/1", 2))


def test_graph_families():
    assert len(ring_graphs(5, 0)) == 1
    assert len(ring_graphs(5, 2)) == math.comb(5, 2)
    assert all(len(g) == 7 for g in ring_graphs(5, 2))
    assert len(random_graphs(4, 0)) == math.comb(6, 4)
    with pytest.raises(InfeasibleError):
        ring_graphs(5, 6)
    with pytest.raises(InfeasibleError):
        random_graphs(4, 3)


@pytest.mark.parametrize("kind", ["ring", "random"])
def test_smokers_oracle_shape(kind):
    assert smokers_oracle(4, 1, 1, kind) == binomial_row(4)
    dist = smokers_oracle(5, 1, mpq(3), kind)
    assert sum(dist) == 1 and dist == dist[::-1]
    with pytest.raises(ValidationError):
        smokers_oracle(4, 1, 1, "grid")

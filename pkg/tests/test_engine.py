import math

import pytest
from gmpy2 import mpq

from liftcount.engine import (EngineStats, cardinality_coefficients, cell_symmetry,
                              closed_form_wfomc, distribution_by_cardinality, incremental_wfomc,
                              wfomc)
from liftcount.errors import UnsatisfiableError, ValidationError
from liftcount.kernel import build_params
from liftcount.logic import CardinalityConstraint, Bound, parse_problem
from liftcount.oracle import brute_force_distribution, brute_force_wfomc
from liftcount.transform import normalize

SYMMETRIC = """predicate F/2; predicate S/1
forall x. forall y. F(x,y) -> F(y,x)
forall x. forall y. S(x) & F(x,y) -> S(y)
weight S = 2, 1
"""

ORDERED = """predicate Leq/2; predicate E/2; predicate U/1
axiom linear(Leq)
forall x. forall y. E(x,y) -> E(y,x)
forall x. forall y. E(x,y) & Leq(x,y) -> U(x) | U(y)
weight E = 3, 1
"""


def _np(text, n):
    return normalize(parse_problem(text).with_n(n))


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_unordered_methods_agree_with_oracle(n):
    np_ = _np(SYMMETRIC, n)
    expected = brute_force_wfomc(np_) * np_.correction if n else 1
    assert wfomc(np_, method="closed-form") == expected
    assert wfomc(np_, method="incremental", backend="python") == expected
    assert wfomc(np_, method="incremental", backend="compiled") == expected


def test_closed_form_and_incremental_on_parameters():
    np_ = _np(SYMMETRIC, 4)
    params = build_params(np_.matrix, np_.vocabulary, np_.weights)
    stats = EngineStats()
    assert incremental_wfomc(params, 4, stats) == closed_form_wfomc(params, 4)
    assert stats.peak_table >= 1


@pytest.mark.parametrize("n", [2, 3])
def test_linear_problem_matches_oracle(n):
    np_ = _np(ORDERED, n)
    assert wfomc(np_) == brute_force_wfomc(np_) * np_.correction


@pytest.mark.parametrize("constraint", ["|E| = 4", "|E| <= 2", "|E| >= 6", "|U| = 2"])
def test_compiled_targeting_matches_python(constraint):
    np_ = _np(ORDERED + f"constraint {constraint}\n", 6)
    compiled = wfomc(np_, backend="compiled")
    assert compiled == wfomc(np_, backend="python")
    if constraint == "|U| = 2":
        small = _np(ORDERED + f"constraint {constraint}\n", 3)
        assert wfomc(small, backend="compiled") == brute_force_wfomc(small) * small.correction


def test_closed_form_rejects_linear_problems():
    with pytest.raises(ValidationError):
        wfomc(_np(ORDERED, 3), method="closed-form")
    with pytest.raises(ValidationError):
        wfomc(_np(ORDERED, 3), backend="gpu")


def test_missing_domain_size():
    with pytest.raises(ValidationError):
        wfomc(normalize(parse_problem(SYMMETRIC)))


def test_distribution_matches_oracle():
    np_ = _np(SYMMETRIC, 3)
    assert distribution_by_cardinality(np_, "S") == brute_force_distribution(np_, "S")
    np_ = _np(ORDERED, 3)
    assert distribution_by_cardinality(np_, "U") == brute_force_distribution(np_, "U")


def test_one_run_serves_several_constraint_sets():
    np_ = _np(ORDERED + "constraint |E| <= 4\n", 4)
    sets = [[CardinalityConstraint("E", "=", Bound(0, k))] for k in range(5)]
    rows = cardinality_coefficients(np_, "U", sets)
    for k, row in zip(range(5), rows):
        single = _np(ORDERED + f"constraint |E| = {k}\n", 4)
        assert sum(row) == wfomc(single)
    with pytest.raises(ValidationError):
        cardinality_coefficients(np_, "U", [[CardinalityConstraint("E", "=", Bound(0, 6))]])
    with pytest.raises(ValidationError):
        cardinality_coefficients(np_, "E")


def test_unsatisfiable_distribution():
    np_ = _np("predicate P/1; predicate Q/1\nforall x. P(x) & !P(x) | Q(x) & !Q(x)", 2)
    assert wfomc(np_) == 0
    with pytest.raises(UnsatisfiableError):
        distribution_by_cardinality(np_, "P")


def test_cell_symmetry_detection():
    free = _np("predicate U/1; predicate R/2\nforall x. forall y. R(x,y) -> R(y,x)", 3)
    params = build_params(free.matrix, free.vocabulary, free.weights)
    sigma = cell_symmetry(params)
    assert sigma is not None and sorted(sigma) == list(range(params.p))
    assert all(sigma[sigma[j]] == j for j in range(params.p))
    skewed = _np("predicate U/1\nweight U = 2, 1\nforall x. U(x) | !U(x)", 3)
    params = build_params(skewed.matrix, skewed.vocabulary, skewed.weights)
    assert cell_symmetry(params) is None


def test_linear_problem_without_extra_atoms_counts_orderings():
    np_ = _np("predicate Leq/2\naxiom linear(Leq)", 7)
    assert wfomc(np_) == math.factorial(7)


def test_symbolic_weights_stay_symbolic():
    np_ = _np("predicate P/1\nweight P = symbolic, 1\nforall x. P(x) | !P(x)", 3)
    value = wfomc(np_)
    assert value.evaluate({"w_P": mpq(2)}) == 27

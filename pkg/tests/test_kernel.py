import itertools

from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from liftcount.kernel import build_params, cell_atoms, compile_ground, enumerate_valid_cells, wmc
from liftcount.logic import parse_formula, parse_problem
from liftcount.transform import normalize

LITS = ["P(x)", "P(y)", "R(x,y)", "R(y,x)", "R(x,x)", "R(y,y)", "x = y"]


def clauses():
    clause = st.lists(st.tuples(st.booleans(), st.sampled_from(LITS)), min_size=1, max_size=3)
    return st.lists(clause, min_size=1, max_size=3).map(
        lambda cs: " & ".join("(" + " | ".join(("!" if neg else "") + a for neg, a in c) + ")"
                              for c in cs))


ATOMS = [("P", (0,)), ("P", (1,)), ("R", (0, 1)), ("R", (1, 0)), ("R", (0, 0)), ("R", (1, 1))]


def _brute_wmc(f, env, weights):
    total = 0
    for values in itertools.product((True, False), repeat=len(ATOMS)):
        world = dict(zip(ATOMS, values))
        if compile_ground(f, env, lambda key: world[key]) is True:
            term = 1
            for a, v in world.items():
                w, wb = weights[a[0]]
                term *= w if v else wb
            total += term
    return total


@settings(max_examples=80, deadline=None)
@given(clauses(), st.integers(-2, 3), st.integers(-2, 3))
def test_compiled_wmc_matches_enumeration(body, wp, wr):
    f = parse_formula(f"forall x. forall y. {body}").body.body
    weights = {"P": (mpq(wp), mpq(1)), "R": (mpq(1), mpq(wr))}
    env = {"x": 0, "y": 1}
    ids = {a: i for i, a in enumerate(ATOMS)}
    compiled = compile_ground(f, env, lambda key: ids[key])
    table = [weights[a[0]] for a in ATOMS]
    assert wmc(compiled, table, list(range(len(ATOMS)))) == _brute_wmc(f, env, weights)


def test_wmc_counts_unmentioned_free_variables():
    weights = [(2, 1), (3, 1)]
    assert wmc(True, weights, [0, 1]) == 12
    assert wmc(False, weights, [0, 1]) == 0


def test_cells_respect_the_matrix():
    vocab = {"P": 1, "R": 2}
    f = parse_formula("forall x. forall y. R(x,y) -> P(x)").body.body
    cells = enumerate_valid_cells(f, vocab)
    assert cell_atoms(vocab) == (("P", 1), ("R", 2))
    assert [c.values for c in cells] == [(True, True), (True, False), (False, False)]


def test_linear_cells_hold_the_order_reflexively():
    np_ = normalize(parse_problem("predicate Leq/2; predicate H/1\naxiom linear(Leq)\n"
                                  "forall x. forall y. H(y) & Leq(x,y) -> H(x)"))
    params = build_params(np_.matrix, np_.vocabulary, np_.weights, np_.linear)
    assert params.ordered and params.p == 2
    assert all(c["Leq"] for c in params.cells)
    # new element A above B: A in H forces B in H
    h, not_h = (0, 1) if params.cells[0]["H"] else (1, 0)
    assert params.r[h][not_h] == 0 and params.r[h][h] == 1 and params.r[not_h][h] == 1


def test_unordered_pair_weights_are_symmetric():
    np_ = normalize(parse_problem("predicate P/1; predicate R/2\nweight R = 2, 1\n"
                                  "forall x. forall y. R(x,y) -> P(x)"))
    params = build_params(np_.matrix, np_.vocabulary, np_.weights)
    for i in range(params.p):
        for j in range(params.p):
            assert params.r[i][j] == params.r[j][i]
    assert "cells: " in params.dump()

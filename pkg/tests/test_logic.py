import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftcount.errors import ParseError, ValidationError
from liftcount.logic import (And, Atom, Bound, CardinalityConstraint, Forall, Not, Symbol,
                             check_two_variable, free_vars, parse_formula, parse_problem, pretty,
                             swap_xy)

ATOMS = ["P(x)", "P(y)", "Q(x)", "R(x,y)", "R(y,x)", "R(x,x)", "x = y"]


def formulas(depth=3):
    leaf = st.sampled_from(ATOMS)
    return st.recursive(
        leaf,
        lambda sub: st.one_of(
            sub.map(lambda a: f"!({a})"),
            st.tuples(sub, st.sampled_from(["&", "|", "->", "<->"]), sub)
            .map(lambda t: f"({t[0]}) {t[1]} ({t[2]})"),
        ),
        max_leaves=8,
    )


@settings(max_examples=200, deadline=None)
@given(formulas(), st.sampled_from(["forall x. forall y.", "forall x. exists y.",
                                    "exists x. forall y.", "forall y. exists x."]))
def test_pretty_round_trip(body, prefix):
    f = parse_formula(f"{prefix} {body}")
    assert parse_formula(pretty(f)) == f
    assert not free_vars(f)


@settings(max_examples=100, deadline=None)
@given(formulas())
def test_swap_is_an_involution(body):
    f = parse_formula(body, canonical=False)
    assert swap_xy(swap_xy(f)) == f


def test_precedence():
    f = parse_formula("P(x) | Q(x) & R(x,x)", canonical=False)
    assert pretty(f) == "P(x) | (Q(x) & R(x,x))"
    g = parse_formula("!P(x) & Q(x)", canonical=False)
    assert isinstance(g, And) and isinstance(g.parts[0], Not)


def test_counting_quantifier_parses():
    f = parse_formula("forall x. exists[=1] y. R(x,y)")
    assert isinstance(f, Forall)
    assert "exists[=1] y" in pretty(f)


def test_free_variable_rejected_in_sentences():
    with pytest.raises(ValidationError, match="free variable"):
        parse_formula("R(x,y)")
    assert parse_formula("R(x,y)", canonical=False) == Atom("R", ("x", "y"))


def test_parse_error_position():
    with pytest.raises(ParseError) as err:
        parse_problem("predicate R/2\nforall x. R(x")
    assert err.value.line == 2
    assert err.value.column is not None


def test_third_variable_rejected():
    with pytest.raises(ParseError, match="third variable"):
        parse_problem("predicate R/2\nforall x. forall y. forall z. R(x,y) & R(y,z) -> R(x,z)")


def test_unused_variable_is_renamed_away():
    p = parse_problem("predicate R/2\nforall x. forall y. forall z. R(x,z)")
    assert check_two_variable(p.sentences[0])


@pytest.mark.parametrize("text,match", [
    ("predicate P/1\nforall x. P(x,x)", "arity"),
    ("predicate P/1\nweight Q = 1, 1", "unknown predicate"),
    ("predicate P/1\nconstraint |Q| = 1", "unknown predicate"),
    ("predicate P/2\naxiom pred(P)", "linear"),
])
def test_validation_errors(text, match):
    with pytest.raises(ValidationError, match=match):
        parse_problem(text)


def test_domain_size_must_be_integer():
    with pytest.raises(ParseError, match="domain size"):
        parse_problem("predicate P/1\nn = x")


def test_problem_file_features():
    p = parse_problem("""# comment
predicate Leq/2; predicate Pred/2; predicate E/2; predicate S/1
axiom linear(Leq); axiom pred(Pred)
param m = 3
constraint |E| = 2n+2m
weight S = 3/2, 1
weight E = symbolic, 1
sentence forall x. forall y. E(x,y) -> E(y,x)
n = 5
""")
    assert p.n == 5
    assert p.axioms.linear == "Leq" and p.axioms.pred == "Pred"
    (c,) = p.constraints
    assert c.pred == "E" and c.bound.value(5) == 16
    assert p.weight("S")[0] == 1.5
    assert isinstance(p.weight("E")[0], Symbol)
    assert parse_problem(p.to_text()).to_text() == p.to_text()


def test_cardinality_constraint_admits():
    c = CardinalityConstraint("P", "<=", Bound(1, -1))
    assert c.admits(3, 4) and not c.admits(4, 4)
    assert CardinalityConstraint("P", "=", Bound(0, 2)).admits(2, 9)
    assert CardinalityConstraint("P", ">=", Bound(2, 0)).admits(8, 4)

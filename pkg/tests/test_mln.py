import csv
import io
import json

import pytest
from gmpy2 import mpq

from liftcount.errors import InfeasibleError, ValidationError
from liftcount.mln import (binomial_row, build_random_mln, build_ring_mln, decimal_text,
                           max_extra_edges, normalize_row, parse_weight_spec, smokers_experiment,
                           symbolic_distributions)
from liftcount.oracle import smokers_oracle


def test_weight_specs():
    assert parse_weight_spec("3").value == 3 and parse_weight_spec("3").exact
    assert parse_weight_spec("3/2").value == mpq(3, 2)
    assert parse_weight_spec("0.25").value == mpq(1, 4)
    ln2 = parse_weight_spec("ln2")
    assert not ln2.exact and abs(float(ln2.value) - 0.6931471805599453) < 1e-15
    e = parse_weight_spec("e")
    assert abs(float(e.value) - 2.718281828459045) < 1e-15
    assert e.metadata()["significant_digits"] == 20
    for bad in ("abc", "0", "-2", "1/0"):
        with pytest.raises(ValidationError):
            parse_weight_spec(bad)


def test_decimal_text_rounds_half_even():
    assert decimal_text(mpq(1, 3), 4) == "0.3333"
    assert decimal_text(mpq(1, 8), 2) == "0.12"
    assert decimal_text(mpq(5), 1) == "5.0"


def test_edge_budget():
    assert max_extra_edges(10) == 35
    with pytest.raises(InfeasibleError):
        build_ring_mln(4, 3, 1)
    with pytest.raises(InfeasibleError):
        build_random_mln(5, -1, 1)
    assert build_ring_mln(5, 5, 2).m == 5


@pytest.mark.parametrize("kind", ["ring", "random"])
def test_symbolic_rows_match_the_oracle(kind):
    rows = symbolic_distributions(kind, 5, [0, 2])
    for m in (0, 2):
        for w in (mpq(1), mpq(2), mpq(7, 3)):
            assert normalize_row(rows[m], w) == smokers_oracle(5, m, w, kind)


def test_unit_weight_gives_binomial_rows():
    table = smokers_experiment(4, [1], ["1"])
    for key in table.keys():
        assert table.distribution(*key) == binomial_row(4)


def test_table_outputs():
    table = smokers_experiment(4, [0, 1], ["2", "ln2"], models=["random"])
    assert table.keys() == [("random", m, w) for m in (0, 1) for w in ("2", "ln2")]
    rows = list(csv.DictReader(io.StringIO(table.to_csv())))
    assert len(rows) == 4 * 5
    assert list(rows[0]) == list(table.COLUMNS)
    for r in rows:
        q = mpq(int(r["prob_numerator"]), int(r["prob_denominator"]))
        assert decimal_text(q) == r["prob_decimal"]
    doc = json.loads(table.to_json())
    assert {w["label"] for w in doc["weights"]} == {"2", "ln2"}
    assert table.to_json() == smokers_experiment(4, [0, 1], ["2", "ln2"], models=["random"]).to_json()
    assert "random n=4" in table.summary()


def test_unknown_model():
    with pytest.raises(ValidationError):
        smokers_experiment(4, [1], ["2"], models=["grid"])

import random

import pytest
from gmpy2 import is_prime, mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from liftcount.algebra import PolyRing
from liftcount.engine import incremental_tables
from liftcount.kernel import CellParams
from liftcount.modular import crt_pair, incremental_grouped, plain_factorization, primes


def _reference(w, r, n, masks):
    *_, last = incremental_tables(CellParams([None] * len(w), w, r, True), n)
    out = {}
    for k, v in last.items():
        key = tuple(sum(a * b for a, b in zip(k, m)) for m in masks)
        out[key] = out.get(key, 0) + v
    return {k: v for k, v in out.items() if v}


def _nonzero(d):
    return {k: v for k, v in d.items() if v}


def _scalar(rng):
    return mpq(rng.randint(-4, 6), rng.randint(1, 3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(1, 4), st.integers(1, 6))
def test_grouped_scalars_match_exact_tables(seed, p, n):
    rng = random.Random(seed)
    w = [_scalar(rng) for _ in range(p)]
    r = [[_scalar(rng) if rng.random() < 0.8 else 0 for _ in range(p)] for _ in range(p)]
    masks = [[rng.randint(0, 1) for _ in range(p)]]
    got = incremental_grouped(w, plain_factorization(r), None, n, masks)
    assert _nonzero(got) == _reference(w, r, n, masks)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(1, 5))
def test_grouped_polynomials_match_exact_tables(seed, n):
    rng = random.Random(seed)
    ring = PolyRing(["a", "b"], limits=[n, 3], caps=[4 * n * n + 8, 4 * n * n + 8])
    a, b = ring.var("a"), ring.var("b")
    p = 3
    w = [_scalar(rng) * a ** rng.randint(0, 1) + rng.randint(0, 2) for _ in range(p)]
    r = [[rng.randint(-2, 2) + rng.randint(0, 2) * b for _ in range(p)] for _ in range(p)]
    masks = [[1, 0, 1]]
    got = incremental_grouped(w, plain_factorization(r), ring, n, masks)
    assert _nonzero(got) == _reference(w, r, n, masks)


def test_wanted_degrees_are_exact():
    rng = random.Random(7)
    n = 5
    ring = PolyRing(["a"], limits=[n], caps=[n])
    x = ring.var("a")
    w = [x, 1 + 0 * x, 2 * x]
    r = [[rng.randint(0, 3) for _ in range(3)] for _ in range(3)]
    full = _reference(w, r, n, [])[()]
    got = incremental_grouped(w, plain_factorization(r), ring, n, (), wanted={"a": [2, 3]})[()]
    for d in (2, 3):
        assert got.terms.get(ring.pack([d]), 0) == full.terms.get(ring.pack([d]), 0)


def test_symmetry_folding_keeps_the_result():
    # cells 0,1 and 2,3 are mirror images under sigma
    w = [mpq(2), mpq(2), mpq(3), mpq(3)]
    r = [[0] * 4 for _ in range(4)]
    sigma = [1, 0, 3, 2]
    values = {}
    rng = random.Random(3)
    for j in range(4):
        for l in range(4):
            key = min((j, l), (sigma[j], sigma[l]))
            values.setdefault(key, rng.randint(-1, 3))
            r[j][l] = values[key]
    masks = [[1, 1, 0, 0], [1, 0, 1, 0]]
    for n in range(1, 6):
        plain = incremental_grouped(w, plain_factorization(r), None, n, masks)
        folded = incremental_grouped(w, plain_factorization(r), None, n, masks, sigma=sigma)
        assert _nonzero(folded) == _nonzero(plain) == _reference(w, r, n, masks)


def test_level_sizes_follow_the_simplex():
    sizes = []
    incremental_grouped([1, 1, 1], plain_factorization([[1] * 3] * 3), None, 6, (), sizes)
    assert sizes == [3, 6, 10, 15, 21, 28]


def test_primes_and_crt():
    ps = primes(3)
    assert all(is_prime(q) and q < 2 ** 31 for q in ps)
    assert len(set(ps)) == 3
    x = 123456789123456789
    m, q = ps[0], ps[1]
    assert crt_pair(x % m, m, x % q, q) == x % (m * q)


@pytest.mark.parametrize("n", [1, 3])
def test_empty_cell_set(n):
    assert _nonzero(incremental_grouped([], plain_factorization([]), None, n, ())) == {}

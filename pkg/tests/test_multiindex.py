import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hohomog.multiindex import (MultiIndex, count, enumerate_multiindices, enumerate_up_to, factorial,
                                fourier_symbol, index_of, monomial, symbol_array)


def test_enumerate_examples():
    assert [a.components for a in enumerate_multiindices(2, 2)] == [(2, 0), (1, 1), (0, 2)]
    assert len(enumerate_multiindices(3, 2)) == 6
    assert [a.components for a in enumerate_multiindices(1, 5)] == [(5,)]


def test_enumerate_rejects_bad_arguments():
    with pytest.raises(ValueError):
        enumerate_multiindices(0, 1)
    with pytest.raises(ValueError):
        enumerate_multiindices(2, -1)


def test_multiindex_validation_and_order():
    a = MultiIndex((2, 1, 0))
    assert a.d == 3 and a.order == 3 and len(a) == 3
    assert (a + (0, 1, 1)).components == (2, 2, 1)
    with pytest.raises(ValueError):
        MultiIndex((1, -1))
    with pytest.raises(ValueError):
        a + (1, 1)


def test_factorial_examples():
    assert factorial((2, 1)) == 2
    assert factorial((0, 0, 0)) == 1
    assert factorial((3, 2)) == 12


def test_factorial_overflow_reported():
    with pytest.raises(OverflowError):
        factorial((21,))
    assert factorial((20,)) == math.factorial(20)


def test_fourier_symbol_examples():
    assert fourier_symbol((1, 0), (1, 0)) == pytest.approx(2j * math.pi)
    assert fourier_symbol((2,), (3,)) == pytest.approx(-9 * (2 * math.pi) ** 2)
    assert fourier_symbol((0, 0), (5, -7)) == 1
    with pytest.raises(ValueError):
        fourier_symbol((1,), (1, 2))


small_d = st.integers(1, 3)


@given(d=small_d, k=st.integers(0, 6))
def test_enumerate_is_canonical_bijection(d, k):
    alphas = enumerate_multiindices(d, k)
    comps = [a.components for a in alphas]
    assert len(comps) == count(d, k) == math.comb(k + d - 1, d - 1)
    assert len(set(comps)) == len(comps)
    assert all(a.order == k and a.d == d for a in alphas)
    assert comps == sorted(comps, reverse=True)
    assert [index_of(a) for a in alphas] == list(range(len(alphas)))
    assert all(alphas[index_of(c)].components == c for c in comps)


@given(d=small_d, k=st.integers(0, 4))
def test_enumerate_up_to_groups_by_order(d, k):
    out = enumerate_up_to(d, k)
    assert [a.order for a in out] == sorted(a.order for a in out)
    assert len(out) == sum(count(d, j) for j in range(k + 1))


@st.composite
def symbol_case(draw):
    d = draw(small_d)
    comp = st.lists(st.integers(0, 3), min_size=d, max_size=d)
    return d, draw(comp), draw(comp), draw(st.lists(st.integers(-5, 5), min_size=d, max_size=d))


@given(symbol_case())
def test_symbol_is_multiplicative(case):
    d, a, b, xi = case
    lhs = fourier_symbol(MultiIndex(tuple(a)) + b, xi)
    rhs = fourier_symbol(a, xi) * fourier_symbol(b, xi)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@given(symbol_case())
def test_symbol_array_matches_scalar(case):
    d, a, _, xi = case
    freqs = [np.array([x]) for x in xi]
    assert symbol_array(a, freqs)[0] == pytest.approx(fourier_symbol(a, xi), rel=1e-12, abs=1e-12)


def test_monomial():
    x = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(monomial((2, 1), [x, x + 1]), x**2 * (x + 1))

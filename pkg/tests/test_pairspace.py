import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from branchlab.errors import DimensionMismatchError
from branchlab.pairspace import (IDENTITY, SWAP, UnorderedPair, decompose,
                                 metric_g, metric_sq_arrays, metric_sq_symmetric,
                                 optimal_pairing, pairing_costs, recompose,
                                 zero_pair)


def brute_force_metric(a, b):
    keep = np.sum((a.a1 - b.a1) ** 2) + np.sum((a.a2 - b.a2) ** 2)
    swap = np.sum((a.a1 - b.a2) ** 2) + np.sum((a.a2 - b.a1) ** 2)
    return np.sqrt(min(keep, swap))


vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=4)


def pairs(m):
    comp = st.floats(-10, 10, allow_nan=False)
    vec = st.lists(comp, min_size=m, max_size=m)
    return st.builds(lambda v1, v2: UnorderedPair(v1, v2), vec, vec)


def test_metric_identical_pairs_zero():
    p = UnorderedPair([1.0, 2.0], [1.0, 2.0])
    assert metric_g(p, p) == 0.0


def test_metric_symmetric_vs_zero():
    v = np.array([3.0, 4.0])
    a = UnorderedPair(v, -v)
    b = zero_pair(2)
    # both pairings give the same value sqrt(2)|v|
    assert metric_g(a, b) == pytest.approx(np.sqrt(2) * 5.0, rel=1e-15)


def test_metric_frozen_example():
    # computed by enumerating both pairings: min(7, 1) = 1
    a = UnorderedPair([1.0, 0.0], [0.0, 1.0])
    b = UnorderedPair([0.0, 1.0], [2.0, 0.0])
    assert pairing_costs(a, b) == (7.0, 1.0)
    assert metric_g(a, b) == 1.0


def test_metric_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        metric_g(UnorderedPair([1.0], [2.0]), UnorderedPair([1.0, 0.0], [0.0, 1.0]))


def test_optimal_pairing_trivial_and_swap():
    v = np.array([1.0, -2.0])
    a = UnorderedPair(v, -v)
    assert optimal_pairing(a, a) == IDENTITY
    swapped = UnorderedPair(-v, v)
    assert optimal_pairing(a, swapped) == SWAP
    # ties resolve to identity
    assert optimal_pairing(a, zero_pair(2)) == IDENTITY


@settings(max_examples=150, deadline=None)
@given(pairs(3), pairs(3))
def test_optimal_pairing_matches_brute_force(a, b):
    keep, swap = pairing_costs(a, b)
    flag = optimal_pairing(a, b)
    assert flag == (IDENTITY if keep <= swap else SWAP)
    assert metric_g(a, b) == pytest.approx(brute_force_metric(a, b), abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(pairs(2), pairs(2), pairs(2))
def test_metric_axioms(a, b, c):
    assert metric_g(a, b) == pytest.approx(metric_g(b, a), abs=1e-12)
    assert metric_g(a, c) <= metric_g(a, b) + metric_g(b, c) + 1e-9


@settings(max_examples=100, deadline=None)
@given(pairs(2))
def test_metric_zero_iff_equal(a):
    assert metric_g(a, a.swapped()) == 0.0
    assert a == a.swapped()
    shifted = UnorderedPair(a.a1 + 1.0, a.a2)
    assert metric_g(a, shifted) > 0.0


@settings(max_examples=100, deadline=None)
@given(pairs(3))
def test_norm_is_distance_to_zero(a):
    assert a.norm == pytest.approx(metric_g(a, zero_pair(3)), abs=0.0)


def test_pairing_invariance_of_norm_sq():
    a = UnorderedPair([1.0, 2.0], [3.0, -1.0])
    assert a.norm == a.swapped().norm


def test_decompose_trivial_cases():
    v = np.array([2.0, -1.0])
    avg, sym = decompose(UnorderedPair(v, v))
    assert np.array_equal(avg, v)
    assert np.array_equal(sym.a1, np.zeros(2))
    avg2, sym2 = decompose(UnorderedPair(v, -v))
    assert np.array_equal(avg2, np.zeros(2))
    assert sym2 == UnorderedPair(v, -v)


def test_decompose_frozen_example():
    avg, sym = decompose(UnorderedPair([3.0, 1.0], [1.0, 1.0]))
    assert np.array_equal(avg, np.array([2.0, 1.0]))
    assert sym == UnorderedPair([1.0, 0.0], [-1.0, 0.0])


dyadics = st.integers(-1024, 1024).map(lambda k: k / 16.0)


@settings(max_examples=150, deadline=None)
@given(st.lists(dyadics, min_size=2, max_size=2), st.lists(dyadics, min_size=2, max_size=2))
def test_decompose_recompose_bit_for_bit(v1, v2):
    a = UnorderedPair(v1, v2)
    avg, sym = decompose(a)
    assert recompose(avg, sym) == a  # exact equality on representable values
    # symmetric part is symmetric
    assert sym.is_symmetric()


def test_recompose_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        recompose(np.zeros(3), UnorderedPair([1.0], [-1.0]))


def test_vectorized_metric_matches_scalar():
    rng = np.random.default_rng(3)
    a1, a2, b1, b2 = rng.standard_normal((4, 20, 3))
    vals = metric_sq_arrays(a1, a2, b1, b2)
    for i in range(20):
        ref = metric_g(UnorderedPair(a1[i], a2[i]), UnorderedPair(b1[i], b2[i])) ** 2
        assert vals[i] == pytest.approx(ref, rel=1e-12)
    s, t = rng.standard_normal((2, 20, 3))
    vals_s = metric_sq_symmetric(s, t)
    for i in range(20):
        ref = metric_g(UnorderedPair(s[i], -s[i]), UnorderedPair(t[i], -t[i])) ** 2
        assert vals_s[i] == pytest.approx(ref, rel=1e-12, abs=1e-14)

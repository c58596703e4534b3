import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glue_complex.backend import EXACT_BACKEND, FLOAT_BACKEND
from glue_complex.graded import (CochainComplex, GradedLinearMap, GradedVectorSpace, StructuralError,
                                 cohomology, cohomology_ranks, complex_from_blocks, direct_sum,
                                 induced_map_on_cohomology, shift, validate_chain_map, validate_complex)
from glue_complex.properties import run_suite
from glue_complex.random_models import complex_from_shape
from glue_complex.serialize import dumps, loads

shapes = st.fixed_dictionaries({
    "betti": st.dictionaries(st.integers(-3, 3), st.integers(0, 2), max_size=4),
    "pairs": st.dictionaries(st.integers(-3, 2), st.integers(0, 2), max_size=3),
    "seed": st.integers(0, 2**32 - 1),
})


def _build(s, bk=EXACT_BACKEND):
    return complex_from_shape(np.random.default_rng(s["seed"]), s["betti"], s["pairs"], bk)


@settings(max_examples=40, deadline=None)
@given(shapes)
def test_random_complex_squares_to_zero_and_has_prescribed_cohomology(s):
    C = _build(s)
    assert validate_complex(C).residual == 0
    ranks = cohomology_ranks(C)
    for i in C.space.degrees:
        assert ranks.get(i, 0) == s["betti"].get(i, 0)


@settings(max_examples=40, deadline=None)
@given(shapes)
def test_euler_characteristic_matches_cohomology(s):
    C = _build(s)
    chi_h = sum((-1) ** (i % 2) * r for i, r in cohomology_ranks(C).items())
    assert C.space.euler_characteristic() == chi_h


@settings(max_examples=30, deadline=None)
@given(shapes)
def test_cohomology_is_backend_independent(s):
    C = _build(s)
    assert cohomology_ranks(C) == cohomology_ranks(C.to_backend(FLOAT_BACKEND))


@settings(max_examples=30, deadline=None)
@given(shapes)
def test_serialization_round_trip_is_byte_stable(s):
    C = _build(s)
    text = dumps(C)
    back = loads(text)
    assert dumps(back) == text
    assert back.space == C.space


def test_float_serialization_round_trips_exactly():
    A = np.array([[0.1, 1 / 3], [2.0, -1e-17]])
    V = GradedVectorSpace({0: 2, 1: 2})
    f = GradedLinearMap(V, V, 1, {0: A}, FLOAT_BACKEND)
    g = loads(dumps(f))
    assert np.array_equal(g.block(0), A)


def test_non_complex_is_reported():
    V = GradedVectorSpace({0: 1, 1: 1, 2: 1})
    one = EXACT_BACKEND.from_dense(np.array([[1]]))
    d = GradedLinearMap(V, V, 1, {0: one, 1: one}, EXACT_BACKEND)
    chk = validate_complex(CochainComplex(V, d))
    assert not chk.passed and chk.residual == 1


def test_degree_mismatch_raises():
    V = GradedVectorSpace({0: 1, 1: 1})
    with pytest.raises((StructuralError, ValueError)):
        GradedLinearMap(V, V, 1, {0: EXACT_BACKEND.from_dense(np.ones((2, 2), dtype=int))}, EXACT_BACKEND)


def test_shift_and_direct_sum_cohomology():
    rng = np.random.default_rng(3)
    C = complex_from_shape(rng, {0: 1, 1: 2}, {0: 1})
    D = complex_from_shape(rng, {-1: 1}, {1: 1})
    sh = cohomology_ranks(shift(C, 1))
    assert (sh.get(-1, 0), sh.get(0, 0)) == (1, 2)
    tot = cohomology_ranks(direct_sum(C, D))
    assert (tot.get(-1, 0), tot.get(0, 0), tot.get(1, 0)) == (1, 1, 2)


def test_induced_map_of_identity_is_identity():
    C = complex_from_shape(np.random.default_rng(0), {0: 2, 2: 1}, {0: 1, 1: 2})
    H = cohomology(C)
    ind = induced_map_on_cohomology(C.identity(), C, C, H, H)
    for d, M in ind.matrices.items():
        assert M == EXACT_BACKEND.eye(H.ranks[d])


def test_chain_map_check_detects_non_chain_map():
    C = complex_from_blocks({0: 1, 1: 1}, {0: EXACT_BACKEND.from_dense(np.array([[1]]))})
    f = GradedLinearMap(C.space, C.space, 0, {0: EXACT_BACKEND.from_dense(np.array([[1]])),
                                              1: EXACT_BACKEND.from_dense(np.array([[2]]))}, EXACT_BACKEND)
    assert not validate_chain_map(f, C, C).passed


def test_functoriality_suite():
    res = run_suite("functoriality", 20, seed=11)
    assert res.passed, res.failures

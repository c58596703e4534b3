from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glue_complex.backend import EXACT_BACKEND
from glue_complex.graded import GradedLinearMap, StructuralError, cohomology_ranks, complex_from_blocks
from glue_complex.hpl import (Contraction, adapted_contraction_pair, elimination_contraction, hodge_contraction,
                              normalize_side_conditions, perturb_contraction, quasi_inverse_package)
from glue_complex.linfty import (LInfinityAlgebra, from_dg_lie, jacobi_report, linfty_transfer,
                                 morphism_check)
from glue_complex.packages import hpl_package
from glue_complex.properties import run_suite
from glue_complex.random_models import complex_from_shape, synthetic_model
from glue_complex.theories import regularity_model_1d

shapes = st.fixed_dictionaries({
    "betti": st.dictionaries(st.integers(-2, 2), st.integers(0, 2), max_size=3),
    "pairs": st.dictionaries(st.integers(-2, 1), st.integers(0, 2), max_size=3),
    "seed": st.integers(0, 2**32 - 1),
})


def _complex(s):
    return complex_from_shape(np.random.default_rng(s["seed"]), s["betti"], s["pairs"])


@settings(max_examples=30, deadline=None)
@given(shapes)
def test_elimination_contraction_is_a_strong_deformation_retract(s):
    C = _complex(s)
    c = elimination_contraction(C)
    assert c.check().passed
    assert c.small.space.total_dim == sum(cohomology_ranks(C).values())


@settings(max_examples=20, deadline=None)
@given(shapes)
def test_hodge_contraction_is_a_strong_deformation_retract(s):
    c = hodge_contraction(_complex(s))
    assert c.check().passed


def test_normalize_side_conditions_repairs_h():
    C = _complex({"betti": {0: 1, 1: 1}, "pairs": {0: 1}, "seed": 4})
    c = elimination_contraction(C)
    # the small complex has zero differential, so j k r is a null-homotopic change of h
    k = GradedLinearMap(c.small.space, c.small.space, -1,
                        {1: EXACT_BACKEND.from_dense(np.array([[1]]))}, EXACT_BACKEND)
    bad = Contraction(c.big, c.small, c.j, c.r, c.h + c.j @ k @ c.r)
    assert bad.check(side_conditions=False).passed
    assert not bad.check().passed
    assert normalize_side_conditions(bad).check().passed


def test_perturb_there_and_back():
    C = _complex({"betti": {0: 1, 1: 1}, "pairs": {0: 1, 1: 1}, "seed": 8})
    c = elimination_contraction(C)
    half = Fraction(1, 2)
    up = perturb_contraction(c, C.d.scale(half))
    back = perturb_contraction(up, C.d.scale(-half))
    assert (back.big.d - C.d).is_zero()
    assert (back.small.d - c.small.d).is_zero()
    assert [ch.residual for ch in back.check().checks] == [ch.residual for ch in c.check().checks]


def test_perturbation_must_square_to_zero():
    C = complex_from_blocks({0: 1, 1: 1, 2: 1}, {})
    c = elimination_contraction(C)
    one = EXACT_BACKEND.from_dense(np.array([[1]]))
    delta = GradedLinearMap(C.space, C.space, 1, {0: one, 1: one}, EXACT_BACKEND)
    with pytest.raises(StructuralError):
        perturb_contraction(c, delta)
    ok = GradedLinearMap(C.space, C.space, 1, {0: one}, EXACT_BACKEND)
    assert perturb_contraction(c, ok).check().passed


def test_regularity_model_package():
    M = regularity_model_1d(5, 3, 1)
    pkg = hpl_package(M)
    for c in pkg.report.checks:
        assert c.passed and c.residual == 0, c.name


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_adapted_pair_is_compatible(seed, scramble):
    M = synthetic_model(np.random.default_rng(seed), max_total=10, scramble=scramble, degrees=(-3, 3))
    pair = adapted_contraction_pair(M.i, M.F.complex, M.Ft.complex)
    assert pair.check().passed
    q = quasi_inverse_package(pair)
    assert q.report.passed


def test_hpl_roundtrip_and_tangent_lift_suites():
    assert run_suite("hpl-roundtrip", 20, seed=2).passed
    assert run_suite("tangent-lift", 20, seed=2).passed


# -- L∞ transfer ------------------------------------------------------------

def _ternary_example():
    """dg Lie algebra c,k (deg -1); e,f,g,a (deg 0); d c = a, [e,f] = a, [c,g] = k."""
    deg = [-1, -1, 0, 0, 0, 0]
    c, k, e, f, g, a = range(6)
    d = np.zeros((6, 6), dtype=object)
    d[a, c] = 1
    B = np.zeros((6, 6, 6), dtype=object)
    for x, y, z in ((e, f, a), (c, g, k)):
        B[z, x, y], B[z, y, x] = 1, -1
    L = from_dg_lie(d, B, deg)
    C = complex_from_blocks({-2: 2, -1: 4}, {-2: EXACT_BACKEND.from_dense(
        np.array([[0, 0], [0, 0], [0, 0], [-1, 0]], dtype=object))})
    return L, C


@pytest.mark.parametrize("make", [hodge_contraction, elimination_contraction])
def test_transfer_produces_ternary_bracket_satisfying_identities(make):
    L, C = _ternary_example()
    res = linfty_transfer(L, make(C))
    assert res.report.passed
    m3 = res.small.brackets[3]
    assert any(v != 0 for v in m3.flat)
    # the morphism identity pins the sign of m3
    flipped = LInfinityAlgebra(res.small.degrees, {**res.small.brackets, 3: -m3})
    assert not morphism_check(L, flipped, res.morphism, 3).passed


def test_transfer_of_lie_algebra_with_zero_differential_is_itself():
    B = np.zeros((3, 3, 3), dtype=object)
    for x, y, z in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        B[z, x, y], B[z, y, x] = 1, -1
    L = from_dg_lie(np.zeros((3, 3), dtype=object), B, [0, 0, 0])
    res = linfty_transfer(L, hodge_contraction(complex_from_blocks({-1: 3}, {})))
    assert (res.small.brackets[2] == L.brackets[2]).all()
    assert not any(v != 0 for v in res.small.brackets[3].flat)


def test_abelian_input_gives_zero_brackets():
    L, C = _ternary_example()
    zero = np.full(L.brackets[2].shape, Fraction(0), dtype=object)
    A = LInfinityAlgebra(L.degrees, {1: L.brackets[1], 2: zero})
    res = linfty_transfer(A, elimination_contraction(C))
    assert not any(v != 0 for v in res.small.brackets[2].flat)
    assert not any(v != 0 for v in res.small.brackets[3].flat)


def test_jacobi_detects_broken_bracket():
    L, _ = _ternary_example()
    bad = LInfinityAlgebra(L.degrees, {1: L.brackets[1], 2: L.brackets[2].copy()})
    bad.brackets[2][3, 2, 4] = Fraction(1)     # [e, g] = f, unbalanced by its symmetric partner
    assert not jacobi_report(bad).passed


def test_transfer_caps():
    L, C = _ternary_example()
    with pytest.raises(ValueError):
        linfty_transfer(L, hodge_contraction(C), arity=4)

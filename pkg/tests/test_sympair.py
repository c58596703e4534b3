import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glue_complex.backend import EXACT_BACKEND
from glue_complex.graded import GradedLinearMap, GradedVectorSpace, complex_from_blocks
from glue_complex.properties import run_suite
from glue_complex.random_models import complex_from_shape, cotangent_poincare, random_poincare, random_weak_equivalence
from glue_complex.sympair import (GradedPairing, PoincareComplex, PreconditionError, RelativePoincareComplex,
                                  action_relation_check, antisymmetry_residual, beta_tilde_from_contraction,
                                  check_poincare, check_relative, lie_derivative_pairing, swap_sign)
from glue_complex.theories import TheoryDescriptor, build_boundary
from glue_complex.dec import DecPackage

from conftest import half_cut, unit_grid

seeds = st.integers(0, 2**32 - 1)


def test_swap_sign_convention():
    # w(x, y) = -(-1)^{|x||y|} w(y, x)
    assert swap_sign(0, 0, 0) == -1
    assert swap_sign(1, 1, 0) == 1


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_random_poincare_is_compatible_and_antisymmetric(seed):
    P = random_poincare(np.random.default_rng(seed), max_dim=6, degrees=(-3, 3))
    rep = check_poincare(P)
    assert rep.passed
    assert all(B.is_zero_matrix for B in antisymmetry_residual(P.pairing))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_zero_homotopy_gives_zero_beta_tilde(seed):
    R = random_weak_equivalence(np.random.default_rng(seed), max_total=10, degrees=(-3, 3))
    Z = GradedLinearMap.zero(R.Pt.space, R.Pt.space, -1, EXACT_BACKEND)
    bt = beta_tilde_from_contraction(R.P, R.Pt, R.data.f, R.data.g, Z)
    assert bt.form.is_zero()


def test_precondition_rejects_non_symplectic_f():
    R = random_weak_equivalence(np.random.default_rng(5), max_total=10)
    f2 = R.data.f.scale(2)
    if R.P.space.total_dim == 0:
        pytest.skip("empty model")
    with pytest.raises(PreconditionError) as e:
        beta_tilde_from_contraction(R.P, R.Pt, f2, R.data.g, R.data.H_tilde)
    assert e.value.residual > 0


def test_action_relation_with_zero_beta_and_identity():
    P = random_poincare(np.random.default_rng(1), max_dim=6)
    zero = GradedPairing.zero(P.space, P.k - 1, P.backend)
    rep = action_relation_check(P, P, P.complex.identity(), zero)
    assert rep.passed


def test_zero_differential_gives_zero_actions():
    C = complex_from_shape(np.random.default_rng(2), {-1: 1, 0: 2}, {})
    P = cotangent_poincare(C)
    zero = GradedPairing.zero(P.space, P.k - 1, P.backend)
    assert action_relation_check(P, P, P.complex.identity(), zero).passed


def test_lemma15_and_lemma13_suites_small():
    assert run_suite("lemma15", 30, seed=7).passed
    assert run_suite("lemma13", 30, seed=7).passed


def test_lie_derivative_squares_to_zero():
    assert run_suite("lie-derivative", 30, seed=3).passed


def _bf_interval_pieces():
    g = unit_grid(16)
    return build_boundary(TheoryDescriptor("BF", 1), DecPackage(g), half_cut(g))


def test_bf_interval_pieces_are_relative_poincare():
    B = _bf_interval_pieces()
    assert B.report.passed
    for RP in B.relative:
        rep = check_relative(RP)
        for c in rep.checks:
            if c.name != "hamiltonian relation (reported)":
                assert c.passed and c.residual == 0, c.name


def test_zero_boundary_reduces_to_absolute_compatibility():
    P = random_poincare(np.random.default_rng(4), max_dim=6)
    Vb = GradedVectorSpace({0: 1})
    Cb = complex_from_blocks({0: 1}, {})
    Pb = PoincareComplex(Cb, GradedPairing.zero(Vb, P.k + 1, EXACT_BACKEND))
    pi = GradedLinearMap.zero(P.space, Vb, 0, EXACT_BACKEND)
    rep = check_relative(RelativePoincareComplex(P.complex, P.pairing, Pb, pi))
    assert rep["relative compatibility"].passed


def test_dropping_the_boundary_term_breaks_a_piece():
    RP = _bf_interval_pieces().relative[0]
    zero_pi = GradedLinearMap.zero(RP.bulk.space, RP.boundary.space, 0, EXACT_BACKEND)
    rep = check_relative(RelativePoincareComplex(RP.bulk, RP.pairing, RP.boundary, zero_pi))
    assert not rep["relative compatibility"].passed


def test_lie_derivative_of_symplectic_form_vanishes():
    P = random_poincare(np.random.default_rng(9), max_dim=6)
    assert lie_derivative_pairing(P.complex, P.pairing).is_zero()

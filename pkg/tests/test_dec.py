from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glue_complex.backend import EXACT_BACKEND, to_numpy
from glue_complex.dec import (CutGeometry, DecPackage, GridTorus, bump_mu, dirichlet_green, heat_kernel,
                              localize_chi, mollifier_rho_chi)
from glue_complex.graded import cohomology_ranks, validate_complex

from conftest import half_cut, unit_grid


@pytest.mark.parametrize("sizes, betti", [
    ((5,), {0: 1, 1: 1}),
    ((4, 3), {0: 1, 1: 2, 2: 1}),
    ((3, 4, 3), {0: 1, 1: 3, 2: 3, 3: 1}),
])
def test_torus_betti_numbers(sizes, betti):
    C = DecPackage(unit_grid(*sizes)).de_rham()
    assert validate_complex(C).residual == 0
    assert {d: r for d, r in cohomology_ranks(C).items() if r} == betti


def test_grid_validation():
    with pytest.raises(ValueError):
        GridTorus((2,))
    with pytest.raises(ValueError):
        GridTorus((4, 4), (Fraction(1), Fraction(-1)))


def test_cut_validation():
    g = unit_grid(16)
    with pytest.raises(ValueError):
        CutGeometry(g, 0, (0, 8), 4)        # slabs touch
    with pytest.raises(ValueError):
        CutGeometry(g, 0, (0,), 8)          # slab wraps


@settings(max_examples=10, deadline=None)
@given(st.lists(st.integers(3, 5), min_size=1, max_size=3),
       st.lists(st.sampled_from([Fraction(1), Fraction(1, 2), Fraction(2, 3)]), min_size=3, max_size=3))
def test_star_dual_star_is_signed_identity(sizes, widths):
    P = DecPackage(GridTorus(tuple(sizes), tuple(widths[:len(sizes)])))
    n = len(sizes)
    for k in range(n + 1):
        sign = -1 if (k * (n - k)) % 2 else 1
        I = EXACT_BACKEND.eye(P.idx[k].size)
        assert EXACT_BACKEND.mm(P.star_dual[n - k], P.star[k]) == (I if sign == 1 else -I)


def test_dstar_is_gram_adjoint():
    P = DecPackage(GridTorus((4, 3), (Fraction(1, 2), Fraction(1, 3))))
    bk = P.bk
    for k in range(1, 3):
        lhs = bk.mm(P.M[k - 1], P.dstar[k])
        rhs = bk.mm(bk.T(P.d[k - 1]), P.M[k])
        assert lhs == rhs


@pytest.mark.parametrize("sizes, eta", [((12,), Fraction(2, 12)), ((6, 6), Fraction(1, 6))])
def test_mollifier_homotopy_is_exact(sizes, eta):
    P = DecPackage(unit_grid(*sizes))
    C = P.de_rham()
    rho, chi = mollifier_rho_chi(P, eta)
    assert ((C.d @ chi + chi @ C.d) - (C.identity() - rho)).is_zero()
    R0 = rho.block(0)
    ones = EXACT_BACKEND.from_dense(np.ones((R0.shape[1], 1), dtype=int))
    assert EXACT_BACKEND.mm(R0, ones) == ones


def test_mollifier_too_wide_is_rejected():
    with pytest.raises(ValueError):
        mollifier_rho_chi(DecPackage(unit_grid(8)), Fraction(1, 2))


def test_localized_chi_vanishes_far_from_the_cut():
    g = unit_grid(32)
    P = DecPackage(g)
    cut = half_cut(g)
    _, chi = mollifier_rho_chi(P, Fraction(2, 32))
    loc = localize_chi(P, chi, cut)
    K = to_numpy(loc.block(1))
    inside = cut.in_closed_slab(P, 0)
    assert np.abs(K[~inside, :]).max() == 0


def test_heat_kernel_limits():
    P = DecPackage(unit_grid(12))
    assert np.array_equal(heat_kernel(P, 0, 0.0), np.eye(12))
    K = heat_kernel(P, 0, 0.3)
    assert np.allclose(K.sum(axis=1), 1.0, atol=1e-13)
    assert np.allclose(K, K.T, atol=1e-13)
    with pytest.raises(ValueError):
        heat_kernel(P, 0, -1.0)


def test_dirichlet_green_inverts_restricted_laplacian():
    g = unit_grid(32)
    P = DecPackage(g)
    cut = half_cut(g)
    G = dirichlet_green(P, cut, 0)
    mask = cut.dirichlet_cells(P, 0)
    L = to_numpy(P.lap[0])[np.ix_(mask, mask)]
    assert np.allclose(L @ G[np.ix_(mask, mask)], np.eye(mask.sum()), atol=1e-10)
    assert np.abs(G[~mask, :]).max() == 0


def test_bump_is_one_near_the_diagonal_and_zero_outside_U():
    g = unit_grid(64)
    P = DecPackage(g)
    cut = half_cut(g)
    mu = bump_mu(P, cut)
    A = mu.matrix
    assert mu.off_support_max() == 0
    delta, _ = cut.boundary_distance(P, 0)
    deep = np.flatnonzero(delta > 0)
    assert np.allclose(A[deep, deep], 1.0)

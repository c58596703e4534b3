import numpy as np
import pytest

from glue_complex.dec import DecPackage
from glue_complex.graded import cohomology_ranks
from glue_complex.sympair import check_poincare
from glue_complex.theories import (TheoryDescriptor, build_boundary, build_bulk, build_fiber_product,
                                   layout, regularity_model_1d)

from conftest import half_cut, unit_grid


@pytest.mark.parametrize("kind, n, p", [("CS", 2, 0), ("Scalar2", 1, 1), ("BF", 2, 2), ("PForm1", 1, 1),
                                        ("Maxwell", 3, 1), ("BF", 0, 0)])
def test_descriptor_rejects_bad_parameters(kind, n, p):
    with pytest.raises(ValueError):
        TheoryDescriptor(kind, n, p)


def test_bf_layout_degrees_and_pairs():
    L = layout(TheoryDescriptor("BF", 2, 1))
    deg = {s.name: s.degree for s in L.summands}
    # A: p = 1 so A1 sits in degree 0; B: q = 0 so B0 sits in degree 0
    assert deg["A0"] == -1 and deg["A1"] == 0 and deg["B0"] == 0 and deg["B2"] == 2
    assert ("A1", "B1") in L.pairs
    assert all(deg[a] + deg[b] == 1 for a, b in L.pairs)       # pairing degree k = -1


def test_pform1_ghost_labels():
    L = layout(TheoryDescriptor("PForm1", 3, 1))
    names = {s.name: (s.side, s.form, s.ghost) for s in L.summands}
    assert names["c1"] == ("P", 0, 1)
    assert names["A"] == ("P", 1, 0)
    assert names["B+"] == ("P", 2, -1)
    assert names["B"] == ("D", 1, 0)
    assert any(a.op == "star" for a in L.arrows)


def test_scalar_layout_has_second_order_arrow():
    L = layout(TheoryDescriptor("Scalar2", 1))
    assert [(a.src, a.tgt, a.op) for a in L.arrows] == [("phi", "phi+", "dsd")]


@pytest.mark.parametrize("kind, n, p, sizes", [
    ("BF", 1, 0, (8,)), ("BF", 2, 1, (4, 4)), ("CS", 3, 0, (3, 3, 3)), ("Scalar2", 1, 0, (8,)),
    ("PForm1", 2, 1, (4, 4)), ("PForm2", 2, 1, (4, 4)), ("PForm1", 3, 2, (3, 3, 3)),
])
def test_bulk_is_exact_poincare(kind, n, p, sizes):
    F = build_bulk(TheoryDescriptor(kind, n, p), unit_grid(*sizes)).poincare
    rep = check_poincare(F)
    assert rep.passed
    assert all(c.residual == 0 for c in rep.checks)


def test_bf_circle_cohomology_is_two_circles():
    F = build_bulk(TheoryDescriptor("BF", 1), unit_grid(8)).poincare
    assert sum(cohomology_ranks(F.complex).values()) == 4


@pytest.mark.parametrize("kind", ["BF", "Scalar2", "PForm1"])
def test_fiber_product_on_the_circle(kind):
    g = unit_grid(16)
    M = build_fiber_product(TheoryDescriptor(kind, 1), g, half_cut(g))
    assert M.passed
    assert M.degenerate
    assert M.report["i quasi-iso"].passed


def test_bf_boundary_orientations_cancel():
    g = unit_grid(16)
    B = build_boundary(TheoryDescriptor("BF", 1), DecPackage(g), half_cut(g))
    assert B.report["opposite orientations"].residual == 0
    assert len(B.relative) == 2


def test_regularity_model_is_non_degenerate():
    M = regularity_model_1d(5, 3, 1)
    assert M.passed
    assert not M.degenerate
    assert M.report["i quasi-iso"].passed


def test_regularity_parameters_validated():
    with pytest.raises(ValueError):
        regularity_model_1d(4, 3, 1)
    with pytest.raises(ValueError):
        regularity_model_1d(6, 1, 2)

from fractions import Fraction

import numpy as np
import pytest

from glue_complex.backend import FLOAT_BACKEND, to_numpy
from glue_complex.dec import DecPackage
from glue_complex.graded import GradedLinearMap
from glue_complex.packages import (GammaKernels, PackageError, gamma_kernels, hodge_package, hpl_package,
                                   local_package, smearing_package, tqm_check, verify_theorem_main, model_to_backend)
from glue_complex.graded import Report
from glue_complex.random_models import (complex_from_shape, cotangent_poincare, inclusion_and_projection,
                                        poincare_sum, random_acyclic_poincare)
from glue_complex.theories import GluedModel, TheoryDescriptor, build_fiber_product, regularity_model_1d

from conftest import half_cut, unit_grid


def _model(kind, N=32, n=1, p=0, cut=True):
    g = unit_grid(*([N] * n))
    return build_fiber_product(TheoryDescriptor(kind, n, p), g, half_cut(g) if cut else None), g


def _all_pass(thm, skip=()):
    return all(it.status in ("pass", "not-applicable") for k, it in thm.items.items() if k not in skip)


def test_smearing_bf_exact_all_items():
    M, g = _model("BF")
    pkg = smearing_package(M, Fraction(4, 32))
    thm = verify_theorem_main(pkg)
    assert {k: it.status for k, it in thm.items.items()} == {"a": "pass", "b": "pass", "c": "pass", "d": "pass"}
    for c in pkg.report.checks:
        assert c.residual == 0, c.name


def test_subgrid_smearing_is_trivial():
    M, g = _model("BF", 16)
    pkg = smearing_package(M, Fraction(1, 32))
    assert pkg.H.is_zero() and pkg.H_tilde.is_zero()
    assert (pkg.p - M.F.complex.identity()).is_zero()


def test_smearing_rejects_foreign_cut_and_second_order_theory():
    M, g = _model("BF")
    other = unit_grid(16)
    with pytest.raises(PackageError):
        smearing_package(M, Fraction(1, 8), cut=half_cut(other))
    S, _ = _model("Scalar2")
    with pytest.raises(PackageError):
        smearing_package(S, Fraction(1, 8))
    with pytest.raises(PackageError, match="backend"):
        smearing_package(model_to_backend(M, FLOAT_BACKEND), Fraction(1, 8))


def test_hodge_eps_zero_is_identity():
    M, _ = _model("Scalar2", cut=False)
    pkg = hodge_package(M, 0.0)
    assert pkg.H.max_abs() == 0
    assert pkg.report["p i = e^{-εΔ}"].passed


def test_hodge_scalar_residual_and_item_c():
    M, _ = _model("Scalar2", cut=False)
    pkg = hodge_package(M, 0.1)
    assert pkg.report["dH+Hd = id - p i"].residual <= 1e-10
    thm = verify_theorem_main(pkg)
    assert thm.items["c"].status == "not-applicable"
    assert _all_pass(thm)


def test_hodge_pform1_3d_cancellations():
    M, _ = _model("PForm1", 4, 3, 1, cut=False)
    pkg = hodge_package(M, 0.05)
    for name in ("Xi* + Psi d = 0", "*Xi' + d Psi = 0", "d Phi = 0", "Phi d = 0", "p i = e^{-εΔ}"):
        assert pkg.report[name].residual <= 1e-9, name
    assert pkg.report.passed


def test_tqm_on_pform1():
    M, _ = _model("PForm1", 4, 3, 1, cut=False)
    rep = tqm_check(M, 0.1)
    assert rep.passed
    assert rep["G^2 != 0 (informational)"].residual > 0


def test_empty_bump_gives_zero_homotopy():
    M, g = _model("Scalar2", 32)
    cut = half_cut(g)
    K = gamma_kernels(M.bulk.pkg, cut)
    zero = GammaKernels(cut, {k: np.zeros_like(v) for k, v in K.gamma.items()}, K.mu)
    pkg = local_package(M, cut, kernels=zero)
    assert pkg.H_tilde.max_abs() == 0
    ident = pkg.p - GradedLinearMap.identity(pkg.Ft.space, FLOAT_BACKEND)
    assert ident.max_abs() == 0


def test_pform1_circle_local_p_matches_block_expansion():
    M, g = _model("PForm1", 32)
    cut = half_cut(g)
    pkg = local_package(M, cut)
    dp = pkg.model.bulk.pkg
    G = gamma_kernels(dp, cut).gamma
    d0 = to_numpy(dp.d[0])
    Xi = G[("P", 0)] @ to_numpy(dp.dstar[1])
    Xip = to_numpy(dp.dstar_dual[1]) @ G[("D", 1)]
    Psi = to_numpy(dp.star_dual[1]) @ G[("D", 1)]          # sign (-1)^{n+p+1} = +1
    sd0 = to_numpy(dp.star_dual[0])
    I = np.eye(32)
    want = {("A", "A"): I - Xi @ d0, ("B+", "B+"): I - d0 @ Xi,
            ("B", "B"): I - Xip @ d0, ("A+", "A+"): I - d0 @ Xip,
            ("A", "B"): -(Psi @ d0 + Xi @ sd0), ("B+", "A+"): -(sd0 @ Xip + d0 @ Psi)}
    slots = pkg.model.bulk.slots
    for t, (dt, ot, ct) in slots.items():
        for s, (ds, os_, cs) in slots.items():
            if dt != ds:
                continue
            got = to_numpy(pkg.p.block(ds))[ot:ot + len(ct), os_:os_ + len(cs)]
            exp = want.get((t, s), np.zeros_like(got))
            assert np.abs(got - exp).max() <= 1e-12, (t, s)


def test_scalar_green_kernel_is_delta_on_the_plateau():
    g = unit_grid(64)
    cut = half_cut(g)
    dp = DecPackage(g, FLOAT_BACKEND)
    K = gamma_kernels(dp, cut)
    Gam, mu = K.gamma[("P", 0)], K.mu[("P", 0)].matrix
    L = to_numpy(dp.lap[0])
    R = L @ Gam
    checked = 0
    for x in range(64):
        stencil = np.flatnonzero(L[x])
        for y in range(64):
            if np.all(mu[stencil, y] == 1.0):
                assert abs(R[x, y] - (x == y)) <= 1e-10
                checked += 1
    assert checked > 0


def test_local_scalar_identity_b():
    M, g = _model("Scalar2", 64)
    pkg = local_package(M, half_cut(g))
    assert pkg.report["dH+Hd = id - p i"].residual <= 1e-12
    assert pkg.locality.report["p kernel = delta outside UxU"].residual == 0


def test_hpl_on_degenerate_model_is_trivial():
    M, _ = _model("Scalar2", 16)
    pkg = hpl_package(M)
    assert pkg.H.is_zero() and pkg.H_tilde.is_zero()
    assert pkg.report.passed


def _minimal_plus_acyclic(seed):
    """F with zero differential, F~ = F ⊕ A, i the first-summand inclusion."""
    rng = np.random.default_rng(seed)
    betti = {int(d): int(rng.integers(0, 2)) for d in range(-2, 2)}
    betti[0] = 1
    P = cotangent_poincare(complex_from_shape(rng, betti, {}))
    A = random_acyclic_poincare(rng, max_dim=6)
    S = poincare_sum(P, A)
    inc, _ = inclusion_and_projection(P.space, A.space)
    return GluedModel(None, P, S, inc, [], None, Report("minimal"), False)


@pytest.mark.parametrize("seed", range(10))
def test_synthetic_beta_tilde_lives_on_the_acyclic_block(seed):
    M = _minimal_plus_acyclic(seed)
    pkg = hpl_package(M)
    assert pkg.report.passed
    bt = pkg.beta_tilde
    for d, B in bt.blocks.items():
        B = to_numpy(B)
        nF_row, nF_col = M.F.space.dim(d), M.F.space.dim(-d - bt.degree)
        assert np.abs(B[:nF_row, :]).max(initial=0) == 0
        assert np.abs(B[:, :nF_col]).max(initial=0) == 0


def test_regularity_theorem_items():
    pkg = hpl_package(regularity_model_1d(5, 3, 1))
    thm = verify_theorem_main(pkg)
    assert thm.items["a"].status == "pass" and thm.items["b"].status == "pass" and thm.items["d"].status == "pass"


def test_corrupted_homotopy_fails_item_b_with_location():
    M, _ = _model("BF")
    pkg = smearing_package(M, Fraction(4, 32)).corrupted()
    thm = verify_theorem_main(pkg)
    assert thm.items["b"].status == "fail"
    bad = [c for c in thm.items["b"].report.checks if not c.passed]
    assert bad and "worst" in bad[0].detail

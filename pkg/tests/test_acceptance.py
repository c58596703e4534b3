"""Acceptance criteria, one test each; the terminal summary lists PASS/FAIL per criterion."""
import json
import time
from fractions import Fraction

import numpy as np
import pytest

from glue_complex.cli import main
from glue_complex.dec import DecPackage
from glue_complex.graded import cohomology, cohomology_ranks, induced_map_on_cohomology
from glue_complex.packages import (hodge_package, hpl_package, local_package, smearing_package, tqm_check,
                                   verify_theorem_main)
from glue_complex.properties import run_suite
from glue_complex.random_models import synthetic_model
from glue_complex.theories import TheoryDescriptor, build_fiber_product, regularity_model_1d

from conftest import half_cut, unit_grid

EPS = (1e-3, 0.1, 1.0)


def _structural_models():
    cases = [("BF", 1, 0, (32,)), ("BF", 2, 0, (16, 16)), ("BF", 2, 1, (16, 16)), ("CS", 3, 0, (4, 4, 4)),
             ("Scalar2", 1, 0, (32,))]
    for kind in ("PForm1", "PForm2"):
        for n, sizes in ((1, (16,)), (2, (8, 8)), (3, (4, 4, 4))):
            for p in (0, 1):
                if p <= n - 1:
                    cases.append((kind, n, p, sizes))
    return cases


def test_criterion_01_structural_exactness(criterion):
    criterion("1 structural exactness: d^2, compatibility, i*w~ = w exactly 0 on every bundled model")
    t0 = time.perf_counter()
    for kind, n, p, sizes in _structural_models():
        g = unit_grid(*sizes)
        M = build_fiber_product(TheoryDescriptor(kind, n, p), g, half_cut(g))
        for name in ("d^2=0", "d~^2=0", "F compatibility", "F~ compatibility", "i*w~ = w"):
            c = M.report[name]
            assert c.passed and c.residual == 0, (kind, n, p, name, c.residual)
    elapsed = time.perf_counter() - t0
    criterion("1 structural exactness: d^2, compatibility, i*w~ = w exactly 0 on every bundled model",
              f"{len(_structural_models())} models, {elapsed:.1f}s")
    assert elapsed <= 60


def test_criterion_02_lemma15_suite(criterion):
    criterion("2 beta~ property suite (200 exact instances)")
    t0 = time.perf_counter()
    res = run_suite("lemma15", 200, seed=2024)
    elapsed = time.perf_counter() - t0
    criterion("2 beta~ property suite (200 exact instances)", f"{len(res.failures)} failures, {elapsed:.1f}s")
    assert res.passed and elapsed <= 120


def test_criterion_03_action_relation_suite(criterion):
    res = run_suite("lemma13", 200, seed=2024)
    criterion("3 quadratic-action relation both directions (200 instances)", f"{len(res.failures)} failures")
    assert res.passed


def test_criterion_04_hpl(criterion):
    t0 = time.perf_counter()
    pkg = hpl_package(regularity_model_1d(5, 3, 1))
    assert pkg.report.passed and all(c.residual == 0 for c in pkg.report.checks)
    thm = verify_theorem_main(pkg)
    assert thm.items["d"].status == "pass"
    rt = run_suite("hpl-roundtrip", 100, seed=2024)
    tl = run_suite("tangent-lift", 100, seed=2024)
    elapsed = time.perf_counter() - t0
    criterion("4 HPL: regularity model + 100 synthetic models, tangent lift exact",
              f"{len(rt.failures) + len(tl.failures)} failures, {elapsed:.1f}s")
    assert rt.passed and tl.passed and elapsed <= 120


def _smearing(kind, n, p, N, eta_cells, cut=True):
    g = unit_grid(*([N] * n))
    c = half_cut(g) if cut else None
    M = build_fiber_product(TheoryDescriptor(kind, n, p), g, c)
    return smearing_package(M, Fraction(eta_cells, N), c)


def test_criterion_05_smearing(criterion):
    criterion("5 smearing: BF exact on N=32,128 and 16^2; CS 4^3 <= 1e-10")
    for n, p, N, eta in ((1, 0, 32, 4), (1, 0, 128, 4), (2, 0, 16, 2), (2, 1, 16, 2)):
        pkg = _smearing("BF", n, p, N, eta)
        thm = verify_theorem_main(pkg)
        assert all(it.status == "pass" for it in thm.items.values()), (n, p, N)
        for c in pkg.report.checks:
            assert c.residual == 0, (n, p, N, c.name)
        for name in ("H~(field supported outside U) = 0", "p kernel = delta outside UxU"):
            assert pkg.locality.report[name].residual == 0
    cs = _smearing("CS", 3, 0, 4, 1, cut=False)
    thm = verify_theorem_main(cs)
    worst = max(c.residual for c in cs.report.checks)
    criterion("5 smearing: BF exact on N=32,128 and 16^2; CS 4^3 <= 1e-10", f"CS worst {worst:.1e}")
    assert worst <= 1e-10
    assert thm.items["a"].status == "pass" and thm.items["b"].status == "pass" and thm.items["d"].status == "pass"


def test_criterion_06_hodge(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    g1 = unit_grid(32)
    scalar = build_fiber_product(TheoryDescriptor("Scalar2", 1), g1, None)
    g3 = unit_grid(4, 4, 4)
    pform = build_fiber_product(TheoryDescriptor("PForm1", 3, 1), g3, None)
    for M in (scalar, pform):
        for eps in EPS:
            pkg = hodge_package(M, eps)
            for name in ("dH+Hd = id - p i", "d~H~+H~d~ = id - i p", "p i = e^{-εΔ}"):
                worst = max(worst, pkg.report[name].residual)
            if M is pform:
                for name in ("Xi* + Psi d = 0", "*Xi' + d Psi = 0", "d Phi = 0", "Phi d = 0"):
                    worst = max(worst, pkg.report[name].residual)
            thm = verify_theorem_main(pkg)
            assert thm.items["c"].status == "not-applicable"
            assert thm.items["a"].status == "pass" and thm.items["b"].status == "pass"
    elapsed = time.perf_counter() - t0
    criterion("6 Hodge packages: identities and five cancellations <= 1e-9, (c) not-applicable",
              f"worst {worst:.1e}, {elapsed:.1f}s")
    assert worst <= 1e-9 and elapsed <= 300


def test_criterion_07a_local_scalar(criterion, tmp_path):
    criterion("7a local scalar: (b) <= 1e-12, p = delta outside UxU, 0 on plateau, annulus vs frozen bound")
    g = unit_grid(64)
    M = build_fiber_product(TheoryDescriptor("Scalar2", 1), g, half_cut(g))
    pkg = local_package(M, half_cut(g))
    assert pkg.report["dH+Hd = id - p i"].residual <= 1e-12
    loc = pkg.locality.report
    assert loc["p kernel = delta outside UxU"].residual == 0
    plateau = loc["p kernel = 0 on the plateau"]
    assert plateau.detail["pairs"] > 0 and plateau.passed
    assert main(["converge", "--config", "scalar1d-local", "--out", str(tmp_path)]) == 0
    conv = json.loads((tmp_path / "converge.json").read_text())
    criterion("7a local scalar: (b) <= 1e-12, p = delta outside UxU, 0 on plateau, annulus vs frozen bound",
              f"annulus max {conv['regression']['max']:.3f} <= {conv['regression']['limit']:.3f}")
    assert conv["regression"]["passed"]


@pytest.mark.parametrize("kind", ["PForm1", "BF"])
def test_criterion_07b_local_plateau_first_order(criterion, kind):
    g = unit_grid(64)
    M = build_fiber_product(TheoryDescriptor(kind, 1), g, half_cut(g))
    pkg = local_package(M, half_cut(g))
    assert pkg.report["dH+Hd = id - p i"].residual <= 1e-12
    assert pkg.locality.report["p kernel = delta outside UxU"].residual == 0
    plateau = pkg.locality.report["p kernel = 0 on the plateau"]
    criterion(f"7b local {kind}(n=1): p kernel = 0 on the plateau",
              f"residual {plateau.residual:.4f} on {plateau.detail.get('summands')}")
    assert plateau.detail["pairs"] > 0
    assert plateau.passed


def test_criterion_08_tqm(criterion):
    g = unit_grid(4, 4, 4)
    M = build_fiber_product(TheoryDescriptor("PForm1", 3, 1), g, None)
    rep = tqm_check(M, 0.1)
    g2 = rep["G^2 != 0 (informational)"].residual
    criterion("8 TQM: [d, G] = Laplacian, H = G H^-1 (1 - e^{-εH}), |G^2| > 0",
              f"worst {max(rep['[d_Q, G] = Laplacian'].residual, rep['H = G H^-1 (1 - e^{-εH})'].residual):.1e}, |G^2| = {g2:g}")
    assert rep.passed and g2 > 0


def test_criterion_09_cohomology(criterion):
    criterion("9 Betti numbers and i* invertible on non-degenerate models")
    for sizes, betti in (((7,), {0: 1, 1: 1}), ((4, 3, 5), {0: 1, 1: 3, 2: 3, 3: 1})):
        C = DecPackage(unit_grid(*sizes)).de_rham()
        assert {d: r for d, r in cohomology_ranks(C).items() if r} == betti
    models = [regularity_model_1d(5, 3, 1), regularity_model_1d(6, 4, 2)]
    models += [synthetic_model(np.random.default_rng(s), max_total=10, scramble=True, degrees=(-3, 3))
               for s in range(20)]
    for M in models:
        assert not M.degenerate
        HF, HFt = cohomology(M.F.complex), cohomology(M.Ft.complex)
        ind = induced_map_on_cohomology(M.i, M.F.complex, M.Ft.complex, HF, HFt)
        for d in set(HF.ranks) | set(HFt.ranks):
            r = HF.ranks.get(d, 0)
            assert r == HFt.ranks.get(d, 0)
            if r:
                assert M.backend.rank(ind.matrices[d]) == r


def test_criterion_10_determinism(criterion, tmp_path, monkeypatch):
    outs = []
    for threads, sub in (("1", "a"), ("4", "b")):
        monkeypatch.setenv("GLUE_COMPLEX_THREADS", threads)
        assert main(["run", "--config", "bf1d-smearing", "--out", str(tmp_path / sub)]) == 0
        outs.append((tmp_path / sub / "report.json").read_bytes())
    criterion("10 determinism: byte-identical report.json across runs", f"{len(outs[0])} bytes")
    assert outs[0] == outs[1]

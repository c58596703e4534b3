"""Contractions, the perturbation lemma, compatible contraction pairs and the quasi-inverse package."""
from __future__ import annotations

from dataclasses import dataclass, field

from .graded import (Check, CochainComplex, GradedLinearMap, GradedVectorSpace, Report, StructuralError,
                     cohomology, cohomology_ranks, induced_map_on_cohomology, residual_check,
                     validate_chain_map)
from .sympair import GradedPairing, _half, _sgn, lie_derivative_pairing


class ContractionError(AssertionError):
    def __init__(self, msg, report: Report | None = None):
        super().__init__(msg if report is None else f"{msg}: " + ", ".join(
            f"{c.name}={c.residual:.3g}" for c in report.checks if not c.passed))
        self.report = report


@dataclass
class Contraction:
    big: CochainComplex
    small: CochainComplex
    j: GradedLinearMap
    r: GradedLinearMap
    h: GradedLinearMap

    @property
    def backend(self):
        return self.big.backend

    def check(self, side_conditions=True, tol=None) -> Report:
        bk = self.backend
        rep = Report("contraction")
        c = validate_chain_map(self.j, self.small, self.big)
        c.name = "j chain map"
        rep.add(c)
        c = validate_chain_map(self.r, self.big, self.small)
        c.name = "r chain map"
        rep.add(c)
        rj = self.r @ self.j - self.small.identity()
        rep.add(residual_check("rj=id", list(rj.blocks.values()), bk, tol))
        jr = self.j @ self.r - (self.big.identity() - self.big.d @ self.h - self.h @ self.big.d)
        rep.add(residual_check("jr=id-dh-hd", list(jr.blocks.values()), bk, tol))
        if side_conditions:
            rep.add(residual_check("hh=0", list((self.h @ self.h).blocks.values()), bk, tol))
            rep.add(residual_check("hj=0", list((self.h @ self.j).blocks.values()), bk, tol))
            rep.add(residual_check("rh=0", list((self.r @ self.h).blocks.values()), bk, tol))
        return rep

    def assert_valid(self, side_conditions=True, tol=None):
        rep = self.check(side_conditions, tol)
        if not rep.passed:
            raise ContractionError("contraction invariants violated", rep)
        return self


def _zero_complex(V: GradedVectorSpace, bk) -> CochainComplex:
    return CochainComplex(V, GradedLinearMap.zero(V, V, 1, bk))


def _per_degree(V_src, V_tgt, deg, blocks, bk):
    return GradedLinearMap(V_src, V_tgt, deg, blocks, bk)


def elimination_contraction(C: CochainComplex) -> Contraction:
    """Contraction onto cohomology from a pivot splitting C^i = B^i ⊕ R^i ⊕ L^i.

    B^i: pivot columns of d_{i-1}; L^i: standard vectors at the pivot columns of d_i
    (so d maps L^i isomorphically onto B^{i+1}); R^i: representatives completing a basis.
    """
    bk = C.backend
    V = C.space
    piv = {i: bk.pivot_columns(C.d.block(i)) for i in V.degrees}
    small_dims, jb, rb, hb = {}, {}, {}, {}
    frames = {}
    for i in V.degrees:
        n = V.dim(i)
        dprev = C.d.block(i - 1)
        Bcols = bk.extract(dprev, range(n), piv.get(i - 1, [])) if dprev.shape[1] else bk.zeros(n, 0)
        L = piv.get(i, [])
        Lmat = bk.from_dok({(a, c): 1 for c, a in enumerate(L)}, (n, len(L)))
        Z = bk.nullspace(C.d.block(i)) if C.d.block(i).shape[0] else bk.eye(n)
        both = bk.hstack([Bcols, Z], n)
        rsel = [c for c in bk.pivot_columns(both) if c >= Bcols.shape[1]]
        R = bk.extract(both, range(n), rsel)
        T = bk.hstack([Bcols, R, Lmat], n)
        if T.shape[1] != n:
            raise ContractionError(f"degree {i}: splitting has {T.shape[1]} columns, expected {n}")
        frames[i] = (Bcols.shape[1], R.shape[1], len(L), R, bk.inv(T))
        small_dims[i] = R.shape[1]
    S = GradedVectorSpace(small_dims)
    for i in V.degrees:
        nb, nr, nl, R, Tinv = frames[i]
        n = V.dim(i)
        if nr:
            jb[i] = R
            rb[i] = bk.extract(Tinv, range(nb, nb + nr), range(n))
        if nb:
            # h: B^i -> L^{i-1}, inverse of d restricted to L^{i-1}
            Lprev = piv.get(i - 1, [])
            m = V.dim(i - 1)
            E = bk.from_dok({(a, c): 1 for c, a in enumerate(Lprev)}, (m, len(Lprev)))
            hb[i] = bk.mm(E, bk.extract(Tinv, range(nb), range(n)))
    j = _per_degree(S, V, 0, jb, bk)
    r = _per_degree(V, S, 0, rb, bk)
    h = _per_degree(V, V, -1, hb, bk)
    return Contraction(C, _zero_complex(S, bk), j, r, h).assert_valid()


def hodge_contraction(C: CochainComplex, grams: dict | None = None) -> Contraction:
    """Contraction onto harmonic forms: h = d* Δ⁻¹ on the orthocomplement, d* the Gram adjoint."""
    bk = C.backend
    V = C.space
    G = {i: (grams or {}).get(i, bk.eye(V.dim(i))) for i in V.degrees}
    Ginv = {i: bk.inv(Gi) for i, Gi in G.items()}
    _check_spd(G, bk)
    dstar = {}
    for i in V.degrees:
        if V.dim(i - 1) and i - 1 in C.d.blocks:
            dstar[i] = bk.mm(bk.mm(Ginv[i - 1], bk.T(C.d.block(i - 1))), G[i])
    ds = GradedLinearMap(V, V, -1, dstar, bk)
    lap = C.d @ ds + ds @ C.d
    jb, rb, hb, small = {}, {}, {}, {}
    for i in V.degrees:
        L = lap.block(i)
        J = bk.nullspace(L)
        small[i] = J.shape[1]
        if J.shape[1]:
            JtG = bk.mm(bk.T(J), G[i])
            Rm = bk.mm(bk.inv(bk.mm(JtG, J)), JtG)
            jb[i], rb[i] = J, Rm
            P = bk.mm(J, Rm)
        else:
            P = bk.zeros(V.dim(i), V.dim(i))
        green = bk.mm(bk.inv(L + P), bk.eye(V.dim(i)) - P)
        if i in dstar:
            hb[i] = bk.mm(dstar[i], green)
    S = GradedVectorSpace(small)
    c = Contraction(C, _zero_complex(S, bk), _per_degree(S, V, 0, jb, bk), _per_degree(V, S, 0, rb, bk),
                    _per_degree(V, V, -1, hb, bk))
    return c.assert_valid()


def _check_spd(G, bk):
    import numpy as np
    for i, Gi in G.items():
        A = bk.to_numpy(Gi)
        if A.size and (np.max(np.abs(A - A.T)) > 1e-12 * max(1, np.max(np.abs(A)))
                       or np.min(np.linalg.eigvalsh((A + A.T) / 2)) <= 0):
            raise StructuralError(f"Gram matrix in degree {i} is not symmetric positive definite")


def normalize_side_conditions(c: Contraction) -> Contraction:
    """h1 = π h π with π = id - jr, then h2 = h1 d h1; (big, small, j, r) unchanged."""
    if c.check(side_conditions=True).passed:
        return c
    if not c.check(side_conditions=False).passed:
        raise ContractionError("input is not a deformation retract", c.check(False))
    pi = c.big.identity() - c.j @ c.r
    h1 = pi @ c.h @ pi
    h2 = h1 @ c.big.d @ h1
    return Contraction(c.big, c.small, c.j, c.r, h2).assert_valid()


def _inverse_degree0(M: GradedLinearMap) -> GradedLinearMap:
    bk = M.backend
    blocks = {}
    for i in M.source.degrees:
        blocks[i] = bk.inv(M.block(i))
    return GradedLinearMap(M.target, M.source, 0, blocks, bk)


def perturb_contraction(c: Contraction, delta: GradedLinearMap) -> Contraction:
    """Standard perturbation-lemma deformation for big differential d + delta."""
    bk = c.backend
    if delta.degree != 1 or delta.source != c.big.space:
        raise StructuralError("perturbation must be a degree +1 endomorphism of the big space")
    newd = c.big.d + delta
    if not (newd @ newd).is_zero():
        raise StructuralError("perturbed differential does not square to zero")
    # with j r = 1 - d h - h d the homotopy enters with the opposite sign
    one_plus = c.big.identity() + delta @ c.h
    for i in c.big.space.degrees:
        if bk.rank(one_plus.block(i)) < c.big.space.dim(i):
            raise StructuralError("id + delta h is singular")
    A = _inverse_degree0(one_plus) @ delta
    d_small = c.small.d + c.r @ A @ c.j
    j2 = c.j - c.h @ A @ c.j
    r2 = c.r - c.r @ A @ c.h
    h2 = c.h - c.h @ A @ c.h
    big = CochainComplex(c.big.space, newd)
    small = CochainComplex(c.small.space, d_small)
    return Contraction(big, small, j2, r2, h2).assert_valid()


# -- compatible pairs and the quasi-inverse package -------------------------

@dataclass
class CompatibleContractionPair:
    i: GradedLinearMap
    contraction: Contraction
    contraction_tilde: Contraction
    istar: GradedLinearMap
    complement: dict = field(default_factory=dict)   # degree -> basis of K (columns)
    corrected: bool = False

    def check(self, tol=None) -> Report:
        bk = self.i.backend
        c, ct, i, ist = self.contraction, self.contraction_tilde, self.i, self.istar
        rep = Report("compatible_pair")
        rep.add(residual_check("i j = j~ i*", list((i @ c.j - ct.j @ ist).blocks.values()), bk, tol))
        rep.add(residual_check("i* r = r~ i", list((ist @ c.r - ct.r @ i).blocks.values()), bk, tol))
        rep.add(residual_check("i h = h~ i", list((i @ c.h - ct.h @ i).blocks.values()), bk, tol))
        return rep


def _injective(i: GradedLinearMap) -> bool:
    bk = i.backend
    return all(bk.rank(i.block(d)) == i.source.dim(d) for d in i.source.degrees)


def adapted_contraction_pair(i: GradedLinearMap, F: CochainComplex, Ft: CochainComplex,
                             cF: Contraction | None = None) -> CompatibleContractionPair:
    """Contractions on F and F~ with i∘j = j~∘i*, i*∘r = r~∘i, i∘h = h~∘i.

    F~ is split as i(F) ⊕ K with K spanned by lifts x of a splitting of the
    acyclic quotient F~/i(F) together with their images d~x; K is then
    d~-stable by construction and h_K(d~x) = x.
    """
    bk = i.backend
    chk = validate_chain_map(i, F, Ft)
    if not chk.passed:
        raise StructuralError(f"i is not a chain map (residual {chk.residual})")
    if not _injective(i):
        raise StructuralError("i is not injective")
    cF = cF or elimination_contraction(F)
    V, Vt = F.space, Ft.space
    # candidate complement K0: standard vectors completing the image of i
    K0, Tfull = {}, {}
    for deg in Vt.degrees:
        n, m = Vt.dim(deg), V.dim(deg)
        Ii = i.block(deg)
        both = bk.hstack([Ii, bk.eye(n)], n)
        sel = [c - m for c in bk.pivot_columns(both) if c >= m]
        K0[deg] = sel
    # quotient differential in coordinates (i(F) | K0)
    coords = {}
    for deg in Vt.degrees:
        n, m = Vt.dim(deg), V.dim(deg)
        E = bk.from_dok({(a, c): 1 for c, a in enumerate(K0[deg])}, (n, len(K0[deg])))
        T = bk.hstack([i.block(deg), E], n)
        coords[deg] = (T, bk.inv(T), E)
    qdims = {deg: len(K0[deg]) for deg in Vt.degrees}
    Q = GradedVectorSpace(qdims)
    qblocks = {}
    for deg in Vt.degrees:
        if not Vt.dim(deg + 1):
            continue
        T, _, E = coords[deg]
        _, Tinv1, _ = coords[deg + 1]
        m1 = V.dim(deg + 1)
        full = bk.mm(Tinv1, bk.mm(Ft.d.block(deg), E))
        qblocks[deg] = bk.extract(full, range(m1, Vt.dim(deg + 1)), range(len(K0[deg])))
    Qc = CochainComplex(Q, GradedLinearMap(Q, Q, 1, qblocks, bk))
    if any(cohomology_ranks(Qc).values()):
        raise StructuralError("i does not induce an isomorphism on cohomology (quotient not acyclic)")
    # lift a splitting of the acyclic quotient
    x_cols, dx_cols = {}, {}
    for deg in Q.degrees:
        piv = bk.pivot_columns(Qc.d.block(deg))
        _, _, E = coords[deg]
        X = bk.extract(E, range(Vt.dim(deg)), piv)
        x_cols[deg] = X
        dx_cols[deg + 1] = bk.mm(Ft.d.block(deg), X)
    K = {}
    jt_blocks, rt_blocks, ht_blocks, proj_F = {}, {}, {}, {}
    splits = {}
    for deg in Vt.degrees:
        n, m = Vt.dim(deg), V.dim(deg)
        X = x_cols.get(deg, bk.zeros(n, 0))
        DX = dx_cols.get(deg, bk.zeros(n, 0))
        Kd = bk.hstack([X, DX], n)
        T = bk.hstack([i.block(deg), Kd], n)
        if T.shape[1] != n or bk.rank(T) != n:
            raise ContractionError(f"degree {deg}: complement does not split F~")
        K[deg] = Kd
        splits[deg] = (bk.inv(T), m, X.shape[1], DX.shape[1])
    for deg in Vt.degrees:
        Tinv, m, nx, ndx = splits[deg]
        n = Vt.dim(deg)
        proj_F[deg] = bk.extract(Tinv, range(m), range(n))           # F-coordinates
    projF = GradedLinearMap(Vt, V, 0, proj_F, bk)
    # h_K: d~x -> x, zero on x and on i(F)
    for deg in Vt.degrees:
        Tinv, m, nx, ndx = splits[deg]
        if not ndx:
            continue
        n = Vt.dim(deg)
        coord_dx = bk.extract(Tinv, range(m + nx, m + nx + ndx), range(n))
        ht_blocks[deg] = bk.mm(x_cols[deg - 1], coord_dx)
    hK = GradedLinearMap(Vt, Vt, -1, ht_blocks, bk)
    # transported contraction with small complex H(F)
    jt0 = i @ cF.j
    rt0 = cF.r @ projF
    ht = i @ cF.h @ projF + hK
    # express the small complex of F~ through deterministic representatives of H(F~)
    HFt = cohomology(Ft)
    S = cF.small.space
    St = GradedVectorSpace(HFt.ranks)
    ist_blocks = {}
    for deg in S.degrees:
        img = bk.mm(i.block(deg), cF.j.block(deg))
        ist_blocks[deg] = HFt.coordinates(deg, img)
    istar = GradedLinearMap(S, St, 0, ist_blocks, bk)
    inv_ist = _inverse_degree0(istar)
    small_t = _zero_complex(St, bk)
    jt = GradedLinearMap(St, Vt, 0, (jt0 @ inv_ist).blocks, bk)
    rt = GradedLinearMap(Vt, St, 0, (istar @ rt0).blocks, bk)
    ct = Contraction(Ft, small_t, jt, rt, ht).assert_valid()
    pair = CompatibleContractionPair(i, cF, ct, istar, K)
    rep = pair.check()
    if not rep.passed:
        raise ContractionError("compatibility relations violated", rep)
    return pair


@dataclass
class QuasiInversePackage:
    p: GradedLinearMap
    H: GradedLinearMap
    H_tilde: GradedLinearMap
    correction_H: GradedLinearMap
    correction_H_tilde: GradedLinearMap
    report: Report


def quasi_inverse_package(pair: CompatibleContractionPair, F: CochainComplex | None = None,
                          Ft: CochainComplex | None = None) -> QuasiInversePackage:
    """p = j (i*)⁻¹ r~, H = h - T, H~ = h~ + h~ E.

    E = (j~ i* - i j)(i*)⁻¹ r~ and T = j (i*)⁻¹ (r~ i - i* r) h are the explicit
    correctors; both vanish for a compatible pair, and the identities are
    asserted rather than assumed.
    """
    c, ct, i = pair.contraction, pair.contraction_tilde, pair.i
    F = F or c.big
    Ft = Ft or ct.big
    bk = i.backend
    inv_ist = _inverse_degree0(pair.istar)
    p = c.j @ inv_ist @ ct.r
    E = (ct.j @ pair.istar - i @ c.j) @ inv_ist @ ct.r
    Ht = ct.h + ct.h @ E
    T = c.j @ inv_ist @ (ct.r @ i - pair.istar @ c.r) @ c.h
    H = c.h - T
    rep = Report("quasi_inverse_package")
    ch = validate_chain_map(p, Ft, F)
    ch.name = "p chain map"
    rep.add(ch)
    r1 = F.identity() - p @ i - (F.d @ H + H @ F.d)
    rep.add(residual_check("id - p i = dH + Hd", list(r1.blocks.values()), bk))
    r2 = Ft.identity() - i @ p - (Ft.d @ Ht + Ht @ Ft.d)
    rep.add(residual_check("id - i p = d~H~ + H~d~", list(r2.blocks.values()), bk))
    rep.add(Check("H~ correction size", True, (ct.h @ E).max_abs()))
    rep.add(Check("H correction size", True, T.max_abs()))
    if not rep.passed:
        raise ContractionError("quasi-inverse identities violated", rep)
    return QuasiInversePackage(p, H, Ht, T, ct.h @ E, rep)


def two_form_homotopy(gamma: GradedPairing, Ht: GradedLinearMap, Tmap: GradedLinearMap) -> GradedPairing:
    """B γ(x, y) = (-1)^m [γ(H~x, y) - (-1)^{|x|} γ(T x, H~y)], T = i∘p.

    With 1 - T = d~H~ + H~d~ and T a chain map this satisfies
    L B + B L = 1 - T⊗T on constant two-forms of degree m.
    """
    m = gamma.degree
    left = gamma.precompose_left(Ht)
    right = gamma.precompose_right(Ht).precompose_left(Tmap).signed(lambda i: -_sgn(i))
    out = left + right
    return out.scale(_sgn(m)) if _sgn(m) == -1 else out


@dataclass
class TangentLift:
    form: GradedPairing
    raw: GradedPairing
    symmetrization_residual: float
    report: Report


def tangent_lift_two_form(pair: CompatibleContractionPair, pkg: QuasiInversePackage,
                          omega_t: GradedPairing, omega: GradedPairing, Ft: CochainComplex | None = None,
                          tol=None) -> TangentLift:
    """b~ = -B w~ with B the lift of H~ to constant two-forms; asserts p*w - w~ = L b~."""
    Ft = Ft or pair.contraction_tilde.big
    bk = omega_t.backend
    rep = Report("tangent_lift")
    closed = lie_derivative_pairing(Ft, omega_t)
    rep.add(residual_check("L w~ = 0", list(closed.blocks.values()), bk, tol))
    Tm = pair.i @ pkg.p
    raw = -two_form_homotopy(omega_t, pkg.H_tilde, Tm)
    sym = raw.antisymmetrized()
    lhs = omega.pullback(pkg.p) - omega_t
    for name, form in (("p*w - w~ = L b~", sym), ("p*w - w~ = L b~ (before antisymmetrization)", raw)):
        rep.add(residual_check(name, list((lhs - lie_derivative_pairing(Ft, form)).blocks.values()), bk, tol))
    if not rep.checks[0].passed or not rep.checks[1].passed:
        raise ContractionError("tangent lift identity violated", rep)
    return TangentLift(sym, raw, (raw - sym).max_abs(), rep)

"""Degree-k Poincaré complexes, Lie derivatives of pairings, weak equivalences.

Sign conventions
----------------
A pairing of degree m pairs degree i with degree -i-m and is stored as blocks
``w[i]`` of shape ``(dim_i, dim_{-i-m})`` so that ``w(x, y) = x^T w[i] y``.

Graded antisymmetry is taken in the Koszul form appropriate to a two-form whose
differentials ``δx`` carry degree ``|x| + 1``::

    w(x, y) = -(-1)^{|x||y| + m} w(y, x)

For even m this is the familiar ``-(-1)^{|x||y|}``; for odd m (the BV case
m = -1) the extra sign is what makes kinetic terms such as ``∫ φ⁺ Δφ``
compatible with the differential.
"""
from __future__ import annotations

from dataclasses import dataclass

from .backend import EXACT_BACKEND, ScalarBackend
from .graded import (Check, CochainComplex, GradedLinearMap, GradedVectorSpace, Report,
                     StructuralError, cohomology, induced_map_on_cohomology, residual_check,
                     validate_chain_map, validate_homotopy)


def swap_sign(i: int, j: int, m: int) -> int:
    """s with w(x, y) = s * w(y, x) for |x| = i, |y| = j, pairing degree m."""
    return -1 if (i * j + m) % 2 == 0 else 1


def _sgn(e):
    return -1 if e % 2 else 1


class GradedPairing:
    def __init__(self, space: GradedVectorSpace, degree: int, blocks: dict | None = None,
                 backend: ScalarBackend = EXACT_BACKEND):
        self.space, self.degree, self.backend = space, int(degree), backend
        self.blocks = {}
        for i, B in (blocks or {}).items():
            shape = (space.dim(i), space.dim(-i - degree))
            if tuple(B.shape) != shape:
                raise StructuralError(f"pairing block {i}: shape {tuple(B.shape)} != {shape}")
            if shape[0] and shape[1]:
                self.blocks[int(i)] = B

    def partner(self, i):
        return -i - self.degree

    def block(self, i):
        B = self.blocks.get(i)
        if B is None:
            return self.backend.zeros(self.space.dim(i), self.space.dim(self.partner(i)))
        return B

    @classmethod
    def zero(cls, space, degree, backend=EXACT_BACKEND):
        return cls(space, degree, {}, backend)

    def _like(self, blocks, degree=None):
        return GradedPairing(self.space, self.degree if degree is None else degree, blocks, self.backend)

    def __add__(self, other):
        self._check_parallel(other)
        return self._like({i: self.block(i) + other.block(i) for i in set(self.blocks) | set(other.blocks)})

    def __sub__(self, other):
        self._check_parallel(other)
        return self._like({i: self.block(i) - other.block(i) for i in set(self.blocks) | set(other.blocks)})

    def __neg__(self):
        return self._like({i: -B for i, B in self.blocks.items()})

    def scale(self, s):
        return self._like({i: self.backend.scale(B, s) for i, B in self.blocks.items()})

    def _check_parallel(self, other):
        if other.space != self.space or other.degree != self.degree:
            raise StructuralError("pairings live on different spaces or degrees")

    # -- transformations --------------------------------------------------
    def swapped(self):
        """The form (x, y) -> s(|x|,|y|) w(y, x); equals self iff self is graded antisymmetric."""
        bk, m = self.backend, self.degree
        out = {}
        for i in self.space.degrees:
            j = self.partner(i)
            B = self.blocks.get(j)
            if B is not None:
                out[i] = bk.scale(bk.T(B), swap_sign(i, j, m))
        return self._like(out)

    def antisymmetrized(self):
        return (self + self.swapped()).scale(_half(self.backend))

    def pullback(self, f: GradedLinearMap):
        """(f*w)(x, y) = w(f x, f y) for a degree-0 map f into self.space."""
        if f.degree != 0 or f.target != self.space:
            raise StructuralError("pullback needs a degree-0 map into the pairing's space")
        bk = self.backend
        out = {}
        for i in f.source.degrees:
            j = -i - self.degree
            B = self.blocks.get(i)
            if B is None or i not in f.blocks or j not in f.blocks:
                continue
            out[i] = bk.mm(bk.mm(bk.T(f.blocks[i]), B), f.blocks[j])
        return GradedPairing(f.source, self.degree, out, bk)

    def precompose_left(self, A: GradedLinearMap):
        """(x, y) -> w(A x, y); degree becomes m + |A|."""
        bk, a = self.backend, A.degree
        out = {}
        for i, Ai in A.blocks.items():
            B = self.blocks.get(i + a)
            if B is not None:
                out[i] = bk.mm(bk.T(Ai), B)
        return GradedPairing(self.space, self.degree + a, out, bk)

    def precompose_right(self, A: GradedLinearMap):
        """(x, y) -> w(x, A y); degree becomes m + |A|."""
        bk, a, m = self.backend, A.degree, self.degree
        out = {}
        for i, B in self.blocks.items():
            j = -i - m - a
            Aj = A.blocks.get(j)
            if Aj is not None:
                out[i] = bk.mm(B, Aj)
        return GradedPairing(self.space, m + a, out, bk)

    def signed(self, sign):
        """Multiply block i (first argument in degree i) by sign(i)."""
        return self._like({i: (B if sign(i) == 1 else self.backend.scale(B, sign(i)))
                           for i, B in self.blocks.items()})

    def evaluate(self, x: dict, y: dict):
        """w(x, y) for graded vectors given as {degree: column}."""
        bk = self.backend
        tot = 0
        for i, xi in x.items():
            j = -i - self.degree
            B = self.blocks.get(i)
            if B is None or j not in y:
                continue
            v = bk.mm(bk.mm(bk.T(xi), B), y[j])
            tot += _scalar(v, bk)
        return tot

    def total(self):
        """Full bilinear-form matrix over the concatenated degrees (ascending)."""
        bk = self.backend
        degs = self.space.degrees
        sizes = [self.space.dim(i) for i in degs]
        grid = [[self.blocks.get(i) if j == -i - self.degree else None for j in degs] for i in degs]
        return bk.block(grid, sizes, sizes)

    def max_abs(self):
        return max((self.backend.max_abs(B) for B in self.blocks.values()), default=0.0)

    def is_zero(self, tol=None):
        return all(self.backend.is_zero(B, tol) for B in self.blocks.values())

    def to_backend(self, backend):
        return GradedPairing(self.space, self.degree,
                             {i: backend.convert(B) for i, B in self.blocks.items()}, backend)

    def __repr__(self):
        return f"GradedPairing(deg={self.degree}, {self.space.dims})"


def _half(bk):
    from fractions import Fraction
    return Fraction(1, 2) if bk.exact else 0.5


def _scalar(v, bk):
    if bk.exact:
        d = v.to_dod()
        val = d.get(0, {}).get(0, 0)
        from fractions import Fraction
        return Fraction(int(val.numerator), int(val.denominator)) if val else Fraction(0)
    return float(v[0, 0])


@dataclass
class PoincareComplex:
    complex: CochainComplex
    pairing: GradedPairing

    def __post_init__(self):
        if self.pairing.space != self.complex.space:
            raise StructuralError("pairing and complex live on different spaces")

    @property
    def k(self):
        return self.pairing.degree

    @property
    def space(self):
        return self.complex.space

    @property
    def d(self):
        return self.complex.d

    @property
    def backend(self):
        return self.complex.backend

    def to_backend(self, backend):
        return PoincareComplex(self.complex.to_backend(backend), self.pairing.to_backend(backend))


@dataclass
class RelativePoincareComplex:
    bulk: CochainComplex
    pairing: GradedPairing
    boundary: PoincareComplex
    pi: GradedLinearMap

    @property
    def k(self):
        return self.pairing.degree


@dataclass
class WeakEquivalenceData:
    f: GradedLinearMap
    g: GradedLinearMap
    H: GradedLinearMap
    H_tilde: GradedLinearMap
    beta: GradedPairing
    beta_tilde: GradedPairing
    pi: GradedLinearMap | None = None
    pi_tilde: GradedLinearMap | None = None


# -- structural checks -------------------------------------------------------

def antisymmetry_residual(w: GradedPairing):
    return [B for B in (w - w.swapped()).blocks.values()]


def compatibility_defect(C: CochainComplex, w: GradedPairing) -> GradedPairing:
    """(x, y) -> w(d x, y) - (-1)^{|x|} w(x, d y)."""
    left = w.precompose_left(C.d)
    right = w.precompose_right(C.d).signed(lambda i: _sgn(i))
    return left - right


def check_poincare(P: PoincareComplex) -> Report:
    w, bk = P.pairing, P.backend
    rep = Report("poincare")
    for i in P.space.degrees:
        if P.space.dim(i) != P.space.dim(w.partner(i)):
            raise StructuralError(f"degree {i} and {w.partner(i)} have different dimensions")
    rep.add(residual_check("antisymmetry", antisymmetry_residual(w), bk))
    deficient = {i: P.space.dim(i) - bk.rank(w.block(i)) for i in P.space.degrees}
    deficient = {i: r for i, r in deficient.items() if r}
    rep.add(Check("nondegeneracy", not deficient, float(sum(deficient.values())),
                  {"rank_deficit": {str(i): r for i, r in deficient.items()}}))
    rep.add(residual_check("compatibility", list(compatibility_defect(P.complex, w).blocks.values()), bk))
    return rep


def quadratic_action(P: PoincareComplex, x: dict):
    """S(x) = ½ w(d x, x)."""
    dx = P.d.apply(x)
    val = P.pairing.evaluate(dx, x)
    return val * _half(P.backend)


def action_matrix(P: PoincareComplex):
    """Symmetric matrix Q with S(x) = xᵀ Q x on the concatenated coordinates."""
    bk = P.backend
    M = bk.mm(bk.T(P.d.total()), P.pairing.total())
    return bk.scale(M + bk.T(M), _half(bk) * _half(bk))


def lie_derivative_pairing(C: CochainComplex | PoincareComplex, beta: GradedPairing) -> GradedPairing:
    """(L_Q b)(x, y) = (-1)^{m+1} (b(d x, y) + (-1)^{|x|+1} b(x, d y)), m = deg b."""
    if isinstance(C, PoincareComplex):
        C = C.complex
    if beta.space != C.space:
        raise StructuralError("pairing lives on a different space")
    m = beta.degree
    left = beta.precompose_left(C.d)
    right = beta.precompose_right(C.d).signed(lambda i: _sgn(i + 1))
    out = left + right
    return out.scale(_sgn(m + 1)) if _sgn(m + 1) == -1 else out


def _pairing_check(name, lhs: GradedPairing, rhs: GradedPairing, bk, tol=None):
    return residual_check(name, list((lhs - rhs).blocks.values()), bk, tol)


def verify_weak_equivalence(P: PoincareComplex, Pt: PoincareComplex, W: WeakEquivalenceData,
                            tol=None) -> Report:
    bk = P.backend
    rep = Report("weak_equivalence")
    if W.H.degree != -1 or W.H_tilde.degree != -1:
        raise StructuralError("homotopies must have degree -1")
    if W.beta.degree != P.k - 1 or W.beta_tilde.degree != Pt.k - 1:
        raise StructuralError("beta forms must have degree k-1")
    C, Ct = P.complex, Pt.complex
    rep.add(_rename(validate_chain_map(W.f, C, Ct), "f chain map"))
    rep.add(_rename(validate_chain_map(W.g, Ct, C), "g chain map"))
    rep.add(_rename(validate_homotopy(C.identity() - W.g @ W.f, W.H, C, ""), "dH+Hd=id-gf"))
    rep.add(_rename(validate_homotopy(Ct.identity() - W.f @ W.g, W.H_tilde, Ct, ""), "dH~+H~d=id-fg"))
    rep.add(_pairing_check("f*w~ = w + L b", Pt.pairing.pullback(W.f),
                           P.pairing + lie_derivative_pairing(C, W.beta), bk, tol))
    rep.add(_pairing_check("g*w = w~ + L b~", P.pairing.pullback(W.g),
                           Pt.pairing + lie_derivative_pairing(Ct, W.beta_tilde), bk, tol))
    rep.add(quasi_inverse_check(W.f, W.g, C, Ct))
    if W.pi is not None and W.pi_tilde is not None:
        rep.add(residual_check("pi~ f = pi", list((W.pi_tilde @ W.f - W.pi).blocks.values()), bk, tol))
        rep.add(residual_check("pi g = pi~", list((W.pi @ W.g - W.pi_tilde).blocks.values()), bk, tol))
        rep.add(residual_check("pi H = 0", list((W.pi @ W.H).blocks.values()), bk, tol))
        rep.add(residual_check("pi~ H~ = 0", list((W.pi_tilde @ W.H_tilde).blocks.values()), bk, tol))
    return rep


def _rename(c: Check, name: str) -> Check:
    c.name = name
    return c


def quasi_inverse_check(f, g, C, Ct) -> Check:
    """Induced maps on cohomology are mutually inverse."""
    bk = f.backend
    if not (validate_chain_map(f, C, Ct).passed and validate_chain_map(g, Ct, C).passed):
        return Check("quasi-inverse on cohomology", False, float("inf"), {"reason": "not chain maps"})
    HC, HCt = cohomology(C), cohomology(Ct)
    fs = induced_map_on_cohomology(f, C, Ct, HC, HCt).matrices
    gs = induced_map_on_cohomology(g, Ct, C, HCt, HC).matrices
    mats = []
    for i in set(fs) | set(gs):
        a, b = fs.get(i), gs.get(i)
        if a is None or b is None:
            continue
        mats.append(bk.mm(b, a) - bk.eye(a.shape[1]))
        mats.append(bk.mm(a, b) - bk.eye(b.shape[1]))
    nz = lambda d: {i: r for i, r in d.items() if r}
    ranks_match = nz(HC.ranks) == nz(HCt.ranks)
    chk = residual_check("quasi-inverse on cohomology", mats, bk)
    chk.passed = chk.passed and ranks_match
    chk.detail = {"betti": {str(i): r for i, r in nz(HC.ranks).items()}}
    return chk


# -- Lemma-level constructions ----------------------------------------------

class PreconditionError(ValueError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (residual {residual})")
        self.residual = residual


@dataclass
class BetaTilde:
    form: GradedPairing
    raw: GradedPairing
    symmetrization_residual: float


def beta_tilde_from_contraction(P: PoincareComplex, Pt: PoincareComplex, f: GradedLinearMap,
                                g: GradedLinearMap, Ht: GradedLinearMap, tol: float = 1e-9) -> BetaTilde:
    """The explicit two-form with g*w - w~ = L_{Q~} b~, built from w~, d~ and H~ only.

    b~(x,y) = (-1)^{k+1} [ w~(H~x, y) + (-1)^{|x|+1} w~(x, H~y)
                          + ½(-w~(H~x, H~d~y) + (-1)^{|x|} w~(H~d~x, H~y))
                          - w~(H~x, d~H~y) ]
    """
    bk = Pt.backend
    pre = Pt.pairing.pullback(f) - P.pairing
    rel = pre.max_abs() / max(1.0, P.pairing.max_abs())
    if not pre.is_zero(None if bk.exact else tol * max(1.0, P.pairing.max_abs())):
        raise PreconditionError("f*w~ != w", rel)
    w, d, H, k = Pt.pairing, Pt.d, Ht, Pt.k
    half = _half(bk)
    t1 = w.precompose_left(H)
    t2 = w.precompose_right(H).signed(lambda i: _sgn(i + 1))
    t3 = w.precompose_left(H).precompose_right(H @ d).scale(-half)
    t4 = w.precompose_left(H @ d).precompose_right(H).signed(lambda i: _sgn(i)).scale(half)
    t5 = w.precompose_left(H).precompose_right(d @ H).scale(-1)
    raw = _sum_forms([t1, t2, t3, t4, t5], k - 1, Pt.space, bk).scale(_sgn(k + 1))
    sym = raw.antisymmetrized()
    return BetaTilde(sym, raw, (raw - sym).max_abs())


def _sum_forms(forms, degree, space, bk):
    out = GradedPairing.zero(space, degree, bk)
    for f in forms:
        if f.degree != degree:
            raise StructuralError("degree bookkeeping error")
        out = out + f
    return out


def iota_iota(P: PoincareComplex, beta: GradedPairing):
    """Symmetric matrix of x -> ι_Q ι_Q b evaluated on real coordinates.

    The super-evaluation of b(Qx, Qx) weights the component of x in degree i by
    (-1)^{k+1+i}; on even-degree fields with k = -1 this is b(d x, d x).
    """
    bk = P.backend
    k = P.k
    D = P.d.total()
    Dsigned = P.d.signed(lambda i: _sgn(k + 1 + i)).total()
    M = bk.mm(bk.mm(bk.T(Dsigned), beta.total()), D)
    return bk.scale(M + bk.T(M), half_sq(bk))


def half_sq(bk):
    return _half(bk) * _half(bk) * 2


def action_relation_check(P: PoincareComplex, Pt: PoincareComplex, f: GradedLinearMap,
                          beta: GradedPairing, tol=None) -> Report:
    """S~(f x) = S(x) - ½ ι_Q ι_Q b as quadratic forms (exact equality; S(0) = 0 fixes the constant)."""
    bk = P.backend
    rep = Report("action_relation")
    Ft = f.total()
    lhs = bk.mm(bk.mm(bk.T(Ft), action_matrix(Pt)), Ft)
    rhs = action_matrix(P) - bk.scale(iota_iota(P, beta), _half(bk))
    chk = residual_check("f*S~ = S - ½ι_Qι_Qb", lhs - rhs, bk, tol)
    chk.detail["constant_shift"] = "none: both sides are quadratic forms vanishing at 0"
    rep.add(chk)
    return rep


def relative_defect(C: CochainComplex, w: GradedPairing) -> GradedPairing:
    """(x, y) -> w(d x, y) + (-1)^{|x|+1} w(x, d y)."""
    left = w.precompose_left(C.d)
    right = w.precompose_right(C.d).signed(lambda i: _sgn(i + 1))
    return left + right


def check_relative(RP: RelativePoincareComplex, tol=None) -> Report:
    bk = RP.bulk.backend
    k = RP.k
    rep = Report("relative_poincare")
    lhs = relative_defect(RP.bulk, RP.pairing)
    rhs = RP.boundary.pairing.pullback(RP.pi).scale(_sgn(k + 1))
    rep.add(_pairing_check("relative compatibility", lhs, rhs, bk, tol))
    rep.add(_rename(validate_chain_map(RP.pi, RP.bulk, RP.boundary.complex), "pi chain map"))
    deficit = {i: RP.boundary.space.dim(i) - bk.rank(RP.pi.block(i)) for i in RP.boundary.space.degrees}
    deficit = {i: r for i, r in deficit.items() if r}
    rep.add(Check("pi surjective", not deficit, float(sum(deficit.values())),
                  {"rank_deficit": {str(i): r for i, r in deficit.items()}}))
    rep.add(_rename(hamiltonian_relation(RP, tol), "hamiltonian relation (reported)"))
    return rep


def hamiltonian_relation(RP: RelativePoincareComplex, tol=None) -> Check:
    """ι_Q w = δS - π*α' with α'(x; v) = ½ w'(x, v), on even-degree fields x.

    Real coordinates see only the even (bosonic) components of x; the odd
    components carry Koszul signs that a real-valued evaluation cannot
    reproduce, so the residual is taken over even-degree x and all v.
    """
    bk = RP.bulk.backend
    D, W = RP.bulk.d.total(), RP.pairing.total()
    Pi, Wb = RP.pi.total(), RP.boundary.pairing.total()
    half = _half(bk)
    iq = bk.mm(bk.T(D), W)                       # rows x, cols v: w(dx, v)
    dS = bk.scale(iq + bk.T(iq), half)           # ½ (w(dx, v) + w(dv, x))
    alpha = bk.scale(bk.mm(bk.mm(bk.T(Pi), Wb), Pi), half)
    R = iq - dS + alpha
    even = _even_rows(RP.bulk.space)
    R = bk.extract(R, even, range(R.shape[1]))
    return residual_check("hamiltonian relation", R, bk, tol)


def _even_rows(V: GradedVectorSpace):
    out, o = [], 0
    for i in V.degrees:
        n = V.dim(i)
        if i % 2 == 0:
            out.extend(range(o, o + n))
        o += n
    return out

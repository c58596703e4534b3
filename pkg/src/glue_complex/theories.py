"""Field theories as Poincaré complexes on DEC grids, their cuts, and glued models.

A theory is a list of summands (field component, primal or dual cochains of a
given form degree, internal degree) plus arrows of d_Q between them.  The
upper row of each diagram lives on primal cochains and the lower row on dual
cochains, so the wedge pairing between them is a signed permutation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .backend import EXACT_BACKEND, ScalarBackend
from .dec import CutGeometry, DecPackage, GridTorus
from .graded import (CochainComplex, GradedLinearMap, GradedVectorSpace, Report, StructuralError,
                     cohomology, cohomology_ranks, induced_map_on_cohomology, residual_check,
                     validate_chain_map, validate_complex)
from .sympair import (GradedPairing, PoincareComplex, RelativePoincareComplex, _sgn, check_poincare,
                      check_relative, relative_defect, swap_sign)

KINDS = ("CS", "BF", "Scalar2", "PForm1", "PForm2")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TheoryDescriptor:
    kind: str
    n: int
    p: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown theory {self.kind!r}")
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "CS" and self.n != 3:
            raise ValueError("Chern-Simons needs n = 3")
        if self.kind == "Scalar2" and self.p != 0:
            raise ValueError("the scalar field is the p = 0 second-order theory")
        if self.kind in ("BF", "PForm1", "PForm2") and not 0 <= self.p <= self.n - 1:
            raise ValueError("need 0 <= p <= n-1")

    @property
    def first_order(self):
        return self.kind in ("CS", "BF")

    @property
    def has_star(self):
        return self.kind in ("Scalar2", "PForm1", "PForm2")

    def name(self):
        if self.kind in ("CS", "Scalar2"):
            return f"{self.kind}(n={self.n})"
        return f"{self.kind}(n={self.n},p={self.p})"


@dataclass(frozen=True)
class Summand:
    name: str
    side: str            # "P" primal cochains, "D" dual cochains
    form: int
    degree: int          # internal degree = form degree - shift

    @property
    def ghost(self):
        return -self.degree

    @property
    def upper(self):
        return self.side == "P"


@dataclass(frozen=True)
class Arrow:
    src: str
    tgt: str
    op: str              # "d", "star" (D^j -> P^{n-j}), "dsd" (d ⋆⁻¹ d: P^p -> D^{n-p})
    sign: int = 1


@dataclass
class Layout:
    summands: list
    arrows: list
    pairs: list          # (upper name, lower name): primal j with dual n - j
    scale: Fraction = Fraction(1)

    def get(self, name) -> Summand:
        for s in self.summands:
            if s.name == name:
                return s
        raise KeyError(name)


def _ghost_names(p):
    return {j: f"c{p - j}" for j in range(p)}


def layout(theory: TheoryDescriptor) -> Layout:
    n, p, kind = theory.n, theory.p, theory.kind
    if kind in ("BF", "CS"):
        if kind == "CS":
            p = 1
        q = n - p - 1
        up = [Summand(f"A{j}", "P", j, j - p) for j in range(n + 1)]
        lo = [Summand(f"B{j}", "D", j, j - q) for j in range(n + 1)]
        arrows = [Arrow(f"A{j}", f"A{j + 1}", "d") for j in range(n)]
        arrows += [Arrow(f"B{j}", f"B{j + 1}", "d") for j in range(n)]
        pairs = [(f"A{j}", f"B{n - j}") for j in range(n + 1)]
        scale = Fraction(-1, 2) if kind == "CS" else Fraction(1)
        return Layout(up + lo, arrows, pairs, scale)
    if kind == "PForm1":
        q = n - p - 1
        names = _ghost_names(p)
        names[p], names[p + 1] = "A", "B+"
        up = [Summand(names[j], "P", j, j - p) for j in range(p + 2)]
        lo_names = {q: "B", q + 1: "A+"}
        for m in range(1, p + 1):
            lo_names[q + 1 + m] = f"c{m}+"
        lo = [Summand(lo_names[j], "D", j, j - q) for j in range(q, n + 1)]
        arrows = [Arrow(up[i].name, up[i + 1].name, "d") for i in range(len(up) - 1)]
        arrows += [Arrow(lo[i].name, lo[i + 1].name, "d") for i in range(len(lo) - 1)]
        arrows.append(Arrow("B", "B+", "star"))
        pairs = [(s.name, lo_names[n - s.form]) for s in up]
        return Layout(up + lo, arrows, pairs)
    # second order: Scalar2 is PForm2 with p = 0
    q = n - p
    names = _ghost_names(p)
    names[p] = "phi" if kind == "Scalar2" else "A"
    up = [Summand(names[j], "P", j, j - p) for j in range(p + 1)]
    lo_names = {q: "phi+" if kind == "Scalar2" else "A+"}
    for m in range(1, p + 1):
        lo_names[q + m] = f"c{m}+"
    lo = [Summand(lo_names[j], "D", j, j - q + 1) for j in range(q, n + 1)]
    arrows = [Arrow(up[i].name, up[i + 1].name, "d") for i in range(len(up) - 1)]
    arrows += [Arrow(lo[i].name, lo[i + 1].name, "d") for i in range(len(lo) - 1)]
    arrows.append(Arrow(up[-1].name, lo[0].name, "dsd"))
    pairs = [(s.name, lo_names[n - s.form]) for s in up]
    return Layout(up + lo, arrows, pairs)


# -- cell selections -------------------------------------------------------------

@dataclass
class Selection:
    """Kept primal/dual cells per form degree and, per primal degree, the owned (cell, dual) pairs."""
    primal: list
    dual: list
    owned: list

    @classmethod
    def full(cls, pkg: DecPackage):
        n = pkg.grid.n
        allc = [np.arange(pkg.idx[k].size) for k in range(n + 1)]
        return cls(allc, list(allc), [np.ones(pkg.idx[k].size, dtype=bool) for k in range(n + 1)])


def _arc_member(centers, span, axis, lo, length, N2):
    """Closure inside the arc [lo, lo + length] (half units, periodic)."""
    t = np.mod(centers[:, axis] - lo, N2)
    e = span[:, axis].astype(int)
    return (t - e >= 0) & (t + e <= length)


def piece_selections(pkg: DecPackage, cut: CutGeometry):
    """Primal cells of M_j have closure in [s_j, s_{j+1}]; dual cells use [s_j + ½, s_{j+1} + ½]."""
    n, a = pkg.grid.n, cut.axis
    N2 = 2 * pkg.grid.sizes[a]
    sl = sorted(cut.slices)
    if len(sl) != 2:
        raise ModelError("a glued model needs two slices (a closed Σ separating M)")
    arcs = [(2 * sl[0], 2 * (sl[1] - sl[0])), (2 * sl[1], N2 - 2 * (sl[1] - sl[0]))]
    out = []
    for lo, length in arcs:
        prim, dual, pm = [], [], []
        for k in range(n + 1):
            c, s = pkg.centers(k)
            m = _arc_member(c, s, a, lo, length, N2)
            cd, sd = pkg.centers(k, dual=True)
            md = _arc_member(cd, sd, a, lo + 1, length, N2)
            prim.append(m)
            dual.append(md)
        owned = []
        for k in range(n + 1):
            pos, _ = pkg.dual_position(k)
            owned.append(prim[k] & dual[n - k][pos])
        out.append((prim, dual, owned))
    sels = [Selection([np.flatnonzero(m) for m in pr], [np.flatnonzero(m) for m in du], ow)
            for pr, du, ow in out]
    # every (cell, dual cell) pair belongs to exactly one piece
    for k in range(n + 1):
        cnt = sels[0].owned[k].astype(int) + sels[1].owned[k].astype(int)
        if not np.all(cnt == 1):
            raise ModelError("pair ownership is not a partition")
    return sels


def interface_selection(pkg: DecPackage, cut: CutGeometry):
    """Σ: primal cells not spanning the axis on a slice; Σ*: dual cells not spanning it at slice + ½."""
    n, a = pkg.grid.n, cut.axis
    N2 = 2 * pkg.grid.sizes[a]
    prim, dual = [], []
    for k in range(n + 1):
        c, s = pkg.centers(k)
        cd, sd = pkg.centers(k, dual=True)
        mp = np.zeros(len(c), dtype=bool)
        md = np.zeros(len(cd), dtype=bool)
        for sv in cut.slices:
            mp |= (~s[:, a]) & (c[:, a] == (2 * sv) % N2)
            md |= (~sd[:, a]) & (cd[:, a] == (2 * sv + 1) % N2)
        prim.append(np.flatnonzero(mp))
        dual.append(np.flatnonzero(md))
    return prim, dual


# -- assembly ----------------------------------------------------------------------

@dataclass
class FieldComplex:
    theory: TheoryDescriptor
    poincare: PoincareComplex
    slots: dict          # summand name -> (degree, offset, cell indices)
    layout: Layout
    pkg: DecPackage | None = None

    @property
    def complex(self):
        return self.poincare.complex

    @property
    def space(self):
        return self.poincare.space

    def component(self, name):
        return self.slots[name]


def _arrow_matrix(pkg: DecPackage, L: Layout, ar: Arrow, src: Summand, tgt: Summand):
    bk, n = pkg.bk, pkg.grid.n
    if ar.op == "d":
        M = pkg.d[src.form]
    elif ar.op == "star":
        M = pkg.star_dual[src.form]
    elif ar.op == "dsd":
        j = n - src.form - 1
        M = bk.mm(bk.mm(pkg.d[j], pkg.star_dual_inv(j)), pkg.d[src.form])
    else:
        raise ValueError(ar.op)
    return bk.scale(M, ar.sign)


def _owned_diag(bk, mask):
    return bk.diag([1 if m else 0 for m in mask])


def assemble(theory: TheoryDescriptor, pkg: DecPackage, sel: Selection | None = None,
             ops: tuple = ("d", "star", "dsd")) -> FieldComplex:
    bk, n = pkg.bk, pkg.grid.n
    sel = sel or Selection.full(pkg)
    L = layout(theory)
    slots, dims = {}, {}
    for s in L.summands:
        cells = sel.primal[s.form] if s.side == "P" else sel.dual[s.form]
        off = dims.get(s.degree, 0)
        slots[s.name] = (s.degree, off, cells)
        dims[s.degree] = off + len(cells)
    V = GradedVectorSpace(dims, {i: _labels(L, slots, i) for i in dims})
    dgrid = {}
    for ar in L.arrows:
        if ar.op not in ops:
            continue
        src, tgt = L.get(ar.src), L.get(ar.tgt)
        M = _arrow_matrix(pkg, L, ar, src, tgt)
        if ar.op == "star":
            # only the owned (cell, dual) pairs carry the ⋆ coupling
            M = bk.mm(_owned_diag(bk, sel.owned[tgt.form]), M)
        _, r0, rc = slots[tgt.name]
        _, c0, cc = slots[src.name]
        dgrid.setdefault(src.degree, []).append((r0, c0, bk.extract(M, rc, cc)))
    dblocks = {i: _place_blocks(bk, parts, dims.get(i + 1, 0), dims[i]) for i, parts in dgrid.items()
               if dims.get(i + 1)}
    C = CochainComplex(V, GradedLinearMap(V, V, 1, dblocks, bk))
    w = _pairing(theory, pkg, L, slots, sel, V)
    return FieldComplex(theory, PoincareComplex(C, w), slots, L, pkg)


def _labels(L, slots, i):
    out = []
    for s in L.summands:
        deg, _, cells = slots[s.name]
        if deg == i:
            out.extend(f"{s.name}[{s.side}{s.form}:{int(c)}]" for c in cells)
    return out


def _place_blocks(bk, parts, rows, cols):
    ent = {}
    for r0, c0, B in parts:
        if bk.exact:
            for i, row in B.to_dod().items():
                for j, v in row.items():
                    ent[(r0 + i, c0 + j)] = ent.get((r0 + i, c0 + j), 0) + v
        else:
            nz = np.nonzero(B)
            for i, j in zip(*nz):
                ent[(r0 + i, c0 + j)] = ent.get((r0 + i, c0 + j), 0) + B[i, j]
    if bk.exact:
        from sympy import QQ
        from sympy.polys.matrices import DomainMatrix
        dod = {}
        for (i, j), v in ent.items():
            if v:
                dod.setdefault(i, {})[j] = v
        return DomainMatrix(dod, (rows, cols), QQ)
    M = np.zeros((rows, cols))
    for (i, j), v in ent.items():
        M[i, j] = v
    return M


def _pairing(theory, pkg, L: Layout, slots, sel: Selection, V: GradedVectorSpace) -> GradedPairing:
    """ω(ℬ, 𝒜) = c (-1)^n ∫ ℬ∧𝒜 on owned pairs; the (𝒜, ℬ) block follows by graded antisymmetry.

    Splitting the superfields into components costs the Koszul sign
    (-1)^{j(n+p)} on the pair (𝒜 form degree j, ℬ form degree n-j).
    """
    bk, n, k = pkg.bk, pkg.grid.n, -1
    p = 1 if theory.kind == "CS" else theory.p
    parts = {}
    for up_name, lo_name in L.pairs:
        A, B = L.get(up_name), L.get(lo_name)
        j = A.form
        W = bk.mm(_owned_diag(bk, sel.owned[j]), pkg.wedge[j])          # ∫ a∧b = aᵀ W b
        c = L.scale * (-1) ** n * (-1) ** (j * (n - j)) * (-1) ** (j * (n + p))
        dA, oA, cA = slots[up_name]
        dB, oB, cB = slots[lo_name]
        WBA = bk.scale(bk.T(bk.extract(W, cA, cB)), c)                    # rows ℬ, cols 𝒜
        parts.setdefault(dB, []).append((oB, oA, WBA))
        WAB = bk.scale(bk.T(WBA), swap_sign(dB, dA, k))
        parts.setdefault(dA, []).append((oA, oB, WAB))
    blocks = {i: _place_blocks(bk, ps, V.dim(i), V.dim(-i - k)) for i, ps in parts.items()}
    return GradedPairing(V, k, blocks, bk)


def build_bulk(theory: TheoryDescriptor, grid: GridTorus | DecPackage, backend: ScalarBackend = EXACT_BACKEND,
               check=True) -> FieldComplex:
    pkg = grid if isinstance(grid, DecPackage) else DecPackage(grid, backend)
    if pkg.grid.n != theory.n:
        raise ValueError(f"{theory.name()} needs an {theory.n}-dimensional grid")
    F = assemble(theory, pkg)
    if check:
        rep = check_poincare(F.poincare)
        rep.add(validate_complex(F.complex))
        if not rep.passed:
            raise ModelError(f"{theory.name()} is not a Poincaré complex: {rep.as_dict()}")
    return F


# -- boundary and glued models -----------------------------------------------------

@dataclass
class BoundaryPhaseSpace:
    poincare: PoincareComplex | None
    complex: CochainComplex
    pi: list             # one projection per piece
    pieces: list         # FieldComplex per piece
    relative: list       # RelativePoincareComplex per piece (first-order theories) or []
    report: Report


def _interface_complex(theory, pkg, L, iface):
    """Cochains of Σ and Σ* with the de Rham arrows of the layout, as a complex."""
    bk = pkg.bk
    prim, dual = iface
    slots, dims = {}, {}
    for s in L.summands:
        cells = prim[s.form] if s.side == "P" else dual[s.form]
        off = dims.get(s.degree, 0)
        slots[s.name] = (s.degree, off, cells)
        dims[s.degree] = off + len(cells)
    V = GradedVectorSpace(dims)
    dgrid = {}
    for ar in L.arrows:
        if ar.op != "d":
            continue
        src, tgt = L.get(ar.src), L.get(ar.tgt)
        M = pkg.d[src.form]
        _, r0, rc = slots[tgt.name]
        _, c0, cc = slots[src.name]
        if len(rc) and len(cc):
            dgrid.setdefault(src.degree, []).append((r0, c0, bk.extract(M, rc, cc)))
    dblocks = {i: _place_blocks(bk, parts, dims.get(i + 1, 0), dims[i]) for i, parts in dgrid.items()
               if dims.get(i + 1) and dims.get(i)}
    return CochainComplex(V, GradedLinearMap(V, V, 1, dblocks, bk)), slots


def _selection_map(bk, src_slots, tgt_slots, Vs, Vt, names):
    """Restriction F_src -> F_tgt matching cells by their global index."""
    blocks = {}
    for i in Vt.degrees:
        ent = {}
        for nm in names:
            dt, ot, ct = tgt_slots[nm]
            ds, os_, cs = src_slots[nm]
            if dt != i:
                continue
            where = {int(c): r for r, c in enumerate(cs)}
            for r, c in enumerate(ct):
                if int(c) not in where:
                    raise ModelError(f"cell {int(c)} of {nm} missing from the source")
                ent[(ot + r, os_ + where[int(c)])] = 1
        if Vs.dim(i):
            blocks[i] = bk.from_dok(ent, (Vt.dim(i), Vs.dim(i)))
    return GradedLinearMap(Vs, Vt, 0, blocks, bk)


def _factor_through(D: GradedPairing, pi: GradedLinearMap, Vb: GradedVectorSpace, bk):
    """Find w' of degree k+1 on Vb with D = π*w' (π a coordinate selection)."""
    blocks = {}
    k1 = D.degree
    for i in Vb.degrees:
        j = -i - k1
        if not Vb.dim(j):
            continue
        P_i, P_j = pi.block(i), pi.block(j)
        Db = D.block(i)
        # π is a selection, so π πᵀ = 1 and πᵀ is a right inverse
        blocks[i] = bk.mm(bk.mm(P_i, Db), bk.T(P_j))
    return GradedPairing(Vb, k1, blocks, bk)


def build_boundary(theory: TheoryDescriptor, pkg: DecPackage, cut: CutGeometry) -> BoundaryPhaseSpace:
    bk = pkg.bk
    L = layout(theory)
    sels = piece_selections(pkg, cut)
    ops = ("d", "star") if theory.first_order else ("d",)
    pieces = [assemble(theory, pkg, s, ops=ops) for s in sels]
    Cb, bslots = _interface_complex(theory, pkg, L, interface_selection(pkg, cut))
    names = [s.name for s in L.summands]
    pis = [_selection_map(bk, P.slots, bslots, P.space, Cb.space, names) for P in pieces]
    rep = Report("boundary")
    for j, (P, pi) in enumerate(zip(pieces, pis)):
        rep.add(_named(validate_complex(P.complex), f"piece {j + 1} d^2=0"))
        rep.add(_named(validate_chain_map(pi, P.complex, Cb), f"pi{j + 1} chain map"))
        deficit = sum(Cb.space.dim(i) - bk.rank(pi.block(i)) for i in Cb.space.degrees)
        rep.add(_check(f"pi{j + 1} surjective", deficit == 0, deficit))
    relative, Pb = [], None
    if theory.first_order:
        sign = _sgn(-1 + 1)             # relative defect = (-1)^{k+1} π*w', k = -1
        wbs = [_factor_through(relative_defect(P.complex, P.poincare.pairing), pi, Cb.space, bk).scale(sign)
               for P, pi in zip(pieces, pis)]
        Pb = PoincareComplex(Cb, wbs[0])
        rep.extend(check_poincare(Pb), prefix="boundary ")
        rep.add(residual_check("opposite orientations", [B for B in (wbs[0] + wbs[1]).blocks.values()], bk))
        for j, (P, pi, wb) in enumerate(zip(pieces, pis, wbs)):
            RP = RelativePoincareComplex(P.complex, P.poincare.pairing, PoincareComplex(Cb, wb), pi)
            relative.append(RP)
            for c in check_relative(RP).checks:
                if c.name != "hamiltonian relation (reported)":
                    rep.add(_named(c, f"piece {j + 1} {c.name}"))
    return BoundaryPhaseSpace(Pb, Cb, pis, pieces, relative, rep)


def _named(c, name):
    from .graded import Check
    return Check(name, c.passed, c.residual, c.detail)


def _check(name, ok, residual, **detail):
    from .graded import Check
    return Check(name, bool(ok), float(residual), detail)


@dataclass
class GluedModel:
    theory: TheoryDescriptor
    F: PoincareComplex
    Ft: PoincareComplex
    i: GradedLinearMap
    p_pieces: list
    boundary: BoundaryPhaseSpace | None
    report: Report
    degenerate: bool
    transported: bool = False
    bulk: FieldComplex | None = None
    cut: CutGeometry | None = None
    note: str = ""
    i_inverse: GradedLinearMap | None = None

    @property
    def backend(self):
        return self.F.backend

    @property
    def passed(self):
        return self.report.passed


def _model_checks(rep: Report, F: PoincareComplex, Ft: PoincareComplex, i: GradedLinearMap):
    bk = F.backend
    rep.add(validate_complex(F.complex))
    rep.add(_named(validate_complex(Ft.complex), "d~^2=0"))
    rep.extend(check_poincare(F), prefix="F ")
    rep.extend(check_poincare(Ft), prefix="F~ ")
    rep.add(_named(validate_chain_map(i, F.complex, Ft.complex), "i chain map"))
    pulled = Ft.pairing.pullback(i)
    rep.add(residual_check("i*w~ = w", [B for B in (pulled - F.pairing).blocks.values()], bk))
    inj = sum(F.space.dim(d) - bk.rank(i.block(d)) for d in F.space.degrees)
    rep.add(_check("i injective", inj == 0, inj))
    HF, HFt = cohomology(F.complex), cohomology(Ft.complex)
    ind = induced_map_on_cohomology(i, F.complex, Ft.complex, HF, HFt)
    bad = {}
    for d in set(HF.ranks) | set(HFt.ranks):
        a, b = HF.ranks.get(d, 0), HFt.ranks.get(d, 0)
        if a != b:
            bad[d] = (a, b)
        elif a and bk.rank(ind.matrices[d]) != a:
            bad[d] = ("rank", bk.rank(ind.matrices[d]))
    rep.add(_check("i quasi-iso", not bad, len(bad),
                   ranks={str(d): r for d, r in sorted(HF.ranks.items()) if r},
                   failures={str(d): str(v) for d, v in bad.items()}))


def build_fiber_product(theory: TheoryDescriptor, grid: GridTorus | DecPackage, cut: CutGeometry | None,
                        backend: ScalarBackend = EXACT_BACKEND, strict=True) -> GluedModel:
    """F~ = ker(π₁ - π₂) ⊂ F_{M₁} ⊕ F_{M₂}, with basis one vector per cell of M.

    The basis vector of a cell is the pair of its restrictions (interface
    cells appear in both pieces), so F~ ≅ F_M and i is bijective.
    """
    pkg = grid if isinstance(grid, DecPackage) else DecPackage(grid, backend)
    bk = pkg.bk
    bulk = build_bulk(theory, pkg)
    F = bulk.poincare
    rep = Report(f"glued {theory.name()}")
    if cut is None or not cut.slices:
        I = GradedLinearMap.identity(F.space, bk)
        _model_checks(rep, F, F, I)
        return GluedModel(theory, F, F, I, [], None, rep, True, False, bulk, cut, "empty cut", I)
    B = build_boundary(theory, pkg, cut)
    rep.extend(B.report)
    P1, P2 = B.pieces
    V1, V2 = P1.space, P2.space
    Vs = V1 + V2
    names = [s.name for s in bulk.layout.summands]
    # K: columns = pair of restrictions of each cell of M; Lsel: picks one representative row
    r1 = _selection_map(bk, bulk.slots, P1.slots, F.space, V1, names)
    r2 = _selection_map(bk, bulk.slots, P2.slots, F.space, V2, names)
    Kb, Lb, pb1, pb2 = {}, {}, {}, {}
    for d in F.space.degrees:
        n1, n2 = V1.dim(d), V2.dim(d)
        R1, R2 = r1.block(d) if n1 else None, r2.block(d) if n2 else None
        Kb[d] = bk.block([[R1], [R2]], [n1, n2], [F.space.dim(d)])
        Lb[d] = _left_inverse_selection(bk, Kb[d])
    Vt = GradedVectorSpace(dict(F.space.dims))
    K = GradedLinearMap(Vt, Vs, 0, Kb, bk)
    Lm = GradedLinearMap(Vs, Vt, 0, Lb, bk)
    # constraint (π₁ - π₂) K = 0 and its rank equals the interface dimension
    pis = _stack_pi(bk, B, Vs)
    rep.add(residual_check("fiber product constraint", [bk.mm(pis.block(d), Kb[d]) for d in Vt.degrees
                                                        if pis.target.dim(d)], bk))
    crank = sum(bk.rank(pis.block(d)) for d in Vs.degrees if pis.target.dim(d))
    expected = Vs.total_dim - Vt.total_dim
    rep.add(_check("constraint rank", crank == expected, abs(crank - expected),
                   rank=crank, expected=expected))
    i = Lm @ (GradedLinearMap(F.space, Vs, 0, {d: Kb[d] for d in Vt.degrees}, bk))
    rep.add(residual_check("K i = restriction", [bk.mm(Kb[d], i.block(d)) - Kb[d] for d in Vt.degrees], bk))
    p1 = GradedLinearMap(Vt, V1, 0, {d: bk.extract(Kb[d], range(V1.dim(d)), range(Vt.dim(d)))
                                     for d in Vt.degrees if V1.dim(d)}, bk)
    p2 = GradedLinearMap(Vt, V2, 0, {d: bk.extract(Kb[d], range(V1.dim(d), V1.dim(d) + V2.dim(d)),
                                                   range(Vt.dim(d))) for d in Vt.degrees if V2.dim(d)}, bk)
    wt = P1.poincare.pairing.pullback(p1) + P2.poincare.pairing.pullback(p2)
    transported = theory.has_star
    if transported:
        # pieces carry only the de Rham arrows; the ⋆ coupling is transported along i
        i_inv = i                       # the cell basis makes i the identity
        rep.add(residual_check("i = id in the cell basis",
                               [i.block(d) - bk.eye(Vt.dim(d)) for d in Vt.degrees], bk))
        dt = i @ F.d @ i_inv
        dtl = GradedLinearMap(Vt, Vt, 1, {d: dt.block(d) for d in dt.blocks}, bk)
    else:
        Dsum = GradedLinearMap(Vs, Vs, 1, {d: bk.block([[P1.complex.d.block(d) if V1.dim(d) and V1.dim(d + 1) else None, None],
                                                      [None, P2.complex.d.block(d) if V2.dim(d) and V2.dim(d + 1) else None]],
                                                     [V1.dim(d + 1), V2.dim(d + 1)], [V1.dim(d), V2.dim(d)])
                                           for d in Vs.degrees if Vs.dim(d + 1)}, bk)
        dtl = Lm @ Dsum @ K
        dtl = GradedLinearMap(Vt, Vt, 1, dict(dtl.blocks), bk)
        stab = Dsum @ K - K @ dtl
        rep.add(residual_check("F~ closed under d1+d2", list(stab.blocks.values()), bk))
        i_inv = None
    Ft = PoincareComplex(CochainComplex(Vt, dtl), wt)
    _model_checks(rep, F, Ft, i)
    degenerate = Vt.total_dim == F.space.total_dim
    note = "degenerate model: i is bijective" + ("; d~ transported along i" if transported else "")
    if strict and not rep.passed:
        raise ModelError(f"glued model failed: {[c.name for c in rep.checks if not c.passed]}")
    return GluedModel(theory, F, Ft, i, [p1, p2], B, rep, degenerate, transported, bulk, cut, note,
                      i if i_inv is None else i_inv)


def _left_inverse_selection(bk, K):
    """For a 0/1 matrix whose every column has a 1: pick the first 1 of each column."""
    rows, cols = K.shape
    Kd = K.to_dod() if bk.exact else None
    first = {}
    if bk.exact:
        for r in sorted(Kd):
            for c in Kd[r]:
                first.setdefault(c, r)
    else:
        for c in range(cols):
            nz = np.flatnonzero(K[:, c])
            first[c] = int(nz[0])
    return bk.from_dok({(c, r): 1 for c, r in first.items()}, (cols, rows))


def _stack_pi(bk, B: BoundaryPhaseSpace, Vs):
    Vb = B.complex.space
    pi1, pi2 = B.pi
    blocks = {}
    for d in Vs.degrees:
        if not Vb.dim(d):
            continue
        n1 = pi1.source.dim(d)
        n2 = pi2.source.dim(d)
        blocks[d] = bk.block([[pi1.block(d) if n1 else None, bk.scale(pi2.block(d), -1) if n2 else None]],
                             [Vb.dim(d)], [n1, n2])
    return GradedLinearMap(Vs, Vb, 0, blocks, bk)


# -- regularity-filtration model ---------------------------------------------------

def _poly_tools(N):
    """Monomial coefficient vectors on t ∈ [0,1]; derivatives and integrals are exact."""
    def deriv_row(order, t, deg):
        out = []
        for m in range(deg + 1):
            if m < order:
                out.append(Fraction(0))
            else:
                c = Fraction(1)
                for q in range(order):
                    c *= (m - q)
                out.append(c * (Fraction(t) ** (m - order) if m - order else Fraction(1)))
        return out
    return deriv_row


def regularity_model_1d(N: int = 5, s_smooth: int = 3, s_broken: int = 1,
                        backend: ScalarBackend = EXACT_BACKEND, strict=True) -> GluedModel:
    """Piecewise polynomials on two arcs of a circle of length 2, cut at x = 0 and x = 1.

    F⁰ has degree ≤ N and C^s matching at both cut points, F¹ degree ≤ N-2 and
    C^{s-2} matching (unconstrained for s ≤ 1).  d = d²/dx², ω = -∫ φ⁺ φ.
    The pieces are single arcs; π = (value, derivative) at the arc ends.
    """
    if not s_smooth >= s_broken >= 1:
        raise ValueError("need s_smooth >= s_broken >= 1")
    if N < s_smooth + 2:
        raise ValueError("need N >= s_smooth + 2")
    bk = backend
    row = _poly_tools(N)
    n0, n1 = N + 1, N - 1           # coefficients per arc in degree 0 and 1

    def matching(deg, s):
        """Rows: derivative orders 0..s at both cut points (x=1: arc1 end = arc2 start; x=0: arc2 end = arc1 start)."""
        rows = []
        for o in range(s + 1):
            e = row(o, 1, deg)
            z = row(o, 0, deg)
            rows.append(e + [-v for v in z])
            rows.append([-v for v in z] + e)
        return rows

    def space(deg, s):
        total = 2 * (deg + 1)
        if s < 0:
            return bk.eye(total)
        C = bk.from_dense(matching(deg, s), (2 * (s + 1), total))
        return bk.nullspace(C)

    B0 = space(N, s_smooth)
    Bt0 = space(N, s_broken)
    B1 = space(N - 2, s_smooth - 2 if s_smooth - 2 >= 0 else -1)
    Bt1 = space(N - 2, s_broken - 2 if s_broken - 2 >= 0 else -1)
    # second derivative on one arc: coefficients of degree N -> degree N-2
    D2 = {}
    for m in range(2, N + 1):
        D2[(m - 2, m)] = m * (m - 1)
    D2a = bk.from_dok(D2, (n1, n0))
    D2 = bk.block([[D2a, None], [None, D2a]], [n1, n1], [n0, n0])
    # L² Gram between degree-(N-2) and degree-N monomials on [0,1], per arc
    G = bk.from_dok({(a, b): Fraction(1, a + b + 1) for a in range(n1) for b in range(n0)}, (n1, n0))
    G = bk.block([[G, None], [None, G]], [n1, n1], [n0, n0])

    def poincare(Bz, Bo):
        d = bk.solve(Bo, bk.mm(D2, Bz))
        V = GradedVectorSpace({0: Bz.shape[1], 1: Bo.shape[1]})
        C = CochainComplex(V, GradedLinearMap(V, V, 1, {0: d}, bk))
        W10 = bk.scale(bk.mm(bk.mm(bk.T(Bo), G), Bz), -1)    # ω(φ⁺, φ) = -∫ φ⁺ φ
        w = GradedPairing(V, -1, {1: W10, 0: bk.scale(bk.T(W10), swap_sign(0, 1, -1))}, bk)
        return PoincareComplex(C, w)

    F = poincare(B0, B1)
    Ft = poincare(Bt0, Bt1)
    i = GradedLinearMap(F.space, Ft.space, 0, {0: bk.solve(Bt0, B0), 1: bk.solve(Bt1, B1)}, bk)
    rep = Report(f"regularity model N={N} s=({s_smooth},{s_broken})")
    # pieces: polynomials on one arc; F~ must be the fiber product over (value, derivative)
    pieces, pis, ps = [], [], []
    Vp = GradedVectorSpace({0: n0, 1: n1})
    Dp = bk.solve(bk.eye(n1), D2a)
    Gp = bk.from_dok({(a, b): Fraction(1, a + b + 1) for a in range(n1) for b in range(n0)}, (n1, n0))
    Wp = bk.scale(Gp, -1)
    Cp = CochainComplex(Vp, GradedLinearMap(Vp, Vp, 1, {0: Dp}, bk))
    wp = GradedPairing(Vp, -1, {1: Wp, 0: bk.scale(bk.T(Wp), swap_sign(0, 1, -1))}, bk)
    Vb = GradedVectorSpace({0: 4})
    Cb = CochainComplex(Vb, GradedLinearMap(Vb, Vb, 1, {}, bk))
    # boundary coordinates: (φ(x=0), φ'(x=0), φ(x=1), φ'(x=1)); arc 1 = [0,1], arc 2 = [1,2]
    arc_pi = [bk.from_dense([row(0, 0, N), row(1, 0, N), row(0, 1, N), row(1, 1, N)], (4, n0)),
              bk.from_dense([row(0, 1, N), row(1, 1, N), row(0, 0, N), row(1, 0, N)], (4, n0))]
    for a in range(2):
        sel0 = bk.extract(bk.eye(2 * n0), range(a * n0, (a + 1) * n0), range(2 * n0))
        sel1 = bk.extract(bk.eye(2 * n1), range(a * n1, (a + 1) * n1), range(2 * n1))
        ps.append(GradedLinearMap(Ft.space, Vp, 0, {0: bk.mm(sel0, Bt0), 1: bk.mm(sel1, Bt1)}, bk))
        pis.append(GradedLinearMap(Vp, Vb, 0, {0: arc_pi[a]}, bk))
    Pp = PoincareComplex(Cp, wp)
    D = relative_defect(Cp, wp)
    boundaries = []
    for a in range(2):
        Pi = arc_pi[a]
        X = bk.mm(bk.T(Pi), bk.inv(bk.mm(Pi, bk.T(Pi))))      # right inverse of π
        wb = GradedPairing(Vb, 0, {0: bk.mm(bk.mm(bk.T(X), D.block(0)), X)}, bk)
        boundaries.append(PoincareComplex(Cb, wb))
    Pb = boundaries[0]
    rels = [RelativePoincareComplex(Cp, wp, boundaries[a], pis[a]) for a in range(2)]
    for a, RP in enumerate(rels):
        for c in check_relative(RP).checks:
            if c.name != "hamiltonian relation (reported)":
                rep.add(_named(c, f"arc {a + 1} {c.name}"))
    rep.add(residual_check("opposite orientations",
                           boundaries[0].pairing.block(0) + boundaries[1].pairing.block(0), bk))
    rep.extend(check_poincare(Pb), prefix="boundary ")
    # F~ equals the fiber product when s_broken = 1
    if s_broken == 1:
        cons = bk.mm(arc_pi[0], ps[0].block(0)) - bk.mm(arc_pi[1], ps[1].block(0))
        rep.add(residual_check("F~ inside fiber product", cons, bk))
        stacked = bk.block([[arc_pi[0], bk.scale(arc_pi[1], -1)]], [4], [n0, n0])
        fp_dim = 2 * n0 - bk.rank(stacked)
        rep.add(_check("F~ equals fiber product", fp_dim == Ft.space.dim(0), abs(fp_dim - Ft.space.dim(0)),
                       fiber_product_dim=fp_dim, dim=Ft.space.dim(0)))
    wt = wp.pullback(ps[0]) + wp.pullback(ps[1])
    rep.add(residual_check("w~ = p1*w1 + p2*w2", [B for B in (wt - Ft.pairing).blocks.values()], bk))
    _model_checks(rep, F, Ft, i)
    ranks = cohomology_ranks(Ft.complex)
    rep.add(_check("H(F~) = (1, 1)", ranks.get(0, 0) == 1 and ranks.get(1, 0) == 1, 0,
                   ranks={str(k): v for k, v in ranks.items()}))
    pieces = [FieldComplex(TheoryDescriptor("Scalar2", 1), Pp, {}, None)] * 2
    boundary = BoundaryPhaseSpace(Pb, Cb, pis, pieces, rels, Report("arcs"))
    degenerate = F.space.total_dim == Ft.space.total_dim
    if strict and not rep.passed:
        raise ModelError(f"regularity model failed: {[c.name for c in rep.checks if not c.passed]}")
    return GluedModel(TheoryDescriptor("Scalar2", 1), F, Ft, i, ps, boundary, rep, degenerate,
                      note="regularity filtration: smooth inside broken piecewise polynomials")

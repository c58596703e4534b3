"""(i, p, H, H~) packages: smearing, Hodge/heat-kernel, local-near-Σ and HPL constructions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import EXACT_BACKEND, FLOAT_BACKEND, ScalarBackend, to_numpy
from .dec import (CutGeometry, DecPackage, KernelMatrix, bump_mu, center_distances, dirichlet_green,
                  localize_chi, mollifier_rho_chi)
from .graded import (Check, CochainComplex, GradedLinearMap, Report, residual_check, validate_chain_map)
from .hpl import adapted_contraction_pair, quasi_inverse_package, tangent_lift_two_form
from .sympair import (GradedPairing, PoincareComplex, PreconditionError, beta_tilde_from_contraction,
                      lie_derivative_pairing)
from .theories import FieldComplex, GluedModel, Layout


class PackageError(AssertionError):
    def __init__(self, msg, report: Report | None = None):
        super().__init__(msg)
        self.report = report


@dataclass
class LocalityReport:
    supports: dict
    off_support_max: float
    annulus_max: float
    annulus_density_max: float
    plateau_max: float
    identity_outside_U: bool
    h_tilde_outside_U: float
    plateau_pairs: int
    report: Report

    @property
    def passed(self):
        return self.report.passed

    def as_dict(self):
        return {"supports": self.supports, "off_support_max": self.off_support_max,
                "annulus_max": self.annulus_max, "annulus_density_max": self.annulus_density_max,
                "plateau_max": self.plateau_max, "identity_outside_U": self.identity_outside_U,
                "h_tilde_outside_U": self.h_tilde_outside_U, "plateau_pairs": self.plateau_pairs,
                "checks": [c.as_dict() for c in self.report.checks]}


@dataclass
class EquivalencePackage:
    model: GluedModel
    i: GradedLinearMap
    p: GradedLinearMap
    H: GradedLinearMap
    H_tilde: GradedLinearMap
    beta: GradedPairing
    beta_tilde: GradedPairing | None
    provenance: str
    report: Report
    locality: LocalityReport | None = None
    extras: dict = field(default_factory=dict)

    @property
    def F(self) -> PoincareComplex:
        return self.model.F

    @property
    def Ft(self) -> PoincareComplex:
        return self.model.Ft

    @property
    def backend(self):
        return self.F.backend

    def corrupted(self, degree=None, row=0, col=0, amount=1):
        """Copy with one entry of H perturbed (fault injection)."""
        bk = self.backend
        degs = sorted(self.H.blocks) or sorted(d for d in self.F.space.degrees if self.F.space.dim(d - 1))
        deg = degs[0] if degree is None else degree
        B = self.H.block(deg)
        bump = bk.from_dok({(row, col): amount}, B.shape)
        blocks = dict(self.H.blocks)
        blocks[deg] = B + bump
        H = GradedLinearMap(self.H.source, self.H.target, -1, blocks, bk)
        return EquivalencePackage(self.model, self.i, self.p, H, self.H_tilde, self.beta, self.beta_tilde,
                                  self.provenance, self.report, self.locality,
                                  dict(self.extras, corrupted={"degree": deg, "row": row, "col": col}))


# -- helpers ---------------------------------------------------------------------------

def model_to_backend(model: GluedModel, backend: ScalarBackend) -> GluedModel:
    if model.backend == backend:
        return model
    return GluedModel(model.theory, model.F.to_backend(backend), model.Ft.to_backend(backend),
                      model.i.to_backend(backend), [p.to_backend(backend) for p in model.p_pieces],
                      model.boundary, model.report, model.degenerate, model.transported, model.bulk,
                      model.cut, model.note,
                      None if model.i_inverse is None else model.i_inverse.to_backend(backend))


def component_map(F: FieldComplex, space, entries: dict, degree: int, bk) -> GradedLinearMap:
    """Assemble a graded map from (source summand, target summand) -> full-cell matrix."""
    grid = {}
    for (src, tgt), M in entries.items():
        if M is None:
            continue
        ds, os_, cs = F.slots[src]
        dt, ot, ct = F.slots[tgt]
        if dt != ds + degree:
            raise ValueError(f"{src}->{tgt} does not have degree {degree}")
        if not len(cs) or not len(ct):
            continue
        M = bk.convert(M)
        grid.setdefault(ds, []).append((ot, os_, M))
    blocks = {}
    for d, parts in grid.items():
        rows, cols = space.dim(d + degree), space.dim(d)
        if bk.exact:
            from .theories import _place_blocks
            blocks[d] = _place_blocks(bk, parts, rows, cols)
        else:
            B = np.zeros((rows, cols))
            for r0, c0, M in parts:
                B[r0:r0 + M.shape[0], c0:c0 + M.shape[1]] += M
            blocks[d] = B
    return GradedLinearMap(space, space, degree, blocks, bk)


def _locate(mats: dict, bk):
    """(degree, row, col, value) of the largest entry among per-degree matrices."""
    best = (None, None, None, 0.0)
    for d, M in mats.items():
        A = np.abs(to_numpy(M))
        if A.size and A.max() > best[3]:
            r, c = np.unravel_index(int(np.argmax(A)), A.shape)
            best = (int(d), int(r), int(c), float(A.max()))
    return {"degree": best[0], "row": best[1], "col": best[2], "value": best[3]}


def blockwise_check(name, R: GradedLinearMap, bk, tol=None, field: FieldComplex | None = None) -> Check:
    """Residual check with per-degree maxima; failures carry the worst entry and, on field complexes, per-arrow maxima."""
    chk = residual_check(name, list(R.blocks.values()), bk, tol)
    chk.detail["per_degree"] = {str(d): float(bk.max_abs(B)) if 0 not in B.shape else 0.0
                                for d, B in sorted(R.blocks.items())}
    if not chk.passed:
        chk.detail["worst"] = _locate(R.blocks, bk)
        if field is not None:
            chk.detail["per_arrow"] = per_arrow_residuals(R, field)
    return chk


def per_arrow_residuals(R: GradedLinearMap, F: FieldComplex) -> dict:
    """Max |entry| of R per (target summand, source summand) block."""
    out = {}
    for a, (da, oa, ca) in F.slots.items():
        for b, (db, ob, cb) in F.slots.items():
            if da != db + R.degree or not len(ca) or not len(cb):
                continue
            B = R.blocks.get(db)
            if B is None:
                continue
            A = to_numpy(B)[oa:oa + len(ca), ob:ob + len(cb)]
            v = float(np.max(np.abs(A))) if A.size else 0.0
            if v:
                out[f"{b}->{a}"] = v
    return out


def homotopy_check(name, idm: GradedLinearMap, H: GradedLinearMap, C: CochainComplex, bk, tol=None,
                   field: FieldComplex | None = None) -> Check:
    return blockwise_check(name, idm - (C.d @ H + H @ C.d), bk, tol, field)


def _transport(model: GluedModel, P_op: GradedLinearMap, H_op: GradedLinearMap):
    """p = P_op i⁻¹, H~ = i H i⁻¹ on a model whose i is invertible."""
    if model.i_inverse is None:
        raise PackageError("operator packages need a model with invertible i")
    iinv = model.i_inverse
    Vt = model.Ft.space
    p = P_op @ iinv
    p = GradedLinearMap(Vt, model.F.space, 0, dict(p.blocks), p.backend)
    Ht = model.i @ H_op @ iinv
    Ht = GradedLinearMap(Vt, Vt, -1, dict(Ht.blocks), Ht.backend)
    return p, Ht


def _base_report(name, model, i, p, H, Ht, bk, tol):
    rep = Report(name)
    F, Ft = model.F.complex, model.Ft.complex
    fld = model.bulk if model.bulk is not None and model.Ft.space == model.F.space else None
    c = validate_chain_map(i, F, Ft)
    c.name = "i chain map"
    rep.add(c)
    c = validate_chain_map(p, Ft, F)
    c.name = "p chain map"
    rep.add(c)
    rep.add(homotopy_check("dH+Hd = id - p i", F.identity() - p @ i, H, F, bk, tol, model.bulk))
    rep.add(homotopy_check("d~H~+H~d~ = id - i p", Ft.identity() - i @ p, Ht, Ft, bk, tol, fld))
    return rep


def _zero_beta(model):
    return GradedPairing.zero(model.F.space, model.F.k - 1, model.backend)


# -- smearing ----------------------------------------------------------------------------

def smearing_package(model: GluedModel, eta, cut: CutGeometry | None = None, localize=True) -> EquivalencePackage:
    """p = ρ̂, H = H~ = χ̂ on every superfield component (degenerate grid models)."""
    if not model.theory.first_order:
        raise PackageError("smearing packages are defined for Chern-Simons and BF")
    bulk = model.bulk
    pkg = bulk.pkg
    bk = pkg.bk
    if model.backend is not bk:
        raise PackageError("smearing packages are built on the model's own DEC backend; build the model there")
    cut = cut if cut is not None else model.cut
    if cut is not None and cut.grid != pkg.grid:
        raise PackageError("cut geometry does not belong to the model's grid")
    rho, chi = mollifier_rho_chi(pkg, eta)
    ops = {}
    for side in ("P", "D"):
        c = chi
        if localize and cut is not None and cut.slices:
            c = localize_chi(pkg, chi, cut, dual=(side == "D"))
        r = _rho_from_chi(pkg, c)
        ops[side] = (r, c)
    Pent, Hent = {}, {}
    L: Layout = bulk.layout
    for s in L.summands:
        r, c = ops[s.side]
        Pent[(s.name, s.name)] = r.block(s.form)
        if s.form >= 1:
            prev = [t for t in L.summands if t.side == s.side and t.form == s.form - 1][0]
            Hent[(s.name, prev.name)] = c.block(s.form)
    V = model.F.space
    P_op = component_map(bulk, V, Pent, 0, bk)
    H = component_map(bulk, V, Hent, -1, bk)
    p, Ht = _transport(model, P_op, H)
    i = model.i
    rep = _base_report("smearing", model, i, p, H, Ht, bk, None)
    rowsum = _row_sums(pkg, ops["P"][0].block(0))
    rep.add(Check("rho rows sum to 1 (0-forms)", rowsum == 0, rowsum))
    out = EquivalencePackage(model, i, p, H, Ht, _zero_beta(model), None, "smearing", rep,
                             extras={"eta": str(eta), "localized": bool(localize and cut is not None and cut.slices)})
    if cut is not None and cut.slices:
        out.locality = locality_report(out, cut)
    return out


def _rho_from_chi(pkg: DecPackage, chi: GradedLinearMap) -> GradedLinearMap:
    bk = pkg.bk
    n = pkg.grid.n
    blocks = {}
    for k in range(n + 1):
        M = bk.eye(pkg.idx[k].size)
        if k >= 1 and chi.block(k) is not None:
            M = M - bk.mm(pkg.d[k - 1], chi.block(k))
        if k < n:
            M = M - bk.mm(chi.block(k + 1), pkg.d[k])
        blocks[k] = M
    return GradedLinearMap(chi.source, chi.target, 0, blocks, bk)


def _row_sums(pkg, R):
    A = to_numpy(R)
    return float(np.max(np.abs(A.sum(axis=1) - 1))) if A.size else 0.0


# -- Hodge / heat kernel --------------------------------------------------------------

def _spectral_pieces(pkg: DecPackage, eps):
    S = pkg.float_ops()
    cache = {}

    def heat(side, j):
        key = ("heat", side, j)
        if key not in cache:
            cache[key] = S.heat(j, eps, dual=(side == "D")) if eps > 0 else np.eye(pkg.idx[j].size)
        return cache[key]

    def green(side, j):
        """(1 - e^{-εΔ}) Δ⁻¹, zero on harmonics."""
        key = ("green", side, j)
        if key not in cache:
            cache[key] = S.heat_green(j, eps, dual=(side == "D")) if eps > 0 else np.zeros((pkg.idx[j].size,) * 2)
        return cache[key]

    def lap_pinv(side, j):
        key = ("pinv", side, j)
        if key not in cache:
            cache[key] = S.lap_pinv(j, dual=(side == "D"))
        return cache[key]
    return heat, green, lap_pinv


class _Ops:
    """Float versions of d, d*, ⋆ for either side."""

    def __init__(self, pkg: DecPackage):
        self.n = pkg.grid.n
        self.d = [to_numpy(M) for M in pkg.d]
        self.dstar = {"P": [None] + [to_numpy(M) for M in pkg.dstar[1:]],
                      "D": [None] + [to_numpy(M) for M in pkg.dstar_dual[1:]]}
        self.star = [to_numpy(M) for M in pkg.star]                 # P^k -> D^{n-k}
        self.star_dual = [to_numpy(M) for M in pkg.star_dual]       # D^j -> P^{n-j}
        self.star_dual_inv = [to_numpy(pkg.star_dual_inv(j)) for j in range(self.n + 1)]   # P^{n-j} -> D^j
        self.star_inv = [to_numpy(pkg.star_inv(k)) for k in range(self.n + 1)]             # D^{n-k} -> P^k


def _sign_np1(n, p):
    return -1 if (n + p + 1) % 2 else 1


# Which homotopy component sits on which arrow of each theory's diagram.
# "rows": the d*-type map on every d arrow of the upper (P) and lower (D) chains;
# the named extra arrows carry Φ, Ψ or -Ψ.
ROUTING = {
    "BF": {"upper": "xi", "lower": "xi", "extra": {}},
    "CS": {"upper": "xi", "lower": "xi", "extra": {}},
    "PForm1": {"upper": "xi", "lower": "xi'", "extra": {("B+", "B"): "phi", ("A+", "A"): "psi"}},
    "PForm2": {"upper": "xi", "lower": "xi'", "extra": {"middle": "-psi"}},
    "Scalar2": {"upper": "xi", "lower": "xi'", "extra": {"middle": "-psi"}},
}


def _routing(theory, L: Layout, fns: dict):
    """Homotopy arrows per the routing table; fns maps role -> callable; returns {(src, tgt): matrix}."""
    n, p = theory.n, theory.p
    table = ROUTING[theory.kind]
    ent = {}
    for s in L.summands:
        if s.form < 1:
            continue
        prev = [t for t in L.summands if t.side == s.side and t.form == s.form - 1]
        if not prev:
            continue
        role = table["upper"] if s.side == "P" else table["lower"]
        ent[(s.name, prev[0].name)] = fns[role](s.side, s.form)
    for arrow, role in table["extra"].items():
        if arrow == "middle":
            up = [s for s in L.summands if s.side == "P" and s.form == p][0]
            lo = [s for s in L.summands if s.side == "D" and s.form == n - p][0]
            arrow = (lo.name, up.name)
        sign = -1 if role.startswith("-") else 1
        M = fns[role.lstrip("-")](p)
        if M is not None:
            ent[arrow] = sign * M
    return ent


def hodge_operators(model: GluedModel, eps: float):
    """(P_op, H_op, parts) for p = e^{-εΔ} and H from Ξ, Φ, Ψ (float)."""
    theory, bulk = model.theory, model.bulk
    pkg = bulk.pkg
    ops = _Ops(pkg)
    heat, green, _ = _spectral_pieces(pkg, eps)
    n, p = theory.n, theory.p
    sg = _sign_np1(n, p)

    def xi(side, j):                   # (1 - e^{-εΔ}) d* Δ⁻¹ = d* g(Δ_j)
        return ops.dstar[side][j] @ green(side, j)

    def phi(p_):                        # B+ = P^{p+1} -> B = D^{n-p-1}
        if p_ + 2 > n:
            return None
        return sg * ops.d[n - p_ - 2] @ ops.star_dual_inv[n - p_ - 2] @ green("P", p_ + 2) @ ops.d[p_ + 1]

    def psi(p_):                        # A+ = D^{n-p} -> A = P^p
        return sg * green("P", p_) @ ops.star_dual[n - p_]

    ent = _routing(theory, bulk.layout, {"xi": xi, "xi'": xi, "phi": phi, "psi": psi})
    Pent = {(s.name, s.name): heat(s.side, s.form) for s in bulk.layout.summands}
    bk = FLOAT_BACKEND
    V = model.F.space
    parts = {"xi": xi, "phi": phi, "psi": psi, "heat": heat, "green": green, "ops": ops}
    return component_map(bulk, V, Pent, 0, bk), component_map(bulk, V, ent, -1, bk), parts


def hodge_package(model: GluedModel, eps: float, tol: float = 1e-9) -> EquivalencePackage:
    if eps < 0:
        raise ValueError("ε must be nonnegative")
    if model.bulk is None:
        raise PackageError("Hodge packages need a grid model")
    fm = model_to_backend(model, FLOAT_BACKEND)
    bk = FLOAT_BACKEND
    P_op, H, parts = hodge_operators(fm, eps)
    p, Ht = _transport(fm, P_op, H)
    rep = _base_report("hodge", fm, fm.i, p, H, Ht, bk, tol)
    rep.add(blockwise_check("p i = e^{-εΔ}", p @ fm.i - P_op, bk, tol, fm.bulk))
    extras = {"eps": eps, "cancellations": internal_cancellations(fm, parts, tol).as_dict()}
    for c in internal_cancellations(fm, parts, tol).checks:
        rep.add(c)
    return EquivalencePackage(fm, fm.i, p, H, Ht, _zero_beta(fm), None, "hodge", rep, None, extras)


def internal_cancellations(model: GluedModel, parts, tol=1e-9) -> Report:
    """Ξ⋆ + Ψd = 0, ⋆Ξ' + dΨ = 0, dΦ = 0, Φd = 0 where the routing uses them."""
    theory = model.theory
    rep = Report("internal cancellations")
    if theory.kind != "PForm1":
        return rep
    n, p = theory.n, theory.p
    ops: _Ops = parts["ops"]
    xi, phi, psi = parts["xi"], parts["phi"], parts["psi"]
    lower_xi = parts.get("xi_lower", xi)
    upper_xi = parts.get("xi", xi)
    bk = FLOAT_BACKEND
    q = n - p - 1
    # on B = D^q: A-component of (d_Q H + H d_Q) is Ξ⋆ + Ψd
    r1 = upper_xi("P", p + 1) @ ops.star_dual[q] + psi(p) @ ops.d[q]
    rep.add(residual_check("Xi* + Psi d = 0", r1, bk, tol))
    # on A+ = D^{q+1}: B+-component is ⋆Ξ' + dΨ
    r2 = ops.star_dual[q] @ lower_xi("D", q + 1) + ops.d[p] @ psi(p) if p + 1 <= n else None
    if r2 is not None:
        rep.add(residual_check("*Xi' + d Psi = 0", r2, bk, tol))
    ph = phi(p)
    if ph is not None:
        if q + 1 <= n:
            rep.add(residual_check("d Phi = 0", ops.d[q] @ ph, bk, tol))
        rep.add(residual_check("Phi d = 0", ph @ ops.d[p], bk, tol))
    return rep


# -- TQM ---------------------------------------------------------------------------------

def tqm_check(model: GluedModel, eps: float, hodge: EquivalencePackage | None = None, tol=1e-9) -> Report:
    """[d_Q, 𝔾] = Δ blockwise and H = 𝔾 Ĥ⁻¹(1 - e^{-εĤ}); ‖𝔾²‖ recorded."""
    if model.theory.kind != "PForm1":
        raise PackageError("the TQM remark concerns first-order p-form theories")
    fm = model_to_backend(model, FLOAT_BACKEND)
    bulk, theory = fm.bulk, fm.theory
    pkg = bulk.pkg
    ops = _Ops(pkg)
    n, p = theory.n, theory.p
    sg = _sign_np1(n, p)
    heat, green, _ = _spectral_pieces(pkg, eps)
    ent = {}
    for s in bulk.layout.summands:
        if s.form >= 1:
            prev = [t for t in bulk.layout.summands if t.side == s.side and t.form == s.form - 1]
            if prev:
                ent[(s.name, prev[0].name)] = ops.dstar[s.side][s.form]
    if p + 2 <= n:
        ent[("B+", "B")] = sg * ops.d[n - p - 2] @ ops.star_dual_inv[n - p - 2] @ ops.d[p + 1]
    ent[("A+", "A")] = sg * ops.star_dual[n - p]
    bk = FLOAT_BACKEND
    V = fm.F.space
    G = component_map(bulk, V, ent, -1, bk)
    lap = {(s.name, s.name): to_numpy((pkg.lap if s.side == "P" else pkg.lap_dual)[s.form])
           for s in bulk.layout.summands}
    Lap = component_map(bulk, V, lap, 0, bk)
    D = fm.F.d
    comm = D @ G + G @ D
    rep = Report("tqm")
    rep.add(residual_check("[d_Q, G] = Laplacian", list((comm - Lap).blocks.values()), bk, tol))
    gfun = component_map(bulk, V, {(s.name, s.name): green(s.side, s.form) for s in bulk.layout.summands}, 0, bk)
    Hform = G @ gfun
    if hodge is None:
        hodge = hodge_package(model, eps, tol)
    rep.add(residual_check("H = G H^-1 (1 - e^{-εH})", list((Hform - hodge.H).blocks.values()), bk, tol))
    G2 = (G @ G).max_abs()
    rep.add(Check("G^2 != 0 (informational)", True, G2, {"norm_G_squared": G2}))
    return rep


# -- local near Σ --------------------------------------------------------------------------

@dataclass
class GammaKernels:
    cut: CutGeometry
    gamma: dict          # (side, k) -> μ·G (float)
    mu: dict             # (side, k) -> KernelMatrix


def gamma_kernels(pkg: DecPackage, cut: CutGeometry) -> GammaKernels:
    n = pkg.grid.n
    gam, mus = {}, {}
    for side in ("P", "D"):
        for k in range(n + 1):
            dual = side == "D"
            G = dirichlet_green(pkg, cut, k, dual)
            mu = bump_mu(pkg, cut, k, dual)
            gam[(side, k)] = mu.matrix * G
            mus[(side, k)] = mu
    return GammaKernels(cut, gam, mus)


def local_operators(model: GluedModel, cut: CutGeometry, routing="xi", kernels: GammaKernels | None = None):
    theory, bulk = model.theory, model.bulk
    pkg = bulk.pkg
    ops = _Ops(pkg)
    K = kernels or gamma_kernels(pkg, cut)
    n, p = theory.n, theory.p
    sg = _sign_np1(n, p)
    gam = K.gamma

    def xi(side, j):                    # Δ_μ⁻¹ d*
        return gam[(side, j - 1)] @ ops.dstar[side][j]

    def xi_prime(side, j):              # d* Δ_μ⁻¹
        return ops.dstar[side][j] @ gam[(side, j)]

    def phi(p_):
        if p_ + 2 > n:
            return None
        return sg * ops.d[n - p_ - 2] @ ops.star_dual_inv[n - p_ - 2] @ gam[("P", p_ + 2)] @ ops.d[p_ + 1]

    def psi(p_):
        return sg * ops.star_dual[n - p_] @ gam[("D", n - p_)]

    fns = {"xi": xi, "xi'": xi_prime, "phi": phi, "psi": psi}
    if theory.first_order and routing == "xi'":
        fns["xi"] = xi_prime
    ent = _routing(theory, bulk.layout, fns)
    up = fns[ROUTING[theory.kind]["upper"]]
    lo = fns[ROUTING[theory.kind]["lower"]]
    V = model.F.space
    H = component_map(bulk, V, ent, -1, FLOAT_BACKEND)
    parts = {"xi": up, "xi_lower": lo, "phi": phi, "psi": psi, "ops": ops, "kernels": K}
    return H, parts


def local_package(model: GluedModel, cut: CutGeometry | None = None, routing="xi", tol=1e-12,
                  kernels: GammaKernels | None = None) -> EquivalencePackage:
    """H~ from Δ_μ⁻¹ = μ·G per the theory routing; p := id - d_Q H~ - H~ d_Q."""
    cut = cut if cut is not None else model.cut
    if cut is None:
        raise PackageError("local packages need a cut geometry")
    fm = model_to_backend(model, FLOAT_BACKEND)
    bk = FLOAT_BACKEND
    H, parts = local_operators(fm, cut, routing, kernels)
    D = fm.F.d
    P_op = fm.F.complex.identity() - (D @ H + H @ D)
    p, Ht = _transport(fm, P_op, H)
    rep = _base_report("local", fm, fm.i, p, H, Ht, bk, tol)
    K = parts["kernels"]
    star_comm = _gamma_star_residual(fm.bulk.pkg, K)
    rep.add(Check("Δ_μ⁻¹ commutes with ⋆", star_comm <= 1e-9, star_comm))
    canc = internal_cancellations(fm, parts, 1e-9)
    for c in canc.checks:
        rep.add(c)
    out = EquivalencePackage(fm, fm.i, p, H, Ht, _zero_beta(fm), None, "local", rep,
                             extras={"routing": routing if fm.theory.first_order else "xi/xi'"})
    out.locality = locality_report(out, cut, kernels=K)
    return out


def _gamma_star_residual(pkg: DecPackage, K: GammaKernels):
    n = pkg.grid.n
    worst = 0.0
    for k in range(n + 1):
        S = to_numpy(pkg.star[k])
        A = S @ K.gamma[("P", k)]
        B = K.gamma[("D", n - k)] @ S
        worst = max(worst, float(np.max(np.abs(A - B))) if A.size else 0.0)
    return worst


# -- locality ----------------------------------------------------------------------------

def _summand_geometry(model: GluedModel, cut: CutGeometry):
    """Per total-basis index: in closed U, collar distance, slab id, center (half units), cell volume."""
    bulk = model.bulk
    pkg = bulk.pkg
    out = {}
    for s in bulk.layout.summands:
        dual = s.side == "D"
        inU = cut.in_closed_slab(pkg, s.form, dual)
        delta, which = cut.boundary_distance(pkg, s.form, dual)
        cen, _ = pkg.centers(s.form, dual)
        out[s.name] = (inU, delta, which, cen)
    return out


def _total_vector(model, per_summand, F: FieldComplex, dtype=float):
    space = F.space
    offs = space.offsets()
    total = space.total_dim
    vec = np.zeros(total, dtype=dtype)
    for name, arr in per_summand.items():
        d, o, cells = F.slots[name]
        base = offs[d]
        vec[base + o: base + o + len(cells)] = arr[cells]
    return vec


def _total_names(F: FieldComplex):
    offs = F.space.offsets()
    out = [""] * F.space.total_dim
    for name, (d, o, cells) in F.slots.items():
        for a in range(len(cells)):
            out[offs[d] + o + a] = name
    return out


def locality_report(pkg_: EquivalencePackage, cut: CutGeometry, kernels: GammaKernels | None = None,
                    reach: float | None = None) -> LocalityReport:
    """Support checks of p and H~ against U, the plateau and the annulus (kernel level)."""
    model = pkg_.model
    bulk = model.bulk
    grid = bulk.pkg.grid
    geo = _summand_geometry(model, cut)
    F = bulk
    u = _total_vector(model, {k: v[0] for k, v in geo.items()}, F, bool)
    delta = _total_vector(model, {k: v[1] for k, v in geo.items()}, F)
    which = _total_vector(model, {k: v[2] for k, v in geo.items()}, F, int)
    n = grid.n
    cen = np.zeros((F.space.total_dim, n))
    offs = F.space.offsets()
    for name, (_, _, _, c) in geo.items():
        d, o, cells = F.slots[name]
        cen[offs[d] + o: offs[d] + o + len(cells)] = c[cells]
    h = np.array([float(w) for w in grid.widths])
    sizes2 = 2 * np.array(grid.sizes)
    diff = cen[:, None, :] - cen[None, :, :]
    diff = np.mod(diff + sizes2 // 2, sizes2) - sizes2 // 2
    dist = np.sqrt(np.sum((diff * h / 2.0) ** 2, axis=2))
    P = to_numpy(pkg_.p.total())
    Ht = to_numpy(pkg_.H_tilde.total())
    I = np.eye(P.shape[0])
    UU = u[:, None] & u[None, :]
    rep = Report("locality")
    off_p = float(np.max(np.abs((P - I)[~UU]))) if (~UU).any() else 0.0
    off_h = float(np.max(np.abs(Ht[~UU]))) if (~UU).any() else 0.0
    cols_out = float(np.max(np.abs(Ht[:, ~u]))) if (~u).any() else 0.0
    rep.add(Check("p kernel = delta outside UxU", off_p == 0.0, off_p))
    rep.add(Check("H~ vanishes outside UxU", off_h == 0.0, off_h))
    rep.add(Check("H~(field supported outside U) = 0", cols_out == 0.0, cols_out))
    # d and d* each move h/2, Δ moves h: one cell width covers every stencil used by p
    R = reach if reach is not None else float(h.max())
    m = np.minimum(delta[:, None], delta[None, :])
    covered = (which[:, None] == which[None, :]) & (m - R > 0) & (dist + 2 * R <= 0.5 * (m - R))
    plateau = float(np.max(np.abs(P[covered]))) if covered.any() else 0.0
    annulus_mask = UU & ~covered
    A = np.abs(P - I)
    annulus = float(np.max(A[annulus_mask])) if annulus_mask.any() else 0.0
    vol = float(np.prod(h))
    supports = {"p": "delta outside UxU", "H~": "inside UxU"}
    if pkg_.provenance == "local":
        det = {"pairs": int(covered.sum()), "reach": R}
        if plateau > 1e-10:
            bad = covered & (np.abs(P) > 1e-10)
            names = _total_names(F)
            det["summands"] = sorted({f"{names[a]}<-{names[b]}" for a, b in zip(*np.nonzero(bad))})
        rep.add(Check("p kernel = 0 on the plateau", plateau <= 1e-10, plateau, det))
        supports["p"] = "delta outside UxU, zero where the plateau covers the stencil"
    return LocalityReport(supports, max(off_p, off_h), annulus, annulus / vol, plateau, off_p == 0.0,
                          cols_out, int(covered.sum()), rep)


# -- HPL -------------------------------------------------------------------------------------

def hpl_package(model: GluedModel, tol=None) -> EquivalencePackage:
    """Quasi-inverse package from an adapted contraction pair; p = i⁻¹, H = H~ = 0 when i is bijective."""
    bk = model.backend
    F, Ft = model.F, model.Ft
    if model.degenerate and model.i_inverse is not None:
        p, _ = _transport(model, F.complex.identity(), GradedLinearMap.zero(F.space, F.space, -1, bk))
        H = GradedLinearMap.zero(F.space, F.space, -1, bk)
        Ht = GradedLinearMap.zero(Ft.space, Ft.space, -1, bk)
        rep = _base_report("hpl", model, model.i, p, H, Ht, bk, tol)
        z = GradedPairing.zero(Ft.space, Ft.k - 1, bk)
        return EquivalencePackage(model, model.i, p, H, Ht, _zero_beta(model), z, "hpl", rep,
                                  extras={"degenerate": True})
    pair = adapted_contraction_pair(model.i, F.complex, Ft.complex)
    q = quasi_inverse_package(pair, F.complex, Ft.complex)
    rep = Report("hpl")
    rep.extend(pair.check(tol), prefix="pair ")
    rep.extend(q.report)
    extras = {}
    try:
        tl = tangent_lift_two_form(pair, q, Ft.pairing, F.pairing, Ft.complex, tol)
        rep.extend(tl.report, prefix="tangent lift ")
        extras["beta_tilde_tangent_lift"] = tl.form
        extras["tangent_lift_symmetrization_residual"] = tl.symmetrization_residual
    except AssertionError as e:
        rep.add(Check("tangent lift", False, float("inf"), {"error": str(e)}))
    pkg = EquivalencePackage(model, model.i, q.p, q.H, q.H_tilde, _zero_beta(model), None, "hpl", rep,
                             extras=extras)
    bt = beta_tilde_from_contraction(F, Ft, model.i, q.p, q.H_tilde).form
    pkg.beta_tilde = bt
    if "beta_tilde_tangent_lift" in extras:
        diff = lie_derivative_pairing(Ft.complex, extras["beta_tilde_tangent_lift"] - bt)
        rep.add(residual_check("L(b~ lift - b~ lemma) = 0", list(diff.blocks.values()), bk, tol))
    return pkg


# -- Theorem report ------------------------------------------------------------------------

@dataclass
class ItemReport:
    status: str          # pass | fail | not-applicable
    report: Report
    reason: str = ""

    def as_dict(self):
        return {"status": self.status, "reason": self.reason, "checks": [c.as_dict() for c in self.report.checks]}


@dataclass
class TheoremReport:
    provenance: str
    model: str
    items: dict
    degenerate: bool

    @property
    def passed(self):
        return all(it.status != "fail" for it in self.items.values())

    def as_dict(self):
        return {"provenance": self.provenance, "model": self.model, "degenerate": self.degenerate,
                "passed": self.passed, "items": {k: v.as_dict() for k, v in self.items.items()}}


def _status(rep: Report):
    return "pass" if rep.passed else "fail"


def verify_theorem_main(pkg: EquivalencePackage, tol=None) -> TheoremReport:
    bk = pkg.backend
    if tol is None and not bk.exact:
        tol = 1e-9
    F, Ft = pkg.F, pkg.Ft
    items = {}
    a = Report("(a) chain maps")
    c = validate_chain_map(pkg.i, F.complex, Ft.complex)
    c.name = "i chain map"
    a.add(c)
    c = validate_chain_map(pkg.p, Ft.complex, F.complex)
    c.name = "p chain map"
    a.add(c)
    items["a"] = ItemReport(_status(a), a)
    b = Report("(b) homotopies")
    b.add(homotopy_check("dH+Hd = id - p i", F.complex.identity() - pkg.p @ pkg.i, pkg.H, F.complex, bk, tol))
    b.add(homotopy_check("d~H~+H~d~ = id - i p", Ft.complex.identity() - pkg.i @ pkg.p, pkg.H_tilde,
                         Ft.complex, bk, tol))
    items["b"] = ItemReport(_status(b), b)
    if pkg.provenance == "hodge":
        items["c"] = ItemReport("not-applicable", Report("(c) locality"),
                                "p is a smearing operator everywhere, not the identity away from Σ")
    elif pkg.locality is not None:
        items["c"] = ItemReport(_status(pkg.locality.report), pkg.locality.report)
    else:
        items["c"] = ItemReport("not-applicable", Report("(c) locality"), "no cut geometry attached")
    d = Report("(d) symplectic relations")
    pulled = Ft.pairing.pullback(pkg.i)
    d.add(residual_check("i*w~ = w", list((pulled - F.pairing).blocks.values()), bk, tol))
    scale = max(1.0, F.pairing.max_abs())
    try:
        bt = beta_tilde_from_contraction(F, Ft, pkg.i, pkg.p, pkg.H_tilde, tol or 1e-9)
        pkg.beta_tilde = bt.form
        lhs = F.pairing.pullback(pkg.p) - Ft.pairing - lie_derivative_pairing(Ft.complex, bt.form)
        d.add(residual_check("p*w = w~ + L b~", list(lhs.blocks.values()), bk,
                             None if tol is None else tol * scale))
        d.add(Check("beta = 0", pkg.beta.is_zero(), 0.0))
    except PreconditionError as e:
        d.add(Check("p*w = w~ + L b~", False, float(e.residual), {"error": str(e)}))
    items["d"] = ItemReport(_status(d), d)
    return TheoremReport(pkg.provenance, pkg.model.theory.name() if pkg.model.theory else "synthetic",
                         items, pkg.model.degenerate)

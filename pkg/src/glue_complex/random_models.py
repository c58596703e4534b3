"""Randomized exact-rational models for property suites."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import EXACT_BACKEND
from .graded import (CochainComplex, GradedLinearMap, GradedVectorSpace, block_diagonal_map, direct_sum)
from .hpl import elimination_contraction
from .sympair import GradedPairing, PoincareComplex, WeakEquivalenceData, _sgn, swap_sign


def _rand_int_matrix(rng, r, c, lo=-2, hi=2):
    return rng.integers(lo, hi + 1, size=(r, c))


def random_invertible(rng, n, bk=EXACT_BACKEND):
    """Unit lower-triangular times unit upper-triangular times a permutation: always invertible."""
    if n == 0:
        return bk.zeros(0, 0)
    L = np.tril(_rand_int_matrix(rng, n, n), -1) + np.eye(n, dtype=int)
    U = np.triu(_rand_int_matrix(rng, n, n), 1) + np.eye(n, dtype=int)
    P = np.eye(n, dtype=int)[rng.permutation(n)]
    return bk.from_dense((L @ U @ P).astype(int))


def complex_from_shape(rng, betti: dict, pairs: dict, bk=EXACT_BACKEND, scramble=True) -> CochainComplex:
    """Complex with H^i of dimension betti[i] and pairs[i] copies of (deg i --1--> deg i+1)."""
    degs = sorted(set(betti) | set(pairs) | {i + 1 for i in pairs})
    dims = {i: betti.get(i, 0) + pairs.get(i, 0) + pairs.get(i - 1, 0) for i in degs}
    V = GradedVectorSpace(dims)
    blocks = {}
    for i in degs:
        if not dims.get(i + 1) or not pairs.get(i):
            continue
        # layout per degree: [targets of d from i-1 | cohomology | sources for d to i+1]
        ent = {}
        src0 = pairs.get(i - 1, 0) + betti.get(i, 0)
        for a in range(pairs[i]):
            ent[(a, src0 + a)] = 1
        blocks[i] = bk.from_dok(ent, (dims[i + 1], dims[i]))
    C = CochainComplex(V, GradedLinearMap(V, V, 1, blocks, bk))
    if not scramble:
        return C
    P = {i: random_invertible(rng, n, bk) for i, n in dims.items()}
    return conjugate(C, P)


def conjugate(C: CochainComplex, P: dict) -> CochainComplex:
    bk = C.backend
    Pinv = {i: bk.inv(M) for i, M in P.items()}
    blocks = {i: bk.mm(bk.mm(P[i + 1], B), Pinv[i]) for i, B in C.d.blocks.items()}
    return CochainComplex(C.space, GradedLinearMap(C.space, C.space, 1, blocks, bk))


def cotangent_poincare(C: CochainComplex, k: int = -1) -> PoincareComplex:
    """F = C ⊕ C^∨ with (C^∨)^j = (C^{-j-k})*, w(x, ξ) = ξ(x), d^∨ = ± dᵀ."""
    bk = C.backend
    V = C.space
    Vd = GradedVectorSpace({-i - k: n for i, n in V.dims.items()})
    F = V + Vd
    dblocks, wblocks = {}, {}
    for j in F.degrees:
        # d on F^j = C^j ⊕ (C^∨)^j
        rows = [F.dim(j + 1)]
        c_j, cv_j = V.dim(j), Vd.dim(j)
        c_j1, cv_j1 = V.dim(j + 1), Vd.dim(j + 1)
        dC = C.d.block(j) if c_j and c_j1 else None
        i_dual = -j - k - 1            # (C^∨)^j = (C^{i_dual + 1})*
        dV = None
        if cv_j and cv_j1:
            dV = bk.scale(bk.T(C.d.block(i_dual)), _sgn(i_dual))
        if rows[0]:
            dblocks[j] = bk.block([[dC, None], [None, dV]], [c_j1, cv_j1], [c_j, cv_j])
        # pairing F^j x F^{-j-k}
        jp = -j - k
        c_p, cv_p = V.dim(jp), Vd.dim(jp)
        top = bk.eye(c_j) if c_j and cv_p else None            # w(x in C^j, ξ in (C^j)*)
        bot = None
        if cv_j and c_p:
            bot = bk.scale(bk.eye(cv_j), swap_sign(j, jp, k))  # w(ξ, x) = s w(x, ξ)
        if F.dim(j) and F.dim(jp):
            wblocks[j] = bk.block([[None, top], [bot, None]], [c_j, cv_j], [c_p, cv_p])
    Cx = CochainComplex(F, GradedLinearMap(F, F, 1, dblocks, bk))
    return PoincareComplex(Cx, GradedPairing(F, k, wblocks, bk))


def transport(P: PoincareComplex, Q: dict) -> PoincareComplex:
    """New coordinates x' = Q x: d' = Q d Q⁻¹, w' = w(Q⁻¹·, Q⁻¹·)."""
    bk = P.backend
    Qinv = {i: bk.inv(M) for i, M in Q.items()}
    C = conjugate(P.complex, Q)
    Qi = GradedLinearMap(P.space, P.space, 0, Qinv, bk)
    return PoincareComplex(C, P.pairing.pullback(Qi))


def random_poincare(rng, max_dim=6, k=-1, bk=EXACT_BACKEND, degrees=(-2, 1)) -> PoincareComplex:
    """Random cotangent-type Poincaré complex in scrambled coordinates."""
    budget = max(1, max_dim // 2)
    betti, pairs = {}, {}
    lo, hi = degrees
    while True:
        betti = {i: int(rng.integers(0, 2)) for i in range(lo, hi + 1)}
        pairs = {i: int(rng.integers(0, 2)) for i in range(lo, hi)}
        size = sum(betti.values()) + 2 * sum(pairs.values())
        if 0 < size <= budget:
            break
    C = complex_from_shape(rng, betti, pairs, bk)
    P = cotangent_poincare(C, k)
    Q = {i: random_invertible(rng, n, bk) for i, n in P.space.dims.items()}
    return transport(P, Q)


def random_acyclic_poincare(rng, max_dim=4, k=-1, bk=EXACT_BACKEND, degrees=(-2, 1)) -> PoincareComplex:
    lo, hi = degrees
    budget = max(1, max_dim // 4)
    npairs = int(rng.integers(1, budget + 1))
    pairs = {}
    for _ in range(npairs):
        i = int(rng.integers(lo, hi))
        pairs[i] = pairs.get(i, 0) + 1
    C = complex_from_shape(rng, {}, pairs, bk)
    P = cotangent_poincare(C, k)
    Q = {i: random_invertible(rng, n, bk) for i, n in P.space.dims.items()}
    return transport(P, Q)


def poincare_sum(P: PoincareComplex, A: PoincareComplex) -> PoincareComplex:
    bk = P.backend
    C = direct_sum(P.complex, A.complex)
    V = C.space
    k = P.k
    blocks = {}
    for i in V.degrees:
        j = -i - k
        if V.dim(j):
            blocks[i] = bk.block([[P.pairing.block(i), None], [None, A.pairing.block(i)]],
                                 [P.space.dim(i), A.space.dim(i)], [P.space.dim(j), A.space.dim(j)])
    return PoincareComplex(C, GradedPairing(V, k, blocks, bk))


def inclusion_and_projection(F: GradedVectorSpace, A: GradedVectorSpace, bk=EXACT_BACKEND):
    S = F + A
    inc, proj = {}, {}
    for i in S.degrees:
        n, m = F.dim(i), A.dim(i)
        if n:
            inc[i] = bk.block([[bk.eye(n)], [None]], [n, m], [n])
            proj[i] = bk.block([[bk.eye(n), None]], [n], [n, m])
    return GradedLinearMap(F, S, 0, inc, bk), GradedLinearMap(S, F, 0, proj, bk)


@dataclass
class RandomEquivalence:
    P: PoincareComplex
    Pt: PoincareComplex
    data: WeakEquivalenceData
    acyclic_dims: dict


def random_weak_equivalence(rng, max_total=12, k=-1, bk=EXACT_BACKEND, mix=True, degrees=(-2, 1)) -> RandomEquivalence:
    """P ⊂ P~ = P ⊕ A (A acyclic), scrambled; g randomized by a homotopy s."""
    while True:
        P = random_poincare(rng, max_dim=max_total // 2, k=k, bk=bk, degrees=degrees)
        A = random_acyclic_poincare(rng, max_dim=max_total - P.space.total_dim, k=k, bk=bk, degrees=degrees)
        if P.space.total_dim + A.space.total_dim <= max_total:
            break
    S = poincare_sum(P, A)
    inc, proj = inclusion_and_projection(P.space, A.space, bk)
    hA = elimination_contraction(A.complex).h
    zeroF = GradedLinearMap.zero(P.space, P.space, -1, bk)
    Ht0 = block_diagonal_map(zeroF, hA)
    Q = {i: random_invertible(rng, n, bk) for i, n in S.space.dims.items()}
    Pt = transport(S, Q)
    Qm = GradedLinearMap(S.space, S.space, 0, Q, bk)
    Qinv = GradedLinearMap(S.space, S.space, 0, {i: bk.inv(M) for i, M in Q.items()}, bk)
    f = Qm @ inc
    g = proj @ Qinv
    H = GradedLinearMap.zero(P.space, P.space, -1, bk)
    Ht = Qm @ Ht0 @ Qinv
    if mix:
        sblocks = {}
        for i in Pt.space.degrees:
            r, c = P.space.dim(i - 1), Pt.space.dim(i)
            if r and c:
                sblocks[i] = bk.from_dense(_rand_int_matrix(rng, r, c, -1, 1))
        s = GradedLinearMap(Pt.space, P.space, -1, sblocks, bk)
        g = g + P.d @ s + s @ Pt.d
        H = H - s @ f
        Ht = Ht - f @ s
    zero_b = GradedPairing.zero(P.space, k - 1, bk)
    zero_bt = GradedPairing.zero(Pt.space, k - 1, bk)
    W = WeakEquivalenceData(f, g, H, Ht, zero_b, zero_bt)
    return RandomEquivalence(P, Pt, W, dict(A.space.dims))


def synthetic_model(rng, max_total=10, k=-1, bk=EXACT_BACKEND, scramble=False, degrees=(-2, 1)):
    """GluedModel with F~ = F ⊕ A (A acyclic) and i the first-summand inclusion."""
    from .graded import Report
    from .theories import GluedModel
    while True:
        P = random_poincare(rng, max_dim=max_total // 2, k=k, bk=bk, degrees=degrees)
        A = random_acyclic_poincare(rng, max_dim=max_total - P.space.total_dim, k=k, bk=bk, degrees=degrees)
        if P.space.total_dim + A.space.total_dim <= max_total:
            break
    S = poincare_sum(P, A)
    inc, _ = inclusion_and_projection(P.space, A.space, bk)
    if scramble:
        Q = {i: random_invertible(rng, n, bk) for i, n in S.space.dims.items()}
        S = transport(S, Q)
        inc = GradedLinearMap(S.space, S.space, 0, Q, bk) @ inc
        inc = GradedLinearMap(P.space, S.space, 0, dict(inc.blocks), bk)
    return GluedModel(None, P, S, inc, [], None, Report("synthetic"), False,
                      note=f"F ⊕ acyclic, acyclic dims {dict(A.space.dims)}")

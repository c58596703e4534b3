"""Discrete exterior calculus on cubical tori: primal and dual cochains, stars, Laplacians, kernels.

A k-cell of the primal torus is (S, v): S a sorted tuple of k axes, v a vertex
multi-index; it spans v + [0,1]^S.  The dual torus has the same combinatorics;
its cell (T, u) spans u + ½·1 + [0,1]^T.  The dual of the primal (S, v) is the
dual cell (S^c, v - e_{S^c}), which shares its center v + ½e_S.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .backend import EXACT_BACKEND, FLOAT_BACKEND, ScalarBackend, to_numpy
from .graded import CochainComplex, GradedLinearMap, GradedVectorSpace


def _perm_sign(seq):
    seq = list(seq)
    s = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
    return s


@dataclass(frozen=True)
class GridTorus:
    sizes: tuple
    widths: tuple = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 3 for s in sizes):
            raise ValueError("every axis needs at least 3 cells")
        widths = self.widths or tuple(Fraction(1) for _ in sizes)
        widths = tuple(Fraction(w) for w in widths)
        if len(widths) != len(sizes) or any(w <= 0 for w in widths):
            raise ValueError("mesh widths must be positive, one per axis")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "widths", widths)

    @property
    def n(self):
        return len(self.sizes)

    @property
    def volume(self):
        return int(np.prod(self.sizes))

    def axis_sets(self, k):
        return list(itertools.combinations(range(self.n), k))

    def count(self, k):
        return math.comb(self.n, k) * self.volume


class CellIndex:
    """Flat indexing of the k-cells of a torus: block per axis set, row-major vertices."""

    def __init__(self, grid: GridTorus, k: int):
        self.grid, self.k = grid, k
        self.sets = grid.axis_sets(k)
        self.set_pos = {S: i for i, S in enumerate(self.sets)}
        V = grid.volume
        self.size = len(self.sets) * V
        verts = np.array(list(itertools.product(*[range(s) for s in grid.sizes])), dtype=int).reshape(V, grid.n)
        self.verts = verts
        self.strides = np.array([int(np.prod(grid.sizes[a + 1:])) for a in range(grid.n)], dtype=int)

    def flat(self, S, v):
        v = np.mod(np.asarray(v), self.grid.sizes)
        return self.set_pos[S] * self.grid.volume + v @ self.strides

    def cells(self):
        for S in self.sets:
            for v in self.verts:
                yield S, v


class DecPackage:
    """Cubical DEC on a torus.  Matrices live on the chosen backend (exact by default)."""

    def __init__(self, grid: GridTorus, backend: ScalarBackend = EXACT_BACKEND):
        self.grid, self.bk = grid, backend
        n = grid.n
        self.idx = [CellIndex(grid, k) for k in range(n + 1)]
        self.d = [self._coboundary(k) for k in range(n)]
        self.d_dual = self.d            # the dual torus has identical combinatorics
        self.vol, self.dvol = self._volumes()
        self.wedge = [self._wedge(k) for k in range(n + 1)]
        self.star = [self._star(k) for k in range(n + 1)]                      # P^k -> D^{n-k}
        self.star_dual = [self._star_dual(j) for j in range(n + 1)]           # D^j -> P^{n-j}
        self.M = [backend.diag([self.dvol[k][c] / self.vol[k][c] for c in range(self.idx[k].size)])
                  for k in range(n + 1)]
        # dual j-cell with axes T: weight |primal partner| / |itself| = dvol/vol of a j-set
        self.M_dual = [backend.diag([self.dvol[j][c] / self.vol[j][c] for c in range(self.idx[j].size)])
                       for j in range(n + 1)]
        self._Minv = [backend.diag([self.vol[k][c] / self.dvol[k][c] for c in range(self.idx[k].size)])
                      for k in range(n + 1)]
        self._Minv_dual = [backend.diag([self.vol[j][c] / self.dvol[j][c] for c in range(self.idx[j].size)])
                           for j in range(n + 1)]
        # Gram adjoints: P^k -> P^{k-1}
        self.dstar = [None] + [backend.mm(backend.mm(self._Minv[k - 1], backend.T(self.d[k - 1])), self.M[k])
                               for k in range(1, n + 1)]
        self.dstar_dual = [None] + [backend.mm(backend.mm(self._Minv_dual[j - 1], backend.T(self.d[j - 1])),
                                               self.M_dual[j]) for j in range(1, n + 1)]
        self.lap = [self._lap(self.d, self.dstar, k) for k in range(n + 1)]
        self.lap_dual = [self._lap(self.d, self.dstar_dual, j) for j in range(n + 1)]

    # -- construction helpers -------------------------------------------------
    def _coboundary(self, k):
        src, tgt = self.idx[k], self.idx[k + 1]
        ent = {}
        for T in tgt.sets:
            for pos, a in enumerate(T):
                S = tuple(b for b in T if b != a)
                sgn = -1 if pos % 2 else 1
                e = np.zeros(self.grid.n, dtype=int)
                e[a] = 1
                rows = tgt.flat(T, tgt.verts)
                c_hi = src.flat(S, tgt.verts + e)
                c_lo = src.flat(S, tgt.verts)
                for r, ch, cl in zip(rows, c_hi, c_lo):
                    ent[(int(r), int(ch))] = ent.get((int(r), int(ch)), 0) + sgn
                    ent[(int(r), int(cl))] = ent.get((int(r), int(cl)), 0) - sgn
        return self.bk.from_dok(ent, (tgt.size, src.size))

    def _volumes(self):
        n, h = self.grid.n, self.grid.widths
        vol, dvol = [], []
        for k in range(n + 1):
            idx = self.idx[k]
            pv, dv = [], []
            for S in idx.sets:
                p = Fraction(1)
                q = Fraction(1)
                for a in range(n):
                    if a in S:
                        p *= h[a]
                    else:
                        q *= h[a]
                pv.extend([p] * self.grid.volume)
                dv.extend([q] * self.grid.volume)
            vol.append(pv)
            dvol.append(dv)
        return vol, dvol

    def dual_position(self, k):
        """For each primal k-cell, the flat index of its dual (n-k)-cell, and the sign σ(S, S^c)."""
        n = self.grid.n
        src, tgt = self.idx[k], self.idx[n - k]
        pos = np.zeros(src.size, dtype=int)
        sgn = np.zeros(src.size, dtype=int)
        for S in src.sets:
            Sc = tuple(a for a in range(n) if a not in S)
            e = np.zeros(n, dtype=int)
            for a in Sc:
                e[a] = 1
            rows = src.flat(S, src.verts)
            pos[rows] = tgt.flat(Sc, src.verts - e)
            sgn[rows] = _perm_sign(S + Sc)
        return pos, sgn

    def _wedge(self, k):
        """W with ∫ α ∧ β = αᵀ W β for primal k-form α and dual (n-k)-form β."""
        pos, sgn = self.dual_position(k)
        n = self.grid.n
        return self.bk.from_dok({(c, int(pos[c])): int(sgn[c]) for c in range(len(pos))},
                                (self.idx[k].size, self.idx[n - k].size))

    def _star(self, k):
        pos, sgn = self.dual_position(k)
        n = self.grid.n
        return self.bk.from_dok({(int(pos[c]), c): sgn[c] * self.dvol[k][c] / self.vol[k][c]
                                 for c in range(len(pos))}, (self.idx[n - k].size, self.idx[k].size))

    def _star_dual(self, j):
        """⋆ on dual j-forms, equal to (-1)^{k(n-k)} ⋆⁻¹ with k = n - j."""
        n = self.grid.n
        k = n - j
        pos, sgn = self.dual_position(k)
        s = -1 if (k * (n - k)) % 2 else 1
        return self.bk.from_dok({(c, int(pos[c])): s * sgn[c] * self.vol[k][c] / self.dvol[k][c]
                                 for c in range(len(pos))}, (self.idx[k].size, self.idx[j].size))

    def star_inv(self, k):
        """Inverse of ⋆ on primal k-forms (a map D^{n-k} -> P^k)."""
        n = self.grid.n
        s = -1 if (k * (n - k)) % 2 else 1
        return self.bk.scale(self.star_dual[n - k], s)

    def star_dual_inv(self, j):
        """Inverse of ⋆ on dual j-forms (a map P^{n-j} -> D^j)."""
        n = self.grid.n
        k = n - j
        s = -1 if (k * (n - k)) % 2 else 1
        return self.bk.scale(self.star[k], s)

    def _lap(self, d, dstar, k):
        bk = self.bk
        n = self.grid.n
        size = self.idx[k].size
        out = bk.zeros(size, size)
        if k < n:
            out = out + bk.mm(dstar[k + 1], d[k])
        if k > 0:
            out = out + bk.mm(d[k - 1], dstar[k])
        return out

    # -- complexes -------------------------------------------------------------
    def de_rham(self, shift=0, dual=False) -> CochainComplex:
        """Ω^j placed in degree j - shift."""
        n = self.grid.n
        dims = {j - shift: self.idx[j if not dual else j].size for j in range(n + 1)}
        V = GradedVectorSpace(dims)
        blocks = {j - shift: self.d[j] for j in range(n)}
        return CochainComplex(V, GradedLinearMap(V, V, 1, blocks, self.bk))

    def to_backend(self, backend):
        if backend == self.bk:
            return self
        return DecPackage(self.grid, backend)

    # -- geometry ----------------------------------------------------------------
    def centers(self, k, dual=False):
        """Cell centers in half-cell units (integers) and the per-axis span flags."""
        idx = self.idx[k]
        n = self.grid.n
        out = np.zeros((idx.size, n), dtype=int)
        span = np.zeros((idx.size, n), dtype=bool)
        V = self.grid.volume
        for si, S in enumerate(idx.sets):
            e = np.zeros(n, dtype=int)
            for a in S:
                e[a] = 1
            rows = slice(si * V, (si + 1) * V)
            if dual:
                out[rows] = 2 * idx.verts + 1 + e
            else:
                out[rows] = 2 * idx.verts + e
            span[rows] = e.astype(bool)
        return np.mod(out, 2 * np.array(self.grid.sizes)), span

    # -- float spectral tools ----------------------------------------------------
    def float_ops(self):
        return FloatSpectral(self)


class FloatSpectral:
    """Eigendecompositions of the Laplacians in the star inner product (float64)."""

    def __init__(self, pkg: DecPackage):
        self.pkg = pkg
        n = pkg.grid.n
        self._eig = {}
        self.lap = [to_numpy(L) for L in pkg.lap]
        self.lap_dual = [to_numpy(L) for L in pkg.lap_dual]
        self.m = [np.diag(to_numpy(M)).copy() for M in pkg.M]
        self.m_dual = [np.diag(to_numpy(M)).copy() for M in pkg.M_dual]
        self.n = n

    def eig(self, k, dual=False):
        key = (k, dual)
        if key not in self._eig:
            L = self.lap_dual[k] if dual else self.lap[k]
            m = self.m_dual[k] if dual else self.m[k]
            s = np.sqrt(m)
            A = (s[:, None] * L) / s[None, :]
            A = (A + A.T) / 2
            w, V = sla.eigh(A)
            w = np.where(np.abs(w) < 1e-10 * max(1.0, np.abs(w).max()), 0.0, w)
            self._eig[key] = (w, V, s)
        return self._eig[key]

    def function(self, k, fn, dual=False):
        """f(Δ_k) via the M-symmetric eigendecomposition."""
        w, V, s = self.eig(k, dual)
        return (1 / s)[:, None] * ((V * fn(w)[None, :]) @ V.T) * s[None, :]

    def heat(self, k, eps, dual=False):
        return self.function(k, lambda w: np.exp(-eps * w), dual)

    def lap_pinv(self, k, dual=False):
        return self.function(k, lambda w: np.where(w > 0, 1.0 / np.where(w > 0, w, 1.0), 0.0), dual)

    def harmonic_projector(self, k, dual=False):
        return self.function(k, lambda w: (w == 0).astype(float), dual)

    def heat_green(self, k, eps, dual=False):
        """(1 - e^{-εΔ}) Δ⁻¹, zero on harmonics."""
        def f(w):
            out = np.zeros_like(w)
            nz = w > 0
            out[nz] = -np.expm1(-eps * w[nz]) / w[nz]
            return out
        return self.function(k, f, dual)


def heat_kernel(pkg: DecPackage, k: int, eps: float, dual=False):
    if eps < 0:
        raise ValueError("ε must be nonnegative")
    if eps == 0:
        return np.eye(pkg.idx[k].size)
    return pkg.float_ops().heat(k, eps, dual)


# -- cut geometry ----------------------------------------------------------------

@dataclass(frozen=True)
class CutGeometry:
    grid: GridTorus
    axis: int = 0
    slices: tuple = (0,)
    width: int = 4          # slab half-width w in cells along the axis
    collar: int = 2         # stencil margin kept between kernels and ∂U

    def __post_init__(self):
        N = self.grid.sizes[self.axis]
        if not 0 <= self.axis < self.grid.n:
            raise ValueError("cut axis out of range")
        if 2 * self.width >= N:
            raise ValueError("slab wraps around the torus")
        sl = tuple(int(s) % N for s in self.slices)
        object.__setattr__(self, "slices", sl)
        if len(sl) == 2:
            gap = (sl[1] - sl[0]) % N
            if gap <= 2 * self.width or N - gap <= 2 * self.width:
                raise ValueError("slabs around the two slices overlap")

    def _offsets(self, centers):
        """Signed half-unit offset of each center from its nearest slice (along the axis)."""
        N2 = 2 * self.grid.sizes[self.axis]
        c = centers[:, self.axis]
        best = None
        which = None
        for si, s in enumerate(self.slices):
            off = np.mod(c - 2 * s + N2 // 2, N2) - N2 // 2
            if best is None:
                best, which = off, np.zeros_like(off)
            else:
                take = np.abs(off) < np.abs(best)
                best = np.where(take, off, best)
                which = np.where(take, si, which)
        return best, which

    def in_closed_slab(self, pkg: DecPackage, k, dual=False, margin=0):
        """Cells whose closure lies in {dist ≤ w - margin}."""
        cen, span = pkg.centers(k, dual)
        off, _ = self._offsets(cen)
        ext = span[:, self.axis].astype(int)
        return np.abs(off) + ext <= 2 * (self.width - margin)

    def dirichlet_cells(self, pkg: DecPackage, k, dual=False):
        """Closure inside the closed slab and not contained in ∂U."""
        cen, span = pkg.centers(k, dual)
        off, _ = self._offsets(cen)
        ext = span[:, self.axis].astype(int)
        return (np.abs(off) + ext <= 2 * self.width) & (np.abs(off) < 2 * self.width)

    def boundary_distance(self, pkg: DecPackage, k, dual=False):
        """Distance (physical units) from each cell center to ∂U minus the collar; ≤ 0 outside."""
        cen, _ = pkg.centers(k, dual)
        off, which = self._offsets(cen)
        h = float(self.grid.widths[self.axis])
        return (self.width - self.collar - np.abs(off) / 2.0) * h, which


def dirichlet_green(pkg: DecPackage, cut: CutGeometry, k: int, dual=False):
    """Inverse of the Dirichlet Laplacian on the slab, extended by zero (float).

    Dirichlet is imposed componentwise: the Laplacian is restricted to the
    cells of U not lying in ∂U, every neighbour outside counting as zero.
    """
    L = to_numpy(pkg.lap_dual[k] if dual else pkg.lap[k])
    mask = cut.dirichlet_cells(pkg, k, dual)
    ids = np.flatnonzero(mask)
    G = np.zeros_like(L)
    if ids.size:
        sub = L[np.ix_(ids, ids)]
        if np.linalg.matrix_rank(sub) < ids.size:
            raise np.linalg.LinAlgError("singular Dirichlet Laplacian")
        G[np.ix_(ids, ids)] = np.linalg.inv(sub)
    return G


def smoothstep(t):
    """1 for t ≤ ½, 0 for t ≥ 1, quintic in between."""
    t = np.asarray(t, dtype=float)
    u = np.clip((1.0 - t) / 0.5, 0.0, 1.0)
    return u * u * u * (u * (6 * u - 15) + 10)


def center_distances(pkg: DecPackage, k, dual=False):
    cen, _ = pkg.centers(k, dual)
    sizes2 = 2 * np.array(pkg.grid.sizes)
    h = np.array([float(w) for w in pkg.grid.widths])
    diff = cen[:, None, :] - cen[None, :, :]
    diff = np.mod(diff + sizes2 // 2, sizes2) - sizes2 // 2
    return np.sqrt(np.sum((diff * h / 2.0) ** 2, axis=2))


@dataclass
class KernelMatrix:
    matrix: object
    support: str
    degrees: tuple = (0, 0)
    region: np.ndarray | None = None        # boolean mask of the declared support

    def off_support_max(self, bk=None):
        A = to_numpy(self.matrix)
        if self.region is None:
            return 0.0
        return float(np.max(np.abs(A[~self.region]))) if (~self.region).any() else 0.0


def bump_mu(pkg: DecPackage, cut: CutGeometry, k: int = 0, dual=False) -> KernelMatrix:
    """μ(x, y) = g(dist(x, y) / min(δ(x), δ(y))), δ the collar-adjusted distance to ∂U."""
    delta, which = cut.boundary_distance(pkg, k, dual)
    D = center_distances(pkg, k, dual)
    m = np.minimum(delta[:, None], delta[None, :])
    same = which[:, None] == which[None, :]
    inside = (delta[:, None] > 0) & (delta[None, :] > 0) & same
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(inside, D / np.where(m > 0, m, 1.0), np.inf)
    mu = np.where(inside, smoothstep(t), 0.0)
    return KernelMatrix(mu, "inside U×U", (k, k), inside)


# -- mollifier kernels -------------------------------------------------------------

def _weights(m):
    return {j: Fraction(m + 1 - abs(j), (m + 1) ** 2) for j in range(-m, m + 1)}


def _shift_1d(N, j):
    """(T^j f)(i) = f(i + j) on a cyclic index."""
    return {(i, (i + j) % N): 1 for i in range(N)}


def _mollifier_1d(N, m):
    """(R0, R1, K): R on vertices/edges and K: edges -> vertices with dK + Kd = 1 - R."""
    w = _weights(m)
    R = {}
    for j, wj in w.items():
        for key, v in _shift_1d(N, j).items():
            R[key] = R.get(key, 0) + wj * v
    K = {}
    for j, wj in w.items():
        if j > 0:
            terms = [(mm, -1) for mm in range(j)]
        elif j < 0:
            terms = [(j + mm, 1) for mm in range(-j)]
        else:
            terms = []
        for sh, sg in terms:
            for i in range(N):
                key = (i, (i + sh) % N)
                K[key] = K.get(key, 0) + wj * sg
    return R, K


def _kron_dok(a, b, shape_b):
    out = {}
    nb_r, nb_c = shape_b
    for (i, j), v in a.items():
        for (k, l), u in b.items():
            key = (i * nb_r + k, j * nb_c + l)
            out[key] = out.get(key, 0) + v * u
    return out


def mollifier_rho_chi(pkg: DecPackage, eta):
    """Global (ρ̂, χ̂) as graded maps on the de Rham complex with d χ̂ + χ̂ d = 1 - ρ̂.

    χ̂ = Σ_i (Koszul sign) 1^{⊗(i-1)} ⊗ χ̂_i ⊗ ρ̂^{⊗(n-i)} built from 1D pairs.
    """
    grid, bk = pkg.grid, pkg.bk
    n = grid.n
    eta = Fraction(eta)
    ones = []
    for a in range(n):
        m = int(math.floor(eta / grid.widths[a]))
        if 2 * m >= grid.sizes[a]:
            raise ValueError("mollifier width exceeds half the torus")
        R, K = _mollifier_1d(grid.sizes[a], m)
        ones.append((R, K))
    C = pkg.de_rham()
    rho_blocks, chi_blocks = {}, {}
    for k in range(n + 1):
        idx = pkg.idx[k]
        Rtot = {}
        for S in idx.sets:
            mat = _tensor_factor_map(grid, S, S, [ones[a][0] for a in range(n)])
            _place(Rtot, mat, idx, idx, S, S)
        rho_blocks[k] = bk.from_dok(Rtot, (idx.size, idx.size))
    for k in range(1, n + 1):
        src, tgt = pkg.idx[k], pkg.idx[k - 1]
        Ktot = {}
        for S in src.sets:
            for pos, a in enumerate(S):
                T = tuple(b for b in S if b != a)
                sign = -1 if pos % 2 else 1      # degree of earlier factors
                facs = []
                for b in range(n):
                    if b < a:
                        facs.append(None)        # identity
                    elif b == a:
                        facs.append(ones[a][1])
                    else:
                        facs.append(ones[b][0])
                mat = _tensor_factor_map(grid, S, T, facs)
                if sign == -1:
                    mat = {kk: -v for kk, v in mat.items()}
                _place(Ktot, mat, src, tgt, S, T)
        chi_blocks[k] = bk.from_dok(Ktot, (tgt.size, src.size))
    V = C.space
    rho = GradedLinearMap(V, V, 0, rho_blocks, bk)
    chi = GradedLinearMap(V, V, -1, chi_blocks, bk)
    return rho, chi


def _tensor_factor_map(grid, S, T, factors):
    """Kronecker product over axes of 1D maps; None means identity."""
    out = {(0, 0): Fraction(1)}
    rows, cols = 1, 1
    for a in range(grid.n):
        N = grid.sizes[a]
        f = factors[a]
        if f is None:
            f = {(i, i): 1 for i in range(N)}
        out = _kron_dok(out, f, (N, N))
        rows, cols = rows * N, cols * N
    return out


def _place(acc, mat, src_idx, tgt_idx, S, T):
    V = src_idx.grid.volume
    r0 = tgt_idx.set_pos[T] * V
    c0 = src_idx.set_pos[S] * V
    for (i, j), v in mat.items():
        if v:
            key = (r0 + i, c0 + j)
            acc[key] = acc.get(key, 0) + v


def localize_chi(pkg: DecPackage, chi: GradedLinearMap, cut: CutGeometry, dual=False) -> GradedLinearMap:
    """χ̂_U = mask χ̂ mask, mask = cells one collar cell inside the closed slab."""
    bk = pkg.bk
    blocks = {}
    for k, B in chi.blocks.items():
        rows = cut.in_closed_slab(pkg, k - 1, dual, margin=1)
        cols = cut.in_closed_slab(pkg, k, dual, margin=1)
        Pr = bk.diag([1 if r else 0 for r in rows])
        Pc = bk.diag([1 if c else 0 for c in cols])
        blocks[k] = bk.mm(bk.mm(Pr, B), Pc)
    return GradedLinearMap(chi.source, chi.target, -1, blocks, bk)

"""Homotopy transfer of L∞ structures along a contraction, up to arity 3 (exact rationals).

Shifted convention: every bracket m_k has degree +1 and is graded symmetric,
m_k(.., x, y, ..) = (-1)^{|x||y|} m_k(.., y, x, ..). The generalized Jacobi identity reads
Σ ε(σ) m_j(m_i(x_σ1..x_σi), x_σ(i+1)..x_σn) = 0 over (i, n-i) unshuffles, ε the Koszul sign.

With j r = 1 - d h - h d the transferred structure and ∞-morphism are
    m2'     = r m2 (j, j)
    J2      = -h m2 (j, j)
    T3      = m3 (j, j, j) + Σ_(2,1)-unshuffles ε m2 (J2(x_a, x_b), j x_c)
    m3'     = r T3,   J3 = -h T3
The ∞-morphism identity Σ ε J(m'(..), ..) = Σ ε m(J(..), .., J(..)) is checked up to arity 3.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product

import numpy as np

from .graded import Check, GradedLinearMap, Report
from .hpl import Contraction

MAX_ARITY = 3
MAX_DIM = 6


def _frac_matrix(M):
    """DomainMatrix or ndarray -> object ndarray of Fractions."""
    r, c = M.shape
    out = np.full((r, c), Fraction(0), dtype=object)
    if isinstance(M, np.ndarray):
        for i in range(r):
            for j in range(c):
                out[i, j] = Fraction(M[i, j]).limit_denominator() if M[i, j] else Fraction(0)
        return out
    for i, row in M.to_dod().items():
        for j, v in row.items():
            out[i, j] = Fraction(int(v.numerator), int(v.denominator))
    return out


def _flatten(f: GradedLinearMap):
    """Total matrix of a graded map as Fractions, with per-basis degrees of source and target."""
    src = [d for d in f.source.degrees for _ in range(f.source.dim(d))]
    tgt = [d for d in f.target.degrees for _ in range(f.target.dim(d))]
    return _frac_matrix(f.total()), src, tgt


def koszul_sign(degs, perm):
    """Sign of permuting graded elements with degrees degs into order perm."""
    sign, seq = 1, list(perm)
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[a] > seq[b] and (degs[seq[a]] * degs[seq[b]]) % 2:
                sign = -sign
    return sign


def unshuffles(n, i):
    for first in combinations(range(n), i):
        rest = tuple(k for k in range(n) if k not in first)
        yield first + rest


@dataclass
class LInfinityAlgebra:
    """Shifted L∞ structure on a basis with degrees; brackets[k] has shape (n,) + (n,)*k."""
    degrees: list
    brackets: dict

    @property
    def dim(self):
        return len(self.degrees)

    def bracket(self, k, vecs):
        """m_k on a tuple of vectors (object arrays)."""
        T = self.brackets.get(k)
        n = self.dim
        out = np.full(n, Fraction(0), dtype=object)
        if T is None:
            return out
        supports = [[a for a in range(n) if v[a]] for v in vecs]
        for idx in product(*supports):
            coef = Fraction(1)
            for v, a in zip(vecs, idx):
                coef *= v[a]
            out = out + coef * T[(slice(None),) + idx]
        return out

    def basis(self, a):
        v = np.full(self.dim, Fraction(0), dtype=object)
        v[a] = Fraction(1)
        return v

    def vec_degree(self, v):
        ds = {self.degrees[a] for a in range(self.dim) if v[a]}
        if len(ds) > 1:
            raise ValueError("inhomogeneous vector")
        return ds.pop() if ds else None


def degree_violations(L: LInfinityAlgebra) -> int:
    """Nonzero bracket entries whose degrees do not add up to (sum of inputs) + 1."""
    bad = 0
    for k, T in L.brackets.items():
        for idx, v in np.ndenumerate(T):
            if v and L.degrees[idx[0]] != sum(L.degrees[a] for a in idx[1:]) + 1:
                bad += 1
    return bad


def symmetry_residual(L: LInfinityAlgebra) -> Fraction:
    worst = Fraction(0)
    for k, T in L.brackets.items():
        if k < 2:
            continue
        for idx in product(range(L.dim), repeat=k):
            for a in range(k - 1):
                sw = list(idx)
                sw[a], sw[a + 1] = sw[a + 1], sw[a]
                s = -1 if (L.degrees[idx[a]] * L.degrees[idx[a + 1]]) % 2 else 1
                diff = T[(slice(None),) + idx] - s * T[(slice(None),) + tuple(sw)]
                worst = max(worst, max(abs(x) for x in diff))
    return worst


def jacobi_residual(L: LInfinityAlgebra, n: int) -> Fraction:
    """Max |entry| of the arity-n generalized Jacobi expression over basis inputs (brackets above 3 taken as 0)."""
    worst = Fraction(0)
    for idx in product(range(L.dim), repeat=n):
        degs = [L.degrees[a] for a in idx]
        total = np.full(L.dim, Fraction(0), dtype=object)
        for i in range(1, n + 1):
            j = n + 1 - i
            if i not in L.brackets or j not in L.brackets:
                continue
            for perm in unshuffles(n, i):
                eps = koszul_sign(degs, perm)
                inner = L.bracket(i, [L.basis(idx[p]) for p in perm[:i]])
                if not any(inner):
                    continue
                outer = L.bracket(j, [inner] + [L.basis(idx[p]) for p in perm[i:]])
                total = total + eps * outer
        worst = max(worst, max((abs(x) for x in total), default=Fraction(0)))
    return worst


def jacobi_report(L: LInfinityAlgebra, arity=MAX_ARITY, name="L∞") -> Report:
    rep = Report(name)
    bad = degree_violations(L)
    rep.add(Check("brackets have degree 1", bad == 0, float(bad)))
    r = symmetry_residual(L)
    rep.add(Check("graded symmetry", r == 0, float(r)))
    for n in range(1, arity + 1):
        r = jacobi_residual(L, n)
        rep.add(Check(f"Jacobi arity {n}", r == 0, float(r)))
    return rep


def from_dg_lie(d, bracket, degrees) -> LInfinityAlgebra:
    """Shifted structure of a dg Lie algebra (d degree +1, [,] degree 0, antisymmetric up to Koszul).

    On the suspension (shifted degree = degree - 1): m1 = -d, m2(sx, sy) = (-1)^{|x|} s[x, y].
    """
    d = np.array(d, dtype=object)
    n = len(degrees)
    B = np.array(bracket, dtype=object)
    m1 = np.array([[-Fraction(v) for v in row] for row in d], dtype=object)
    m2 = np.full((n, n, n), Fraction(0), dtype=object)
    for a in range(n):
        for b in range(n):
            s = -1 if degrees[a] % 2 else 1
            m2[:, a, b] = np.array([s * Fraction(v) for v in B[:, a, b]], dtype=object)
    return LInfinityAlgebra([g - 1 for g in degrees], {1: m1, 2: m2})


@dataclass
class TransferResult:
    small: LInfinityAlgebra
    morphism: dict          # arity -> tensor (J1 = j, J2)
    report: Report


class TransferError(AssertionError):
    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


def _apply(M, v):
    return np.array([sum((M[i, a] * v[a] for a in range(M.shape[1]) if v[a]), Fraction(0))
                     for i in range(M.shape[0])], dtype=object)


def linfty_transfer(big: LInfinityAlgebra, c: Contraction, arity=MAX_ARITY, strict=True) -> TransferResult:
    """Transferred brackets and ∞-morphism components; strict raises TransferError on a failed identity."""
    if arity > MAX_ARITY:
        raise ValueError(f"transfer is implemented up to arity {MAX_ARITY}")
    if big.dim > MAX_DIM:
        raise ValueError(f"transfer is capped at dimension {MAX_DIM}")
    j, src, tgt = _flatten(c.j)
    r, _, _ = _flatten(c.r)
    h, _, _ = _flatten(c.h)
    if list(tgt) != list(big.degrees):
        raise ValueError("contraction and L∞ structure use different degree layouts")
    rep = Report("linfty_transfer")
    rep.extend(jacobi_report(big, arity, "input"), prefix="input ")
    small_deg = list(src)
    n, N = len(small_deg), big.dim
    # m1' = r m1 j
    m1 = np.array([[sum((r[i, a] * sum((big.brackets[1][a, b] * j[b, k] for b in range(N)), Fraction(0))
                         for a in range(N)), Fraction(0)) for k in range(n)] for i in range(n)], dtype=object)
    small = {1: m1}
    J = {1: j}
    jb = [j[:, k].copy() for k in range(n)]
    if arity >= 2 and 2 in big.brackets:
        m2s = np.full((n, n, n), Fraction(0), dtype=object)
        J2 = np.full((N, n, n), Fraction(0), dtype=object)
        for a, b in product(range(n), repeat=2):
            v = big.bracket(2, [jb[a], jb[b]])
            m2s[:, a, b] = _apply(r, v)
            J2[:, a, b] = -_apply(h, v)
        small[2] = m2s
        J[2] = J2
    if arity >= 3 and 2 in J:
        m3s = np.full((n, n, n, n), Fraction(0), dtype=object)
        J3 = np.full((N, n, n, n), Fraction(0), dtype=object)
        for idx in product(range(n), repeat=3):
            degs = [small_deg[a] for a in idx]
            v = big.bracket(3, [jb[a] for a in idx])
            for perm in unshuffles(3, 2):
                inner = J[2][:, idx[perm[0]], idx[perm[1]]]
                if any(inner):
                    v = v + koszul_sign(degs, perm) * big.bracket(2, [inner, jb[idx[perm[2]]]])
            m3s[(slice(None),) + idx] = _apply(r, v)
            J3[(slice(None),) + idx] = -_apply(h, v)
        small[3] = m3s
        J[3] = J3
    out = LInfinityAlgebra(small_deg, small)
    rep.extend(jacobi_report(out, arity, "output"), prefix="output ")
    for k in range(2, arity + 1):
        if k in J:
            rep.add(morphism_check(big, out, J, k))
    if strict and not rep.passed:
        raise TransferError("transferred structure violates an identity", rep)
    return TransferResult(out, J, rep)


def set_partitions(items):
    """Partitions of a tuple into blocks, blocks ordered by their first element."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [(first,)] + part
        for b in range(len(part)):
            yield part[:b] + [(first,) + part[b]] + part[b + 1:]


def _J_apply(J, vecs):
    """J_k on basis-index inputs (k = len(vecs))."""
    return J[len(vecs)][(slice(None),) + tuple(vecs)].copy()


def morphism_check(big, small, J, n) -> Check:
    """Arity-n ∞-morphism identity on basis inputs.

    Σ_{i, σ ∈ Sh(i, n-i)} ε J_{n-i+1}(m'_i(x_σ..), x_σ..) = Σ_{partitions} ε m_k(J(B_1), .., J(B_k)).
    """
    worst = Fraction(0)
    N = big.dim
    for idx in product(range(small.dim), repeat=n):
        degs = [small.degrees[a] for a in idx]
        lhs = np.full(N, Fraction(0), dtype=object)
        for i in range(1, n + 1):
            if i not in small.brackets or (n - i + 1) not in J:
                continue
            for perm in unshuffles(n, i):
                inner = small.bracket(i, [small.basis(idx[p]) for p in perm[:i]])
                for c_ in range(small.dim):
                    if inner[c_]:
                        lhs = lhs + koszul_sign(degs, perm) * inner[c_] * _J_apply(J, [c_] + [idx[p] for p in perm[i:]])
        rhs = np.full(N, Fraction(0), dtype=object)
        for part in set_partitions(tuple(range(n))):
            k = len(part)
            if k not in big.brackets:
                continue
            perm = tuple(x for b in part for x in b)
            args = [_J_apply(J, [idx[x] for x in b]) for b in part]
            rhs = rhs + koszul_sign(degs, perm) * big.bracket(k, args)
        worst = max(worst, max(abs(x) for x in lhs - rhs))
    return Check(f"infinity-morphism arity {n}", worst == 0, float(worst))

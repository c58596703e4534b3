"""Scalar backends: exact rationals (sparse sympy DomainMatrix over QQ) and float64 (numpy)."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

EXACT = "exact"
FLOAT = "float"


def _to_qq(v):
    if isinstance(v, Fraction):
        return QQ(v.numerator, v.denominator)
    if isinstance(v, (int, np.integer)):
        return QQ(int(v))
    if isinstance(v, (float, np.floating)):
        f = Fraction(float(v))
        return QQ(f.numerator, f.denominator)
    return QQ.convert(v)


@dataclass(frozen=True)
class ScalarBackend:
    kind: str = EXACT
    tol: float = 1e-9

    def __post_init__(self):
        if self.kind not in (EXACT, FLOAT):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == FLOAT and not self.tol > 0:
            raise ValueError("float backend needs a positive tolerance")

    @property
    def exact(self) -> bool:
        return self.kind == EXACT

    # -- construction -------------------------------------------------
    def zeros(self, r, c):
        if self.exact:
            return DomainMatrix({}, (r, c), QQ)
        return np.zeros((r, c))

    def eye(self, n):
        if self.exact:
            return DomainMatrix({i: {i: QQ(1)} for i in range(n)}, (n, n), QQ)
        return np.eye(n)

    def from_dok(self, entries, shape):
        """Build from a {(i, j): value} dict; zero values are dropped."""
        if self.exact:
            dod = {}
            for (i, j), v in entries.items():
                q = _to_qq(v)
                if q:
                    dod.setdefault(i, {})[j] = q
            return DomainMatrix(dod, shape, QQ)
        M = np.zeros(shape)
        for (i, j), v in entries.items():
            M[i, j] = float(v)
        return M

    def from_dense(self, rows, shape=None):
        if shape is None:
            arr = rows if isinstance(rows, np.ndarray) else None
            if arr is not None:
                shape = arr.shape
            else:
                shape = (len(rows), len(rows[0]) if len(rows) else 0)
        if not self.exact:
            if isinstance(rows, np.ndarray):
                return rows.astype(float).reshape(shape)
            return np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(shape)
        ent = {}
        for i, r in enumerate(rows):
            for j, v in enumerate(r):
                if v != 0:
                    ent[(i, j)] = v
        return self.from_dok(ent, shape)

    def diag(self, values):
        n = len(values)
        return self.from_dok({(i, i): v for i, v in enumerate(values)}, (n, n))

    def convert(self, M):
        """Bring a matrix from either backend into this one."""
        if self.exact:
            if isinstance(M, DomainMatrix):
                return M
            return self.from_dense(np.asarray(M), np.asarray(M).shape)
        if isinstance(M, DomainMatrix):
            return to_numpy(M)
        return np.asarray(M, dtype=float)

    # -- arithmetic ---------------------------------------------------
    def mm(self, A, B):
        return A * B if self.exact else A @ B

    def T(self, A):
        return A.transpose() if self.exact else A.T

    def scale(self, M, s):
        if s == 1:
            return M
        if self.exact:
            return M * _to_qq(s)
        return M * float(s)

    def hstack(self, blocks, rows):
        blocks = [b for b in blocks]
        if not blocks:
            return self.zeros(rows, 0)
        if self.exact:
            out = blocks[0]
            return out.hstack(*blocks[1:]) if len(blocks) > 1 else out
        return np.hstack(blocks)

    def vstack(self, blocks, cols):
        if not blocks:
            return self.zeros(0, cols)
        if self.exact:
            out = blocks[0]
            return out.vstack(*blocks[1:]) if len(blocks) > 1 else out
        return np.vstack(blocks)

    def block(self, grid, row_sizes, col_sizes):
        """Assemble a block matrix; None entries are zero blocks."""
        if self.exact:
            dod = {}
            r0 = 0
            for bi, rs in enumerate(row_sizes):
                c0 = 0
                for bj, cs in enumerate(col_sizes):
                    B = grid[bi][bj]
                    if B is not None:
                        for i, row in B.to_dod().items():
                            tgt = dod.setdefault(r0 + i, {})
                            for j, v in row.items():
                                tgt[c0 + j] = v
                    c0 += cs
                r0 += rs
            return DomainMatrix(dod, (sum(row_sizes), sum(col_sizes)), QQ)
        out = np.zeros((sum(row_sizes), sum(col_sizes)))
        r0 = 0
        for bi, rs in enumerate(row_sizes):
            c0 = 0
            for bj, cs in enumerate(col_sizes):
                B = grid[bi][bj]
                if B is not None:
                    out[r0:r0 + rs, c0:c0 + cs] = B
                c0 += cs
            r0 += rs
        return out

    def extract(self, M, rows, cols):
        if self.exact:
            return M.extract(list(rows), list(cols))
        return M[np.ix_(list(rows), list(cols))]

    # -- predicates and norms ----------------------------------------
    def max_abs(self, M) -> float:
        if self.exact:
            best = 0
            for row in M.to_dod().values():
                for v in row.values():
                    a = abs(v)
                    if a > best:
                        best = a
            return float(best)
        return float(np.max(np.abs(M))) if M.size else 0.0

    def max_abs_exact(self, M):
        """Exact max-norm as a Fraction (exact backend) or float."""
        if self.exact:
            best = Fraction(0)
            for row in M.to_dod().values():
                for v in row.values():
                    a = Fraction(int(v.numerator), int(v.denominator))
                    best = max(best, abs(a))
            return best
        return self.max_abs(M)

    def is_zero(self, M, tol=None) -> bool:
        if self.exact:
            return not any(M.to_dod().values()) if M.shape[0] and M.shape[1] else True
        return self.max_abs(M) <= (self.tol if tol is None else tol)

    def equal(self, A, B, tol=None) -> bool:
        return self.is_zero(A - B, tol)

    # -- linear algebra -----------------------------------------------
    def rank(self, M) -> int:
        r, c = M.shape
        if r == 0 or c == 0:
            return 0
        if self.exact:
            return len(self.pivot_columns(M))
        s = np.linalg.svd(M, compute_uv=False)
        return int(np.sum(s > self.tol * s[0])) if s[0] > 0 else 0

    def near_rank_deficient(self, M) -> bool:
        """Float only: a singular value within 10x of the cutoff."""
        if self.exact or 0 in M.shape:
            return False
        s = np.linalg.svd(M, compute_uv=False)
        if s[0] == 0:
            return False
        cut = self.tol * s[0]
        return bool(np.any((s > cut / 10) & (s < cut * 10)))

    def nullspace(self, M):
        """Columns spanning ker M (deterministic)."""
        r, c = M.shape
        if c == 0:
            return self.zeros(0, 0)
        if r == 0:
            return self.eye(c)
        if self.exact:
            R, piv = M.to_field().rref(method="GJ")
            pset = set(piv)
            col = {f: a for a, f in enumerate(j for j in range(c) if j not in pset)}
            dod = {}
            for f, a in col.items():
                dod.setdefault(f, {})[a] = QQ(1)
            rows = R.to_sdm()
            for t, pc in enumerate(piv):
                for f, v in rows.get(t, {}).items():
                    if f in col:
                        dod.setdefault(pc, {})[col[f]] = -v
            return DomainMatrix(dod, (c, len(col)), QQ)
        u, s, vt = np.linalg.svd(M)
        rk = int(np.sum(s > self.tol * s[0])) if s.size and s[0] > 0 else 0
        return vt[rk:].T.copy()

    def pivot_columns(self, M):
        """Indices of a maximal independent set of columns, chosen left to right."""
        r, c = M.shape
        if r == 0 or c == 0:
            return []
        if self.exact:
            # Gauss-Jordan over QQ; fraction-free elimination blows up on
            # large sparse incidence matrices
            _, piv = M.to_field().rref(method="GJ")
            return list(piv)
        Q, R, P = sla.qr(M, pivoting=True, mode="economic")
        d = np.abs(np.diag(R))
        if d.size == 0 or d[0] == 0:
            return []
        rk = int(np.sum(d > self.tol * d[0]))
        # greedy left-to-right selection keeps the choice reproducible
        chosen = []
        basis = np.zeros((r, 0))
        for j in range(c):
            cand = np.hstack([basis, M[:, [j]]])
            if np.linalg.matrix_rank(cand, tol=self.tol * max(1.0, np.abs(M).max())) > basis.shape[1]:
                chosen.append(j)
                basis = cand
                if len(chosen) == rk:
                    break
        return chosen

    def inv(self, M):
        n = M.shape[0]
        if n == 0:
            return self.zeros(0, 0)
        if self.exact:
            return M.to_dense().inv().to_sparse()
        return np.linalg.inv(M)

    def solve(self, A, B):
        """Solve A X = B for a consistent system; raises if inconsistent."""
        r, c = A.shape
        if c == 0:
            if not self.is_zero(B):
                raise np.linalg.LinAlgError("inconsistent system")
            return self.zeros(0, B.shape[1])
        if self.exact:
            R, piv = A.hstack(B).to_field().rref(method="GJ")
            piv = list(piv)
            if any(p >= c for p in piv):
                raise np.linalg.LinAlgError("inconsistent system")
            Rl = R.to_sparse().to_dod()
            X = {}
            for row, p in enumerate(piv):
                for j, v in Rl.get(row, {}).items():
                    if j >= c:
                        X.setdefault(p, {})[j - c] = v
            return DomainMatrix(X, (c, B.shape[1]), QQ)
        X, *_ = np.linalg.lstsq(A, B, rcond=None)
        if self.max_abs(A @ X - B) > self.tol * max(1.0, self.max_abs(B)) * 10:
            raise np.linalg.LinAlgError("inconsistent system")
        return X

    def to_numpy(self, M):
        return to_numpy(M)


def to_numpy(M):
    if isinstance(M, DomainMatrix):
        out = np.zeros(M.shape)
        for i, row in M.to_dod().items():
            for j, v in row.items():
                out[i, j] = float(v)
        return out
    return np.asarray(M, dtype=float)


def entries_as_strings(M, exact: bool):
    """Dense row-major list of strings: 'num/den' for rationals, repr for floats."""
    r, c = M.shape
    if exact:
        out = [["0"] * c for _ in range(r)]
        for i, row in M.to_dod().items():
            for j, v in row.items():
                num, den = int(v.numerator), int(v.denominator)
                out[i][j] = f"{num}" if den == 1 else f"{num}/{den}"
        return out
    A = np.asarray(M, dtype=float)
    return [[repr(float(x)) for x in row] for row in A]


def parse_entry(s: str):
    if "/" in s or s.lstrip("-").isdigit():
        return Fraction(s)
    return float(s)


EXACT_BACKEND = ScalarBackend(EXACT)
FLOAT_BACKEND = ScalarBackend(FLOAT, 1e-9)

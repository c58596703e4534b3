"""Graded vector spaces, degree-homogeneous block maps, cochain complexes and cohomology."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .backend import EXACT_BACKEND, ScalarBackend


class StructuralError(ValueError):
    """Shape, degree or compatibility mismatch (as opposed to a failed identity)."""


@dataclass
class Check:
    name: str
    passed: bool
    residual: float = 0.0
    detail: dict = field(default_factory=dict)

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "residual": _fmt_residual(self.residual), "detail": self.detail}


def _fmt_residual(r):
    return r if isinstance(r, (int, float)) else float(r)


@dataclass
class Report:
    name: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def residual(self) -> float:
        return max((float(c.residual) for c in self.checks), default=0.0)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, other: "Report", prefix: str = ""):
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.passed, c.residual, c.detail))

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {"name": self.name, "passed": self.passed, "checks": [c.as_dict() for c in self.checks]}


def residual_check(name, M, backend: ScalarBackend, tol=None, **detail) -> Check:
    """Zero-test of a matrix (or list of matrices) with its max-norm as residual."""
    mats = M if isinstance(M, (list, tuple)) else [M]
    res = max((backend.max_abs(m) for m in mats), default=0.0)
    ok = all(backend.is_zero(m, tol) for m in mats)
    return Check(name, ok, res, detail)


class GradedVectorSpace:
    """Finite-dimensional Z-graded space: degree -> dimension, optional basis labels."""

    __slots__ = ("dims", "labels")

    def __init__(self, dims: dict, labels: dict | None = None):
        self.dims = {int(i): int(n) for i, n in sorted(dims.items()) if n}
        if any(n < 0 for n in self.dims.values()):
            raise StructuralError("negative dimension")
        self.labels = None
        if labels is not None:
            self.labels = {}
            for i, lab in labels.items():
                lab = list(lab)
                if len(lab) != self.dim(i):
                    raise StructuralError(f"label count mismatch in degree {i}")
                if lab:
                    self.labels[int(i)] = lab

    def dim(self, i) -> int:
        return self.dims.get(i, 0)

    @property
    def degrees(self):
        return sorted(self.dims)

    @property
    def total_dim(self) -> int:
        return sum(self.dims.values())

    def offsets(self, degrees=None):
        degs = self.degrees if degrees is None else degrees
        out, o = {}, 0
        for i in degs:
            out[i] = o
            o += self.dim(i)
        return out

    def euler_characteristic(self) -> int:
        return sum((-1) ** (i % 2) * n for i, n in self.dims.items())

    def label(self, i, a):
        if self.labels and i in self.labels:
            return self.labels[i][a]
        return f"e{i}_{a}"

    def shift(self, k) -> "GradedVectorSpace":
        labels = None if self.labels is None else {i - k: l for i, l in self.labels.items()}
        return GradedVectorSpace({i - k: n for i, n in self.dims.items()}, labels)

    def dual(self) -> "GradedVectorSpace":
        labels = None if self.labels is None else {-i: [f"{s}*" for s in l] for i, l in self.labels.items()}
        return GradedVectorSpace({-i: n for i, n in self.dims.items()}, labels)

    def __add__(self, other: "GradedVectorSpace") -> "GradedVectorSpace":
        degs = set(self.dims) | set(other.dims)
        labels = None
        if self.labels is not None or other.labels is not None:
            labels = {i: [self.label(i, a) for a in range(self.dim(i))]
                      + [other.label(i, a) for a in range(other.dim(i))] for i in degs}
        return GradedVectorSpace({i: self.dim(i) + other.dim(i) for i in degs}, labels)

    def __eq__(self, other):
        return isinstance(other, GradedVectorSpace) and self.dims == other.dims

    def __hash__(self):
        return hash(tuple(self.dims.items()))

    def __repr__(self):
        return f"GradedVectorSpace({self.dims})"


class GradedLinearMap:
    """Degree-d map; blocks[i] sends source degree i to target degree i + d. Missing blocks are zero."""

    def __init__(self, source: GradedVectorSpace, target: GradedVectorSpace, degree: int,
                 blocks: dict | None = None, backend: ScalarBackend = EXACT_BACKEND):
        self.source, self.target, self.degree, self.backend = source, target, int(degree), backend
        self.blocks = {}
        for i, B in (blocks or {}).items():
            shape = (target.dim(i + degree), source.dim(i))
            if tuple(B.shape) != shape:
                raise StructuralError(f"block {i}: shape {tuple(B.shape)} != {shape}")
            if shape[0] and shape[1]:
                self.blocks[int(i)] = B

    # -- access ---------------------------------------------------------
    def block(self, i):
        B = self.blocks.get(i)
        if B is None:
            return self.backend.zeros(self.target.dim(i + self.degree), self.source.dim(i))
        return B

    @classmethod
    def zero(cls, source, target, degree, backend=EXACT_BACKEND):
        return cls(source, target, degree, {}, backend)

    @classmethod
    def identity(cls, space, backend=EXACT_BACKEND):
        return cls(space, space, 0, {i: backend.eye(n) for i, n in space.dims.items()}, backend)

    # -- algebra ----------------------------------------------------------
    def _same_shape(self, other):
        if self.source != other.source or self.target != other.target or self.degree != other.degree:
            raise StructuralError("maps are not parallel")

    def __add__(self, other):
        self._same_shape(other)
        blocks = {i: self.block(i) + other.block(i) for i in set(self.blocks) | set(other.blocks)}
        return GradedLinearMap(self.source, self.target, self.degree, blocks, self.backend)

    def __sub__(self, other):
        self._same_shape(other)
        blocks = {i: self.block(i) - other.block(i) for i in set(self.blocks) | set(other.blocks)}
        return GradedLinearMap(self.source, self.target, self.degree, blocks, self.backend)

    def __neg__(self):
        return GradedLinearMap(self.source, self.target, self.degree,
                               {i: -B for i, B in self.blocks.items()}, self.backend)

    def scale(self, s):
        return GradedLinearMap(self.source, self.target, self.degree,
                               {i: self.backend.scale(B, s) for i, B in self.blocks.items()}, self.backend)

    def signed(self, sign: Callable[[int], int]):
        """Multiply block i by sign(i)."""
        return GradedLinearMap(self.source, self.target, self.degree,
                               {i: (B if sign(i) == 1 else self.backend.scale(B, sign(i)))
                                for i, B in self.blocks.items()}, self.backend)

    def __matmul__(self, other: "GradedLinearMap"):
        """Composition self ∘ other."""
        if other.target != self.source:
            raise StructuralError("composition: target/source mismatch")
        blocks = {}
        for i, B in other.blocks.items():
            A = self.blocks.get(i + other.degree)
            if A is not None:
                blocks[i] = self.backend.mm(A, B)
        return GradedLinearMap(other.source, self.target, self.degree + other.degree, blocks, self.backend)

    def transpose(self):
        """Transpose as a map between duals: target* -> source*, same degree."""
        blocks = {-(i + self.degree): self.backend.T(B)
                  for i, B in self.blocks.items()}
        return GradedLinearMap(self.target.dual(), self.source.dual(), self.degree, blocks, self.backend)

    def restrict_blocks(self, degrees):
        return GradedLinearMap(self.source, self.target, self.degree,
                               {i: B for i, B in self.blocks.items() if i in degrees}, self.backend)

    def to_backend(self, backend: ScalarBackend):
        return GradedLinearMap(self.source, self.target, self.degree,
                               {i: backend.convert(B) for i, B in self.blocks.items()}, backend)

    def max_abs(self) -> float:
        return max((self.backend.max_abs(B) for B in self.blocks.values()), default=0.0)

    def is_zero(self, tol=None) -> bool:
        return all(self.backend.is_zero(B, tol) for B in self.blocks.values())

    def total(self):
        """Flatten into one matrix over the concatenation of all degrees (ascending)."""
        bk = self.backend
        sdeg, tdeg = self.source.degrees, self.target.degrees
        grid = [[self.blocks.get(j) if i == j + self.degree else None for j in sdeg] for i in tdeg]
        return bk.block(grid, [self.target.dim(i) for i in tdeg], [self.source.dim(j) for j in sdeg])

    def apply(self, x: dict) -> dict:
        """Apply to a graded vector {degree: column matrix}."""
        out = {}
        for i, v in x.items():
            B = self.blocks.get(i)
            if B is not None:
                y = self.backend.mm(B, v)
                k = i + self.degree
                out[k] = out[k] + y if k in out else y
        return out

    def __repr__(self):
        return f"GradedLinearMap(deg={self.degree}, {self.source.dims} -> {self.target.dims})"


@dataclass
class CochainComplex:
    space: GradedVectorSpace
    d: GradedLinearMap

    def __post_init__(self):
        if self.d.degree != 1 or self.d.source != self.space or self.d.target != self.space:
            raise StructuralError("differential must be a degree +1 endomorphism of the space")

    @property
    def backend(self):
        return self.d.backend

    def identity(self):
        return GradedLinearMap.identity(self.space, self.backend)

    def to_backend(self, backend):
        return CochainComplex(self.space, self.d.to_backend(backend))


def complex_from_blocks(dims: dict, dblocks: dict, backend=EXACT_BACKEND, labels=None) -> CochainComplex:
    V = GradedVectorSpace(dims, labels)
    return CochainComplex(V, GradedLinearMap(V, V, 1, dblocks, backend))


# -- validation -------------------------------------------------------------

def validate_complex(C: CochainComplex) -> Check:
    dd = C.d @ C.d
    return residual_check("d^2=0", list(dd.blocks.values()), C.backend)


def commutator(A: GradedLinearMap, B: GradedLinearMap) -> GradedLinearMap:
    """Graded commutator [A, B] = AB - (-1)^{|A||B|} BA."""
    s = -1 if (A.degree * B.degree) % 2 else 1
    AB, BA = A @ B, B @ A
    return AB + BA if s == -1 else AB - BA


def validate_chain_map(f: GradedLinearMap, C: CochainComplex, D: CochainComplex) -> Check:
    if f.degree != 0:
        raise StructuralError("chain maps have degree 0")
    if f.source != C.space or f.target != D.space:
        raise StructuralError("chain map endpoints do not match the complexes")
    r = D.d @ f - f @ C.d
    return residual_check("chain map", list(r.blocks.values()), f.backend)


def validate_homotopy(lhs_id_minus: GradedLinearMap, H: GradedLinearMap, C: CochainComplex, name) -> Check:
    """Check d H + H d = lhs_id_minus."""
    if H.degree != -1:
        raise StructuralError("homotopies have degree -1")
    r = C.d @ H + H @ C.d - lhs_id_minus
    return residual_check(name, list(r.blocks.values()), C.backend)


# -- cohomology -------------------------------------------------------------

@dataclass
class Cohomology:
    """Deterministic cohomology representatives for a complex."""
    complex: CochainComplex
    reps: dict          # degree -> matrix whose columns are representative cycles
    bounds: dict        # degree -> matrix whose columns are a basis of im d_{i-1}
    warning: bool = False

    @property
    def ranks(self):
        return {i: self.reps[i].shape[1] for i in sorted(self.reps)}

    def coordinates(self, i, Z):
        """Express cycles (columns of Z) in the representative basis, modulo boundaries."""
        bk = self.complex.backend
        R, B = self.reps[i], self.bounds[i]
        n = R.shape[1]
        if n == 0:
            return bk.zeros(0, Z.shape[1])
        A = bk.hstack([B, R], R.shape[0])
        X = bk.solve(A, Z)
        return bk.extract(X, range(B.shape[1], B.shape[1] + n), range(Z.shape[1]))


def _image_basis(bk, M):
    piv = bk.pivot_columns(M)
    return bk.extract(M, range(M.shape[0]), piv)


def cohomology(C: CochainComplex) -> Cohomology:
    bk = C.backend
    reps, bounds, warn = {}, {}, False
    for i in C.space.degrees:
        n = C.space.dim(i)
        di = C.d.block(i)
        dprev = C.d.block(i - 1)
        Z = bk.nullspace(di) if di.shape[0] else bk.eye(n)
        B = _image_basis(bk, dprev) if dprev.shape[1] else bk.zeros(n, 0)
        warn = warn or bk.near_rank_deficient(di) or bk.near_rank_deficient(dprev)
        both = bk.hstack([B, Z], n)
        piv = [j for j in bk.pivot_columns(both) if j >= B.shape[1]]
        reps[i] = bk.extract(both, range(n), piv)
        bounds[i] = B
    return Cohomology(C, reps, bounds, warn)


def cohomology_ranks(C: CochainComplex) -> dict:
    bk = C.backend
    out = {}
    for i in C.space.degrees:
        n = C.space.dim(i)
        out[i] = n - bk.rank(C.d.block(i)) - bk.rank(C.d.block(i - 1))
    return out


@dataclass
class InducedMap:
    matrices: dict
    warning: bool = False


def induced_map_on_cohomology(f: GradedLinearMap, C: CochainComplex, D: CochainComplex,
                              HC: Cohomology | None = None, HD: Cohomology | None = None) -> InducedMap:
    chk = validate_chain_map(f, C, D)
    if not chk.passed:
        raise StructuralError(f"not a chain map (residual {chk.residual})")
    HC = HC or cohomology(C)
    HD = HD or cohomology(D)
    bk = f.backend
    mats = {}
    for i in sorted(set(HC.reps) | set(HD.reps)):
        Rc = HC.reps.get(i, bk.zeros(C.space.dim(i), 0))
        nd = HD.reps[i].shape[1] if i in HD.reps else 0
        if Rc.shape[1] == 0 or nd == 0:
            mats[i] = bk.zeros(nd, Rc.shape[1])
            continue
        img = bk.mm(f.block(i), Rc)
        mats[i] = HD.coordinates(i, img)
    return InducedMap(mats, HC.warning or HD.warning)


# -- algebra of complexes ---------------------------------------------------

def shift(C: CochainComplex, k: int) -> CochainComplex:
    """Relabel degrees i -> i - k; the differential blocks are kept unchanged."""
    if k == 0:
        return C
    V = C.space.shift(k)
    return CochainComplex(V, GradedLinearMap(V, V, 1, {i - k: B for i, B in C.d.blocks.items()}, C.backend))


def direct_sum(C: CochainComplex, D: CochainComplex) -> CochainComplex:
    V = C.space + D.space
    bk = C.backend
    blocks = {}
    for i in V.degrees:
        c0, c1 = C.space.dim(i), D.space.dim(i)
        r0, r1 = C.space.dim(i + 1), D.space.dim(i + 1)
        if not (r0 + r1):
            continue
        blocks[i] = bk.block([[C.d.block(i), None], [None, D.d.block(i)]], [r0, r1], [c0, c1])
    return CochainComplex(V, GradedLinearMap(V, V, 1, blocks, bk))


def dual(C: CochainComplex) -> CochainComplex:
    """Degree-negated dual; the differential is the transpose, (C*)^{-i-1} -> (C*)^{-i}."""
    V = C.space.dual()
    bk = C.backend
    blocks = {-(i + 1): bk.T(B) for i, B in C.d.blocks.items()}
    return CochainComplex(V, GradedLinearMap(V, V, 1, blocks, bk))


def compose(g: GradedLinearMap, f: GradedLinearMap) -> GradedLinearMap:
    return g @ f


def block_diagonal_map(f: GradedLinearMap, g: GradedLinearMap) -> GradedLinearMap:
    if f.degree != g.degree:
        raise StructuralError("degree mismatch")
    bk = f.backend
    S, T = f.source + g.source, f.target + g.target
    blocks = {}
    for i in S.degrees:
        j = i + f.degree
        blocks[i] = bk.block([[f.block(i), None], [None, g.block(i)]],
                             [f.target.dim(j), g.target.dim(j)], [f.source.dim(i), g.source.dim(i)])
    return GradedLinearMap(S, T, f.degree, blocks, bk)

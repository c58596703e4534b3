"""JSON schema for spaces, maps, complexes, pairings and reports; CSV tables for kernels and residuals.

Schema (version "glue-complex/1"):

    matrix   {"shape": [r, c], "field": "QQ" | "float64", "rows": [[str, ...], ...]}
             rationals are "num/den" (or "num"), floats are shortest round-trip decimals
    space    {"type": "graded_space", "dims": {"<deg>": int}}
    map      {"type": "graded_map", "degree": int, "source": space, "target": space,
              "blocks": {"<source deg>": matrix}}
    complex  {"type": "cochain_complex", "space": space, "d": map}
    pairing  {"type": "graded_pairing", "degree": int, "space": space, "blocks": {"<deg>": matrix}}
    poincare {"type": "poincare_complex", "complex": complex, "pairing": pairing}

Degree keys are decimal strings. Dumps are key-sorted, so equal objects give equal bytes.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .backend import EXACT_BACKEND, FLOAT_BACKEND, entries_as_strings, parse_entry
from .graded import CochainComplex, GradedLinearMap, GradedVectorSpace, Report
from .sympair import GradedPairing, PoincareComplex

SCHEMA = "glue-complex/1"


def _is_exact(M):
    return not isinstance(M, np.ndarray)


def matrix_to_json(M):
    exact = _is_exact(M)
    return {"shape": list(M.shape), "field": "QQ" if exact else "float64", "rows": entries_as_strings(M, exact)}


def matrix_from_json(obj):
    r, c = obj["shape"]
    bk = EXACT_BACKEND if obj["field"] == "QQ" else FLOAT_BACKEND
    if bk.exact:
        ent = {(i, j): parse_entry(v) for i, row in enumerate(obj["rows"]) for j, v in enumerate(row) if v != "0"}
        return bk.from_dok(ent, (r, c)), bk
    A = np.array([[float(v) for v in row] for row in obj["rows"]], dtype=float).reshape(r, c)
    return A, bk


def space_to_json(V: GradedVectorSpace):
    return {"type": "graded_space", "dims": {str(d): n for d, n in sorted(V.dims.items())}}


def space_from_json(obj):
    return GradedVectorSpace({int(d): n for d, n in obj["dims"].items()})


def map_to_json(f: GradedLinearMap):
    return {"type": "graded_map", "degree": f.degree, "source": space_to_json(f.source),
            "target": space_to_json(f.target),
            "blocks": {str(d): matrix_to_json(B) for d, B in sorted(f.blocks.items())}}


def _blocks_from_json(obj):
    blocks, bk = {}, EXACT_BACKEND
    for d, m in obj.items():
        blocks[int(d)], bk = matrix_from_json(m)
    return blocks, bk


def map_from_json(obj) -> GradedLinearMap:
    blocks, bk = _blocks_from_json(obj["blocks"])
    return GradedLinearMap(space_from_json(obj["source"]), space_from_json(obj["target"]), obj["degree"], blocks, bk)


def complex_to_json(C: CochainComplex):
    return {"type": "cochain_complex", "space": space_to_json(C.space), "d": map_to_json(C.d)}


def complex_from_json(obj) -> CochainComplex:
    return CochainComplex(space_from_json(obj["space"]), map_from_json(obj["d"]))


def pairing_to_json(w: GradedPairing):
    return {"type": "graded_pairing", "degree": w.degree, "space": space_to_json(w.space),
            "blocks": {str(d): matrix_to_json(B) for d, B in sorted(w.blocks.items())}}


def pairing_from_json(obj) -> GradedPairing:
    blocks, bk = _blocks_from_json(obj["blocks"])
    return GradedPairing(space_from_json(obj["space"]), obj["degree"], blocks, bk)


def poincare_to_json(P: PoincareComplex):
    return {"type": "poincare_complex", "complex": complex_to_json(P.complex), "pairing": pairing_to_json(P.pairing)}


def poincare_from_json(obj) -> PoincareComplex:
    return PoincareComplex(complex_from_json(obj["complex"]), pairing_from_json(obj["pairing"]))


_DUMPERS = {GradedVectorSpace: space_to_json, GradedLinearMap: map_to_json, CochainComplex: complex_to_json,
            GradedPairing: pairing_to_json, PoincareComplex: poincare_to_json}
_LOADERS = {"graded_space": space_from_json, "graded_map": map_from_json, "cochain_complex": complex_from_json,
            "graded_pairing": pairing_from_json, "poincare_complex": poincare_from_json}


def to_json(obj):
    for cls, fn in _DUMPERS.items():
        if isinstance(obj, cls):
            return dict(fn(obj), schema=SCHEMA)
    raise TypeError(f"no JSON form for {type(obj).__name__}")


def from_json(obj):
    return _LOADERS[obj["type"]](obj)


def _default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if hasattr(o, "as_dict"):
        return o.as_dict()
    if hasattr(o, "numerator") and hasattr(o, "denominator"):
        return f"{o.numerator}/{o.denominator}" if o.denominator != 1 else str(o.numerator)
    return str(o)


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed separators, trailing newline)."""
    if type(obj) in _DUMPERS or isinstance(obj, tuple(_DUMPERS)):
        obj = to_json(obj)
    return json.dumps(obj, sort_keys=True, indent=1, default=_default, ensure_ascii=False) + "\n"


def loads(text: str):
    obj = json.loads(text)
    return from_json(obj) if isinstance(obj, dict) and obj.get("type") in _LOADERS else obj


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def package_to_json(pkg, with_maps=False):
    """EquivalencePackage summary; the maps themselves only on request (they can be large)."""
    out = {"provenance": pkg.provenance, "model": pkg.model.theory.name() if pkg.model.theory else "synthetic",
           "degenerate": pkg.model.degenerate, "report": pkg.report.as_dict(),
           "dims": {"F": space_to_json(pkg.F.space), "F~": space_to_json(pkg.Ft.space)}}
    if pkg.locality is not None:
        out["locality"] = pkg.locality.as_dict()
    if with_maps:
        out["maps"] = {"i": map_to_json(pkg.i), "p": map_to_json(pkg.p), "H": map_to_json(pkg.H),
                       "H~": map_to_json(pkg.H_tilde)}
        if pkg.beta_tilde is not None:
            out["maps"]["beta~"] = pairing_to_json(pkg.beta_tilde)
    return out


# -- CSV ---------------------------------------------------------------------------------

def _fmt(v, exact):
    if exact:
        return f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator)
    return repr(float(v))


def kernel_csv(M) -> str:
    """Nonzero entries as rows (cell-index, cell-index, value), row-major order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row_cell", "col_cell", "value"])
    if _is_exact(M):
        for i, row in sorted(M.to_dod().items()):
            for j, v in sorted(row.items()):
                w.writerow([i, j, _fmt(v, True)])
    else:
        A = np.asarray(M, dtype=float)
        for i, j in zip(*np.nonzero(A)):
            w.writerow([int(i), int(j), _fmt(A[i, j], False)])
    return buf.getvalue()


def residual_rows(report: Report, prefix=""):
    """(identity, degree, residual) rows; degree 'all' when no per-degree data is attached."""
    rows = []
    for c in report.checks:
        per = c.detail.get("per_degree") if isinstance(c.detail, dict) else None
        if per:
            for d, r in per.items():
                rows.append((prefix + c.name, d, repr(float(r))))
        else:
            rows.append((prefix + c.name, "all", repr(float(c.residual))))
    return rows


def residual_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["identity", "degree", "residual"])
    w.writerows(rows)
    return buf.getvalue()



"""Batch driver: glue-complex {run, converge, freeze, property, describe, hpl}."""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import __version__
from .backend import EXACT_BACKEND
from .config import ConfigError, SuiteConfig, load_config
from .dec import CutGeometry, GridTorus
from .graded import Check, Report
from .packages import (PackageError, hodge_package, hpl_package, local_package, smearing_package, tqm_check,
                       verify_theorem_main)
from .properties import run_suite
from .serialize import dumps, kernel_csv, residual_csv, residual_rows, write_json
from .theories import TheoryDescriptor, build_fiber_product, layout, regularity_model_1d

log = logging.getLogger("glue_complex")

GROWTH = 1.1          # regression slack on frozen bounds
KERNEL_AUTO_LIMIT = 512


def pool_size():
    env = os.environ.get("GLUE_COMPLEX_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def fingerprint():
    import numpy
    import scipy
    import sympy
    return {"python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__,
            "sympy": sympy.__version__, "glue_complex": __version__}


# -- model construction --------------------------------------------------------------------

def _backend(cfg: SuiteConfig):
    if cfg.backend == "exact":
        return EXACT_BACKEND
    from .backend import FLOAT, ScalarBackend
    return ScalarBackend(FLOAT, cfg.tolerance)


def geometry(cfg: SuiteConfig, sizes=None):
    sizes = tuple(sizes or cfg.sizes)
    widths = cfg.widths() if sizes == tuple(cfg.sizes) else tuple(Fraction(1, s) for s in sizes)
    grid = GridTorus(sizes, widths)
    cut = None
    if cfg.cut_slices:
        cut = CutGeometry(grid, cfg.cut_axis, tuple(cfg.cut_slices), cfg.slab_width, cfg.plateau)
    return grid, cut


def build_model(cfg: SuiteConfig, sizes=None, backend=None):
    bk = backend or _backend(cfg)
    if cfg.theory == "regularity":
        return regularity_model_1d(cfg.reg_N, cfg.s_smooth, cfg.s_broken, EXACT_BACKEND), None
    if cfg.theory == "synthetic":
        import numpy as np
        from .random_models import synthetic_model
        return synthetic_model(np.random.default_rng(cfg.seed), scramble=True), None
    th = TheoryDescriptor(cfg.theory, cfg.n, cfg.p)
    grid, cut = geometry(cfg, sizes)
    model = build_fiber_product(th, grid, cut if cut is not None and len(cut.slices) == 2 else None, bk,
                                strict=False)
    if model.cut is None:
        model.cut = cut
    return model, cut


def _packages(cfg: SuiteConfig, model, cut):
    """[(label, thunk)] in config order; each thunk returns (package or None, report)."""
    jobs = []
    for kind in cfg.kinds:
        if kind == "smearing":
            jobs.append(("smearing", lambda: (smearing_package(model, cfg.eta, cut), None)))
        elif kind == "hodge":
            for eps in cfg.eps:
                jobs.append((f"hodge eps={eps!r}",
                             lambda eps=eps: (hodge_package(model, eps, cfg.tolerance or 1e-9), None)))
        elif kind == "local":
            jobs.append(("local", lambda: (local_package(model, cut, cfg.routing), None)))
        elif kind == "hpl":
            jobs.append(("hpl", lambda: (hpl_package(model), None)))
        elif kind == "tqm":
            for eps in cfg.eps:
                jobs.append((f"tqm eps={eps!r}", lambda eps=eps: (None, tqm_check(model, eps))))
    return jobs


def _run_job(label, thunk, cfg):
    try:
        pkg, rep = thunk()
    except (PackageError, ValueError, AssertionError) as e:
        rep = Report(label)
        rep.add(Check(f"construction failed: {type(e).__name__}", False, float("inf"), {"message": str(e)}))
        return label, None, rep, None
    if pkg is None:
        return label, None, rep, None
    if cfg.fault == "corrupt-H":
        pkg = pkg.corrupted()
    thm = verify_theorem_main(pkg, None if pkg.backend.exact else cfg.tolerance)
    return label, pkg, pkg.report, thm


def _asserted_ok(rep: Report):
    return all(c.passed for c in rep.checks)


# -- run -------------------------------------------------------------------------------------

def cmd_run(cfg: SuiteConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    model, cut = build_model(cfg)
    timings["model"] = time.perf_counter() - t0
    report = {"config": cfg.echo(), "environment": fingerprint(), "model": _model_summary(model),
              "packages": {}, "properties": {}}
    ok = model.report.passed
    rows = residual_rows(model.report, "model: ")
    jobs = _packages(cfg, model, cut)
    with ThreadPoolExecutor(max_workers=pool_size()) as ex:
        futs = [(label, ex.submit(_timed, _run_job, label, thunk, cfg)) for label, thunk in jobs]
        results = [(label, f.result()) for label, f in futs]
    kdir = out / "kernels"
    for label, ((_, pkg, rep, thm), dt) in results:
        timings[label] = dt
        entry = {"report": rep.as_dict()}
        ok = ok and _asserted_ok(rep)
        rows += residual_rows(rep, f"{label}: ")
        if thm is not None:
            entry["theorem"] = thm.as_dict()
            ok = ok and thm.passed
            for key, item in sorted(thm.items.items()):
                rows += residual_rows(item.report, f"{label} ({key}): ")
        if pkg is not None:
            entry["degenerate_model"] = pkg.model.degenerate
            if pkg.locality is not None:
                entry["locality"] = pkg.locality.as_dict()
            _export_kernels(cfg, pkg, label, kdir)
        report["packages"][label] = entry
    for name, trials in cfg.properties:
        t = time.perf_counter()
        res = run_suite(name, trials, cfg.seed, out)
        timings[f"property {name}"] = time.perf_counter() - t
        report["properties"][name] = res.as_dict()
        ok = ok and res.passed
    report["passed"] = bool(ok)
    write_json(out / "report.json", report)
    (out / "residuals.csv").write_text(residual_csv(rows), encoding="utf-8")
    write_json(out / "timings.json", {k: round(v, 3) for k, v in timings.items()})
    _summary(report, out)
    return 0 if ok else 1


def _timed(fn, *a):
    t = time.perf_counter()
    r = fn(*a)
    return r, time.perf_counter() - t


def _model_summary(model):
    out = {"name": model.theory.name() if model.theory else "synthetic", "degenerate": model.degenerate,
           "transported": model.transported, "note": model.note, "report": model.report.as_dict(),
           "dims": {"F": {str(d): n for d, n in sorted(model.F.space.dims.items())},
                    "F~": {str(d): n for d, n in sorted(model.Ft.space.dims.items())}}}
    return out


def _export_kernels(cfg, pkg, label, kdir: Path):
    total = pkg.Ft.space.total_dim
    if cfg.kernels == "no" or (cfg.kernels == "auto" and total > KERNEL_AUTO_LIMIT):
        return
    kdir.mkdir(exist_ok=True)
    slug = label.replace(" ", "_").replace("=", "")
    (kdir / f"{slug}_p.csv").write_text(kernel_csv(pkg.p.total()), encoding="utf-8")
    (kdir / f"{slug}_H_tilde.csv").write_text(kernel_csv(pkg.H_tilde.total()), encoding="utf-8")


def _summary(report, out):
    print(f"{'PASS' if report['passed'] else 'FAIL'}  {report['model']['name']}  -> {out / 'report.json'}")
    for label, e in report["packages"].items():
        thm = e.get("theorem")
        status = " ".join(f"({k}) {v['status']}" for k, v in sorted(thm["items"].items())) if thm else \
            ("pass" if e["report"]["passed"] else "fail")
        print(f"  {label}: {status}")
        for c in e["report"]["checks"]:
            if not c["passed"]:
                print(f"    failed: {c['name']} residual={c['residual']}")
        if thm:
            for k, v in sorted(thm["items"].items()):
                for c in v["checks"]:
                    if not c["passed"]:
                        where = c["detail"].get("worst")
                        print(f"    ({k}) failed: {c['name']} residual={c['residual']}" +
                              (f" at degree {where['degree']} entry ({where['row']}, {where['col']})" if where else ""))
    for name, r in report["properties"].items():
        print(f"  property {name}: {'pass' if r['passed'] else 'fail'} ({r['trials']} trials)"
              + (f" warnings: {r['warnings']}" if r["warnings"] else ""))


# -- converge / freeze ----------------------------------------------------------------------------

def _signature(cfg: SuiteConfig):
    return f"{cfg.theory}(n={cfg.n},p={cfg.p})/{cfg.converge_package}/plateau={cfg.plateau}"


def _scaled_config(cfg: SuiteConfig, N: int) -> SuiteConfig:
    """Geometry for refinement level N along the cut axis: slices at 0 and N/2, slab a quarter minus one."""
    from dataclasses import replace
    sizes = tuple(N if a == cfg.cut_axis else s for a, s in enumerate(cfg.sizes))
    return replace(cfg, sizes=sizes, mesh=None, cut_slices=(0, N // 2), slab_width=N // 4 - 1)


def golden_path(cfg: SuiteConfig):
    if cfg.frozen:
        return Path(cfg.frozen)
    return None


def _bundled_golden():
    try:
        return json.loads(resources.files("glue_complex").joinpath("golden", "annulus.json").read_text())
    except FileNotFoundError:
        return {}


def converge_rows(cfg: SuiteConfig):
    rows, annulus = [], {}
    for N in cfg.refinements:
        c = _scaled_config(cfg, N)
        model, cut = build_model(c)
        kind = cfg.converge_package
        if kind == "local":
            pkg = local_package(model, cut, cfg.routing)
        elif kind == "smearing":
            pkg = smearing_package(model, Fraction(int(cfg.eta * cfg.sizes[cfg.cut_axis]), N), cut)
        elif kind == "hodge":
            pkg = hodge_package(model, cfg.eps[0], cfg.tolerance or 1e-9)
        else:
            raise ConfigError(f"converge does not support package {kind!r}", field="converge.package")
        thm = verify_theorem_main(pkg, None if pkg.backend.exact else cfg.tolerance)
        am = pkg.locality.annulus_max if pkg.locality is not None else None
        if am is not None:
            annulus[N] = am
        for key in ("a", "b"):
            for ch in thm.items[key].report.checks:
                rows.append((N, ch.name, repr(float(ch.residual)), "" if am is None else repr(am), ch.passed))
    return rows, annulus


def cmd_converge(cfg: SuiteConfig, out: Path, freeze=False) -> int:
    if len(cfg.refinements) < 2:
        raise ConfigError("converge needs at least two refinement levels", field="converge.refinements")
    out.mkdir(parents=True, exist_ok=True)
    rows, annulus = converge_rows(cfg)
    import csv
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "identity", "residual", "annulus_max_entry"])
    w.writerows(r[:4] for r in rows)
    (out / "converge.csv").write_text(buf.getvalue(), encoding="utf-8")
    sig = _signature(cfg)
    result = {"signature": sig, "annulus": {str(k): v for k, v in annulus.items()}}
    ident_ok = all(r[4] for r in rows)
    if annulus:
        bound = max(annulus.values())
        gpath = golden_path(cfg)
        if freeze:
            target = gpath or out / "frozen.json"
            data = json.loads(target.read_text()) if target.exists() else {}
            data[sig] = {"bound": bound, "per_N": {str(k): v for k, v in annulus.items()}}
            target.write_text(dumps(data), encoding="utf-8")
            result["frozen"] = {"bound": bound, "path": target.name}
            print(f"froze annulus bound {bound!r} for {sig} -> {target}")
        else:
            golden = json.loads(gpath.read_text()) if gpath and gpath.exists() else _bundled_golden()
            if sig in golden:
                ref = golden[sig]["bound"]
                worst = max(annulus.values())
                result["regression"] = {"bound": ref, "limit": GROWTH * ref, "max": worst,
                                        "passed": worst <= GROWTH * ref}
                ident_ok = ident_ok and worst <= GROWTH * ref
                print(f"annulus max {worst!r} vs frozen {ref!r} (limit {GROWTH * ref!r})")
            else:
                result["regression"] = {"passed": None, "note": "no frozen bound; run freeze first"}
    result["passed"] = bool(ident_ok)
    write_json(out / "converge.json", result)
    print(f"{'PASS' if ident_ok else 'FAIL'}  converge {sig} -> {out / 'converge.csv'}")
    return 0 if ident_ok else 1


# -- describe / property / hpl ----------------------------------------------------------------------

def describe(cfg: SuiteConfig) -> str:
    lines = []
    if cfg.theory in ("regularity", "synthetic"):
        model, _ = build_model(cfg)
        lines.append(f"{model.note or cfg.theory}")
    else:
        th = TheoryDescriptor(cfg.theory, cfg.n, cfg.p)
        L = layout(th)
        lines.append(f"{th.name()}  grid {'x'.join(map(str, cfg.sizes))}  pairing scale {L.scale}")
        for s in L.summands:
            lines.append(f"  {s.name:<6} {'primal' if s.side == 'P' else 'dual':<6} {s.form}-form  degree {s.degree:+d}")
        for a in L.arrows:
            sign = "" if a.sign == 1 else "-"
            lines.append(f"  {a.src} --{sign}{a.op}--> {a.tgt}")
        model, _ = build_model(cfg)
    lines.append("  dims F : " + ", ".join(f"{d}:{n}" for d, n in sorted(model.F.space.dims.items())))
    lines.append("  dims F~: " + ", ".join(f"{d}:{n}" for d, n in sorted(model.Ft.space.dims.items())))
    lines.append(f"  degenerate: {model.degenerate}   checks: {'pass' if model.passed else 'FAIL'}")
    return "\n".join(lines)


def cmd_property(name, trials, seed, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    res = run_suite(name, trials, seed, out)
    write_json(out / f"property_{name}.json", res.as_dict())
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{'PASS' if res.passed else 'FAIL'}  {name}: {trials} trials, {len(res.failures)} failures")
    for f in res.failures:
        print(f"  trial {f['trial']}: {', '.join(f['failed'])} (shrunk to size {f.get('shrunk_size', f['size'])})")
    return 0 if res.passed else 1


def cmd_hpl(cfg: SuiteConfig, action: str, out: Path) -> int:
    from .hpl import adapted_contraction_pair
    out.mkdir(parents=True, exist_ok=True)
    model, _ = build_model(cfg, backend=EXACT_BACKEND)
    if action == "pair":
        rep = adapted_contraction_pair(model.i, model.F.complex, model.Ft.complex).check()
    else:
        pkg = hpl_package(model)
        rep = pkg.report
        if action == "lift":
            sub = Report("tangent lift")
            for c in rep.checks:
                if "tangent lift" in c.name or c.name.startswith("L(b~"):
                    sub.add(c)
            rep = sub
    write_json(out / f"hpl_{action}.json", rep.as_dict())
    print(f"{'PASS' if rep.passed else 'FAIL'}  hpl {action}")
    for c in rep.checks:
        print(f"  {'ok  ' if c.passed else 'FAIL'} {c.name}  residual={c.residual}")
    return 0 if rep.passed else 1


# -- argument parsing ---------------------------------------------------------------------------------

def _parser():
    ap = argparse.ArgumentParser(prog="glue-complex", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=False, default=None, help="INI path or bundled config name")
    common.add_argument("--backend", choices=("exact", "float"))
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    sub.add_parser("run", parents=[common], help="build model, packages and checks; write report.json")
    c = sub.add_parser("converge", parents=[common], help="refinement sweep to CSV")
    c.add_argument("--freeze", action="store_true", help="write the regression bound instead of comparing")
    sub.add_parser("freeze", parents=[common], help="converge --freeze")
    p = sub.add_parser("property", parents=[common], help="randomized property suite")
    p.add_argument("suite")
    p.add_argument("--trials", type=int, default=100)
    sub.add_parser("describe", parents=[common], help="print the complex diagram and dimensions")
    h = sub.add_parser("hpl", parents=[common], help="adapted pair / quasi-inverse package / tangent lift")
    h.add_argument("action", choices=("pair", "package", "lift"))
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.cmd == "property":
        seed = args.seed if args.seed is not None else 0
        return cmd_property(args.suite, args.trials, seed, args.out or Path("out"))
    if args.config is None:
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, {"backend": args.backend, "seed": args.seed})
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = args.out or Path(cfg.out)
    try:
        if args.cmd == "run":
            return cmd_run(cfg, out)
        if args.cmd in ("converge", "freeze"):
            return cmd_converge(cfg, out, freeze=args.cmd == "freeze" or args.freeze)
        if args.cmd == "describe":
            print(describe(cfg))
            return 0
        if args.cmd == "hpl":
            return cmd_hpl(cfg, args.action, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())

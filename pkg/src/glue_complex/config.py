"""Suite configuration: INI files with sections [model], [geometry], [packages], [regularity], [run], [converge].

Grammar: standard INI (``key = value``), ``#`` or ``;`` comments, lists are comma separated,
rationals may be written ``a/b``. Unknown sections or keys are errors, so typos surface early.

    [model]       theory = BF | CS | PForm1 | PForm2 | Scalar2 | regularity | synthetic;  n, p
    [geometry]    sizes = 32[, 32 ...];  mesh = 1/32[, ...] (default 1/size);  cut_axis;
                  cut_slices = 0, 16 (empty for no cut);  slab_width (cells);  plateau = collar (cells)
    [packages]    kinds = smearing, hodge, local, hpl, tqm;  eta;  eps = 0.001, 0.1;  routing = xi | xi'
    [regularity]  N;  s_smooth;  s_broken
    [run]         backend = exact | float;  tolerance;  seed;  out;  fault = none | corrupt-H;
                  properties = lemma15:200, hpl-roundtrip:100;  kernels = auto | yes | no
    [converge]    refinements = 32, 64, 128, 256;  package = local | smearing | hodge;  frozen = path
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .theories import KINDS

BUNDLED = ("bf1d-smearing", "scalar1d-local", "pform1-3d-hodge", "regularity-hpl")

_SCHEMA = {
    "model": {"theory", "n", "p"},
    "geometry": {"sizes", "mesh", "cut_axis", "cut_slices", "slab_width", "plateau"},
    "packages": {"kinds", "eta", "eps", "routing"},
    "regularity": {"n", "s_smooth", "s_broken"},
    "run": {"backend", "tolerance", "seed", "out", "fault", "properties", "kernels"},
    "converge": {"refinements", "package", "frozen"},
}
PACKAGE_KINDS = ("smearing", "hodge", "local", "hpl", "tqm")


class ConfigError(ValueError):
    def __init__(self, msg, line=None, field=None):
        where = []
        if field:
            where.append(field)
        if line:
            where.append(f"line {line}")
        super().__init__(f"{msg} [{', '.join(where)}]" if where else msg)
        self.line = line
        self.field = field


@dataclass
class SuiteConfig:
    theory: str = "BF"
    n: int = 1
    p: int = 0
    sizes: tuple = (32,)
    mesh: tuple | None = None
    cut_axis: int = 0
    cut_slices: tuple = ()
    slab_width: int = 4
    plateau: int = 2
    kinds: tuple = ("smearing",)
    eta: Fraction = Fraction(1, 8)
    eps: tuple = (0.1,)
    routing: str = "xi"
    reg_N: int = 5
    s_smooth: int = 3
    s_broken: int = 1
    backend: str = "exact"
    tolerance: float = 1e-9
    seed: int = 0
    out: str = "out"
    fault: str = "none"
    properties: tuple = ()
    kernels: str = "auto"
    refinements: tuple = ()
    converge_package: str = "local"
    frozen: str | None = None
    source: str = ""

    def widths(self):
        if self.mesh is not None:
            return tuple(self.mesh)
        return tuple(Fraction(1, s) for s in self.sizes)

    def echo(self):
        """Config as plain data for report echoes (no file paths)."""
        d = asdict(self)
        d.pop("source")
        d.pop("out")
        out = {}
        for k, v in d.items():
            if isinstance(v, tuple):
                v = [str(x) if isinstance(x, Fraction) else x for x in v]
            elif isinstance(v, Fraction):
                v = str(v)
            out[k] = v
        return out


def _line_of(text, section, key=None):
    cur = None
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
            if key is None and cur == section:
                return no
            continue
        if cur == section and key is not None and "=" in s:
            if s.split("=", 1)[0].strip().lower() == key:
                return no
    return None


def _list(v):
    return [x.strip() for x in v.split(",") if x.strip()]


def resolve(path_or_name: str) -> tuple[str, str]:
    """(text, label) for a config path or a bundled config name."""
    p = Path(path_or_name)
    if p.exists():
        return p.read_text(encoding="utf-8"), str(p)
    name = path_or_name[:-4] if path_or_name.endswith(".ini") else path_or_name
    if name in BUNDLED:
        return resources.files("glue_complex").joinpath("configs", f"{name}.ini").read_text(encoding="utf-8"), name
    raise ConfigError(f"config {path_or_name!r} not found (bundled: {', '.join(BUNDLED)})")


def load_config(path_or_name: str, overrides: dict | None = None) -> SuiteConfig:
    text, label = resolve(path_or_name)
    return parse_config(text, label, overrides)


def parse_config(text: str, label: str = "<string>", overrides: dict | None = None) -> SuiteConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=label)
    except configparser.Error as e:
        raise ConfigError(f"{label}: {e.message if hasattr(e, 'message') else e}",
                          getattr(e, "lineno", None)) from None
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", _line_of(text, sec), sec)
        for key in cp[sec]:
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r}", _line_of(text, sec, key), f"{sec}.{key}")
    cfg = SuiteConfig(source=label)

    def get(sec, key, conv, attr):
        if not cp.has_option(sec, key):
            return
        raw = cp.get(sec, key)
        try:
            setattr(cfg, attr, conv(raw))
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"bad value {raw!r}: {e}", _line_of(text, sec, key), f"{sec}.{key}") from None

    ints = lambda v: tuple(int(x) for x in _list(v))
    fracs = lambda v: tuple(Fraction(x) for x in _list(v))
    get("model", "theory", str.strip, "theory")
    get("model", "n", int, "n")
    get("model", "p", int, "p")
    get("geometry", "sizes", ints, "sizes")
    get("geometry", "mesh", fracs, "mesh")
    get("geometry", "cut_axis", int, "cut_axis")
    get("geometry", "cut_slices", ints, "cut_slices")
    get("geometry", "slab_width", int, "slab_width")
    get("geometry", "plateau", int, "plateau")
    get("packages", "kinds", lambda v: tuple(_list(v)), "kinds")
    get("packages", "eta", Fraction, "eta")
    get("packages", "eps", lambda v: tuple(float(x) for x in _list(v)), "eps")
    get("packages", "routing", str.strip, "routing")
    get("regularity", "n", int, "reg_N")
    get("regularity", "s_smooth", int, "s_smooth")
    get("regularity", "s_broken", int, "s_broken")
    get("run", "backend", str.strip, "backend")
    get("run", "tolerance", float, "tolerance")
    get("run", "seed", int, "seed")
    get("run", "out", str.strip, "out")
    get("run", "fault", str.strip, "fault")
    get("run", "properties", lambda v: tuple(_parse_prop(x) for x in _list(v)), "properties")
    get("run", "kernels", str.strip, "kernels")
    get("converge", "refinements", ints, "refinements")
    get("converge", "package", str.strip, "converge_package")
    get("converge", "frozen", str.strip, "frozen")
    for k, v in (overrides or {}).items():
        if v is not None:
            setattr(cfg, k, v)
    _validate(cfg, text)
    return cfg


def _parse_prop(item):
    name, _, n = item.partition(":")
    return (name.strip(), int(n) if n else 100)


def _validate(cfg: SuiteConfig, text: str):
    def bad(msg, sec, key):
        raise ConfigError(msg, _line_of(text, sec, key), f"{sec}.{key}")

    if cfg.theory not in KINDS + ("regularity", "synthetic"):
        bad(f"unknown theory {cfg.theory!r}", "model", "theory")
    if cfg.backend not in ("exact", "float"):
        bad(f"backend must be exact or float, got {cfg.backend!r}", "run", "backend")
    if cfg.backend == "float" and cfg.tolerance <= 0:
        bad("float backend needs a positive tolerance", "run", "tolerance")
    if cfg.tolerance < 0:
        bad("tolerance must be nonnegative", "run", "tolerance")
    for k in cfg.kinds:
        if k not in PACKAGE_KINDS:
            bad(f"unknown package kind {k!r}", "packages", "kinds")
    if cfg.routing not in ("xi", "xi'"):
        bad("routing must be xi or xi'", "packages", "routing")
    if any(e < 0 for e in cfg.eps):
        bad("ε must be nonnegative", "packages", "eps")
    if cfg.eta <= 0:
        bad("η must be positive", "packages", "eta")
    if cfg.mesh is not None and len(cfg.mesh) != len(cfg.sizes):
        bad("mesh needs one width per axis", "geometry", "mesh")
    if any(s < 1 for s in cfg.sizes):
        bad("sizes must be positive", "geometry", "sizes")
    if cfg.fault not in ("none", "corrupt-H"):
        bad(f"unknown fault {cfg.fault!r}", "run", "fault")
    if cfg.kernels not in ("auto", "yes", "no"):
        bad("kernels must be auto, yes or no", "run", "kernels")
    from .properties import SUITES
    for name, trials in cfg.properties:
        if name not in SUITES:
            bad(f"unknown property suite {name!r}", "run", "properties")
        if trials < 0:
            bad("trial counts must be nonnegative", "run", "properties")
    if cfg.theory in KINDS:
        from .theories import TheoryDescriptor
        try:
            TheoryDescriptor(cfg.theory, cfg.n, cfg.p)
        except ValueError as e:
            bad(str(e), "model", "theory")
    if cfg.theory not in ("regularity", "synthetic") and len(cfg.sizes) != cfg.n:
        bad(f"{cfg.theory} with n={cfg.n} needs {cfg.n} grid sizes", "geometry", "sizes")

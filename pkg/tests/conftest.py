from fractions import Fraction

import pytest

from glue_complex.dec import CutGeometry, DecPackage, GridTorus


def unit_grid(*sizes):
    """Torus of side 1 with the given cell counts."""
    return GridTorus(tuple(sizes), tuple(Fraction(1, s) for s in sizes))


def half_cut(grid, width=None, axis=0):
    N = grid.sizes[axis]
    return CutGeometry(grid, axis, (0, N // 2), N // 4 - 1 if width is None else width)


@pytest.fixture
def circle32():
    return DecPackage(unit_grid(32))


_CRITERIA = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion, printed in the terminal summary."""
    entry = {"label": None, "detail": ""}

    def record(label, detail=""):
        entry["label"], entry["detail"] = label, detail

    yield record
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    if entry["label"]:
        _CRITERIA.append(f"{'PASS' if ok else 'FAIL'}  {entry['label']}" + (f"  [{entry['detail']}]" if entry["detail"] else ""))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

import json
import subprocess
import sys

import pytest

from glue_complex.cli import main
from glue_complex.config import BUNDLED, ConfigError, load_config, parse_config

SMALL_RUN = """
[model]
theory = BF
n = 1
[geometry]
sizes = 16
cut_slices = 0, 8
slab_width = 3
[packages]
kinds = smearing, hpl
eta = 2/16
[run]
backend = exact
seed = 1
properties = lemma15:3
"""


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_parse(name):
    cfg = load_config(name)
    assert cfg.source == name


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as e:
        parse_config("[model]\ntheory = BF\n\n[run]\nbakend = exact\n")
    assert e.value.line == 5 and e.value.field == "run.bakend"


def test_float_backend_needs_positive_tolerance():
    with pytest.raises(ConfigError) as e:
        parse_config("[model]\ntheory = Scalar2\n[run]\nbackend = float\ntolerance = 0\n")
    assert e.value.field == "run.tolerance" and e.value.line == 5


@pytest.mark.parametrize("text, field", [
    ("[model]\ntheory = BF\nn = 2\n[geometry]\nsizes = 8\n", "geometry.sizes"),
    ("[model]\ntheory = Yang-Mills\n", "model.theory"),
    ("[packages]\nkinds = smearing, magic\n", "packages.kinds"),
    ("[run]\nproperties = lemma99:3\n", "run.properties"),
    ("[oops]\nx = 1\n", "oops"),
])
def test_invalid_configs(text, field):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert e.value.field == field


def test_cli_config_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nbackend = float\ntolerance = 0\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "run.tolerance" in capsys.readouterr().err


def _run(tmp_path, text, sub="o", env=None):
    cfg = tmp_path / "c.ini"
    cfg.write_text(text)
    out = tmp_path / sub
    code = main(["run", "--config", str(cfg), "--out", str(out)])
    return code, out


def test_run_writes_reports(tmp_path):
    code, out = _run(tmp_path, SMALL_RUN)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] is True
    assert (out / "residuals.csv").read_text().startswith("identity,degree,residual")
    assert (out / "timings.json").exists()
    assert any((out / "kernels").glob("*.csv"))
    assert "timing" not in (out / "report.json").read_text()


def test_run_is_byte_deterministic_across_thread_counts(tmp_path, monkeypatch):
    monkeypatch.setenv("GLUE_COMPLEX_THREADS", "1")
    _, a = _run(tmp_path, SMALL_RUN, "a")
    monkeypatch.setenv("GLUE_COMPLEX_THREADS", "3")
    _, b = _run(tmp_path, SMALL_RUN, "b")
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "residuals.csv").read_bytes() == (b / "residuals.csv").read_bytes()


def test_injected_fault_fails_item_b(tmp_path):
    code, out = _run(tmp_path, SMALL_RUN.replace("[run]\n", "[run]\nfault = corrupt-H\n"))
    assert code == 1
    rep = json.loads((out / "report.json").read_text())
    items = rep["packages"]["smearing"]["theorem"]["items"]
    assert items["b"]["status"] == "fail"


def test_property_with_zero_trials_warns(tmp_path, capsys):
    assert main(["property", "lemma15", "--trials", "0", "--out", str(tmp_path)]) == 0
    assert "vacuous" in capsys.readouterr().err
    data = json.loads((tmp_path / "property_lemma15.json").read_text())
    assert data["warnings"]


def test_describe_lists_summands(capsys):
    assert main(["describe", "--config", "bf1d-smearing"]) == 0
    text = capsys.readouterr().out
    assert "A0" in text and "B1" in text


def test_console_script_runs():
    r = subprocess.run([sys.executable, "-m", "glue_complex.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()

import filecmp
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fosmpc.cli import main
from fosmpc.fos_core import SimulationTrace, ictal_model, simulate_fos
from fosmpc.strategies import interictal_model
from fosmpc.io import (ConfigError, DataError, ingest_eeg_csv, overlay_svg, parse_config,
                       read_trace_csv, write_channels_csv, write_trace_csv)

SVG_NS = "{http://www.w3.org/2000/svg}"


def test_ingest_4_by_1600(tmp_path):
    x = np.random.default_rng(0).normal(size=(1600, 4))
    p = tmp_path / "eeg.csv"
    write_channels_csv(p, x, header=False)
    y = ingest_eeg_csv(p, 4)
    assert y.shape == (1600, 4)
    np.testing.assert_allclose(y, x, rtol=1e-11)


def test_ingest_skips_header(tmp_path):
    p = tmp_path / "eeg.csv"
    p.write_text("ch1,ch2,ch3,ch4\n1,2,3,4\n5,6,7,8\n")
    np.testing.assert_array_equal(ingest_eeg_csv(p, 4), [[1, 2, 3, 4], [5, 6, 7, 8]])


def test_ingest_reports_bad_cell(tmp_path):
    p = tmp_path / "eeg.csv"
    p.write_text("1,2\n3,oops\n")
    with pytest.raises(DataError, match="row 2, column 2"):
        ingest_eeg_csv(p)


def test_ingest_channel_count_and_missing_file(tmp_path):
    p = tmp_path / "eeg.csv"
    p.write_text("1,2,3\n4,5,6\n")
    with pytest.raises(DataError, match="expected 4 channels"):
        ingest_eeg_csv(p, 4)
    with pytest.raises(DataError, match="nope.csv"):
        ingest_eeg_csv(tmp_path / "nope.csv")


def test_trace_round_trip_12_digits(tmp_path):
    tr = simulate_fos(ictal_model(), np.ones((4, 1)), lambda k: np.array([np.sin(k)]), T=1600, seed=1)
    tr.events = [(3, "burst_1"), (3, "trigger"), (640, "stim_start")]
    p = tmp_path / "trace.csv"
    write_trace_csv(p, tr)
    back = read_trace_csv(p)
    for a, b in ((tr.states, back.states), (tr.inputs, back.inputs),
                 (tr.disturbances, back.disturbances)):
        np.testing.assert_allclose(b, a, rtol=5e-12, atol=0)
    assert back.events == tr.events
    assert back.dt == pytest.approx(tr.dt)
    header = p.read_text().splitlines()[0]
    assert header == "t,x1,x2,x3,x4,u1,d1,d2,d3,d4,event"


@given(arrays(float, (5, 2), elements=st.floats(-1e12, 1e12, allow_subnormal=False)))
@settings(max_examples=50, deadline=None)
def test_channels_csv_round_trip_property(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("rt") / "x.csv"
    write_channels_csv(p, x)
    np.testing.assert_allclose(ingest_eeg_csv(p), x, rtol=5e-12, atol=1e-300)


def test_svg_well_formed():
    t = np.arange(100) / 160
    rng = np.random.default_rng(0)
    svg = overlay_svg(t, rng.normal(size=(100, 4)), rng.normal(size=(100, 4)), np.zeros((100, 1)))
    root = ET.fromstring(svg)
    lines = root.findall(f".//{SVG_NS}polyline")
    assert len(lines) == 12
    assert sorted({ln.get("class") for ln in lines}) == ["controlled", "input", "uncontrolled"]
    panels = root.findall(f"{SVG_NS}svg")
    assert len(panels) == 4 and all(p.get("viewBox") == "0 0 960 320" for p in panels)


def test_parse_config():
    cfg = parse_config("model = builtin_paper  # comment\n\nmpc.P = 32\nseeds = [0, 1]\nmpc.q = 1e1\n")
    assert cfg == {"model": "builtin_paper", "mpc.P": 32, "seeds": [0, 1], "mpc.q": 10.0}
    with pytest.raises(ConfigError, match=":2:"):
        parse_config("a = 1\nno equals sign\n")


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_cli_simulate_writes_artifacts(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "duration_s = 2\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--seed", "0,1", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert "seed0_controlled.csv" in names and "seed1.svg" in names
    assert "metrics.csv" in names and "summary.json" in names
    stdout = capsys.readouterr().out
    assert stdout.splitlines()[0].startswith("seed,energy_uncontrolled")


def test_cli_json_format(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "duration_s = 1\n")
    assert main(["experiment1", "--config", cfg, "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["strategy"] == "open_loop" and len(doc["runs"]) == 1


def test_cli_config_error_exit_code(tmp_path):
    assert main(["simulate", "--config", write_cfg(tmp_path, "bogus.key = 1\n")]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["simulate", "--config", write_cfg(tmp_path, "dt = -1\n")]) == 2


def test_cli_data_error_exit_code(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\nx,3\n")
    assert main(["identify", "--data", str(p)]) == 3
    assert main(["identify", "--data", str(tmp_path / "none.csv")]) == 3


def test_cli_solver_warning_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, "duration_s = 0.5\nmpc.max_iter = 1\nmpc.tol = 1e-15\n")
    assert main(["experiment3", "--config", cfg]) == 4


def test_cli_identify(tmp_path, capsys):
    x = simulate_fos(interictal_model(), np.zeros((4, 1)), T=4000, seed=0).states
    p = tmp_path / "eeg.csv"
    write_channels_csv(p, x)
    assert main(["identify", "--data", str(p), "--channels", "4", "--format", "json",
                 "--out", str(tmp_path / "id")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert np.array(doc["A"]).shape == (4, 4) and len(doc["alpha"]) == 4
    assert (tmp_path / "id" / "model.json").exists()


def test_cli_repeat_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, "duration_s = 2\n")
    for d in ("a", "b"):
        assert main(["experiment2", "--config", cfg, "--seed", "0-1", "--out", str(tmp_path / d)]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert mismatch == [] and errors == [] and len(match) == len(names)

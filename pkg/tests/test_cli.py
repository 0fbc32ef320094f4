import json

import pytest
from click.testing import CliRunner

from oblivid.cli import main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def frames(runner, tmp_path):
    out = tmp_path / "frames"
    r = runner.invoke(main, ["synth", "--frames", "3", "--resolution", "64x64", "--size", "8",
                             "--output", str(out)])
    assert r.exit_code == 0, r.output
    return out


def test_synth_writes_truth(frames):
    assert len(list(frames.glob("*.pgm"))) == 3
    assert json.loads((frames / "truth.json").read_text())["width"] == 64


def test_encode_decode_roundtrip(runner, frames, tmp_path):
    ovc = tmp_path / "v.ovc"
    r = runner.invoke(main, ["encode", "--input", str(frames), "--output", str(ovc), "--quant", "1"])
    assert r.exit_code == 0, r.output
    assert json.loads(r.output)["frames"] == 3
    outs = {}
    for extra in ([], ["--plain"]):
        d = tmp_path / ("plain" if extra else "obl")
        r = runner.invoke(main, ["decode", "--input", str(ovc), "--output", str(d), "--trace"] + extra)
        assert r.exit_code == 0, r.output
        outs[bool(extra)] = json.loads(r.output)
        assert sorted(p.read_bytes() for p in d.glob("*.pgm")) == \
            sorted(p.read_bytes() for p in frames.glob("*.pgm"))
    assert "trace_digest" in outs[False] and "trace_digest" not in outs[True]


def test_run_report(runner, frames, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"width": 64, "height": 64, "obj_width": 16, "obj_height": 16}))
    r = runner.invoke(main, ["run", "--input", str(frames), "--config", str(cfg),
                             "--set", "max_labels=32", "--no-timing"])
    assert r.exit_code == 0, r.output
    rep = json.loads(r.output)
    assert rep["frames"] == 3 and "stage_ms" not in rep and rep["config"]["max_labels"] == 32


def test_config_errors_are_clean(runner, frames):
    r = runner.invoke(main, ["run", "--input", str(frames), "--set", "stripes=3"])
    assert r.exit_code == 1 and "config error" in r.output and "Traceback" not in r.output
    r = runner.invoke(main, ["run", "--input", str(frames)])
    assert r.exit_code == 1 and "width/height" in r.output
    r = runner.invoke(main, ["run", "--input", str(frames), "--set", "novalue"])
    assert r.exit_code == 2


def test_bench_and_verify(runner, tmp_path):
    r = runner.invoke(main, ["bench", "--stage", "crop", "--reps", "1", "--resolution", "128x128",
                             "--summary"])
    assert r.exit_code == 0, r.output
    assert r.stdout.splitlines()[0].startswith("stage,variant")
    out = tmp_path / "v.json"
    r = runner.invoke(main, ["verify", "--trials", "2", "--resolution", "32x32", "--only", "core.",
                             "--output", str(out)])
    assert r.exit_code == 0, r.output
    assert json.loads(out.read_text())["passed"]


def test_decode_rejects_garbage(runner, tmp_path):
    p = tmp_path / "x.ovc"
    p.write_bytes(b"nope")
    r = runner.invoke(main, ["decode", "--input", str(p)])
    assert r.exit_code == 1 and "Error" in r.output

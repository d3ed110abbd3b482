import csv
import io
import json

import pytest

from qsym.cli import run
from qsym.data import read_recording, sample_path
from qsym.predictor import load_model

SAMPLE = str(sample_path("all_forward.jsonl"))
TINY = ["--obs-len", "4", "--pred-len", "3", "--encoder-hidden", "6", "--decoder-hidden", "6",
        "--embed-dim", "4", "--pool-mlp-dim", "6", "--noise-dim", "2"]


@pytest.fixture(scope="module")
def models(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    paths = {}
    for mode in ("baseline", "neurosym"):
        paths[mode] = d / f"{mode}.qsym"
        assert run(["train", SAMPLE, "--mode", mode, "-o", str(paths[mode]), "--epochs", "2", *TINY]) == 0
    return paths


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_cnd_table(capsys):
    assert run(["cnd", "table"]) == 0
    table = rows(capsys.readouterr().out)
    assert table[0] == ["index", "state", "n_tr", "alpha"]
    assert len(table) == 82
    zero = next(r for r in table if r[1] == "0000")
    assert zero[2] == "80" and float(zero[3]) == 0.0125


def test_qtc(capsys):
    assert run(["qtc", str(sample_path("ten_events.jsonl")), "--pair", "1,2"]) == 0
    out = rows(capsys.readouterr().out)
    assert out[0] == ["t", "state"] and len(out) == 5
    assert all(len(r[1]) == 4 and set(r[1]) <= set("-0+") for r in out[1:])
    assert out[1][1][:2] == "--"


def test_qtc_unknown_id(capsys):
    assert run(["qtc", SAMPLE, "--pair", "1,9"]) == 2
    assert "9" in capsys.readouterr().err


def test_synth(tmp_path, capsys):
    out = tmp_path / "x.jsonl"
    assert run(["synth", "cross-path", "-o", str(out), "--agents", "3", "--duration", "4", "--seed", "2"]) == 0
    rec = read_recording(out)
    assert rec.ids() == [1, 2, 3]
    assert capsys.readouterr().out == ""


def test_seed_environment_variable(tmp_path, monkeypatch):
    a, b, c = (tmp_path / n for n in ("a.jsonl", "b.jsonl", "c.jsonl"))
    monkeypatch.setenv("QSYM_SEED", "7")
    run(["synth", "all-forward", "-o", str(a), "--duration", "2"])
    run(["synth", "all-forward", "-o", str(b), "--duration", "2", "--seed", "7"])
    monkeypatch.delenv("QSYM_SEED")
    run(["synth", "all-forward", "-o", str(c), "--duration", "2"])
    assert a.read_text() == b.read_text() != c.read_text()
    monkeypatch.setenv("QSYM_SEED", "x")
    assert run(["cnd", "table"]) == 1


def test_train_writes_model(models):
    m = load_model(models["neurosym"])
    assert m.config.mode.value == "neurosym" and m.config.obs_len == 4


def test_train_without_scenes(tmp_path, capsys):
    assert run(["train", "-o", str(tmp_path / "m.qsym")]) == 2
    assert "no scenes" in capsys.readouterr().err
    assert not (tmp_path / "m.qsym").exists()


def test_replay_is_byte_identical(models, tmp_path):
    outs = []
    for i, extra in enumerate(([], [], ["--threaded"])):
        rep, plots = tmp_path / f"r{i}.json", tmp_path / f"p{i}.csv"
        argv = ["replay", SAMPLE, "--model", str(models["neurosym"]), "--report", str(rep),
                "--plots", str(plots), "--k", "3", "--seed", "4", *extra]
        assert run(argv) == 0
        outs.append((rep.read_bytes(), plots.read_bytes()))
    assert outs[0] == outs[1] == outs[2]
    report = json.loads(outs[0][0])
    assert set(report) == {"ade", "fde", "n_sequences", "n_agents", "unscored", "runtime"}
    assert report["runtime"] == {"mean_s": None, "max_s": None}
    header = outs[0][1].decode().splitlines()[0]
    assert header == "window_id,agent_id,step,gt_x,gt_y,pred_x,pred_y,sample_index"


def test_replay_runtime_and_stdout(models, capsys):
    assert run(["replay", SAMPLE, "--model", str(models["baseline"]), "--k", "2", "--runtime"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["runtime"]["mean_s"] > 0


def test_replay_realtime(models, tmp_path):
    rec = tmp_path / "short.jsonl"
    run(["synth", "all-forward", "-o", str(rec), "--duration", "0.8", "--rate", "2.5"])
    assert run(["replay", str(rec), "--model", str(models["baseline"]), "--realtime", "--report", str(tmp_path / "r.json")]) == 0


def test_eval(models, capsys):
    assert run(["eval", SAMPLE, "--model-a", str(models["baseline"]), "--model-b", str(models["neurosym"]), "--k", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["model_a"]["mode"] == "baseline" and out["model_b"]["mode"] == "neurosym"
    assert out["model_a"]["mean_ade"] == out["model_a"]["reports"][SAMPLE]["ade"]


def test_eval_needs_models_or_crosspath(models):
    assert run(["eval", SAMPLE, "--model-a", str(models["baseline"])]) == 1
    assert run(["eval", "--crosspath", "--model-a", str(models["baseline"])]) == 1


def test_eval_crosspath_table(capsys):
    assert run(["eval", "--crosspath", "--epochs", "1", "--training-seeds", "1", "--k", "2"]) == 0
    table = json.loads(capsys.readouterr().out)
    assert table["protocol"]["epochs"] == 1 and table["protocol"]["k"] == 2
    for mode in ("baseline", "neurosym"):
        assert [r["seed"] for r in table[mode]["runs"]] == [0]
        assert table[mode]["mean_ade"] == table[mode]["runs"][0]["ade"]


def test_stitch(tmp_path, capsys):
    src = tmp_path / "s.jsonl"
    src.write_text(
        '{"header": {"source": "t", "rate_hz": 2.5}}\n'
        '{"t": 0.0, "id": 7, "x": 0.0, "y": 0.0}\n{"t": 0.4, "id": 7, "x": 0.4, "y": 0.0}\n'
        '{"t": 10.0, "id": 3, "x": 9.0, "y": 0.0}\n'
    )
    out = tmp_path / "clean.jsonl"
    assert run(["stitch", str(src), "-o", str(out), "--merge", "7:3"]) == 0
    assert read_recording(out).ids() == [3]
    report = json.loads(capsys.readouterr().out)
    assert report["merges"][0]["from_id"] == 7 and report["merges"][0]["manual"] is True
    assert run(["stitch", str(src), "-o", str(out), "--merge", "7:8"]) == 2


def test_bench(models, capsys):
    assert run(["bench", "--model", str(models["neurosym"]), "--agents", "2", "--repeats", "3"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["baseline"]["median_s"] > 0 and stats["overhead_ratio"] > 0


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["cnd"],
    ["cnd", "table", "--bogus"],
    ["qtc", SAMPLE, "--pair", "1"],
    ["synth", "all-forward", "-o", "x.jsonl", "--agents", "0"],
    ["replay", SAMPLE],
    [],
])
def test_usage_errors(argv, capsys):
    assert run(argv) == 1
    assert capsys.readouterr().err


def test_data_errors(tmp_path, models):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    assert run(["qtc", str(bad), "--pair", "1,2"]) == 2
    assert run(["replay", str(tmp_path / "missing.jsonl"), "--model", str(models["baseline"])]) == 2
    junk = tmp_path / "junk.qsym"
    junk.write_bytes(b"QSYM\x09\x00\x00\x00")
    assert run(["replay", SAMPLE, "--model", str(junk)]) == 2


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "replay" in capsys.readouterr().out

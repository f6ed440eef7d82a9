import json
import subprocess
import sys

import pytest

from graphprobe.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def last_json(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])


@pytest.fixture
def train_file(tmp_path, capsys):
    path = tmp_path / "train.jsonl"
    assert run("gen", "--task", "trA2", "--train", "150xG(50,0.6)", "--seed", 7, "-o", path) == 0
    capsys.readouterr()
    return path


def test_gen_writes_one_line_per_graph(train_file, tmp_path):
    lines = train_file.read_text().splitlines()
    assert len(lines) == 150
    rec = json.loads(lines[0])
    assert len(rec["features"]) == 50 and rec["task"] == "trA2"
    assert rec["config"]["seed"] == 7 and rec["config"]["split"] == "train"
    again = tmp_path / "again.jsonl"
    run("gen", "--task", "trA2", "--train", "150xG(50,0.6)", "--seed", 7, "-o", again)
    assert again.read_bytes() == train_file.read_bytes()


def test_train_then_eval_on_same_file(train_file, tmp_path, capsys):
    model = tmp_path / "m.json"
    assert run("train", train_file, "--lambda", "1e-6", "-o", model) == 0
    trained = last_json(capsys)
    assert run("eval", model, train_file) == 0
    scored = last_json(capsys)
    assert scored["mape"] == trained["train"]["mape"]
    assert scored["n_samples"] == 150
    saved = json.loads(model.read_text())
    assert saved["task"] == "trA2" and saved["probe"]["probe_m"] == 5 and len(saved["weights"]) == 50


def test_eval_on_fresh_test_set(train_file, tmp_path, capsys):
    test = tmp_path / "test.jsonl"
    model = tmp_path / "m.json"
    run("gen", "--task", "trA2", "--test", "50xG(50,0.6)", "--seed", 7, "-o", test)
    run("train", train_file, "-o", model)
    capsys.readouterr()
    out = tmp_path / "score.json"
    assert run("eval", model, test, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert doc["mape"] < 3.0 and doc["pearson_r"] > 0.5


def test_missing_output_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run("gen", "--task", "trA2", "--train", "10xG(20,0.5)")
    assert exc.value.code == 2


@pytest.mark.parametrize("argv", [
    ("gen", "--task", "nope", "--train", "10xG(20,0.5)"),
    ("gen", "--task", "trA2", "--train", "10xQ(20,0.5)"),
    ("gen", "--task", "trA2"),
    ("gen", "--task", "trA2", "--train", "2xG(20,0.5)", "--test", "2xG(20,0.5)"),
])
def test_bad_arguments_exit_two(argv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(*argv, "-o", tmp_path / "x.jsonl")
    assert exc.value.code == 2


def test_truncated_dataset_names_line(train_file, tmp_path, capsys):
    lines = train_file.read_text().splitlines()
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines[:3] + [lines[3][:100]]) + "\n")
    assert run("train", bad, "-o", tmp_path / "m.json") == 1
    assert "bad.jsonl:4" in capsys.readouterr().err


def test_dimension_mismatch(train_file, tmp_path, capsys):
    model = tmp_path / "m.json"
    run("train", train_file, "-o", model)
    other = tmp_path / "short.jsonl"
    run("gen", "--task", "trA2", "--test", "5xG(20,0.5)", "--probe-t", 4, "-o", other)
    capsys.readouterr()
    assert run("eval", model, other) == 1
    assert "length 20" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert run("train", tmp_path / "none.jsonl", "-o", tmp_path / "m.json") == 1
    assert "graphprobe: error" in capsys.readouterr().err


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"task": "trA3", "train": "4xG(20,0.5)", "seed": 3, "probe_t": 3}))
    out = tmp_path / "d.jsonl"
    assert run("gen", "--config", cfg, "--probe-t", 2, "-o", out) == 0
    rec = json.loads(out.read_text().splitlines()[0])
    assert rec["task"] == "trA3" and rec["config"]["seed"] == 3
    assert len(rec["features"]) == 10


def test_embedded_config_reproduces_dataset(train_file, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(json.loads(train_file.read_text().splitlines()[0])["config"]))
    again = tmp_path / "again.jsonl"
    assert run("gen", "--config", cfg, "-o", again) == 0
    assert again.read_bytes() == train_file.read_bytes()


def test_table1_config_reproduces_run(tmp_path, capsys):
    first, second = tmp_path / "a", tmp_path / "b"
    run("table1", "--rows", 13, "--seed", 5, "-o", first)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(json.loads((first / "table1.json").read_text())["config"]))
    run("table1", "--rows", 13, "--config", cfg, "-o", second)
    assert (first / "table1.csv").read_bytes() == (second / "table1.csv").read_bytes()


def test_gen_reports_rejection_rate(tmp_path, capsys):
    run("gen", "--task", "trA2", "--train", "30xG(20,0.15)", "-o", tmp_path / "d.jsonl")
    rate = last_json(capsys)["rejection_rate"]
    assert 0 < rate < 1
    run("gen", "--task", "trA2", "--train", "5xG(20,0.9)", "-o", tmp_path / "e.jsonl")
    assert last_json(capsys)["rejection_rate"] == 0.0


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    with pytest.raises(SystemExit) as exc:
        run("gen", "--config", cfg, "-o", tmp_path / "d.jsonl")
    assert exc.value.code == 2


def test_gamma_dataset_and_training(tmp_path, capsys):
    data = tmp_path / "g.jsonl"
    assert run("gen", "--task", "gamma", "--train", "40xG(30,0.5)", "--alpha", 29, "-o", data) == 0
    rec = json.loads(data.read_text().splitlines()[0])
    assert "graph_ref" in rec and 0 <= rec["gamma_leak"] <= 2
    assert run("train", data, "-o", tmp_path / "m.json") == 0
    assert last_json(capsys)["train"]["pearson_r"] > 0.99


def test_intrude(tmp_path, capsys):
    out = tmp_path / "gamma.json"
    assert run("intrude", "--n", 30, "--alpha", 29, "--n-train", 60, "--n-test", 20, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert doc["test"]["pearson_r"] > 0.99
    assert doc["config"]["n"] == 30 and doc["config"]["command"] == "intrude"


def test_table1_subset(tmp_path, capsys):
    assert run("table1", "--rows", 12, 13, "-o", tmp_path) == 0
    csv_lines = (tmp_path / "table1.csv").read_text().splitlines()
    assert csv_lines[0].startswith("task,row_id,train_mape,test_mape")
    assert len(csv_lines) == 3
    doc = json.loads((tmp_path / "table1.json").read_text())
    assert doc["config"]["rows"] == [12, 13] and doc["config"]["seed"] == 0
    assert "ratio" in capsys.readouterr().out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "graphprobe.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "table1" in res.stdout

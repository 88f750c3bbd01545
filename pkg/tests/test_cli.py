import hashlib
import json
import os
import subprocess
import sys

import pytest

from labelembed.cli import main
from labelembed.dataio import synth_blobs, write_svmlight


@pytest.fixture
def blobs(tmp_path):
    data = synth_blobs(16, 60, 8, noise=0.05, seed=1, density=0.3)
    path = tmp_path / "train.svm"
    path.write_text(write_svmlight(data))
    return path


def _train(tmp_path, data, *extra, name="m"):
    model, matrix = tmp_path / (name + ".model"), tmp_path / (name + ".matrix")
    code = main(["train", "--data", str(data), "--model", str(model),
                 "--matrix", str(matrix), *extra])
    return code, model, matrix


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_train_smoke_and_reload(tmp_path, blobs, capsys):
    code, model, matrix = _train(tmp_path, blobs, "--embed-dim", "16")
    assert code == 0 and model.exists() and matrix.exists()
    out = capsys.readouterr().out
    assert "C=16" in out and "n=16" in out and "surrogate_risk" in out
    from labelembed.jl_embed import load_matrix
    from labelembed.regress import load_model
    assert load_model(model).output_dim == load_matrix(matrix).embed_dim == 16


def test_train_missing_input_leaves_nothing(tmp_path):
    code, model, matrix = _train(tmp_path, tmp_path / "absent.svm", "--embed-dim", "4")
    assert code == 2
    assert not model.exists() and not matrix.exists()
    assert os.listdir(tmp_path) == []


def test_train_bad_data_leaves_nothing(tmp_path):
    bad = tmp_path / "bad.svm"
    bad.write_text("1 2:1 1:1\n")
    code, model, matrix = _train(tmp_path, bad, "--embed-dim", "4")
    assert code == 2 and not model.exists() and not matrix.exists()


def test_train_workers_bit_identical(tmp_path, blobs):
    _, m1, x1 = _train(tmp_path, blobs, "--embed-dim", "12", "--workers", "1", name="a")
    _, m8, x8 = _train(tmp_path, blobs, "--embed-dim", "12", "--workers", "8", name="b")
    assert _sha(m1) == _sha(m8) and _sha(x1) == _sha(x8)


def test_train_usage_errors(tmp_path, blobs):
    assert _train(tmp_path, blobs)[0] == 1
    assert _train(tmp_path, blobs, "--embed-dim", "4", "--epsilon", "0.5")[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_epsilon_rule_sets_dimension(tmp_path, blobs, capsys):
    code, _, matrix = _train(tmp_path, blobs, "--epsilon", "0.9", "--delta", "0.5")
    assert code == 0
    from labelembed.jl_embed import load_matrix, suggest_dim
    assert load_matrix(matrix).embed_dim == suggest_dim(16, 0.9, 0.5)


def test_eval_on_training_set(tmp_path, blobs, capsys):
    _, model, matrix = _train(tmp_path, blobs, "--embed-dim", "16")
    metrics = tmp_path / "metrics.json"
    code = main(["eval", "--data", str(blobs), "--model", str(model),
                 "--matrix", str(matrix), "--json", str(metrics)])
    assert code == 0
    doc = json.loads(metrics.read_text())
    assert doc["accuracy"] == 1.0
    assert "accuracy=1.000000" in capsys.readouterr().out


def test_eval_errors(tmp_path, blobs):
    _, model, matrix = _train(tmp_path, blobs, "--embed-dim", "16")
    empty = tmp_path / "empty.svm"
    empty.write_text("")
    args = ["--model", str(model), "--matrix", str(matrix)]
    assert main(["eval", "--data", str(empty), *args]) == 2
    model.write_bytes(model.read_bytes()[:-5])
    assert main(["eval", "--data", str(blobs), *args]) == 2


def test_predict_output_format(tmp_path, blobs):
    _, model, matrix = _train(tmp_path, blobs, "--embed-dim", "16")
    out = tmp_path / "pred.txt"
    code = main(["predict", "--data", str(blobs), "--model", str(model),
                 "--matrix", str(matrix), "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    truth = [int(line.split()[0]) for line in blobs.read_text().splitlines()]
    assert len(lines) == len(truth)
    for line, y in zip(lines, truth):
        label, dist = line.split("\t")
        assert int(label) == y and float(dist) >= 0


def test_multilabel_round_trip(tmp_path):
    data = tmp_path / "ml.svm"
    data.write_text("1,3 1:1 2:1\n2 2:1\n3 3:1\n1 1:1\n1,3 1:1 2:1\n2 2:1\n")
    model, matrix = tmp_path / "m", tmp_path / "g"
    base = ["--data", str(data), "--model", str(model), "--matrix", str(matrix),
            "--multilabel", "--max-labels", "2"]
    assert main(["train", *base, "--embed-dim", "3", "--kind", "gaussian"]) == 0
    out = tmp_path / "pred.txt"
    assert main(["predict", *base, "--out", str(out)]) == 0
    for line in out.read_text().splitlines():
        labels = [int(c) for c in line.split(",") if c]
        assert len(labels) <= 2 and labels == sorted(labels)
    metrics = tmp_path / "m.json"
    assert main(["eval", *base, "--json", str(metrics)]) == 0
    assert 0.0 <= json.loads(metrics.read_text())["hamming_loss"] <= 1.0


def test_config_file_and_flag_precedence(tmp_path, blobs):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"embed_dim": 5, "kind": "gaussian"}))
    _, _, matrix = _train(tmp_path, blobs, "--config", str(cfg), name="c")
    _, _, matrix2 = _train(tmp_path, blobs, "--config", str(cfg), "--embed-dim", "7",
                           name="d")
    from labelembed.jl_embed import load_matrix
    assert load_matrix(matrix).embed_dim == 5 and load_matrix(matrix).kind == "gaussian"
    assert load_matrix(matrix2).embed_dim == 7
    cfg.write_text(json.dumps({"no_such_option": 1}))
    with pytest.raises(SystemExit) as exc:
        _train(tmp_path, blobs, "--config", str(cfg), name="e")
    assert exc.value.code == 1


def test_verify_theorem1_small(tmp_path, capsys):
    out = tmp_path / "reports"
    code = main(["verify", "--campaign", "theorem1", "--trials", "3", "--classes", "8",
                 "--embed-dim", "32", "--points", "5", "--out", str(out)])
    assert code == 0
    assert sorted(os.listdir(out)) == ["theorem1.csv", "theorem1.json", "theorem1.png"]
    assert "0 violations" in capsys.readouterr().out


def test_verify_unverified_matrix_skips(capsys):
    code = main(["verify", "--campaign", "theorem1", "--trials", "2", "--classes", "100",
                 "--embed-dim", "2", "--points", "4"])
    assert code == 0
    assert "skip count: 2" in capsys.readouterr().out


def test_verify_theorem2_small():
    assert main(["verify", "--campaign", "theorem2", "--trials", "3", "--points", "4"]) == 0


def test_verify_bad_parameters():
    assert main(["verify", "--trials", "0"]) == 1
    assert main(["verify", "--epsilon", "1.5"]) == 1


def test_bench_csv(tmp_path):
    out = tmp_path / "bench.csv"
    code = main(["bench", "--classes", "8", "--features", "40", "--per-class", "10",
                 "--embed-dim", "8", "--worker-counts", "1,4", "--out", str(out)])
    assert code == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 3
    accs = {line.split(",")[-1] for line in rows[1:]}
    assert len(accs) == 1
    assert (tmp_path / "bench.png").exists()
    assert main(["bench", "--embed-dim", "4", "--worker-counts", "x"]) == 1


def test_synth_and_stats(tmp_path, capsys):
    out, test = tmp_path / "a.svm", tmp_path / "b.svm"
    assert main(["synth", "--classes", "4", "--features", "10", "--per-class", "5",
                 "--out", str(out), "--test-out", str(test),
                 "--test-fraction", "0.4"]) == 0
    assert len(out.read_text().splitlines()) + len(test.read_text().splitlines()) == 20
    assert main(["stats", "--data", str(out)]) == 0
    assert "C=4" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "labelembed", "stats", "--data",
                           str(tmp_path / "none")], capture_output=True, text=True)
    assert proc.returncode == 2 and "not found" in proc.stderr

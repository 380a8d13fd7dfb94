"""End-to-end command-line tests driven through ``main(argv)``."""

import json

import pytest

from popref.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main

_SPEC_TEXT = """
# shared settings for a small world and quick runs
task = object-only
world.n_classes = 12
world.images_per_class = 3
world.n_attributes = 10
world.d_img = 16
world.d_word = 8
world.attrs_per_object = 4
world.seed = 5
data.min_len = 2
data.max_len = 4
data.n_train = 80
data.n_val = 40
data.n_test = 40
data.seed = 1
train.epochs = 1
model.d_ent = 12
model.n_sensors = 5
"""


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.cfg"
    path.write_text(_SPEC_TEXT)
    return path


@pytest.fixture
def data_dir(tmp_path, spec_file):
    out = tmp_path / "data"
    code = main(["gen-data", "--spec", str(spec_file), "--out", str(out)])
    assert code == EXIT_OK
    return out


def test_usage_errors_exit_1(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE
    assert main(["gen-data"]) == EXIT_USAGE  # missing required --out
    assert main(["train", "--model", "rnn", "--data", "x", "--out-checkpoint", "y"]) \
        == EXIT_USAGE
    capsys.readouterr()


def test_gen_data_writes_three_splits(tmp_path, spec_file, capsys):
    out_dir = tmp_path / "data"
    assert main(["gen-data", "--spec", str(spec_file), "--out", str(out_dir)]) \
        == EXIT_OK
    for split, n in [("train", 80), ("val", 40), ("test", 40)]:
        path = out_dir / f"{split}.jsonl"
        assert path.exists()
        assert len(path.read_text().splitlines()) == n
    out = capsys.readouterr().out
    assert "train: 80 acts" in out
    assert "world_seed=5" in out


def test_gen_data_is_reproducible(tmp_path, spec_file):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen-data", "--spec", str(spec_file), "--out", str(a)]) == EXIT_OK
    assert main(["gen-data", "--spec", str(spec_file), "--out", str(b)]) == EXIT_OK
    for split in ("train", "val", "test"):
        assert (a / f"{split}.jsonl").read_bytes() == (b / f"{split}.jsonl").read_bytes()


def test_gen_data_rejects_unknown_spec_key(tmp_path, capsys):
    spec = tmp_path / "bad.cfg"
    spec.write_text("world.n_class = 12\n")
    assert main(["gen-data", "--spec", str(spec), "--out", str(tmp_path / "d")]) \
        == EXIT_DATA
    assert "world.n_class" in capsys.readouterr().err


def test_stats_prints_table(data_dir, capsys):
    code = main(["stats", "--train", str(data_dir / "train.jsonl"),
                 "--test", str(data_dir / "test.jsonl")])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "object" in out


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["stats", "--train", str(tmp_path / "absent.jsonl")]) == EXIT_DATA
    capsys.readouterr()


def test_train_eval_pop_round_trip(tmp_path, spec_file, data_dir, capsys):
    ckpt = tmp_path / "pop.json"
    code = main(["train", "--model", "pop", "--data", str(data_dir / "train.jsonl"),
                 "--config", str(spec_file), "--out-checkpoint", str(ckpt)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "trained pop for 1 epochs (80 updates)" in out
    assert ckpt.exists()

    report = tmp_path / "metrics.json"
    code = main(["eval", "--checkpoint", str(ckpt),
                 "--test", str(data_dir / "test.jsonl"),
                 "--report", str(report)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "Total" in out and "MultRef" in out
    metrics = json.loads(report.read_text())
    assert sum(c["n"] for c in metrics["counts"].values()) == 40


def test_pipeline_needs_tuning_before_eval(tmp_path, spec_file, data_dir, capsys):
    ckpt = tmp_path / "pipe.json"
    code = main(["train", "--model", "pipeline",
                 "--data", str(data_dir / "train.jsonl"),
                 "--config", str(spec_file), "--out-checkpoint", str(ckpt)])
    assert code == EXIT_OK
    capsys.readouterr()

    # Untuned checkpoint: eval must refuse rather than guess thresholds.
    code = main(["eval", "--checkpoint", str(ckpt),
                 "--test", str(data_dir / "test.jsonl")])
    assert code == EXIT_DATA
    assert "tune-thresholds" in capsys.readouterr().err

    code = main(["tune-thresholds", "--checkpoint", str(ckpt),
                 "--val", str(data_dir / "val.jsonl")])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "min_similarity=" in out

    code = main(["eval", "--checkpoint", str(ckpt),
                 "--test", str(data_dir / "test.jsonl")])
    assert code == EXIT_OK
    capsys.readouterr()


def test_eval_rejects_corrupt_checkpoint(tmp_path, data_dir, capsys):
    ckpt = tmp_path / "broken.json"
    ckpt.write_text("{not json")
    assert main(["eval", "--checkpoint", str(ckpt),
                 "--test", str(data_dir / "test.jsonl")]) == EXIT_DATA
    capsys.readouterr()


def test_baseline_majority_and_random(data_dir, tmp_path, capsys):
    report = tmp_path / "maj.json"
    code = main(["baseline", "--kind", "majority",
                 "--test", str(data_dir / "test.jsonl"),
                 "--report", str(report)])
    assert code == EXIT_OK
    capsys.readouterr()
    metrics = json.loads(report.read_text())
    assert metrics["pointing"] == 0.0
    assert metrics["missref"] == 100.0

    code = main(["baseline", "--kind", "random", "--seed", "3", "--max-len", "4",
                 "--test", str(data_dir / "test.jsonl")])
    assert code == EXIT_OK
    capsys.readouterr()


def test_baseline_probability_requires_train_split(data_dir, capsys):
    code = main(["baseline", "--kind", "probability",
                 "--test", str(data_dir / "test.jsonl")])
    assert code == EXIT_DATA
    assert "--train" in capsys.readouterr().err

    code = main(["baseline", "--kind", "probability",
                 "--test", str(data_dir / "test.jsonl"),
                 "--train", str(data_dir / "train.jsonl")])
    assert code == EXIT_OK
    capsys.readouterr()


def test_baseline_cnn_perfect_labeler(data_dir, tmp_path, capsys):
    report = tmp_path / "cnn.json"
    code = main(["baseline", "--kind", "cnn", "--p-true", "1.0",
                 "--test", str(data_dir / "test.jsonl"),
                 "--report", str(report)])
    assert code == EXIT_OK
    capsys.readouterr()
    assert json.loads(report.read_text())["total"] == 100.0


def test_gradcheck_passes_and_fails_by_tolerance(capsys):
    code = main(["gradcheck", "--model", "pop", "--trials", "3", "--seed", "11"])
    assert code == EXIT_OK
    assert "pop: PASS" in capsys.readouterr().out

    # An absurd tolerance forces a numeric failure exit without any real bug.
    code = main(["gradcheck", "--model", "pipeline", "--trials", "2",
                 "--tolerance", "1e-30"])
    assert code == EXIT_NUMERIC
    assert "pipeline: FAIL" in capsys.readouterr().out

"""Tests for metrics, manifest parsing, and end-to-end experiment runs."""

import datetime
import json
import os

import numpy as np
import pytest

from popref.datagen import (
    ANOMALY,
    MISS,
    MULT,
    POINT,
    DatasetSpec,
    Gold,
    Item,
    Query,
    ReferenceAct,
    generate_splits,
)
from popref.embeddings import WorldConfig, build_synthetic_world, encode_act
from popref.errors import ConfigError, ParseError
from popref.harness import (
    DEFAULT_EPOCHS,
    GOLD_CATEGORIES,
    Metrics,
    build_dataset_spec,
    build_train_config,
    build_world_config,
    encode_split,
    evaluate,
    parse_kv_file,
    report_to_json,
    run_experiment,
    validate_manifest_keys,
    write_report_bundle,
)
from popref.checkpoint import load_checkpoint, restore_pipeline
from popref.numerics import Rng, derive_seed
from popref.pipeline_model import MISS_GRID, GAP_GRID
from popref.pop_model import PopConfig, PopTrainable, Prediction, init_params
from popref.training import TrainConfig, train


def _act(i, gold):
    item = Item(object="obj000", image_id="obj000-i00")
    return ReferenceAct(
        id=f"a{i}", query=Query(noun="obj000"), items=(item, item), gold=gold
    )


def _scripted(predictions):
    table = dict(predictions)
    return lambda act: table[act.id]


# ---------------------------------------------------------------------------
# evaluate / Metrics


def test_evaluate_seven_of_ten_is_70():
    acts = [_act(i, Gold.point(0)) for i in range(6)]
    acts += [_act(6, Gold.miss()), _act(7, Gold.miss())]
    acts += [_act(8, Gold.mult()), _act(9, Gold.mult())]
    predictor = _scripted(
        [
            ("a0", Prediction.point(0)),  # correct
            ("a1", Prediction.point(0)),  # correct
            ("a2", Prediction.point(0)),  # correct
            ("a3", Prediction.point(0)),  # correct
            ("a4", Prediction.point(1)),  # wrong index
            ("a5", Prediction.protest()),  # wrong outcome
            ("a6", Prediction.protest()),  # correct
            ("a7", Prediction.point(0)),  # wrong outcome
            ("a8", Prediction.protest()),  # correct
            ("a9", Prediction.protest()),  # correct
        ]
    )
    metrics = evaluate(predictor, acts)
    assert metrics.n_total == 10
    assert metrics.total == pytest.approx(70.0)
    assert metrics.pointing == pytest.approx(100.0 * 4 / 6)
    assert metrics.missref == pytest.approx(50.0)
    assert metrics.multref == pytest.approx(100.0)


def test_evaluate_confusion_table_cells():
    acts = [
        _act(0, Gold.point(1)),
        _act(1, Gold.point(0)),
        _act(2, Gold.point(0)),
        _act(3, Gold.miss()),
        _act(4, Gold.miss()),
        _act(5, Gold.mult()),
    ]
    predictor = _scripted(
        [
            ("a0", Prediction.point(1)),
            ("a1", Prediction.point(2)),
            ("a2", Prediction.protest()),
            ("a3", Prediction.protest()),
            ("a4", Prediction.point(0)),
            ("a5", Prediction.protest()),
        ]
    )
    metrics = evaluate(predictor, acts)
    assert metrics.confusion[POINT] == {
        "point_correct": 1, "point_wrong": 1, "protest": 1,
    }
    assert metrics.confusion[MISS] == {
        "point_correct": 0, "point_wrong": 1, "protest": 1,
    }
    assert metrics.confusion[MULT] == {
        "point_correct": 0, "point_wrong": 0, "protest": 1,
    }
    # Pointing at an anomalous act is wrong no matter the index.
    assert metrics.missref == pytest.approx(50.0)


def test_evaluate_is_order_invariant():
    acts = [_act(i, Gold.point(0)) for i in range(4)]
    acts += [_act(4, Gold.miss()), _act(5, Gold.mult())]
    predictor = _scripted(
        [(f"a{i}", Prediction.point(0)) for i in range(4)]
        + [("a4", Prediction.protest()), ("a5", Prediction.point(1))]
    )
    forward = evaluate(predictor, acts)
    backward = evaluate(predictor, list(reversed(acts)))
    assert forward.to_dict() == backward.to_dict()


def test_evaluate_total_weights_categories_by_count():
    acts = [_act(i, Gold.point(0)) for i in range(8)] + [_act(8, Gold.miss())]
    predictor = _scripted(
        [(f"a{i}", Prediction.point(0)) for i in range(8)]
        + [("a8", Prediction.point(0))]
    )
    metrics = evaluate(predictor, acts)
    # 8/8 pointing, 0/1 missref: the total is count-weighted, not a mean of
    # the category percentages.
    assert metrics.total == pytest.approx(100.0 * 8 / 9)
    total_correct = sum(c.correct for c in metrics.counts.values())
    assert metrics.total == pytest.approx(100.0 * total_correct / metrics.n_total)


def test_metrics_absent_category_reports_none():
    acts = [_act(0, Gold.point(0)), _act(1, Gold.point(1))]
    predictor = _scripted([("a0", Prediction.point(0)), ("a1", Prediction.point(0))])
    metrics = evaluate(predictor, acts)
    assert metrics.missref is None
    assert metrics.multref is None
    assert metrics.total == pytest.approx(50.0)
    text = metrics.to_text()
    assert "--" in text
    assert "50.0" in text


def test_metrics_empty_is_all_none():
    metrics = Metrics()
    assert metrics.n_total == 0
    assert metrics.total is None
    assert metrics.to_dict()["total"] is None


def test_metrics_to_dict_round_trips_through_json():
    acts = [_act(0, Gold.point(0)), _act(1, Gold.miss())]
    predictor = _scripted([("a0", Prediction.point(0)), ("a1", Prediction.protest())])
    d = evaluate(predictor, acts).to_dict()
    assert set(d) == {"total", "pointing", "missref", "multref", "counts", "confusion"}
    assert set(d["counts"]) == set(GOLD_CATEGORIES)
    assert json.loads(json.dumps(d)) == d


# ---------------------------------------------------------------------------
# manifest parsing


def test_parse_kv_file_values_comments_blanks(tmp_path):
    path = tmp_path / "m.cfg"
    path.write_text(
        "# leading comment\n"
        "\n"
        "task = object-only\n"
        "  world.n_classes =  12   # trailing comment\n"
        "train.lr0 = 0.09\n"
    )
    assert parse_kv_file(path) == {
        "task": "object-only",
        "world.n_classes": "12",
        "train.lr0": "0.09",
    }


def test_parse_kv_file_error_lines(tmp_path):
    path = tmp_path / "m.cfg"
    path.write_text("task = x\nnot a pair\n")
    with pytest.raises(ParseError) as err:
        parse_kv_file(path)
    assert err.value.line == 2

    path.write_text("= value\n")
    with pytest.raises(ParseError) as err:
        parse_kv_file(path)
    assert err.value.line == 1

    path.write_text("task = x\n# gap\ntask = y\n")
    with pytest.raises(ParseError) as err:
        parse_kv_file(path)
    assert err.value.line == 3
    assert "duplicate" in str(err.value)


def test_validate_manifest_keys():
    validate_manifest_keys({"task": "object-only", "world.sigma": "0.1"})
    with pytest.raises(ConfigError) as err:
        validate_manifest_keys({"task": "x", "wrold.sigma": "0.1"})
    assert "wrold.sigma" in str(err.value)


def test_build_world_config_defaults_and_overrides():
    config, seed = build_world_config({})
    assert config == WorldConfig()
    assert seed == 0
    config, seed = build_world_config(
        {"world.n_classes": "12", "world.sigma": "0.3", "world.seed": "9"}
    )
    assert config.n_classes == 12
    assert config.sigma == pytest.approx(0.3)
    assert config.d_img == WorldConfig().d_img
    assert seed == 9


def test_build_world_config_rejects_bad_number():
    with pytest.raises(ConfigError) as err:
        build_world_config({"world.n_classes": "many"})
    assert "world.n_classes" in str(err.value)


def test_build_dataset_spec():
    spec = build_dataset_spec({"data.n_train": "100", "data.p_miss": "0.2"})
    assert spec.n_train == 100
    assert spec.p_miss == pytest.approx(0.2)
    assert spec.max_len == DatasetSpec().max_len


def test_build_train_config_injects_model_epoch_default():
    config = build_train_config({}, DEFAULT_EPOCHS["trpop"])
    assert config.epochs == 36
    assert config.lr0 == pytest.approx(0.09)
    config = build_train_config({"train.epochs": "3"}, DEFAULT_EPOCHS["trpop"])
    assert config.epochs == 3
    config = build_train_config(
        {"train.lr0": "0.05", "train.shuffle_each_epoch": "off"}, 14
    )
    assert config.lr0 == pytest.approx(0.05)
    assert config.shuffle_each_epoch is False
    assert config.epochs == 14


def test_build_train_config_rejects_bad_bool():
    with pytest.raises(ConfigError):
        build_train_config({"train.shuffle_each_epoch": "maybe"}, 14)


def test_encode_split_matches_per_act_encoding(small_world):
    spec = DatasetSpec(min_len=2, max_len=4, n_train=6, n_val=0, n_test=0, seed=3)
    acts = generate_splits(small_world, spec, "object-only")["train"]
    encoded = encode_split(small_world, acts, "dense")
    assert len(encoded) == 6
    for enc, act in zip(encoded, acts):
        direct = encode_act(act, small_world, "dense")
        np.testing.assert_array_equal(enc.query_vec, direct.query_vec)
        for got, want in zip(enc.candidate_vecs, direct.candidate_vecs):
            np.testing.assert_array_equal(got, want)


# ---------------------------------------------------------------------------
# run_experiment

_TINY_WORLD = {
    "world.n_classes": "12",
    "world.images_per_class": "3",
    "world.n_attributes": "10",
    "world.d_img": "16",
    "world.d_word": "8",
    "world.attrs_per_object": "4",
    "world.seed": "5",
}

_TINY_POP = {
    **_TINY_WORLD,
    "task": "object-only",
    "model": "pop",
    "data.n_train": "60",
    "data.n_val": "30",
    "data.n_test": "40",
    "data.seed": "1",
    "train.epochs": "1",
    "model.d_ent": "12",
    "model.n_sensors": "5",
}


def test_run_experiment_pop_happy_path():
    report = run_experiment(dict(_TINY_POP))
    assert report["status"] == "ok"
    assert report["task"] == "object-only"
    assert report["model"] == "pop"
    assert report["encoding"] == "dense"
    assert report["train"]["config"]["epochs"] == 1
    assert report["train"]["updates"] == 60
    assert len(report["train"]["epoch_losses"]) == 1
    counts = report["metrics"]["counts"]
    assert sum(c["n"] for c in counts.values()) == 40
    assert len(report["diagnostics"]["val_protest_rate"]) == 1
    rate = report["diagnostics"]["val_protest_rate"][0]
    assert 0.0 <= rate <= 1.0
    assert report["dataset_stats"]["avg_frequency"]["train"]["object"] > 0


def test_run_experiment_is_deterministic():
    first = report_to_json(run_experiment(dict(_TINY_POP)))
    second = report_to_json(run_experiment(dict(_TINY_POP)))
    assert first == second


def test_run_experiment_pipeline_tunes_thresholds(tmp_path):
    manifest = {
        **_TINY_POP,
        "model": "pipeline",
        "model.d_shared": "10",
    }
    manifest.pop("model.d_ent")
    manifest.pop("model.n_sensors")
    out = tmp_path / "run"
    report = run_experiment(manifest, out_dir=out)
    assert report["status"] == "ok"
    assert report["thresholds"]["min_similarity"] in MISS_GRID
    assert report["thresholds"]["min_gap"] in GAP_GRID

    assert (out / "report.json").read_text() == report_to_json(report)
    meta = json.loads((out / "meta.json").read_text())
    datetime.datetime.fromisoformat(meta["timestamp"])
    record = load_checkpoint(out / "checkpoint.json")
    params, thresholds = restore_pipeline(record)
    assert thresholds is not None
    assert thresholds.min_similarity == report["thresholds"]["min_similarity"]
    assert params.query_map.shape[0] == 10  # rows = shared-space dim


def test_run_experiment_trpop_uses_one_hot():
    manifest = {**_TINY_POP, "model": "trpop", "data.n_test": "10",
                "data.n_train": "20", "data.n_val": "10"}
    report = run_experiment(manifest)
    assert report["status"] == "ok"
    assert report["encoding"] == "one-hot"


def test_run_experiment_reports_failures_instead_of_raising(tmp_path):
    report = run_experiment({**_TINY_POP, "world.n_classess": "12"})
    assert report["status"] == "failed"
    assert report["stage"] == "manifest"
    assert "world.n_classess" in report["error"]

    report = run_experiment({**_TINY_POP, "task": "object-verb"})
    assert report["status"] == "failed"
    assert report["stage"] == "manifest"

    # Too few object classes to fill max_len + 1 distinct candidate slots.
    report = run_experiment({**_TINY_POP, "world.n_classes": "4"})
    assert report["status"] == "failed"
    assert report["stage"] == "data"
    assert "error" in report

    # Failed runs still write a bundle so the error is on disk.
    out = tmp_path / "failed"
    run_experiment({**_TINY_POP, "task": "object-verb"}, out_dir=out)
    on_disk = json.loads((out / "report.json").read_text())
    assert on_disk["status"] == "failed"
    assert not (out / "checkpoint.json").exists()


def test_report_to_json_is_sorted_with_trailing_newline():
    text = report_to_json({"b": 1, "a": {"z": 2, "y": 3}})
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')
    assert text.index('"y"') < text.index('"z"')
    assert json.loads(text) == {"b": 1, "a": {"z": 2, "y": 3}}


def test_write_report_bundle_without_checkpoint(tmp_path):
    out = tmp_path / "bundle"
    write_report_bundle({"status": "ok"}, out)
    assert sorted(os.listdir(out)) == ["meta.json", "report.json"]


# ---------------------------------------------------------------------------
# default-run training property (the long test in this file: ~30 s)


def test_default_run_epoch_loss_non_increasing():
    """On the default synthetic data, epoch-mean loss must not rise by more
    than 5% across any of the first five epochs."""
    world = build_synthetic_world(WorldConfig(), 0)
    spec = DatasetSpec(n_val=0, n_test=0)  # default train split only
    acts = generate_splits(world, spec, "object-only")["train"]
    assert len(acts) == 40000
    encoded = encode_split(world, acts, "dense")
    config = PopConfig(d_query=32, d_cand=64, d_ent=300, n_sensors=100)
    params = init_params(config, Rng(derive_seed(0, "init", "pop")))
    train_config = TrainConfig(epochs=5, seed=0)
    log = train(PopTrainable(params), encoded, train_config)
    assert log.updates == 5 * 40000
    assert len(log.epoch_losses) == 5
    assert all(np.isfinite(v) for v in log.epoch_losses)
    for earlier, later in zip(log.epoch_losses, log.epoch_losses[1:]):
        assert later <= earlier * 1.05, log.epoch_losses

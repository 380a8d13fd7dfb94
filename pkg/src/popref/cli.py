"""Command-line entry points.

Subcommands: ``gen-data`` (write train/val/test JSONL splits), ``train``
(fit a model and save a checkpoint), ``tune-thresholds`` (grid-search the
pipeline's protest heuristics on a validation file), ``eval`` (score a
checkpoint on a test file), ``baseline`` (run one of the six comparison
systems), ``gradcheck`` (verify analytic gradients against finite
differences), and ``stats`` (dataset combination-frequency report).

Exit codes: 0 on success, 1 for usage errors (bad flags/arguments), 2 for
data or contract errors (malformed files, invalid configs, broken
invariants), 3 for numeric failures (non-finite losses, failed gradient
checks).
"""

import argparse
import json
import os
import sys

from . import baselines
from .checkpoint import (
    load_checkpoint,
    pipeline_record,
    pop_record,
    restore_pipeline,
    restore_pop,
    save_checkpoint,
)
from .datagen import dataset_stats, generate_splits, read_jsonl, write_jsonl
from .embeddings import WorldConfig, build_synthetic_world, encode_act
from .errors import ConfigError, NumericError, PopRefError
from .harness import (
    DEFAULT_EPOCHS,
    MODEL_KINDS,
    TASKS,
    build_dataset_spec,
    build_train_config,
    build_world_config,
    evaluate,
    parse_kv_file,
    validate_manifest_keys,
)
from .numerics import Rng, derive_seed
from .pipeline_model import (
    PipelineConfig,
    gradcheck_pipeline,
    pipeline_predict,
    train_pipeline,
    tune_thresholds,
)
from .pop_model import (
    PopConfig,
    PopTrainable,
    gradcheck_pop,
    init_params,
    predict,
)
from .training import train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse's default usage-error exit code is 2; this tool reserves 2
    for data errors, so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path) -> dict[str, str]:
    if path is None:
        return {}
    kv = parse_kv_file(path)
    validate_manifest_keys(kv)
    return kv


def _world_from(kv: dict[str, str], seed_override=None):
    config, seed = build_world_config(kv)
    if seed_override is not None:
        seed = seed_override
    return build_synthetic_world(config, seed), config, seed


def _print_metrics(metrics, report_path=None) -> None:
    print(metrics.to_text())
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(metrics.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")
        print(f"report written to {report_path}")


def _cmd_gen_data(args) -> int:
    kv = _load_config(args.spec)
    task = args.task or kv.get("task", "object-only")
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    world, _, world_seed = _world_from(kv, args.world_seed)
    spec = build_dataset_spec(kv)
    splits = generate_splits(world, spec, task)
    os.makedirs(args.out, exist_ok=True)
    for split, acts in splits.items():
        path = os.path.join(args.out, f"{split}.jsonl")
        write_jsonl(acts, path)
        print(f"{split}: {len(acts)} acts -> {path}")
    print(f"task={task} world_seed={world_seed} data_seed={spec.seed}")
    return EXIT_OK


def _infer_task(acts) -> str:
    return "object-attr" if acts[0].query.attribute is not None else "object-only"


def _cmd_train(args) -> int:
    kv = _load_config(args.config)
    acts = read_jsonl(args.data)
    if not acts:
        raise ConfigError(f"no training acts in {args.data}")
    world, world_config, world_seed = _world_from(kv)
    mode = "one-hot" if args.model == "trpop" else "dense"
    encoded = [
        encode_act(act, world, mode, allow_unknown=args.allow_unknown)
        for act in acts
    ]
    train_config = build_train_config(kv, DEFAULT_EPOCHS[args.model])
    d_query = encoded[0].query_vec.size
    d_cand = encoded[0].candidate_vecs[0].size
    extra = {
        "task": _infer_task(acts),
        "encoding": mode,
        "normalize_blocks": False,
        "world_config": world_config.to_dict(),
        "world_seed": world_seed,
    }

    if args.model == "pipeline":
        config = PipelineConfig(
            d_query=d_query,
            d_cand=d_cand,
            d_shared=int(kv.get("model.d_shared", 300)),
            margin=float(kv.get("model.margin", 0.5)),
        )
        params, log = train_pipeline(encoded, config, train_config)
        record = pipeline_record(params, extra=extra)
    else:
        config = PopConfig(
            d_query=d_query,
            d_cand=d_cand,
            d_ent=int(kv.get("model.d_ent", 300)),
            n_sensors=int(kv.get("model.n_sensors", 100)),
            contrast=kv.get("model.contrast", "relu"),
            score_squash=kv.get("model.score_squash", "sigmoid"),
        )
        params = init_params(
            config, Rng(derive_seed(train_config.seed, "init", args.model))
        )
        log = train(PopTrainable(params), encoded, train_config)
        record = pop_record(params, kind=args.model, extra=extra)

    save_checkpoint(record, args.out_checkpoint)
    losses = ", ".join(f"{v:.4f}" for v in log.epoch_losses)
    print(f"trained {args.model} for {train_config.epochs} epochs "
          f"({log.updates} updates)")
    print(f"epoch mean losses: [{losses}]")
    print(f"checkpoint written to {args.out_checkpoint}")
    return EXIT_OK


def _rebuild_world(record: dict):
    extra = record.get("extra", {})
    if "world_config" not in extra:
        raise ConfigError(
            "checkpoint lacks world configuration; cannot rebuild the encoder"
        )
    config = WorldConfig(**extra["world_config"])
    return build_synthetic_world(config, extra.get("world_seed", 0)), extra


def _cmd_tune_thresholds(args) -> int:
    record = load_checkpoint(args.checkpoint)
    if record["kind"] != "pipeline":
        raise ConfigError(
            f"threshold tuning applies to pipeline checkpoints, got "
            f"{record['kind']!r}"
        )
    params, _ = restore_pipeline(record)
    world, extra = _rebuild_world(record)
    acts = read_jsonl(args.val)
    encoded = [
        encode_act(act, world, extra.get("encoding", "dense"),
                   normalize_blocks=extra.get("normalize_blocks", False))
        for act in acts
    ]
    thresholds = tune_thresholds(params, encoded)
    record["thresholds"] = thresholds.to_dict()
    out = args.out or args.checkpoint
    save_checkpoint(record, out)
    print(f"min_similarity={thresholds.min_similarity} "
          f"min_gap={thresholds.min_gap}")
    print(f"checkpoint updated: {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    record = load_checkpoint(args.checkpoint)
    world, extra = _rebuild_world(record)
    acts = read_jsonl(args.test)
    encoded = [
        encode_act(act, world, extra.get("encoding", "dense"),
                   allow_unknown=args.allow_unknown,
                   normalize_blocks=extra.get("normalize_blocks", False))
        for act in acts
    ]
    if record["kind"] == "pipeline":
        params, thresholds = restore_pipeline(record)
        if thresholds is None:
            raise ConfigError(
                "pipeline checkpoint has no tuned thresholds; run "
                "tune-thresholds first"
            )
        metrics = evaluate(
            lambda act: pipeline_predict(params, thresholds, act), encoded
        )
    else:
        params = restore_pop(record)
        metrics = evaluate(lambda act: predict(params, act), encoded)
    _print_metrics(metrics, args.report)
    return EXIT_OK


def _cmd_baseline(args) -> int:
    acts = read_jsonl(args.test)
    if not acts:
        raise ConfigError(f"no test acts in {args.test}")

    if args.kind == "random":
        rng = Rng(args.seed)
        metrics = evaluate(
            lambda act: baselines.random_predict(act, rng, args.max_len), acts
        )
    elif args.kind == "majority":
        metrics = evaluate(baselines.majority_predict, acts)
    elif args.kind == "probability":
        if not args.train:
            raise ConfigError(
                "the probability baseline needs --train to estimate label "
                "frequencies"
            )
        train_acts = read_jsonl(args.train)
        dist = baselines.estimate_label_distribution(train_acts, args.max_len)
        rng = Rng(args.seed)
        metrics = evaluate(
            lambda act: baselines.probability_predict(act, dist, rng), acts
        )
    elif args.kind == "cnn":
        if args.config:
            world, _, _ = _world_from(_load_config(args.config))
            vocabulary = tuple(world.objects)
        else:
            vocabulary = tuple(sorted({it.object for a in acts for it in a.items}))
        labeler = baselines.SyntheticLabeler(
            vocabulary=vocabulary, p_true=args.p_true, seed=args.seed
        )
        metrics = evaluate(
            lambda act: baselines.cnn_predict(act, labeler), acts
        )
    elif args.kind == "attr-random":
        rng = Rng(args.seed)
        metrics = evaluate(
            lambda act: baselines.attr_random_predict(act, rng), acts
        )
    elif args.kind == "imgshuffle":
        if not args.train:
            raise ConfigError("the image-shuffle run needs --train acts")
        kv = _load_config(args.config)
        world, _, _ = _world_from(kv)
        train_acts = read_jsonl(args.train)
        train_config = build_train_config(kv, DEFAULT_EPOCHS["pop"])
        result = baselines.run_imgshuffle(
            world,
            train_acts,
            acts,
            train_config,
            shuffle_seed=args.shuffle_seed,
            d_ent=int(kv.get("model.d_ent", 300)),
            n_sensors=int(kv.get("model.n_sensors", 100)),
        )
        print(f"shuffle_seed={result.shuffle_seed}")
        metrics = result.metrics
    else:
        raise ConfigError(f"unknown baseline kind {args.kind!r}")

    _print_metrics(metrics, args.report)
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    reports = []
    if args.model in ("pop", "all"):
        trials = args.trials or 20
        reports.append(("pop", gradcheck_pop(
            trials=trials, seed=args.seed, tolerance=args.tolerance
        )))
    if args.model in ("pipeline", "all"):
        trials = args.trials or 10
        reports.append(("pipeline", gradcheck_pipeline(
            trials=trials, seed=args.seed, tolerance=args.tolerance
        )))
    failed = False
    for name, report in reports:
        status = "PASS" if report.passed else "FAIL"
        print(f"{name}: {status} ({report.trials} trials, "
              f"max rel error {report.max_rel_error:.3e}, "
              f"tolerance {report.tolerance:g})")
        for failure in report.failures:
            print(f"  {failure}")
        failed = failed or not report.passed
    return EXIT_NUMERIC if failed else EXIT_OK


def _cmd_stats(args) -> int:
    train_acts = read_jsonl(args.train)
    test_acts = read_jsonl(args.test) if args.test else None
    report = dataset_stats(train_acts, test_acts)
    print(report.to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="popref",
        description="Reference-resolution toolkit: dataset generation, "
                    "model training, baselines, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate train/val/test JSONL splits")
    p.add_argument("--task", choices=TASKS, default=None,
                   help="dataset flavor (default: from spec file, else object-only)")
    p.add_argument("--world-seed", type=int, default=None,
                   help="override the world seed from the spec file")
    p.add_argument("--spec", default=None,
                   help="key-value file with world.* and data.* settings")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--data", required=True, help="training acts (JSONL)")
    p.add_argument("--config", default=None,
                   help="key-value file with world.*, train.*, model.* settings")
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--allow-unknown", action="store_true",
                   help="dense encoding: map unknown tokens to zero vectors "
                        "instead of failing")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("tune-thresholds",
                       help="grid-search the pipeline protest thresholds")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--val", required=True, help="validation acts (JSONL)")
    p.add_argument("--out", default=None,
                   help="write the updated checkpoint here (default: in place)")
    p.set_defaults(func=_cmd_tune_thresholds)

    p = sub.add_parser("eval", help="evaluate a checkpoint on test acts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True, help="test acts (JSONL)")
    p.add_argument("--report", default=None, help="write metrics JSON here")
    p.add_argument("--allow-unknown", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="run a comparison system")
    p.add_argument("--kind", required=True,
                   choices=["random", "majority", "probability", "cnn",
                            "attr-random", "imgshuffle"])
    p.add_argument("--test", required=True, help="test acts (JSONL)")
    p.add_argument("--train", default=None,
                   help="training acts (probability, imgshuffle)")
    p.add_argument("--config", default=None,
                   help="key-value file (cnn vocabulary, imgshuffle world)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=5,
                   help="label-space size for random/probability")
    p.add_argument("--p-true", type=float, default=1.0,
                   help="synthetic labeler accuracy (cnn)")
    p.add_argument("--shuffle-seed", type=int, default=0,
                   help="image permutation seed (imgshuffle)")
    p.add_argument("--report", default=None, help="write metrics JSON here")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("gradcheck",
                       help="verify analytic gradients against finite differences")
    p.add_argument("--model", choices=["pop", "pipeline", "all"], default="all")
    p.add_argument("--trials", type=int, default=None,
                   help="trials per model (defaults: 20 pointing, 10 pipeline)")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=20260815)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("stats", help="dataset combination-frequency report")
    p.add_argument("--train", required=True, help="acts (JSONL)")
    p.add_argument("--test", default=None,
                   help="second split for overlap percentages")
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return EXIT_OK
        return code if isinstance(code, int) else EXIT_USAGE
    if getattr(args, "func", None) is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PopRefError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main_entry() -> None:
    sys.exit(main())

"""Exact save/load of trained parameters in a self-describing JSON container.

One format serves every model kind; records are tagged so loaders can
dispatch.  Arrays are stored as nested lists of Python floats: JSON emits
each float via its shortest round-tripping decimal representation, so a
save/load cycle reproduces every entry bit for bit.  The container also
carries whatever context is needed to re-run evaluation from the file alone
(world configuration, encoding mode, tuned thresholds).
"""

import json

import numpy as np

from .errors import ParseError
from .pipeline_model import PipelineConfig, PipelineParams, Thresholds
from .pop_model import PopConfig, PopParams

POP_KINDS = ("pop", "trpop")
ALL_KINDS = POP_KINDS + ("pipeline",)


def _arrays_to_lists(arrays: dict[str, np.ndarray]) -> dict[str, list]:
    return {name: arr.tolist() for name, arr in arrays.items()}


def pop_record(params: PopParams, kind: str = "pop", extra: dict | None = None) -> dict:
    if kind not in POP_KINDS:
        raise ParseError(f"kind {kind!r} is not a pointing-network kind")
    return {
        "kind": kind,
        "config": params.config.to_dict(),
        "arrays": _arrays_to_lists(params.named_arrays()),
        "extra": extra or {},
    }


def pipeline_record(
    params: PipelineParams,
    thresholds: Thresholds | None = None,
    extra: dict | None = None,
) -> dict:
    record = {
        "kind": "pipeline",
        "config": params.config.to_dict(),
        "arrays": _arrays_to_lists(params.named_arrays()),
        "extra": extra or {},
    }
    if thresholds is not None:
        record["thresholds"] = thresholds.to_dict()
    return record


def save_checkpoint(record: dict, path) -> None:
    if record.get("kind") not in ALL_KINDS:
        raise ParseError(f"checkpoint kind must be one of {ALL_KINDS}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            record = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid checkpoint JSON: {exc.msg}") from None
    if not isinstance(record, dict) or record.get("kind") not in ALL_KINDS:
        raise ParseError(
            f"checkpoint must be an object tagged with kind in {ALL_KINDS}"
        )
    for key in ("config", "arrays"):
        if key not in record:
            raise ParseError(f"checkpoint missing {key!r}")
    return record


def _array_from(record: dict, name: str) -> np.ndarray:
    if name not in record["arrays"]:
        raise ParseError(f"checkpoint missing array {name!r}")
    return np.array(record["arrays"][name], dtype=np.float64)


def restore_pop(record: dict) -> PopParams:
    if record["kind"] not in POP_KINDS:
        raise ParseError(f"expected a pointing-network checkpoint, got {record['kind']!r}")
    config = PopConfig.from_dict(record["config"])
    params = PopParams(
        config=config,
        entity_map=_array_from(record, "entity_map"),
        query_map=_array_from(record, "query_map"),
        sensor_in=_array_from(record, "sensor_in"),
        sensor_out=_array_from(record, "sensor_out"),
    )
    if config.use_bias:
        params.entity_bias = _array_from(record, "entity_bias")
        params.query_bias = _array_from(record, "query_bias")
        params.sensor_in_bias = _array_from(record, "sensor_in_bias")
        params.sensor_out_bias = _array_from(record, "sensor_out_bias")
    params.validate()
    return params


def restore_pipeline(record: dict) -> tuple[PipelineParams, Thresholds | None]:
    if record["kind"] != "pipeline":
        raise ParseError(f"expected a pipeline checkpoint, got {record['kind']!r}")
    params = PipelineParams(
        config=PipelineConfig.from_dict(record["config"]),
        query_map=_array_from(record, "query_map"),
        object_map=_array_from(record, "object_map"),
    )
    params.validate()
    thresholds = None
    if "thresholds" in record:
        thresholds = Thresholds.from_dict(record["thresholds"])
        thresholds.validate()
    return params, thresholds

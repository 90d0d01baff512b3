"""Deterministic binary checkpoints for trained models.

Layout: 8-byte magic, little-endian uint32 header length, a sorted-keys JSON
header (model kind, metadata, array descriptors), then the raw float64
little-endian array payloads in descriptor order. Same model in, same bytes
out — reruns are byte-comparable.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .dense import DenseModel, NetworkSpec, Parameters
from .htm import BucketEncoder, HtmPipeline, SpatialPooler, SpatialPoolerConfig
from .lstm import LstmCellParams, LstmConfig, LstmModel

MAGIC = b"WBCP0001"


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, kind: str, meta: dict,
                    arrays: dict[str, np.ndarray]) -> None:
    descriptors = []
    payloads = []
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype=np.float64)
        descriptors.append({"name": name, "shape": list(a.shape)})
        payloads.append(a.tobytes())
    header = json.dumps({"kind": kind, "meta": meta, "arrays": descriptors},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack_from("<I", raw, len(MAGIC))
    start = len(MAGIC) + 4
    if len(raw) < start + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    offset = start + hlen
    arrays = {}
    for desc in header["arrays"]:
        shape = tuple(desc["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        if len(raw) < offset + nbytes:
            raise CheckpointError(f"{path}: truncated payload for {desc['name']}")
        arrays[desc["name"]] = np.frombuffer(
            raw, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after payload")
    return header["kind"], header["meta"], arrays


def save_dense_model(path: str | Path, model: DenseModel) -> None:
    spec = model.spec
    meta = {"layer_sizes": list(spec.layer_sizes),
            "activations": list(spec.activations),
            "use_bias": spec.use_bias}
    arrays = {}
    for k, (w, b) in enumerate(zip(model.params.weights, model.params.biases)):
        arrays[f"w{k}"] = w
        arrays[f"b{k}"] = b
    save_checkpoint(path, "dense", meta, arrays)


def save_lstm_model(path: str | Path, model: LstmModel) -> None:
    cfg = model.config
    meta = {"input_dim": cfg.input_dim, "hidden_dim": cfg.hidden_dim,
            "time_steps": cfg.time_steps, "mode": cfg.mode}
    save_checkpoint(path, "lstm", meta, {
        "wx": model.cell.wx, "wh": model.cell.wh, "b": model.cell.b,
        "w_out": model.w_out, "b_out": np.array([model.b_out]),
    })


def save_htm_pipeline(path: str | Path, pipeline: HtmPipeline) -> None:
    sp = pipeline.pooler.config
    meta = {"sp": {"num_columns": sp.num_columns,
                   "active_columns": sp.active_columns,
                   "potential_fraction": sp.potential_fraction,
                   "permanence_threshold": sp.permanence_threshold,
                   "permanence_increment": sp.permanence_increment,
                   "permanence_decrement": sp.permanence_decrement,
                   "seed": sp.seed},
            "bins": pipeline.encoder.bins,
            "classifier": {"layer_sizes": list(pipeline.classifier_spec.layer_sizes),
                           "activations": list(pipeline.classifier_spec.activations),
                           "use_bias": pipeline.classifier_spec.use_bias}}
    arrays = {"enc_lo": pipeline.encoder.lo, "enc_hi": pipeline.encoder.hi,
              "potential": pipeline.pooler.potential.astype(np.float64),
              "permanences": pipeline.pooler.permanences}
    for k, (w, b) in enumerate(zip(pipeline.classifier.weights,
                                   pipeline.classifier.biases)):
        arrays[f"cls_w{k}"] = w
        arrays[f"cls_b{k}"] = b
    save_checkpoint(path, "htm", meta, arrays)


def _dense_from(meta: dict, arrays: dict) -> DenseModel:
    spec = NetworkSpec(tuple(meta["layer_sizes"]), tuple(meta["activations"]),
                       meta["use_bias"])
    weights = tuple(arrays[f"w{k}"] for k in range(spec.num_layers))
    biases = tuple(arrays[f"b{k}"] for k in range(spec.num_layers))
    return DenseModel(spec, Parameters(weights, biases))


def _lstm_from(meta: dict, arrays: dict) -> LstmModel:
    cfg = LstmConfig(meta["input_dim"], meta["hidden_dim"],
                     meta["time_steps"], meta["mode"])
    cell = LstmCellParams(arrays["wx"], arrays["wh"], arrays["b"])
    return LstmModel(cfg, cell, arrays["w_out"], float(arrays["b_out"][0]))


def _htm_from(meta: dict, arrays: dict) -> HtmPipeline:
    encoder = BucketEncoder(arrays["enc_lo"], arrays["enc_hi"], meta["bins"])
    pooler = SpatialPooler.__new__(SpatialPooler)
    pooler.config = SpatialPoolerConfig(**meta["sp"])
    pooler.input_width = arrays["permanences"].shape[1]
    pooler.potential = arrays["potential"] != 0.0
    pooler.permanences = arrays["permanences"]
    cls = meta["classifier"]
    spec = NetworkSpec(tuple(cls["layer_sizes"]), tuple(cls["activations"]),
                       cls["use_bias"])
    weights = tuple(arrays[f"cls_w{k}"] for k in range(spec.num_layers))
    biases = tuple(arrays[f"cls_b{k}"] for k in range(spec.num_layers))
    return HtmPipeline(encoder, pooler, spec, Parameters(weights, biases))


def load_model(path: str | Path):
    """Returns (kind, model): DenseModel, LstmModel, or HtmPipeline."""
    kind, meta, arrays = load_checkpoint(path)
    if kind == "dense":
        return kind, _dense_from(meta, arrays)
    if kind == "lstm":
        return kind, _lstm_from(meta, arrays)
    if kind == "htm":
        return kind, _htm_from(meta, arrays)
    raise CheckpointError(f"{path}: unknown checkpoint kind {kind!r}")

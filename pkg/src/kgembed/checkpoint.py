"""Checkpoint directories: run state that round-trips bitwise.

Layout: a ``meta`` text file plus one binary file per parameter table and
per optimizer slot. Binary format: 16-byte header (magic ``KGT1``,
little-endian uint32 rows, cols, reserved zero) followed by row-major
little-endian float32 data; arrays with more than two axes store
rows = shape[0], cols = prod(rest), with the true shape kept in meta.
Every file's sha256 is recorded in meta and checked on load, so a
corrupted directory fails loudly instead of resuming from garbage.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields

import numpy as np

from .config import TrainConfig, config_hash, parse_scalar, serialize_value
from .gnn import RGCNLayerParams, RGCNModel
from .models import ModelParams
from .optim import OptimizerState, init_optimizer

MAGIC = b"KGT1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, inconsistent, or corrupted checkpoint directory."""


@dataclass
class Checkpoint:
    """A full training snapshot: parameters, optimizer state, progress."""

    params: ModelParams | RGCNModel
    opt_state: OptimizerState
    epoch: int
    best_metric: float
    config: TrainConfig
    history: list[tuple[int, float]]

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)


def _write_table(path: str, arr: np.ndarray) -> str:
    rows = arr.shape[0] if arr.ndim else 1
    cols = int(np.prod(arr.shape[1:], dtype=np.int64)) if arr.ndim > 1 else 1
    header = MAGIC + np.array([rows, cols, 0], dtype="<u4").tobytes()
    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    blob = header + data
    with open(path, "wb") as fh:
        fh.write(blob)
    return hashlib.sha256(blob).hexdigest()


def _read_table(path: str, shape: tuple[int, ...], want_sha: str) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise CheckpointError(f"cannot read table file: {e}") from None
    if hashlib.sha256(blob).hexdigest() != want_sha:
        raise CheckpointError(f"checksum mismatch for {os.path.basename(path)}")
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError(f"bad table header in {os.path.basename(path)}")
    rows, cols, _ = np.frombuffer(blob[4:16], dtype="<u4")
    data = np.frombuffer(blob[16:], dtype="<f4")
    if data.size != rows * cols or int(np.prod(shape, dtype=np.int64)) != data.size:
        raise CheckpointError(f"table size mismatch in {os.path.basename(path)}")
    return data.reshape(shape).astype(np.float32)


def _param_tables(params: ModelParams | RGCNModel) -> dict[str, np.ndarray]:
    return params.tables if isinstance(params, ModelParams) else params.tables()


def save_checkpoint(ckpt: Checkpoint, directory: str) -> None:
    """Write the checkpoint; the directory is created if needed.

    On any write failure the files written so far are removed before the
    error propagates, so a directory never holds a partial checkpoint.
    """
    os.makedirs(directory, exist_ok=True)
    params = ckpt.params
    lines = [
        f"format: {FORMAT_VERSION}",
        f"epoch: {ckpt.epoch}",
        f"best_metric: {serialize_value(float(ckpt.best_metric))}",
        f"config_hash: {ckpt.config_hash}",
        f"params_version: {_version(params)}",
        f"history: {';'.join(f'{e},{serialize_value(float(m))}' for e, m in ckpt.history)}",
        f"vocab.n_entities: {params.n_entities}",
        f"vocab.n_relations: {params.n_relations}",
        f"vocab.dataset: {ckpt.config.dataset}",
    ]
    for key, value in ckpt.config.to_dict().items():
        lines.append(f"config.{key}: {serialize_value(value)}")
    if isinstance(params, RGCNModel):
        lines.append(f"rgcn.activations: {','.join(l.activation for l in params.layers)}")

    written: list[str] = []
    try:
        for name, arr in _param_tables(params).items():
            path = os.path.join(directory, f"param__{name}.bin")
            written.append(path)
            sha = _write_table(path, arr)
            lines.append(f"table.{name}: {_shape_str(arr.shape)} {sha}")
        lines.append(f"optimizer: {ckpt.opt_state.kind}")
        for tname, slots in ckpt.opt_state.slots.items():
            for sname, arr in slots.items():
                path = os.path.join(directory, f"opt__{tname}__{sname}.bin")
                written.append(path)
                sha = _write_table(path, arr)
                lines.append(f"opt.{tname}.{sname}: {_shape_str(arr.shape)} {sha}")
        meta = os.path.join(directory, "meta")
        written.append(meta)
        with open(meta, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except Exception:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise


def load_checkpoint(directory: str) -> Checkpoint:
    """Read a checkpoint directory, verifying checksums and shapes."""
    meta_path = os.path.join(directory, "meta")
    if not os.path.exists(meta_path):
        raise CheckpointError(f"no checkpoint at {directory} (missing meta)")
    meta: dict[str, str] = {}
    with open(meta_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if ": " not in line:
                raise CheckpointError(f"meta:{lineno}: malformed line")
            key, _, value = line.partition(": ")
            meta[key] = value
    for req in ("format", "epoch", "best_metric", "config_hash", "optimizer"):
        if req not in meta:
            raise CheckpointError(f"meta missing key {req!r}")
    if meta["format"] != str(FORMAT_VERSION):
        raise CheckpointError(f"unsupported checkpoint format {meta['format']!r}")

    config_kv = {}
    for key, value in meta.items():
        if key.startswith("config."):
            config_kv[key[len("config."):]] = parse_scalar(value)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(config_kv) - known
    if unknown:
        raise CheckpointError(f"meta has unknown config key {sorted(unknown)[0]!r}")
    config = TrainConfig(**config_kv)
    if config_hash(config) != meta["config_hash"]:
        raise CheckpointError("config hash does not match the stored config")

    tables: dict[str, np.ndarray] = {}
    for key, value in meta.items():
        if key.startswith("table."):
            name = key[len("table."):]
            shape, sha = _parse_shape_sha(value)
            tables[name] = _read_table(
                os.path.join(directory, f"param__{name}.bin"), shape, sha
            )
    if not tables:
        raise CheckpointError("checkpoint has no parameter tables")

    params: ModelParams | RGCNModel
    if config.model == "rgcn":
        acts = meta.get("rgcn.activations", "").split(",")
        layers = []
        for i in range(config.n_layers):
            try:
                layers.append(
                    RGCNLayerParams(
                        basis=tables[f"layer{i}.basis"],
                        coeff=tables[f"layer{i}.coeff"],
                        self_weight=tables[f"layer{i}.self"],
                        activation=acts[i],
                    )
                )
            except (KeyError, IndexError):
                raise CheckpointError(f"missing rgcn layer {i} tables") from None
        params = RGCNModel(
            entity_emb=tables["entity_emb"],
            layers=layers,
            rel_emb=tables["rel_emb"],
            version=int(meta.get("params_version", 0)),
        )
    else:
        params = ModelParams(
            model=config.model,
            dim=config.dim,
            tables=tables,
            transe_p=config.transe_p,
            version=int(meta.get("params_version", 0)),
        )

    for key, have in (("vocab.n_entities", params.n_entities), ("vocab.n_relations", params.n_relations)):
        if key in meta and int(meta[key]) != have:
            raise CheckpointError(f"{key} is {meta[key]} but tables imply {have}")

    opt = init_optimizer(
        meta["optimizer"],
        _param_tables(params),
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )
    provided: set[tuple[str, str]] = set()
    for key, value in meta.items():
        if key.startswith("opt."):
            tname, _, sname = key[len("opt."):].rpartition(".")
            shape, sha = _parse_shape_sha(value)
            if tname not in opt.slots or sname not in opt.slots[tname]:
                raise CheckpointError(f"unexpected optimizer slot {key!r}")
            opt.slots[tname][sname] = _read_table(
                os.path.join(directory, f"opt__{tname}__{sname}.bin"), shape, sha
            )
            provided.add((tname, sname))
    expected = {(t, s) for t, slots in opt.slots.items() for s in slots}
    if provided != expected:
        missing = sorted(expected - provided)
        raise CheckpointError(f"optimizer state incomplete, missing {missing[:3]!r}")

    history = []
    for item in meta.get("history", "").split(";"):
        if item:
            e, _, m = item.partition(",")
            history.append((int(e), float(m)))
    return Checkpoint(
        params=params,
        opt_state=opt,
        epoch=int(meta["epoch"]),
        best_metric=float(meta["best_metric"]),
        config=config,
        history=history,
    )


def _version(params) -> int:
    return params.version


def _shape_str(shape: tuple[int, ...]) -> str:
    return "x".join(str(s) for s in shape)


def _parse_shape_sha(value: str) -> tuple[tuple[int, ...], str]:
    try:
        shape_s, sha = value.split(" ")
        shape = tuple(int(x) for x in shape_s.split("x"))
    except ValueError:
        raise CheckpointError(f"malformed table entry: {value!r}") from None
    return shape, sha

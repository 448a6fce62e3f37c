"""Versioned binary model files.

Layout: magic, uint32 format version, family tag, config JSON, then named
arrays (name, dtype, shape, raw little-endian bytes).  No timestamps are
written, so identical models produce identical bytes.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .config import TrainConfig
from .forest import ForestModel
from .mlp import MlpModel
from .tree import Tree

MAGIC = b"DORCMDL\x00"
VERSION = 1


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    out = _pack_str(name) + _pack_str(arr.dtype.str) + struct.pack("<I", arr.ndim)
    out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return out + arr.tobytes()


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.off = raw, 0

    def take(self, n: int) -> bytes:
        chunk = self.raw[self.off:self.off + n]
        if len(chunk) != n:
            raise ValueError("truncated model file")
        self.off += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def array(self) -> tuple[str, np.ndarray]:
        name, dtype = self.string(), np.dtype(self.string())
        ndim = self.u32()
        shape = struct.unpack(f"<{ndim}Q", self.take(8 * ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(self.take(count * dtype.itemsize), dtype=dtype).reshape(shape)
        return name, data.copy()


def _model_arrays(model) -> tuple[str, dict, dict[str, np.ndarray]]:
    if isinstance(model, Tree):
        return "tree", {"n_features": model.n_features}, model.arrays()
    if isinstance(model, ForestModel):
        arrays = {}
        for i, tree in enumerate(model.trees):
            arrays.update({f"tree{i}.{k}": v for k, v in tree.arrays().items()})
        meta = {"n_trees": model.n_trees, "variant": model.variant, "n_features": model.n_features,
                "features_per_split": model.features_per_split, "bootstrap": model.bootstrap}
        return "forest", meta, arrays
    if isinstance(model, MlpModel):
        arrays = {}
        for i, (W, b) in enumerate(zip(model.weights, model.biases)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
        return "mlp", {"n_layers": len(model.weights)}, arrays
    raise TypeError(f"cannot serialize {type(model).__name__}")


def dumps_model(model, cfg: TrainConfig | None = None) -> bytes:
    tag, meta, arrays = _model_arrays(model)
    header = json.dumps({"meta": meta, "config": cfg.to_json() if cfg else None}, sort_keys=True)
    out = [MAGIC, struct.pack("<I", VERSION), _pack_str(tag), _pack_str(header), struct.pack("<I", len(arrays))]
    out += [_pack_array(name, arr) for name, arr in arrays.items()]
    return b"".join(out)


def loads_model(raw: bytes):
    """Return ``(model, TrainConfig or None)``."""
    if raw[:8] != MAGIC:
        raise ValueError("not a model file")
    reader = _Reader(raw)
    reader.take(8)
    version = reader.u32()
    if version != VERSION:
        raise ValueError(f"unsupported model file version {version}")
    tag = reader.string()
    header = json.loads(reader.string())
    arrays = dict(reader.array() for _ in range(reader.u32()))
    meta = header["meta"]
    cfg = TrainConfig.from_json(header["config"]) if header["config"] else None
    if tag == "tree":
        return _tree(arrays, "", meta["n_features"]), cfg
    if tag == "forest":
        trees = [_tree(arrays, f"tree{i}.", meta["n_features"]) for i in range(meta["n_trees"])]
        return ForestModel(trees, meta["variant"], meta["features_per_split"], meta["bootstrap"]), cfg
    if tag == "mlp":
        n = meta["n_layers"]
        return MlpModel([arrays[f"W{i}"] for i in range(n)], [arrays[f"b{i}"] for i in range(n)]), cfg
    raise ValueError(f"unknown model family tag {tag!r}")


def _tree(arrays, prefix, n_features) -> Tree:
    get = lambda k: arrays[prefix + k]  # noqa: E731
    return Tree(get("feature"), get("threshold"), get("left"), get("right"), get("value"),
                get("n_samples"), n_features)


def save_model(model, path: str | os.PathLike, cfg: TrainConfig | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(model, cfg))


def load_model(path: str | os.PathLike):
    with open(path, "rb") as fh:
        return loads_model(fh.read())

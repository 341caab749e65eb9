"""Binary model checkpoints.

Layout::

    8 bytes   magic b"MIGNCKPT"
    4 bytes   format version, uint32 little-endian
    8 bytes   header length N, uint64 little-endian
    N bytes   UTF-8 JSON header (sorted keys): config, normalization,
              metadata and the tensor table [{name, shape, offset}]
    ...       tensors as little-endian float64, C order, in declared order

Offsets are relative to the first tensor byte. Writing the same model twice
yields identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import MignModel, ModelConfig, param_shapes

MAGIC = b"MIGNCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(model: MignModel, metadata: dict | None = None) -> bytes:
    tensors, offset, blobs = [], 0, []
    for name in param_shapes(model.config):
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.hyperparams(),
        "norm_mean": model.norm_mean,
        "norm_std": model.norm_std,
        "metadata": metadata or {},
        "tensors": tensors,
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(raw)) + raw + b"".join(blobs)


def loads(data: bytes) -> tuple[MignModel, dict]:
    if len(data) < 20 or data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(data[20:20 + hlen])
    body = memoryview(data)[20 + hlen:]
    config = ModelConfig(**header["config"])
    params = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        if t["offset"] + 8 * count > len(body):
            raise CheckpointError(f"truncated checkpoint: tensor {t['name']} runs past end of file")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=t["offset"])
        params[t["name"]] = arr.astype(np.float64).reshape(t["shape"])
    model = MignModel(config, params, header["norm_mean"], header["norm_std"])
    return model, header["metadata"]


def save(model: MignModel, path, metadata: dict | None = None) -> None:
    Path(path).write_bytes(dumps(model, metadata))


def load(path) -> tuple[MignModel, dict]:
    return loads(Path(path).read_bytes())

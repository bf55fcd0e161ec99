"""Model checkpoint: versioned binary header + config block + raw tensors.

Layout: magic ``PWCK``, u32 version, u32 header length, then a JSON header
(model config plus a tensor manifest of name/shape/dtype in declaration
order), then each tensor's little-endian IEEE-754 bytes in that order.
The vocabulary travels as a sidecar of ``token<TAB>id`` lines.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .network import DualBranchModel
from .vocab import Vocabulary

MAGIC = b"PWCK"
VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(model: DualBranchModel, path) -> None:
    header = {
        "config": json.loads(model.config_json()),
        "tensors": [
            {"name": n, "shape": list(p.shape), "dtype": str(p.dtype)}
            for n, p in model.params.items()
        ],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for p in model.params.values():
            f.write(np.ascontiguousarray(p, dtype=_DTYPES[str(p.dtype)]).tobytes())


def load_checkpoint(path) -> DualBranchModel:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    config = DualBranchModel.config_from_json(json.dumps(header["config"]))
    model = DualBranchModel(config, seed=0)

    offset = 12 + hlen
    for entry in header["tensors"]:
        name, shape, dtype = entry["name"], tuple(entry["shape"]), entry["dtype"]
        if name not in model.params or model.params[name].shape != shape:
            raise CheckpointError(f"tensor {name!r} does not match the config")
        nbytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
        arr = np.frombuffer(data[offset:offset + nbytes], dtype=_DTYPES[dtype])
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"tensor {name!r} truncated")
        model.params[name] = arr.reshape(shape).astype(dtype).copy()
        offset += nbytes
    if offset != len(data):
        raise CheckpointError("trailing bytes after final tensor")
    for p in model.params.values():
        if not np.isfinite(p).all():
            raise CheckpointError("checkpoint contains non-finite values")
    return model


def save_vocab(vocab: Vocabulary, path) -> None:
    lines = sorted(vocab.token_to_id.items(), key=lambda kv: kv[1])
    Path(path).write_text(
        "".join(f"{tok}\t{i}\n" for tok, i in lines), encoding="utf-8"
    )


def load_vocab(path) -> Vocabulary:
    mapping = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        try:
            tok, i = line.split("\t")
            mapping[tok] = int(i)
        except ValueError as exc:
            raise CheckpointError(f"vocab line {ln} malformed: {line!r}") from exc
    return Vocabulary(mapping)

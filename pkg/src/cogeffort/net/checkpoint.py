"""Flat binary checkpoint format.

Layout (all integers little-endian):

    magic   b"CGEF"
    u32     format version (1)
    u32     header length, then UTF-8 JSON header:
            {"architecture", "config": {...}, "best_epoch", "tensors": [names]}
    per tensor, in header order (parameters sorted, then state entries
    prefixed "state:"):
            u16 name length + name bytes
            u8  ndim, then ndim * u64 dims
            float64 little-endian data, C order

The byte stream is a pure function of (config, parameters, state), which the
pipeline's determinism guarantees rely on.
"""

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .model import ModelConfig
from .training import TrainedModel

MAGIC = b"CGEF"
FORMAT_VERSION = 1


def save_checkpoint(path, trained: TrainedModel) -> None:
    path = Path(path)
    names = [*sorted(trained.params), *(f"state:{k}" for k in sorted(trained.state))]
    header = {
        "architecture": trained.config.architecture,
        "config": dataclasses.asdict(trained.config),
        "best_epoch": trained.best_epoch,
        "tensors": names,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(blob)), blob]
    for name in names:
        arr = (trained.state[name[len("state:"):]] if name.startswith("state:")
               else trained.params[name])
        arr = np.ascontiguousarray(arr, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path) -> TrainedModel:
    """Rebuild a TrainedModel (history is not serialized; see history.csv)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    offset += header_len

    params: dict[str, np.ndarray] = {}
    state: dict[str, np.ndarray] = {}
    for expected in header["tensors"]:
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        if name != expected:
            raise DataError(f"{path}: tensor order mismatch ({name!r} != {expected!r})")
        (ndim,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}Q", raw, offset)
        offset += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += 8 * count
        if name.startswith("state:"):
            state[name[len("state:"):]] = arr
        else:
            params[name] = arr

    config = ModelConfig(**header["config"])
    return TrainedModel(config=config, params=params, state=state,
                        history=[], best_epoch=int(header["best_epoch"]))

"""Self-describing binary checkpoint: JSON header + named float64 tensors.

Layout: 8-byte little-endian header length, UTF-8 JSON header (configs,
iteration, rng state, tensor index), then the raw little-endian float64 blob.
Save -> load reproduces forward outputs bit-identically.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .autodiff import Tensor
from .network import ModelConfig, PoseRefiner
from .training import TrainConfig

MAGIC = "placelab-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, refiner: PoseRefiner,
                    train_config: TrainConfig | None = None,
                    iteration: int = 0, rng_state: dict | None = None):
    index = []
    offset = 0
    blobs = []
    for name, tensor in refiner.params.items():
        arr = np.ascontiguousarray(tensor.data, dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape),
                      "offset": offset, "count": int(arr.size)})
        blobs.append(arr.tobytes())
        offset += arr.size
    header = {
        "magic": MAGIC, "version": VERSION,
        "model_config": refiner.config.to_json_dict(),
        "train_config": train_config.to_json_dict() if train_config else None,
        "iteration": iteration,
        "rng_state": rng_state,
        "tensors": index,
    }
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(raw_header)))
        fh.write(raw_header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[PoseRefiner, dict]:
    with open(path, "rb") as fh:
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("magic") != MAGIC or header.get("version") != VERSION:
            raise CheckpointError(f"not a {MAGIC} v{VERSION} file: {path}")
        blob = fh.read()
    config = ModelConfig.from_json_dict(header["model_config"])
    flat = np.frombuffer(blob, dtype="<f8")
    params: dict[str, Tensor] = {}
    for entry in header["tensors"]:
        chunk = flat[entry["offset"]:entry["offset"] + entry["count"]]
        if chunk.size != entry["count"]:
            raise CheckpointError(f"truncated tensor {entry['name']!r}")
        params[entry["name"]] = Tensor(
            chunk.reshape(entry["shape"]).astype(np.float64),
            requires_grad=True)
    refiner = PoseRefiner(config=config, params=params)
    extras = {"iteration": header["iteration"],
              "rng_state": header["rng_state"],
              "train_config": (TrainConfig.from_json_dict(header["train_config"])
                               if header["train_config"] else None)}
    return refiner, extras

"""Model checkpoint serialization.

File layout (little-endian): magic "CCML", version u32, header length u32,
UTF-8 JSON header, then raw float32 tensor data in manifest order. The
header carries the model config, the ordered tag vocabulary, provenance,
and the tensor manifest (name/shape/offset, offsets in bytes from the start
of the data section).

The provenance block includes a content hash over the config, vocabulary,
and tensor bytes, so identical training runs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .models import Model, ModelConfig, build_model

MAGIC = b"CCML"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    vocabulary: tuple[str, ...]
    provenance: dict
    tensors: dict[str, np.ndarray] = field(repr=False)

    @property
    def content_hash(self) -> str:
        return self.provenance.get("content_hash", "")


def _content_hash(config: ModelConfig, vocabulary, tensors: dict[str, np.ndarray]) -> str:
    h = hashlib.blake2b(digest_size=20)
    h.update(json.dumps(config.to_dict(), sort_keys=True).encode())
    h.update(json.dumps(list(vocabulary)).encode())
    for name, arr in tensors.items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()


def save_checkpoint(model: Model, vocabulary, provenance: dict, path) -> str:
    """Write the model's parameters and buffers; returns the content hash."""
    if len(vocabulary) != model.config.n_tags:
        raise CheckpointError(
            f"vocabulary has {len(vocabulary)} tags, model expects {model.config.n_tags}")
    tensors = model.named_arrays()
    content_hash = _content_hash(model.config, vocabulary, tensors)
    manifest = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "config": model.config.to_dict(),
        "tag_vocabulary": list(vocabulary),
        "provenance": {**provenance, "content_hash": content_hash},
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)
    return content_hash


def load_checkpoint(path) -> ModelCheckpoint:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{path}: file shorter than the fixed prefix")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if len(blob) < _PREFIX.size + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[_PREFIX.size:_PREFIX.size + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unparseable header ({exc})") from exc
    for key in ("config", "tag_vocabulary", "provenance", "tensors"):
        if key not in header:
            raise CheckpointError(f"{path}: header missing field '{key}'")
    data = blob[_PREFIX.size + header_len:]
    tensors: dict[str, np.ndarray] = {}
    for item in header["tensors"]:
        name, shape, offset = item["name"], tuple(item["shape"]), item["offset"]
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(data):
            raise CheckpointError(f"{path}: tensor '{name}' runs past end of file")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=count,
                                      offset=offset).reshape(shape).copy()
    config = ModelConfig.from_dict(header["config"])
    return ModelCheckpoint(config=config, vocabulary=tuple(header["tag_vocabulary"]),
                           provenance=header["provenance"], tensors=tensors)


def instantiate(ckpt: ModelCheckpoint, seed: int = 0) -> Model:
    """Build the architecture from the stored config and load its weights."""
    model = build_model(ckpt.config, seed=seed)
    expected = set(model.named_arrays())
    stored = set(ckpt.tensors)
    if expected != stored:
        missing = sorted(expected - stored)
        extra = sorted(stored - expected)
        raise CheckpointError(
            f"tensor manifest mismatch: missing {missing or 'none'}, unexpected {extra or 'none'}")
    model.load_arrays(ckpt.tensors)
    return model

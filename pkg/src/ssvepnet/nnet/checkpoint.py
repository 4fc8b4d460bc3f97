"""Model checkpoints: magic, JSON header, little-endian float32 blocks.

Layout::

    b"SSVEPNN1" | uint64 LE header length | UTF-8 JSON header | float32 LE payload

The header carries the model config, the ordered block names and shapes,
any caller metadata and a SHA-256 digest of the payload. Blocks are the
parameters in declaration order followed by the batch-norm running
statistics.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .model import BUFFER_ORDER, PARAM_ORDER, CompactCNN, ModelConfig

MAGIC = b"SSVEPNN1"
VERSION = 1


class CheckpointError(ValueError):
    """The file is not a readable model checkpoint."""


def _blocks(model: CompactCNN):
    for name in PARAM_ORDER:
        yield name, model.params[name]
    for name in BUFFER_ORDER:
        yield name, model.buffers[name]


def checkpoint_bytes(model: CompactCNN, metadata: dict | None = None) -> bytes:
    blocks = list(_blocks(model))
    payload = b"".join(np.ascontiguousarray(a, "<f4").tobytes() for _, a in blocks)
    header = {
        "format": "SSVEPNN", "version": VERSION,
        "config": model.config.to_json(),
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
        "metadata": metadata or {},
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<Q", len(hb)) + hb + payload


def save_checkpoint(model: CompactCNN, path, metadata: dict | None = None) -> str:
    """Write atomically; returns the payload SHA-256."""
    data = checkpoint_bytes(model, metadata)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return hashlib.sha256(data[-_payload_len(data):]).hexdigest()


def _payload_len(data: bytes) -> int:
    (hlen,) = struct.unpack("<Q", data[8:16])
    return len(data) - 16 - hlen


def load_checkpoint(path) -> tuple[CompactCNN, dict]:
    """Returns ``(model, metadata)``. The model's dtype is float32 unless the header says otherwise."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:8]!r}")
    if len(data) < 16:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if len(data) < 16 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[16:16 + hlen])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    payload = data[16 + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    config = ModelConfig(**header["config"])
    arrays, offset = {}, 0
    for block in header["blocks"]:
        count = int(np.prod(block["shape"]))
        chunk = payload[offset:offset + 4 * count]
        if len(chunk) != 4 * count:
            raise CheckpointError(f"{path}: payload too short for block {block['name']}")
        arrays[block["name"]] = np.frombuffer(chunk, "<f4").reshape(block["shape"])
        offset += 4 * count
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing payload bytes")
    missing = set(PARAM_ORDER + BUFFER_ORDER) - arrays.keys()
    if missing:
        raise CheckpointError(f"{path}: missing blocks {sorted(missing)}")
    model = CompactCNN(config, {k: arrays[k] for k in PARAM_ORDER},
                       {k: arrays[k] for k in BUFFER_ORDER})
    return model, header["metadata"]

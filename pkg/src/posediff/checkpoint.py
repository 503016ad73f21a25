"""Versioned binary checkpoint files shared by every trained model.

Layout: 8-byte magic "PDLCKPT1", a little-endian uint32 with the length
of a JSON manifest, the manifest itself (tensor names, shapes, byte
offsets, plus config hash and training metadata), then the raw tensor
data as little-endian float32 in manifest order.

Writes are byte-deterministic: the manifest uses sorted keys and no
timestamps, so identical training runs produce identical files.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"PDLCKPT1"


class CheckpointError(Exception):
    pass


def save_checkpoint(path, tensors, config_hash="", meta=None):
    """Write named float tensors plus metadata.

    tensors: iterable of (name, ndarray); order is preserved.
    """
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {
        "version": 1,
        "config_hash": config_hash,
        "meta": meta or {},
        "tensors": entries,
    }
    payload = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(len(payload)).newbyteorder("<").tobytes())
        f.write(payload)
        for b in blobs:
            f.write(b)


def load_checkpoint(path):
    """Read a checkpoint; returns (dict name->float32 array, manifest)."""
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise CheckpointError(f"{path}: bad magic")
        (n,) = np.frombuffer(f.read(4), dtype="<u4")
        manifest = json.loads(f.read(int(n)).decode("utf-8"))
        raw = f.read()
    out = {}
    for e in manifest["tensors"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        start = e["offset"]
        arr = np.frombuffer(raw, dtype="<f4", count=size, offset=start)
        out[e["name"]] = arr.reshape(e["shape"]).copy()
    return out, manifest


def save_module(path, module, config_hash="", meta=None):
    save_checkpoint(path, list(module.state_dict().items()), config_hash, meta)


def load_module(path, module, expect_hash=None):
    state, manifest = load_checkpoint(path)
    if expect_hash is not None and manifest["config_hash"] != expect_hash:
        raise CheckpointError(
            f"{path}: checkpoint config hash {manifest['config_hash']!r} "
            f"does not match expected {expect_hash!r}"
        )
    module.load_state_dict(state)
    return manifest

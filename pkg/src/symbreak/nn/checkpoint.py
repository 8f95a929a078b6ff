"""Binary checkpoints: versioned header, named float32 blocks, bit-exact."""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SBRK"
VERSION = 1


def save_checkpoint(path, config: dict, params: dict) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(cfg))
    blob += cfg
    names = sorted(params)
    blob += struct.pack("<I", len(names))
    for name in names:
        data = np.ascontiguousarray(params[name].data, dtype="<f4")
        raw = name.encode("utf-8")
        blob += struct.pack("<I", len(raw))
        blob += raw
        blob += struct.pack("<I", data.ndim)
        blob += struct.pack(f"<{data.ndim}I", *data.shape)
        blob += data.tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    if blob[:4] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    off = 4
    (version,) = take("<I")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (cfg_len,) = take("<I")
    config = json.loads(blob[off : off + cfg_len].decode("utf-8"))
    off += cfg_len
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I") if ndim else ()
        n_items = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(blob, dtype="<f4", count=n_items, offset=off).reshape(shape)
        off += n_items * 4
        params[name] = data.copy()
    return config, params

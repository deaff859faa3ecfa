"""Binary tensor container.

Layout, all integers unsigned 64-bit little-endian::

    b"CMBERT01"
    n_tensors
    per tensor: name_len, name (UTF-8), rank, dims[rank], float32 LE row-major data
    meta_len, metadata (UTF-8 JSON object)

Float32 parameters round-trip bit-exactly.
"""
import io
import json
import os
import struct

import numpy as np

from ..errors import CheckpointError

MAGIC = b"CMBERT01"
_U64 = struct.Struct("<Q")


def write_container(path, tensors, metadata=None):
    """Write ``tensors`` (name -> array) and a JSON ``metadata`` dict atomically."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_U64.pack(len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        buf.write(_U64.pack(len(raw)))
        buf.write(raw)
        buf.write(_U64.pack(arr.ndim))
        for dim in arr.shape:
            buf.write(_U64.pack(dim))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    buf.write(_U64.pack(len(meta)))
    buf.write(meta)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise EOFError
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u64(self):
        return _U64.unpack(self.take(8))[0]


def read_container(path):
    """Return ``(tensors, metadata)``. Nothing is applied anywhere on failure."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes, not a CMBERT01 container")
    r = _Reader(data)
    r.pos = 8
    try:
        count = r.u64()
    except EOFError:
        raise CheckpointError(f"{path}: truncated header") from None
    tensors = {}
    for index in range(count):
        name = f"#{index}"
        try:
            name = r.take(r.u64()).decode("utf-8")
            rank = r.u64()
            if rank > 8:
                raise CheckpointError(f"{path}: tensor {name!r} has implausible rank {rank}")
            shape = tuple(r.u64() for _ in range(rank))
            n = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape)
        except (EOFError, UnicodeDecodeError):
            raise CheckpointError(f"{path}: truncated or corrupt at tensor {name!r}") from None
        tensors[name] = arr.astype(np.float32)
    try:
        metadata = json.loads(r.take(r.u64()).decode("utf-8"))
    except (EOFError, ValueError):
        raise CheckpointError(f"{path}: truncated or corrupt metadata block") from None
    if r.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - r.pos} trailing bytes after metadata")
    return tensors, metadata


def save_params(path, params, config=None):
    meta = {"model_config": config.to_dict()} if config is not None else {}
    write_container(path, params, meta)


def load_params(path, config=None):
    """Load a parameter store, checking its census against ``config`` if given."""
    from .model import ParameterStore, expected_census

    tensors, meta = read_container(path)
    params = ParameterStore((k, v) for k, v in tensors.items() if not k.startswith("optim."))
    if config is not None:
        check_census(params, expected_census(config), path)
    return params, meta


def check_census(params, expected, path="checkpoint"):
    have = {k: tuple(v.shape) for k, v in params.items()}
    missing = [k for k in expected if k not in have]
    extra = [k for k in have if k not in expected]
    wrong = [(k, have[k], expected[k]) for k in expected if k in have and have[k] != expected[k]]
    if missing or extra or wrong:
        parts = []
        if missing:
            parts.append(f"missing {missing[:4]}")
        if extra:
            parts.append(f"unexpected {extra[:4]}")
        if wrong:
            parts.append("shape mismatch " + ", ".join(f"{k}: {a} vs {b}" for k, a, b in wrong[:4]))
        raise CheckpointError(f"{path}: incompatible with model config ({'; '.join(parts)})")

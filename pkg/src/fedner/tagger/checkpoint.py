"""Binary named-tensor checkpoints.

Layout (all integers little-endian)::

    magic   8 bytes   b"FEDNERv1"
    count   uint32    number of tensors
    then per tensor, in the order given to ``save``:
        name_len  uint32
        name      name_len bytes, UTF-8
        ndim      uint32
        shape     ndim x uint64
        data      prod(shape) x float64, little-endian, row-major (C order)

Loading then saving reproduces the file byte for byte.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FEDNERv1"


def dumps(params) -> bytes:
    out = [MAGIC, struct.pack("<I", len(params))]
    for name, tensor in params.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor, dtype="<f8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes(order="C"))
    return b"".join(out)


def loads(data: bytes) -> dict[str, np.ndarray]:
    if data[:8] != MAGIC:
        raise ValueError("not a fedner checkpoint (bad magic)")
    pos = 8
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos : pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    if pos != len(data):
        raise ValueError(f"trailing bytes in checkpoint ({len(data) - pos})")
    return params


def save(path, params) -> None:
    with open(path, "wb") as f:
        f.write(dumps(params))


def load(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        return loads(f.read())

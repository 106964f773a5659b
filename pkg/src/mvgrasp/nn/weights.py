"""Binary weight container.

Layout (little-endian)::

    b"MVGW" | u32 version (=1) | u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | f32 data
    u32 CRC32 of every preceding byte
"""

import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import WeightFileError

MAGIC = b"MVGW"
VERSION = 1
_MAX_ELEMENTS = 1 << 31


def encode_weights(tensors):
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise WeightFileError(f"tensor name too long: {name[:40]}...")
        arr = np.asarray(arr)
        if arr.ndim > 0xFF:
            raise WeightFileError(f"tensor {name!r} has too many dimensions")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_weights(blob):
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise WeightFileError("bad magic: not an MVGW weight file")
    if len(blob) < 16:
        raise WeightFileError("truncated weight file")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise WeightFileError("checksum mismatch (file corrupt or truncated)")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise WeightFileError(f"unsupported weight file version {version}")
    pos = 12
    out = {}

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise WeightFileError("truncated tensor record")
        chunk = body[pos : pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = 1
        for d in dims:
            n *= d
            if n > _MAX_ELEMENTS:
                raise WeightFileError(f"dimension overflow in tensor {name!r}: {dims}")
        out[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(body):
        raise WeightFileError("trailing bytes after last tensor")
    return out


def save_weights(tensors, path):
    Path(path).write_bytes(encode_weights(tensors))


def load_weights(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise WeightFileError(f"cannot read weight file {path}: {exc}") from exc
    return decode_weights(blob)

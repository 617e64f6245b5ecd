"""Binary checkpoint container shared by the three model families.

Layout: magic (4 bytes) | version u32 | config-JSON length u32 | config
JSON (UTF-8) | block count u32 | blocks. Each block is a name
(length-prefixed UTF-8), ndim u32, dims u32 x ndim, then row-major
little-endian float32 data.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedFormatError

ENCODER_MAGIC = b"SPKE"
SYNTH_MAGIC = b"SYNT"
VOCODER_MAGIC = b"VOCR"
VERSION = 1


def save_checkpoint(path, magic: bytes, config: dict, tensors: dict) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    config_blob = json.dumps(config, ensure_ascii=False).encode("utf-8")
    parts = [magic, struct.pack("<II", VERSION, len(config_blob)), config_blob,
             struct.pack("<I", len(tensors))]
    for name, tensor in tensors.items():
        array = np.ascontiguousarray(tensor, dtype="<f4")
        name_blob = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_blob)))
        parts.append(name_blob)
        parts.append(struct.pack("<I", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, magic: bytes) -> tuple[dict, dict]:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != magic:
        raise FormatError(f"{path}: bad or missing {magic.decode()} header")
    version, config_len = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    config = json.loads(data[pos:pos + config_len].decode("utf-8"))
    pos += config_len
    (n_blocks,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    for _ in range(n_blocks):
        (name_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(
            data, dtype="<f4", count=count, offset=pos
        ).reshape(shape).copy()
        pos += 4 * count
    if pos != len(data):
        raise FormatError(f"{path}: trailing bytes after last block")
    return config, tensors

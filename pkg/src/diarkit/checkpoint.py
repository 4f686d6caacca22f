"""Binary model checkpoints: a small self-describing container.

Layout (all integers little-endian):

    bytes 0..3   magic ``DKM1``
    u32          format version (currently 1)
    u32 + bytes  JSON header: {"hyper": {...}, "metadata": {...}}
    u32 + bytes  JSON vocabulary: id-ordered list of surfaces
    u32          tensor count, then per tensor:
                     u32 + bytes   name (UTF-8)
                     u32           ndim, u32 per dimension
                     float64 data  (C order)
    u32          CRC32 of everything before it

Tensors are written and restored bit-exactly; loading verifies the
magic, version, and checksum before trusting anything else.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .errors import CheckpointFormatError, ChecksumError
from .model import HyperParams, ModelParams

MAGIC = b"DKM1"
FORMAT_VERSION = 1


def _write_block(buf: io.BytesIO, payload: bytes):
    buf.write(struct.pack("<I", len(payload)))
    buf.write(payload)


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    hyper: HyperParams,
    vocab: Vocabulary,
    metadata: dict | None = None,
):
    """Serialize parameters, hyperparameters, and the vocabulary."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    header = {
        "hyper": dataclasses.asdict(hyper),
        "metadata": dict(metadata or {}),
    }
    _write_block(buf, json.dumps(header, sort_keys=True).encode("utf-8"))
    _write_block(buf, json.dumps(vocab.surfaces).encode("utf-8"))
    buf.write(struct.pack("<I", len(params.tensors)))
    for name, tensor in params.tensors.items():
        _write_block(buf, name.encode("utf-8"))
        buf.write(struct.pack("<I", tensor.ndim))
        for dim in tensor.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    body = buf.getvalue()
    with open(path, "wb") as f:
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError("checkpoint truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def block(self) -> bytes:
        return self.take(self.u32())


def load_checkpoint(path: str | Path):
    """Read a checkpoint; returns (params, hyper, vocab, metadata)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8:
        raise CheckpointFormatError("file too small to be a checkpoint")
    if raw[:4] != MAGIC:
        raise CheckpointFormatError("bad magic; not a model checkpoint")
    body, (stored_crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    actual_crc = zlib.crc32(body) & 0xFFFFFFFF
    if actual_crc != stored_crc:
        raise ChecksumError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    r = _Reader(body)
    r.take(4)  # magic, already verified
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(r.block().decode("utf-8"))
        surfaces = json.loads(r.block().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"undecodable checkpoint header: {exc}") from exc
    hyper = HyperParams(**header["hyper"])
    vocab = Vocabulary.from_surfaces(surfaces)
    tensors: dict[str, np.ndarray] = {}
    n_tensors = r.u32()
    for _ in range(n_tensors):
        name = r.block().decode("utf-8")
        ndim = r.u32()
        shape = tuple(r.u32() for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape)
        tensors[name] = data.astype(np.float64, copy=True)
    if r.pos != len(body):
        raise CheckpointFormatError("trailing bytes after tensor section")
    params = ModelParams(feature_mode=hyper.feature_mode, tensors=tensors)
    return params, hyper, vocab, header.get("metadata", {})

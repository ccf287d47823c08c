"""Checkpoint container.

Layout (integers little-endian)::

    b"PMCK"  version u8
    u32 text length, UTF-8 text of ``key=value`` lines
    u32 tensor count
    per tensor: u16 name length, UTF-8 name, one PMTN record
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import logging
import struct

import numpy as np

from ..errors import FormatError
from .tensor_file import decode_tensor, encode_tensor

MAGIC = b"PMCK"
VERSION = 1

logger = logging.getLogger("DensePred.Data")


@dataclass
class Checkpoint:
    """Text entries plus named arrays.

    Attributes:
        entries: Ordered ``key -> value`` strings (no newlines in either).
        tensors: Ordered ``name -> array``.
    """

    entries: Dict[str, str] = field(default_factory=dict)
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def text(self) -> str:
        return "".join(f"{key}={value}\n" for key, value in self.entries.items())


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    text = checkpoint.text().encode("utf-8")
    parts = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(text)), text]
    parts.append(struct.pack("<I", len(checkpoint.tensors)))
    for name, array in checkpoint.tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(encode_tensor(array))
    return b"".join(parts)


def decode_checkpoint(buffer: bytes, path=None) -> Checkpoint:
    """Parse a checkpoint.

    Raises:
        FormatError: With the byte offset of the first problem.
    """
    if buffer[:4] != MAGIC:
        raise FormatError("Bad checkpoint magic", path=path, offset=0)
    if len(buffer) < 9:
        raise FormatError("Truncated checkpoint header", path=path, offset=len(buffer))
    (version,) = struct.unpack_from("<B", buffer, 4)
    if version != VERSION:
        raise FormatError(f"Unsupported checkpoint version {version}", path=path, offset=4)
    (text_length,) = struct.unpack_from("<I", buffer, 5)
    at = 9
    if len(buffer) < at + text_length + 4:
        raise FormatError("Truncated checkpoint text", path=path, offset=at)
    try:
        text = buffer[at : at + text_length].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("Checkpoint text is not UTF-8", path=path, offset=at) from exc
    entries = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"Malformed checkpoint entry '{line}'", path=path, offset=at)
        entries[key] = value
    at += text_length
    (count,) = struct.unpack_from("<I", buffer, at)
    at += 4
    tensors = {}
    for _ in range(count):
        if len(buffer) < at + 2:
            raise FormatError("Truncated tensor name", path=path, offset=at)
        (name_length,) = struct.unpack_from("<H", buffer, at)
        at += 2
        if len(buffer) < at + name_length:
            raise FormatError("Truncated tensor name", path=path, offset=at)
        try:
            name = buffer[at : at + name_length].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("Tensor name is not UTF-8", path=path, offset=at) from exc
        at += name_length
        tensors[name], at = decode_tensor(buffer, at, path=path)
    if at != len(buffer):
        raise FormatError("Trailing bytes after the last tensor", path=path, offset=at)
    return Checkpoint(entries, tensors)


def write_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> None:
    """Write a checkpoint, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(checkpoint))
    logger.info("Wrote checkpoint %s (%d tensors)", path, len(checkpoint.tensors))


def read_checkpoint(path: Union[str, Path]) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes(), path=str(path))

"""Binary tensor container.

Layout (all integers little-endian)::

    offset 0   b"PMTN"
    offset 4   version      u8   (1)
    offset 5   dtype code   u8   (f64=1, f32=2, u8=3, u16=4)
    offset 6   rank         u8   (0..4)
    offset 7   dims         u32 x rank
    ...        payload      row-major, little-endian
"""

from pathlib import Path
from typing import Tuple, Union

import struct

import numpy as np

from ..errors import FormatError
from ..tensor.tensor import Tensor

MAGIC = b"PMTN"
VERSION = 1
MAX_RANK = 4

DTYPE_CODES = {
    np.dtype("<f8"): 1,
    np.dtype("<f4"): 2,
    np.dtype("u1"): 3,
    np.dtype("<u2"): 4,
}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}

PathLike = Union[str, Path]


def encode_tensor(value) -> bytes:
    """Serialise an array (or :class:`Tensor`) into one container record.

    Raises:
        FormatError: If the dtype has no code or the rank exceeds 4.
    """
    array = value.data if isinstance(value, Tensor) else np.asarray(value)
    code = next(
        (
            c
            for known, c in DTYPE_CODES.items()
            if (known.kind, known.itemsize) == (array.dtype.kind, array.dtype.itemsize)
        ),
        None,
    )
    if code is None:
        raise FormatError(f"Unsupported dtype {array.dtype}")
    if array.ndim > MAX_RANK:
        raise FormatError(f"Rank {array.ndim} exceeds {MAX_RANK}")
    header = MAGIC + struct.pack("<BBB", VERSION, code, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=CODE_DTYPES[code]).tobytes()
    return header + payload


def decode_tensor(buffer: bytes, offset: int = 0, path=None) -> Tuple[np.ndarray, int]:
    """Parse one record starting at ``offset``.

    Returns:
        tuple: The array (native dtype of its code) and the offset just past it.

    Raises:
        FormatError: On a bad magic, version, dtype, rank or a truncated record,
            with the byte offset of the problem.
    """
    if buffer[offset : offset + 4] != MAGIC:
        raise FormatError("Bad tensor magic", path=path, offset=offset)
    if len(buffer) < offset + 7:
        raise FormatError("Truncated tensor header", path=path, offset=len(buffer))
    version, code, rank = struct.unpack_from("<BBB", buffer, offset + 4)
    if version != VERSION:
        raise FormatError(f"Unsupported tensor version {version}", path=path, offset=offset + 4)
    if code not in CODE_DTYPES:
        raise FormatError(f"Unknown dtype code {code}", path=path, offset=offset + 5)
    if rank > MAX_RANK:
        raise FormatError(f"Rank {rank} exceeds {MAX_RANK}", path=path, offset=offset + 6)
    dims_at = offset + 7
    if len(buffer) < dims_at + 4 * rank:
        raise FormatError("Truncated tensor dims", path=path, offset=len(buffer))
    dims = struct.unpack_from(f"<{rank}I", buffer, dims_at)
    dtype = CODE_DTYPES[code]
    payload_at = dims_at + 4 * rank
    length = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buffer) < payload_at + length:
        raise FormatError(
            f"Payload needs {length} bytes, {len(buffer) - payload_at} available",
            path=path,
            offset=payload_at,
        )
    array = np.frombuffer(buffer, dtype=dtype, count=length // dtype.itemsize, offset=payload_at)
    array = array.reshape(dims).astype(dtype.newbyteorder("="))
    return array, payload_at + length


def write_tensor(path: PathLike, value) -> None:
    """Write an array or :class:`Tensor` as a single-record file."""
    Path(path).write_bytes(encode_tensor(value))


def read_tensor(path: PathLike) -> np.ndarray:
    """Read a single-record tensor file.

    The stored dtype is kept, so the result is a plain array rather than a
    :class:`Tensor` (which holds float64 only). Wrap it with ``Tensor(array)``
    to feed it to the network; :func:`write_tensor` accepts either form.

    Raises:
        FormatError: On any header problem, a truncated payload or trailing bytes.
    """
    buffer = Path(path).read_bytes()
    array, end = decode_tensor(buffer, 0, path=str(path))
    if end != len(buffer):
        raise FormatError("Trailing bytes after the tensor payload", path=str(path), offset=end)
    return array

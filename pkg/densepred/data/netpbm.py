"""Binary portable pixmap (P6) and graymap (P5) codecs.

Samples wider than 8 bits (maxval > 255) are stored big-endian, as the
format requires. Depth maps are 16-bit graymaps in millimetres, labels and
masks 8-bit graymaps.
"""

from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..errors import FormatError, InputError

PathLike = Union[str, Path]

MILLIMETRES = 1000.0
MAX_DEPTH_CODE = 65535


def _parse_header(buffer: bytes, magic: bytes, path) -> Tuple[int, int, int, int]:
    if buffer[:2] != magic:
        raise FormatError(f"Expected magic {magic!r}", path=path, offset=0)
    values = []
    at = 2
    while len(values) < 3:
        if at >= len(buffer):
            raise FormatError("Truncated header", path=path, offset=at)
        byte = buffer[at : at + 1]
        if byte.isspace():
            at += 1
        elif byte == b"#":
            end = buffer.find(b"\n", at)
            if end < 0:
                raise FormatError("Unterminated header comment", path=path, offset=at)
            at = end + 1
        else:
            start = at
            while at < len(buffer) and buffer[at : at + 1].isdigit():
                at += 1
            if start == at:
                raise FormatError(f"Unexpected header byte {byte!r}", path=path, offset=at)
            values.append(int(buffer[start:at]))
    if at >= len(buffer) or not buffer[at : at + 1].isspace():
        raise FormatError("Header must end with one whitespace byte", path=path, offset=at)
    width, height, maxval = values
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(
            f"Invalid header values {width}x{height} maxval {maxval}", path=path, offset=2
        )
    return width, height, maxval, at + 1


def _read(path: PathLike, magic: bytes, channels: int) -> Tuple[np.ndarray, int]:
    buffer = Path(path).read_bytes()
    width, height, maxval, at = _parse_header(buffer, magic, str(path))
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    if len(buffer) - at < count * dtype.itemsize:
        raise FormatError(
            f"Raster needs {count * dtype.itemsize} bytes", path=str(path), offset=at
        )
    raster = np.frombuffer(buffer, dtype=dtype, count=count, offset=at)
    raster = raster.astype(np.uint16 if maxval > 255 else np.uint8)
    if raster.max(initial=0) > maxval:
        raise FormatError(f"Sample exceeds maxval {maxval}", path=str(path), offset=at)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return raster.reshape(shape), maxval


def _write(path: PathLike, magic: bytes, raster: np.ndarray, maxval: int) -> None:
    height, width = raster.shape[:2]
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = b"%s\n%d %d\n%d\n" % (magic, width, height, maxval)
    Path(path).write_bytes(header + np.ascontiguousarray(raster, dtype=dtype).tobytes())


def write_ppm(path: PathLike, rgb: np.ndarray) -> None:
    """Write a ``(3, H, W)`` map in ``[0, 1]`` as an 8-bit pixmap."""
    codes = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    _write(path, b"P6", codes.transpose(1, 2, 0), 255)


def read_ppm(path: PathLike) -> np.ndarray:
    """Read a pixmap as a ``(3, H, W)`` float map in ``[0, 1]``."""
    raster, maxval = _read(path, b"P6", 3)
    return raster.transpose(2, 0, 1).astype(np.float64) / maxval


def write_pgm(path: PathLike, values: np.ndarray, maxval: int = 255) -> None:
    """Write ``(H, W)`` integer samples; ``maxval > 255`` selects 16 bits."""
    values = np.asarray(values)
    if values.size and (values.min() < 0 or values.max() > maxval):
        raise InputError(f"Graymap values must lie in [0, {maxval}]", field="values")
    _write(path, b"P5", values, maxval)


def read_pgm(path: PathLike) -> np.ndarray:
    """Read a graymap as ``uint8`` or ``uint16`` samples."""
    raster, _ = _read(path, b"P5", 1)
    return raster


def write_depth_pgm(path: PathLike, depth: np.ndarray) -> None:
    """Depth in metres to a 16-bit millimetre graymap (0 stays invalid)."""
    codes = np.clip(np.rint(np.asarray(depth) * MILLIMETRES), 0, MAX_DEPTH_CODE)
    write_pgm(path, codes.astype(np.uint16), MAX_DEPTH_CODE)


def read_depth_pgm(path: PathLike) -> np.ndarray:
    return read_pgm(path).astype(np.float64) / MILLIMETRES


def write_labels_pgm(path: PathLike, labels: np.ndarray) -> None:
    write_pgm(path, np.asarray(labels).astype(np.int64), 255)


def read_labels_pgm(path: PathLike, num_classes=None) -> np.ndarray:
    """Read labels, checking them against ``num_classes`` when given.

    Raises:
        InputError: If a label is ``>= num_classes``.
    """
    labels = read_pgm(path).astype(np.int64)
    if num_classes is not None and labels.size and labels.max() >= num_classes:
        raise InputError(
            f"Label {int(labels.max())} is out of range for {num_classes} classes",
            field="labels",
        )
    return labels


def write_mask_pgm(path: PathLike, mask: np.ndarray) -> None:
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def read_mask_pgm(path: PathLike) -> np.ndarray:
    return read_pgm(path) > 0

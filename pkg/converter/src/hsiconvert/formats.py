"""Writers and validating readers for the HSIC/HSIL binary formats.

Both formats are little-endian throughout.

HSIC cube file
    magic    4 bytes  "HSIC"
    version  u16      1
    dtype    u8       1 = f32, 2 = f64
    height   u32
    width    u32
    bands    u32
    data     height*width*bands values in (y, x, band) row-major order

HSIL label file
    magic    4 bytes  "HSIL"
    version  u16      1
    height   u32
    width    u32
    K        u16      class count
    names    K x (u16 length + UTF-8 bytes) for classes 1..K
    labels   height*width u16 row-major, 0 = unlabeled

This tool only ever writes f32 cubes (dtype code 1); the reader accepts both
codes so `verify` can check files from other producers too.
"""

import struct

import numpy as np

HSIC_MAGIC = b"HSIC"
HSIL_MAGIC = b"HSIL"
VERSION = 1
DTYPE_F32 = 1
DTYPE_F64 = 2

HSIC_HEADER = struct.calcsize("<HBIII") + 4
HSIL_FIXED = struct.calcsize("<HIIH") + 4


class FormatFailure(ValueError):
    """A file violates its format; carries the failing byte offset if known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def write_hsic(path, cube):
    """Write a [height, width, bands] array as an f32 HSIC cube."""
    height, width, bands = cube.shape
    with open(path, "wb") as fh:
        fh.write(HSIC_MAGIC)
        fh.write(struct.pack("<HBIII", VERSION, DTYPE_F32, height, width, bands))
        fh.write(np.ascontiguousarray(cube, dtype="<f4").tobytes())


def read_hsic(path):
    """Parse an HSIC cube, raising FormatFailure with an offset on corruption."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HSIC_HEADER:
        raise FormatFailure("HSIC truncated before header", offset=len(blob))
    if blob[:4] != HSIC_MAGIC:
        raise FormatFailure(f"bad HSIC magic {blob[:4]!r}", offset=0)
    version, code, height, width, bands = struct.unpack_from("<HBIII", blob, 4)
    if version != VERSION:
        raise FormatFailure(f"unsupported HSIC version {version}", offset=4)
    if code not in (DTYPE_F32, DTYPE_F64):
        raise FormatFailure(f"unknown HSIC dtype code {code}", offset=6)
    itemsize = 4 if code == DTYPE_F32 else 8
    expected = HSIC_HEADER + height * width * bands * itemsize
    if len(blob) != expected:
        raise FormatFailure(
            f"HSIC payload is {len(blob) - HSIC_HEADER} bytes, "
            f"expected {expected - HSIC_HEADER}",
            offset=min(len(blob), expected),
        )
    dtype = "<f4" if code == DTYPE_F32 else "<f8"
    data = np.frombuffer(blob, dtype=dtype, offset=HSIC_HEADER)
    return data.reshape(height, width, bands)


def write_hsil(path, labels, class_names):
    """Write a [height, width] u16 label grid with 1-based class names."""
    height, width = labels.shape
    with open(path, "wb") as fh:
        fh.write(HSIL_MAGIC)
        fh.write(struct.pack("<HIIH", VERSION, height, width, len(class_names)))
        for name in class_names:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
        fh.write(np.ascontiguousarray(labels, dtype="<u2").tobytes())


def read_hsil(path):
    """Parse an HSIL label file into (labels, class_names)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HSIL_FIXED:
        raise FormatFailure("HSIL truncated before header", offset=len(blob))
    if blob[:4] != HSIL_MAGIC:
        raise FormatFailure(f"bad HSIL magic {blob[:4]!r}", offset=0)
    version, height, width, k = struct.unpack_from("<HIIH", blob, 4)
    if version != VERSION:
        raise FormatFailure(f"unsupported HSIL version {version}", offset=4)
    pos = HSIL_FIXED
    names = []
    for _ in range(k):
        if len(blob) < pos + 2:
            raise FormatFailure("HSIL truncated in class names", offset=len(blob))
        (length,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        if len(blob) < pos + length:
            raise FormatFailure("HSIL truncated in class names", offset=len(blob))
        names.append(blob[pos : pos + length].decode("utf-8"))
        pos += length
    expected = pos + height * width * 2
    if len(blob) != expected:
        raise FormatFailure(
            f"HSIL payload is {len(blob) - pos} bytes, expected {height * width * 2}",
            offset=min(len(blob), expected),
        )
    labels = np.frombuffer(blob, dtype="<u2", offset=pos).reshape(height, width)
    if labels.size and int(labels.max()) > k:
        raise FormatFailure(
            f"label value {int(labels.max())} exceeds class count {k}", offset=pos
        )
    return labels.copy(), names

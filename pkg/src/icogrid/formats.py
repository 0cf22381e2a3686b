"""Bit-exact file formats: SPHI sphere images, SPHT gather tables, IDX
digit files and binary PGM/PPM rasters.

SPHI (little endian):
    magic "SPHI" | version u16 = 1 | subdivision u8 | dtype u8 (0 = f32,
    1 = u8) | channels u16 | reserved u16 = 0 | channel-planar payload in
    canonical pixel order.

SPHT (little endian):
    magic "SPHT" | version u16 = 1 | kind u8 (0 = conv, 1 = pool,
    2 = unpool, 3 = weights) | subdivision u8 | arity u16 | rows u32 |
    row-major payload: u32 pixel indices for kinds 0..2, f32 for weights.

IDX files keep their canonical big-endian layout.  PGM (P5) and PPM (P6)
are binary only with maxval 255; cubemaps are stored as a 6-face vertical
strip with the face order recorded in a comment line.

Every reader rejects malformed input with a distinct error class; every
write/read pair is bytewise idempotent.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .geometry import pixel_count
from .indexing import ConvTable, PoolTable
from .projection import CUBE_FACE_ORDER, CubeMap, SphdImage


class FormatError(Exception):
    """Base class for malformed file content."""


class MagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class DtypeError(FormatError):
    pass


class KindError(FormatError):
    pass


class LengthError(FormatError):
    pass


_SPHI_HEADER = struct.Struct("<4sHBBHH")
_SPHT_HEADER = struct.Struct("<4sHBBHI")

SPHI_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1")}
SPHT_KIND_CONV = 0
SPHT_KIND_POOL = 1
SPHT_KIND_UNPOOL = 2
SPHT_KIND_WEIGHTS = 3


def write_sphi(path, img: SphdImage, dtype: str = "f32") -> None:
    """Write a sphere image; dtype is "f32" or "u8"."""
    code = {"f32": 0, "u8": 1}.get(dtype)
    if code is None:
        raise DtypeError(f"unsupported SPHI dtype {dtype!r}")
    payload = np.ascontiguousarray(img.data, dtype=SPHI_DTYPES[code])
    header = _SPHI_HEADER.pack(
        b"SPHI", 1, img.subdivision, code, img.channels, 0
    )
    Path(path).write_bytes(header + payload.tobytes())


def read_sphi(path) -> SphdImage:
    raw = Path(path).read_bytes()
    if len(raw) < _SPHI_HEADER.size:
        raise LengthError("file shorter than the SPHI header")
    magic, version, subdivision, dtype_code, channels, reserved = _SPHI_HEADER.unpack_from(raw)
    if magic != b"SPHI":
        raise MagicError(f"bad magic {magic!r}, expected b'SPHI'")
    if version != 1:
        raise VersionError(f"unsupported SPHI version {version}")
    if dtype_code not in SPHI_DTYPES:
        raise DtypeError(f"unknown SPHI dtype code {dtype_code}")
    dt = SPHI_DTYPES[dtype_code]
    n = pixel_count(subdivision)
    expected = channels * n * dt.itemsize
    payload = raw[_SPHI_HEADER.size:]
    if len(payload) != expected:
        raise LengthError(
            f"payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype=dt).reshape(channels, n)
    return SphdImage(subdivision, np.array(data))


def _write_spht(path, kind: int, subdivision: int, array: np.ndarray, dtype) -> None:
    arr = np.ascontiguousarray(array, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError("SPHT payload must be 2-D (rows x arity)")
    header = _SPHT_HEADER.pack(
        b"SPHT", 1, kind, subdivision, arr.shape[1], arr.shape[0]
    )
    Path(path).write_bytes(header + arr.tobytes())


def write_spht_conv(path, table: ConvTable) -> None:
    _write_spht(path, SPHT_KIND_CONV, table.subdivision, table.taps, "<u4")


def write_spht_pool(path, table: PoolTable) -> None:
    _write_spht(path, SPHT_KIND_POOL, table.subdivision, table.children, "<u4")


def write_spht_unpool(path, table: PoolTable) -> None:
    _write_spht(path, SPHT_KIND_UNPOOL, table.subdivision, table.children, "<u4")


def write_spht_weights(path, subdivision: int, array: np.ndarray) -> None:
    _write_spht(path, SPHT_KIND_WEIGHTS, subdivision, array, "<f4")


def read_spht(path) -> tuple[int, int, np.ndarray]:
    """Read any SPHT file; returns (kind, subdivision, rows x arity array).

    Index payloads come back as int64 and are range checked against the
    subdivision; weight payloads come back as float32.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _SPHT_HEADER.size:
        raise LengthError("file shorter than the SPHT header")
    magic, version, kind, subdivision, arity, rows = _SPHT_HEADER.unpack_from(raw)
    if magic != b"SPHT":
        raise MagicError(f"bad magic {magic!r}, expected b'SPHT'")
    if version != 1:
        raise VersionError(f"unsupported SPHT version {version}")
    if kind not in (SPHT_KIND_CONV, SPHT_KIND_POOL, SPHT_KIND_UNPOOL, SPHT_KIND_WEIGHTS):
        raise KindError(f"unknown SPHT kind {kind}")
    payload = raw[_SPHT_HEADER.size:]
    expected = rows * arity * 4
    if len(payload) != expected:
        raise LengthError(f"payload is {len(payload)} bytes, expected {expected}")
    if kind == SPHT_KIND_WEIGHTS:
        data = np.frombuffer(payload, dtype="<f4").reshape(rows, arity)
        return kind, subdivision, np.array(data)
    data = np.frombuffer(payload, dtype="<u4").reshape(rows, arity).astype(np.int64)
    if data.size and data.max() >= pixel_count(subdivision):
        raise LengthError(
            f"index {data.max()} out of range for subdivision {subdivision}"
        )
    return kind, subdivision, data


def read_spht_conv(path) -> ConvTable:
    kind, subdivision, data = read_spht(path)
    if kind != SPHT_KIND_CONV:
        raise KindError(f"expected a conv table, found kind {kind}")
    return ConvTable(subdivision, data)


def read_spht_pool(path) -> PoolTable:
    kind, subdivision, data = read_spht(path)
    if kind not in (SPHT_KIND_POOL, SPHT_KIND_UNPOOL):
        raise KindError(f"expected a pool/unpool table, found kind {kind}")
    return PoolTable(subdivision, data)


# ---------------------------------------------------------------------------
# IDX (big endian) digit files

_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


def read_idx(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise MagicError("file shorter than the IDX magic")
    zero, zero2, dtype_code, ndim = raw[0], raw[1], raw[2], raw[3]
    if zero != 0 or zero2 != 0 or dtype_code not in _IDX_DTYPES:
        raise MagicError(f"bad IDX magic bytes {raw[:4]!r}")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise LengthError("file shorter than the IDX dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    dt = _IDX_DTYPES[dtype_code]
    expected = int(np.prod(dims)) * dt.itemsize if ndim else dt.itemsize
    payload = raw[header_len:]
    if len(payload) != expected:
        raise LengthError(f"payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=dt).reshape(dims).copy()


def write_idx(path, array: np.ndarray) -> None:
    """Write an array in IDX layout (u8 payloads only; used to build
    fixture datasets)."""
    arr = np.ascontiguousarray(array, dtype=">u1")
    header = bytes([0, 0, 0x08, arr.ndim]) + struct.pack(
        f">{arr.ndim}I", *arr.shape
    )
    Path(path).write_bytes(header + arr.tobytes())


def read_mnist_images(path) -> np.ndarray:
    images = read_idx(path)
    if images.ndim != 3:
        raise FormatError(f"expected a 3-D image file, got {images.ndim} dims")
    return images


def read_mnist_labels(path) -> np.ndarray:
    labels = read_idx(path)
    if labels.ndim != 1:
        raise FormatError(f"expected a 1-D label file, got {labels.ndim} dims")
    return labels


# ---------------------------------------------------------------------------
# binary PGM / PPM

def _write_netpbm(path, magic: bytes, arr: np.ndarray, comment: str | None) -> None:
    h, w = arr.shape[:2]
    lines = [magic]
    if comment:
        lines.append(b"# " + comment.encode())
    lines.append(f"{w} {h}".encode())
    lines.append(b"255")
    Path(path).write_bytes(b"\n".join(lines) + b"\n" + arr.tobytes())


def write_pgm(path, image: np.ndarray, comment: str | None = None) -> None:
    arr = np.ascontiguousarray(image, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("PGM wants a 2-D grayscale array")
    _write_netpbm(path, b"P5", arr, comment)


def write_ppm(path, image: np.ndarray, comment: str | None = None) -> None:
    arr = np.ascontiguousarray(image, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("PPM wants an (H, W, 3) array")
    _write_netpbm(path, b"P6", arr, comment)


def _read_netpbm_tokens(raw: bytes, count: int) -> tuple[list[int], int]:
    tokens = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(raw):
            raise LengthError("truncated netpbm header")
        ch = raw[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = raw.find(b"\n", pos)
            pos = len(raw) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(int(raw[pos:end]))
            pos = end
    return tokens, pos + 1  # single whitespace after maxval


def read_netpbm(path) -> np.ndarray:
    """Read P5 to (H, W) u8 or P6 to (H, W, 3) u8; everything else is
    rejected."""
    raw = Path(path).read_bytes()
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise MagicError(
            f"unsupported netpbm magic {magic!r} (binary P5/P6 only)"
        )
    (w, h, maxval), offset = _read_netpbm_tokens(raw[2:], 3)
    offset += 2
    if maxval != 255:
        raise DtypeError(f"only maxval 255 is supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    expected = w * h * channels
    payload = raw[offset:]
    if len(payload) != expected:
        raise LengthError(f"payload is {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    return arr.reshape(h, w) if channels == 1 else arr.reshape(h, w, 3).copy()


CUBE_FACE_COMMENT = "faces:" + ",".join(CUBE_FACE_ORDER)


def write_cubemap(path, cm: CubeMap) -> None:
    """Store a cubemap as a vertical 6-face strip (u8, rounded/clipped)."""
    f = cm.face_size
    data = np.clip(np.rint(cm.data), 0, 255).astype(np.uint8)
    strip = data.reshape(6 * f, f, cm.channels)
    if cm.channels == 1:
        write_pgm(path, strip[:, :, 0], comment=CUBE_FACE_COMMENT)
    elif cm.channels == 3:
        write_ppm(path, strip, comment=CUBE_FACE_COMMENT)
    else:
        raise ValueError("cubemap strips support 1 or 3 channels")


def read_cubemap(path) -> CubeMap:
    arr = read_netpbm(path)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w = arr.shape[:2]
    if h != 6 * w:
        raise LengthError(
            f"cubemap strip must be 6 faces tall, got {h}x{w}"
        )
    return CubeMap(arr.reshape(6, w, w, arr.shape[2]).astype(np.float64))

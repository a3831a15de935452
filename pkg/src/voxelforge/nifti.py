"""Minimal NIfTI-1 single-file reader/writer.

Supports the little-endian 348-byte header with magic ``n+1\\0`` and payload
datatypes uint8, int16, int32, and float32. Gzip-compressed files are
accepted on read but never produced on write, so written files are byte
deterministic. Only spacing and origin are honored from the header; affine
orientation handling is out of scope.
"""

from __future__ import annotations

import gzip
import struct

import numpy as np

from .errors import DimensionalityError, NiftiFormatError, UnsupportedDatatypeError
from .grid import LabelVolume, Volume

HEADER_SIZE = 348
VOX_OFFSET = 352  # header + 4-byte extension flag
MAGIC = b"n+1\x00"

# NIfTI datatype code -> numpy dtype (little-endian)
DTYPES = {
    2: np.dtype("<u1"),   # uint8
    4: np.dtype("<i2"),   # int16
    8: np.dtype("<i4"),   # int32
    16: np.dtype("<f4"),  # float32
}
DTYPE_CODES = {v: k for k, v in DTYPES.items()}


def from_bytes(raw: bytes, as_labels: bool | None = None, name: str = "<bytes>") -> Volume | LabelVolume:
    """Parse NIfTI-1 bytes (optionally gzipped) into a container.

    With ``as_labels=None`` integer-typed payloads load as LabelVolume and
    float payloads as Volume; pass True/False to force either container.
    """
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except OSError as e:
            raise NiftiFormatError(f"{name}: bad gzip stream: {e}") from e
    if len(raw) < HEADER_SIZE:
        raise NiftiFormatError(f"{name}: truncated header ({len(raw)} < {HEADER_SIZE} bytes)")

    hdr = raw[:HEADER_SIZE]
    (sizeof_hdr,) = struct.unpack_from("<i", hdr, 0)
    magic = hdr[344:348]
    if sizeof_hdr != HEADER_SIZE or magic != MAGIC:
        raise NiftiFormatError(
            f"{name}: not a NIfTI-1 single file (sizeof_hdr={sizeof_hdr}, magic={magic!r})"
        )
    dim = struct.unpack_from("<8h", hdr, 40)
    if dim[0] != 3:
        raise DimensionalityError(f"{name}: expected 3D data, header says dim[0]={dim[0]}")
    nx, ny, nz = (int(d) for d in dim[1:4])
    if min(nx, ny, nz) < 1:
        raise NiftiFormatError(f"{name}: non-positive dims {(nx, ny, nz)}")
    (datatype, _bitpix) = struct.unpack_from("<2h", hdr, 70)
    if datatype not in DTYPES:
        raise UnsupportedDatatypeError(f"{name}: unsupported NIfTI datatype code {datatype}")
    dtype = DTYPES[datatype]
    pixdim = struct.unpack_from("<8f", hdr, 76)
    spacing = tuple(float(p) if p > 0 else 1.0 for p in pixdim[1:4])
    (vox_offset,) = struct.unpack_from("<f", hdr, 108)
    offset = int(vox_offset) if vox_offset >= HEADER_SIZE else VOX_OFFSET
    qform_code, sform_code = struct.unpack_from("<2h", hdr, 252)
    if sform_code > 0:
        srow_x = struct.unpack_from("<4f", hdr, 280)
        srow_y = struct.unpack_from("<4f", hdr, 296)
        srow_z = struct.unpack_from("<4f", hdr, 312)
        origin = (float(srow_x[3]), float(srow_y[3]), float(srow_z[3]))
    elif qform_code > 0:
        origin = tuple(float(v) for v in struct.unpack_from("<3f", hdr, 268))
    else:
        origin = (0.0, 0.0, 0.0)

    count = nx * ny * nz
    payload = raw[offset : offset + count * dtype.itemsize]
    if len(payload) < count * dtype.itemsize:
        raise NiftiFormatError(f"{name}: truncated payload ({len(payload)} bytes)")
    data = np.frombuffer(payload, dtype=dtype).reshape((nx, ny, nz), order="F")

    labels = as_labels
    if labels is None:
        labels = bool(np.issubdtype(dtype, np.integer))
    if labels:
        if not np.issubdtype(dtype, np.integer):
            raise UnsupportedDatatypeError(f"{name}: float payload cannot load as labels")
        return LabelVolume(data, spacing=spacing, origin=origin)
    return Volume(data.astype(np.float32, copy=False), spacing=spacing, origin=origin)


def _pick_label_dtype(data: np.ndarray) -> np.dtype:
    # supported dtypes round-trip bit-exactly; anything else lands on int32
    if data.dtype in DTYPE_CODES:
        return data.dtype
    hi = int(data.max()) if data.size else 0
    if hi > np.iinfo(np.int32).max:
        raise UnsupportedDatatypeError(f"label value {hi} exceeds the int32 payload range")
    return np.dtype("<i4")


def to_bytes(vol: Volume | LabelVolume) -> bytes:
    """Serialize to uncompressed NIfTI-1 bytes; round-trips through from_bytes."""
    if isinstance(vol, LabelVolume):
        dtype = _pick_label_dtype(vol.data)
        data = vol.data.astype(dtype, copy=False)
    else:
        dtype = np.dtype("<f4")
        data = vol.data.astype(dtype, copy=False)

    nx, ny, nz = data.shape
    sx, sy, sz = vol.spacing
    ox, oy, oz = vol.origin

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    hdr[38] = ord("r")  # regular
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, DTYPE_CODES[dtype], dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<2h", hdr, 252, 1, 1)  # qform_code, sform_code
    struct.pack_into("<3f", hdr, 268, ox, oy, oz)
    struct.pack_into("<4f", hdr, 280, sx, 0.0, 0.0, ox)
    struct.pack_into("<4f", hdr, 296, 0.0, sy, 0.0, oy)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, sz, oz)
    hdr[344:348] = MAGIC

    return bytes(hdr) + b"\x00\x00\x00\x00" + data.tobytes(order="F")


def read_nifti(path, as_labels: bool | None = None) -> Volume | LabelVolume:
    """Load a NIfTI-1 file (``.nii`` or gzipped) from disk."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise NiftiFormatError(f"cannot read {path}: {e}") from e
    return from_bytes(raw, as_labels=as_labels, name=str(path))


def write_nifti(vol: Volume | LabelVolume, path) -> None:
    """Write an uncompressed NIfTI-1 file; see to_bytes for the layout."""
    raw = to_bytes(vol)
    try:
        with open(path, "wb") as f:
            f.write(raw)
    except OSError as e:
        raise OSError(f"cannot write NIfTI to {path}: {e}") from e

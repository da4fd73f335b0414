"""Minimal single-file NIfTI-1 reader/writer.

Only the subset needed by the pipeline: uncompressed ``.nii`` files with
magic ``n+1``, datatypes uint8 / int16 / float32, 3D images or 4D images
whose fourth axis is either 1 (squeezed) or a one-hot channel axis.
Orientation fields are ignored apart from the voxel spacing.
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import FormatError, UsageError
from .volgrid import LabelVolume, OneHotStack, Volume

HEADER_SIZE = 348
VOX_OFFSET = 352

DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16
_DTYPES = {DT_UINT8: "u1", DT_INT16: "i2", DT_FLOAT32: "f4"}
_BITPIX = {DT_UINT8: 8, DT_INT16: 16, DT_FLOAT32: 32}

# byte offsets of the header fields we touch
_OFF_DIM = 40
_OFF_DATATYPE = 70
_OFF_BITPIX = 72
_OFF_PIXDIM = 76
_OFF_VOX_OFFSET = 108
_OFF_SCL_SLOPE = 112
_OFF_SCL_INTER = 116
_OFF_XYZT_UNITS = 123
_OFF_MAGIC = 344

NIFTI_UNITS_MM = 2


def _endianness(hdr):
    for e in "<>":
        ndim = struct.unpack_from(e + "h", hdr, _OFF_DIM)[0]
        if 1 <= ndim <= 7:
            return e
    raise FormatError("cannot determine byte order: dim[0] not in 1..7 under either endianness")


def read_header(path):
    """Parse the fields of interest from a NIfTI-1 header into a dict."""
    with open(path, "rb") as f:
        hdr = f.read(HEADER_SIZE)
    if len(hdr) < HEADER_SIZE:
        raise FormatError(f"{path}: header is {len(hdr)} bytes, expected {HEADER_SIZE}")
    e = _endianness(hdr)
    sizeof_hdr = struct.unpack_from(e + "i", hdr, 0)[0]
    if sizeof_hdr != HEADER_SIZE:
        raise FormatError(f"{path}: sizeof_hdr is {sizeof_hdr}, expected {HEADER_SIZE}")
    magic = hdr[_OFF_MAGIC:_OFF_MAGIC + 4]
    if magic != b"n+1\x00":
        raise FormatError(f"{path}: unsupported magic {magic!r} (only single-file 'n+1' is read)")
    return {
        "endian": e,
        "dim": struct.unpack_from(e + "8h", hdr, _OFF_DIM),
        "datatype": struct.unpack_from(e + "h", hdr, _OFF_DATATYPE)[0],
        "bitpix": struct.unpack_from(e + "h", hdr, _OFF_BITPIX)[0],
        "pixdim": struct.unpack_from(e + "8f", hdr, _OFF_PIXDIM),
        "vox_offset": struct.unpack_from(e + "f", hdr, _OFF_VOX_OFFSET)[0],
        "scl_slope": struct.unpack_from(e + "f", hdr, _OFF_SCL_SLOPE)[0],
        "scl_inter": struct.unpack_from(e + "f", hdr, _OFF_SCL_INTER)[0],
        "magic": magic,
    }


def read_nifti(path, kind="auto"):
    """Read a NIfTI-1 file into a Volume, LabelVolume or OneHotStack.

    ``kind`` is ``"auto"`` (uint8 -> labels, int16/float32 -> intensities,
    4D with more than one channel -> one-hot stack), ``"volume"`` or
    ``"labels"``. Label reads validate the {0, 1, 2, 4} alphabet.
    """
    if kind not in ("auto", "volume", "labels"):
        raise UsageError(f"unknown kind {kind!r}")
    h = read_header(path)
    dim = h["dim"]
    if dim[0] not in (3, 4):
        raise FormatError(f"{path}: dim[0]={dim[0]}, only 3D/4D images are supported")
    dt = h["datatype"]
    if dt not in _DTYPES:
        raise FormatError(f"unsupported datatype {dt}")
    shape = tuple(int(n) for n in dim[1:4])
    nchan = int(dim[4]) if dim[0] == 4 else 1
    if min(shape) < 1 or nchan < 1:
        raise FormatError(f"{path}: non-positive dimension in {dim[1:dim[0] + 1]}")
    if h["vox_offset"] < VOX_OFFSET:
        raise FormatError(f"{path}: vox_offset {h['vox_offset']} < {VOX_OFFSET}")
    count = int(np.prod(shape)) * nchan
    dtype = np.dtype(h["endian"] + _DTYPES[dt])
    with open(path, "rb") as f:
        f.seek(int(h["vox_offset"]))
        payload = f.read(count * dtype.itemsize)
    if len(payload) < count * dtype.itemsize:
        raise OSError(f"{path}: truncated payload ({len(payload)} of {count * dtype.itemsize} bytes)")
    arr = np.frombuffer(payload, dtype=dtype).astype(dtype.newbyteorder("="))
    spacing = tuple(float(p) if p > 0 else 1.0 for p in h["pixdim"][1:4])

    slope, inter = h["scl_slope"], h["scl_inter"]
    if slope != 0 and np.isfinite(slope) and (slope != 1 or inter != 0):
        arr = arr.astype(np.float64) * slope + inter

    if nchan > 1:
        if kind != "auto":
            raise FormatError(f"{path}: 4D image with {nchan} channels cannot be read as {kind}")
        data = arr.reshape(shape + (nchan,), order="F")
        from .targets import channel_names_for

        return OneHotStack(data, channel_names_for(nchan), spacing)

    data = arr.reshape(shape, order="F")
    if kind == "labels" or (kind == "auto" and dt == DT_UINT8):
        return LabelVolume(data, spacing)
    return Volume(data, spacing)


def _header_bytes(shape, nchan, datatype, spacing):
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    if nchan == 1:
        dim = (3,) + tuple(shape) + (1, 1, 1, 1)
    else:
        dim = (4,) + tuple(shape) + (nchan, 1, 1, 1)
    struct.pack_into("<8h", hdr, _OFF_DIM, *dim)
    struct.pack_into("<h", hdr, _OFF_DATATYPE, datatype)
    struct.pack_into("<h", hdr, _OFF_BITPIX, _BITPIX[datatype])
    pixdim = (1.0,) + tuple(spacing) + (1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<8f", hdr, _OFF_PIXDIM, *pixdim)
    struct.pack_into("<f", hdr, _OFF_VOX_OFFSET, float(VOX_OFFSET))
    hdr[_OFF_XYZT_UNITS] = NIFTI_UNITS_MM
    hdr[_OFF_MAGIC:_OFF_MAGIC + 4] = b"n+1\x00"
    return bytes(hdr)


def nifti_bytes(vol):
    """Serialise a Volume / LabelVolume / OneHotStack to NIfTI-1 bytes."""
    if isinstance(vol, LabelVolume):
        datatype, data, nchan = DT_UINT8, vol.data.astype("<u1"), 1
    elif isinstance(vol, Volume):
        datatype, data, nchan = DT_FLOAT32, vol.data.astype("<f4"), 1
    elif isinstance(vol, OneHotStack):
        datatype, data, nchan = DT_UINT8, vol.data.astype("<u1"), vol.channels
    else:
        raise UsageError(f"cannot write object of type {type(vol).__name__}")
    shape = vol.dims
    hdr = _header_bytes(shape, nchan, datatype, vol.spacing)
    # 4-byte extension flag, all zero: no extensions
    return hdr + b"\x00" * 4 + data.tobytes(order="F")


def atomic_write_bytes(path, payload):
    """Write ``payload`` to a temp file beside ``path`` and rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_nifti(vol, path):
    """Write a single-file uncompressed NIfTI-1 image.

    Volumes are stored as float32, labels as uint8 and one-hot stacks as 4D
    uint8 with the channel count in dim[4].
    """
    atomic_write_bytes(path, nifti_bytes(vol))

"""Volume containers and 26-neighbourhood helpers.

Arrays are indexed ``data[x, y, z]``. The flat (serialised) order is
x-fastest, which is NumPy's Fortran order for that indexing and also the
order of a NIfTI payload, so ``data.ravel(order="F")`` is the on-disk layout.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import FormatError, UsageError

LABEL_ALPHABET = (0, 1, 2, 4)

# all 26 offsets of the 3x3x3 stencil, center excluded, in (dx, dy, dz) order
OFFSETS26 = tuple(o for o in product((-1, 0, 1), repeat=3) if o != (0, 0, 0))


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def _check_spacing(spacing):
    # pixdim is float32 on disk; quantise now so file round trips are exact
    spacing = tuple(float(np.float32(s)) for s in spacing)
    if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
        raise UsageError(f"spacing must be three positive numbers, got {spacing}")
    return spacing


@dataclass(frozen=True, eq=False)
class Volume:
    """Dense scalar grid (one modality) with mm spacing.

    ``data`` is stored as a read-only float32 array of shape ``(nx, ny, nz)``.
    """

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise UsageError(f"volume data must be a non-empty 3D array, got shape {data.shape}")
        data = data.astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise UsageError("volume contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self):
        return tuple(int(n) for n in self.data.shape)

    @property
    def flat(self):
        return self.data.ravel(order="F")

    @classmethod
    def from_flat(cls, flat, dims, spacing=(1.0, 1.0, 1.0)):
        flat = np.asarray(flat)
        if flat.size != int(np.prod(dims)):
            raise UsageError(f"flat data has {flat.size} values, dims {tuple(dims)} need {int(np.prod(dims))}")
        return cls(flat.reshape(tuple(dims), order="F"), spacing)

    def __eq__(self, other):
        return (type(self) is type(other) and self.spacing == other.spacing
                and self.data.dtype == other.data.dtype
                and np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class LabelVolume(Volume):
    """Ground-truth (or predicted) labels restricted to {0, 1, 2, 4}.

    0 is background, 1 NCR/NET, 2 edema, 4 enhancing tumour.
    """

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise UsageError(f"label data must be a non-empty 3D array, got shape {data.shape}")
        if data.dtype.kind == "f":
            if not np.all(np.isfinite(data)) or np.any(data != np.round(data)):
                raise FormatError("label volume contains non-integer values")
        bad = ~np.isin(data, LABEL_ALPHABET)
        if bad.any():
            found = sorted(set(np.unique(data[bad]).tolist()))
            raise FormatError(f"label values outside {{0, 1, 2, 4}}: {found[:8]}")
        object.__setattr__(self, "data", _frozen(data.astype(np.uint8)))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))


@dataclass(frozen=True, eq=False)
class OneHotStack:
    """Per-voxel exclusive channel encoding, shape ``(nx, ny, nz, C)``.

    Exactly one channel is hot at every voxel.
    """

    data: np.ndarray
    channel_names: tuple
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        names = tuple(self.channel_names)
        if data.ndim != 4 or min(data.shape) < 1:
            raise UsageError(f"one-hot data must be 4D, got shape {data.shape}")
        if data.shape[3] != len(names):
            raise UsageError(f"{data.shape[3]} channels but {len(names)} channel names")
        if not np.isin(data, (0, 1)).all() or not np.all(data.sum(axis=3) == 1):
            raise UsageError("one-hot data is not a per-voxel partition")
        object.__setattr__(self, "data", _frozen(data.astype(np.uint8)))
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self):
        return tuple(int(n) for n in self.data.shape[:3])

    @property
    def channels(self):
        return int(self.data.shape[3])

    @property
    def flat(self):
        # channel-fastest per voxel, voxels x-fastest
        return self.data.transpose(3, 0, 1, 2).ravel(order="F")

    def __eq__(self, other):
        return (type(self) is type(other) and self.channel_names == other.channel_names
                and self.spacing == other.spacing and np.array_equal(self.data, other.data))


def flat_index(c, dims):
    x, y, z = c
    nx, ny, _ = dims
    return x + nx * (y + ny * z)


def coord(index, dims):
    nx, ny, nz = dims
    if not 0 <= index < nx * ny * nz:
        raise UsageError(f"flat index {index} out of range for dims {tuple(dims)}")
    x = index % nx
    y = (index // nx) % ny
    z = index // (nx * ny)
    return (x, y, z)


def in_bounds(c, dims):
    return all(0 <= ci < n for ci, n in zip(c, dims))


def neighbors26(c, dims):
    """In-bounds voxels at Chebyshev distance 1 from ``c``.

    Offsets that fall outside the grid are dropped; callers that need the
    zero halo treat those as label 0.
    """
    if not in_bounds(c, dims):
        raise UsageError(f"coordinate {tuple(c)} outside dims {tuple(dims)}")
    x, y, z = c
    out = []
    for dx, dy, dz in OFFSETS26:
        n = (x + dx, y + dy, z + dz)
        if in_bounds(n, dims):
            out.append(n)
    return out

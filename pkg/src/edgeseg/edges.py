"""Edge extraction from ground-truth label volumes.

The filter is the 3x3x3 stencil with 26 at the centre and -1 everywhere
else. Convolving a label volume with it and keeping the source label
wherever the response is nonzero yields a one-voxel-thick inner boundary of
every labelled region. A voxel whose neighbours' labels happen to sum to
exactly 26 times its own label gives a zero response even though it sits on
a boundary; ``oracle_boundary`` has no such blind spot and exists to measure
that gap.
"""
from __future__ import annotations

import numpy as np

from .errors import UsageError
from .volgrid import OFFSETS26, LabelVolume

CENTER_WEIGHT = 26


def _box_sum27(a):
    """Sum over the zero-padded 3x3x3 window around every voxel (exact ints)."""
    p = np.pad(a.astype(np.int32), 1)
    # separable: three 1D sums of width 3
    p = p[:-2] + p[1:-1] + p[2:]
    p = p[:, :-2] + p[:, 1:-1] + p[:, 2:]
    p = p[:, :, :-2] + p[:, :, 1:-1] + p[:, :, 2:]
    return p


def laplacian26_response(labels):
    """Response of the 26/-1 filter over the zero-padded label grid.

    Returned as an int32 array ``T`` with
    ``T[c] = 26 * v[c] - sum(v[n] for n in 26-neighbours of c)``.
    """
    v = np.asarray(labels.data).astype(np.int32)
    # 26*v - (box27 - v) == 27*v - box27
    return (CENTER_WEIGHT + 1) * v - _box_sum27(v)


def reconstruct_edges(labels, response):
    """Keep the source label wherever the response is nonzero."""
    response = np.asarray(response)
    if response.shape != labels.dims:
        raise UsageError(f"response shape {response.shape} does not match labels {labels.dims}")
    out = np.where(response != 0, labels.data, 0).astype(np.uint8)
    return LabelVolume(out, labels.spacing)


def extract_edges(labels):
    """Edge map of a label volume: filter response, then reconstruction."""
    return reconstruct_edges(labels, laplacian26_response(labels))


def oracle_boundary(labels):
    """Labelled voxels with at least one differing 26-neighbour.

    Outside the grid counts as label 0. Used to audit ``extract_edges``.
    """
    v = np.asarray(labels.data)
    nx, ny, nz = v.shape
    p = np.pad(v, 1)
    differs = np.zeros(v.shape, dtype=bool)
    for dx, dy, dz in OFFSETS26:
        shifted = p[1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny, 1 + dz:1 + dz + nz]
        differs |= shifted != v
    out = np.where(differs & (v != 0), v, 0).astype(np.uint8)
    return LabelVolume(out, labels.spacing)


def cancellation_voxels(labels):
    """Boolean mask of voxels where ``26 * v == sum of 26-neighbour labels``.

    These are exactly the labelled boundary voxels the filter cannot see.
    """
    v = np.asarray(labels.data)
    return (laplacian26_response(labels) == 0) & (v != 0)

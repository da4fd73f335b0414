"""Z-score normalisation of a modality over its brain region."""
from __future__ import annotations

import numpy as np

from .errors import DomainError
from .volgrid import Volume


def brain_mask(vol):
    """Boolean mask of the brain region: every nonzero voxel.

    Skull-stripped scans have an exact-zero background, so "nonzero" is the
    support of the brain.
    """
    return np.asarray(vol.data) != 0


def brain_stats(vol):
    """Population mean and std over the brain mask, two-pass in float64."""
    values = np.asarray(vol.data, dtype=np.float64)[brain_mask(vol)]
    if values.size < 2:
        raise DomainError("no brain region")
    mean = values.sum() / values.size
    var = np.square(values - mean).sum() / values.size
    return float(mean), float(np.sqrt(var))


def zscore_normalize(vol):
    """Return a copy of ``vol`` whose brain voxels have mean 0 and std 1.

    Background voxels stay exactly 0. Raises DomainError when the mask has
    fewer than two voxels or the brain intensities are constant.
    """
    mean, std = brain_stats(vol)
    if not std > 0:
        raise DomainError("degenerate intensity distribution")
    mask = brain_mask(vol)
    out = np.zeros(vol.dims, dtype=np.float64)
    out[mask] = (np.asarray(vol.data, dtype=np.float64)[mask] - mean) / std
    return Volume(out, vol.spacing)

"""Dice, Hausdorff-95 and per-patient evaluation over BraTS regions.

Point sets are voxel centres scaled by the voxel spacing (mm). Nearest
neighbour distances come from an exact Euclidean distance transform over the
bounding box of both sets, which is exact because the nearest point of ``Y``
always lies inside that box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DomainError, UsageError

REGIONS = ("WT", "TC", "ET")
REGION_LABELS = {"WT": (1, 2, 4), "TC": (1, 4), "ET": (4,)}

# what the BraTS online engine reports when a region is predicted but absent
# in the ground truth (or vice versa)
DICE_PENALTY = 0.0
HD95_PENALTY = 373.12866


@dataclass(frozen=True)
class MetricsRecord:
    subject: str
    region: str
    dice: float
    hd95: float
    penalized: bool


def region_masks(labels):
    """WT / TC / ET boolean masks from a label volume (nested by construction)."""
    v = np.asarray(getattr(labels, "data", labels))
    return {r: np.isin(v, REGION_LABELS[r]) for r in REGIONS}


def dice(pred, gt):
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise UsageError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    denom = (tp + fp) + (tp + fn)
    if denom == 0:
        raise DomainError("dice is undefined when both masks are empty")
    return 2.0 * tp / denom


def _as_points(points):
    pts = np.asarray(points)
    if pts.ndim != 2 or pts.shape[1] != 3:
        pts = pts.reshape(-1, 3)
    return pts


def _nearest_grid(x, y, spacing):
    """Distances from each integer point of ``x`` to the nearest point of ``y``."""
    lo = np.minimum(x.min(axis=0), y.min(axis=0))
    hi = np.maximum(x.max(axis=0), y.max(axis=0))
    free = np.ones(tuple(hi - lo + 1), dtype=bool)
    free[tuple((y - lo).T)] = False
    dist = ndimage.distance_transform_edt(free, sampling=spacing)
    return dist[tuple((x - lo).T)]


def directed_distances(x, y, spacing=(1.0, 1.0, 1.0)):
    """For every point of ``x``, distance (mm) to the nearest point of ``y``, ascending."""
    x = _as_points(x)
    y = _as_points(y)
    if len(x) == 0 or len(y) == 0:
        raise DomainError("directed distance needs two nonempty point sets")
    spacing = tuple(float(s) for s in spacing)
    if np.issubdtype(x.dtype, np.integer) and np.issubdtype(y.dtype, np.integer):
        d = _nearest_grid(x.astype(np.int64), y.astype(np.int64), spacing)
    else:
        s = np.asarray(spacing)
        d, _ = cKDTree(y * s).query(x * s)
    return np.sort(np.asarray(d, dtype=np.float64))


def percentile(sorted_values, p):
    """Linear interpolation at fractional index ``p * (N - 1)`` of an ascending list."""
    v = np.asarray(sorted_values, dtype=np.float64)
    if v.size == 0:
        raise DomainError("percentile of an empty list")
    if not 0.0 <= p <= 1.0:
        raise UsageError(f"p must lie in [0, 1], got {p}")
    h = p * (v.size - 1)
    lo = math.floor(h)
    if lo + 1 >= v.size:
        return float(v[-1])
    return float(v[lo] + (h - lo) * (v[lo + 1] - v[lo]))


def hd95(x, y, spacing=(1.0, 1.0, 1.0), p=0.95):
    """Bidirectional Hausdorff distance at the 95th percentile.

    Each directed distance list is reduced to its own percentile before
    taking the maximum of the two directions.
    """
    forward = percentile(directed_distances(x, y, spacing), p)
    backward = percentile(directed_distances(y, x, spacing), p)
    return max(forward, backward)


def mask_points(mask):
    return np.argwhere(np.asarray(mask, dtype=bool))


def hd95_masks(pred, gt, spacing=(1.0, 1.0, 1.0)):
    return hd95(mask_points(pred), mask_points(gt), spacing)


def evaluate_region(pred, gt, spacing=(1.0, 1.0, 1.0)):
    """(dice, hd95, penalized) for one pair of region masks."""
    pred_empty = not np.any(pred)
    gt_empty = not np.any(gt)
    if pred_empty and gt_empty:
        return 1.0, 0.0, False
    if pred_empty or gt_empty:
        return DICE_PENALTY, HD95_PENALTY, True
    return dice(pred, gt), hd95_masks(pred, gt, spacing), False


def evaluate_patient(pred, gt, subject):
    """One MetricsRecord per region (WT, TC, ET) for a predicted label volume."""
    if pred.dims != gt.dims:
        raise UsageError(f"prediction dims {pred.dims} do not match ground truth {gt.dims}")
    if not np.allclose(pred.spacing, gt.spacing):
        raise UsageError(f"prediction spacing {pred.spacing} does not match ground truth {gt.spacing}")
    pm, gm = region_masks(pred), region_masks(gt)
    records = []
    for r in REGIONS:
        d, h, pen = evaluate_region(pm[r], gm[r], gt.spacing)
        records.append(MetricsRecord(str(subject), r, d, h, pen))
    return records

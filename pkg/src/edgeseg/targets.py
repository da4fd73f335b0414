"""One-hot target stacks and decoding of SoftMax outputs back to labels."""
from __future__ import annotations

import numpy as np

from .errors import UsageError
from .volgrid import LabelVolume, OneHotStack

REGION_CHANNELS = ("background", "ncr_net", "edema", "et")
EDGE_CHANNELS = (
    "background",
    "ncr_net_edge",
    "edema_edge",
    "et_edge",
    "ncr_net_interior",
    "edema_interior",
    "et_interior",
)

# BraTS label -> 4-class channel
_LABEL_TO_CLASS = np.zeros(5, dtype=np.uint8)
_LABEL_TO_CLASS[[0, 1, 2, 4]] = [0, 1, 2, 3]

CLASS_TO_LABEL4 = np.array([0, 1, 2, 4], dtype=np.uint8)
# edge and interior classes of a region both fuse to the region's label
CLASS_TO_LABEL7 = np.array([0, 1, 2, 4, 1, 2, 4], dtype=np.uint8)


def channel_names_for(channels):
    if channels == 4:
        return REGION_CHANNELS
    if channels == 7:
        return EDGE_CHANNELS
    return tuple(f"channel_{i}" for i in range(channels))


def label_classes(labels):
    """Map BraTS labels {0,1,2,4} to class indices {0,1,2,3}."""
    return _LABEL_TO_CLASS[np.asarray(labels.data)]


def _stack(classes, channels, spacing):
    data = (classes[..., None] == np.arange(channels, dtype=classes.dtype)).astype(np.uint8)
    return OneHotStack(data, channel_names_for(channels), spacing)


def onehot_regions(labels):
    """4-channel stack: background, NCR/NET, edema, ET."""
    return _stack(label_classes(labels), 4, labels.spacing)


def onehot_regions_edges(labels, edges):
    """7-channel stack: background, three edge channels, three interiors.

    An edge voxel is hot only in its edge channel, so interior channels hold
    the labelled voxels that are not edges and the channels stay a partition.
    """
    if edges.dims != labels.dims:
        raise UsageError(f"edge dims {edges.dims} do not match label dims {labels.dims}")
    lab = np.asarray(labels.data)
    edg = np.asarray(edges.data)
    if np.any((edg != 0) & (edg != lab)):
        raise UsageError("edge volume is inconsistent with labels (edge voxel carries a different label)")
    region = label_classes(labels)
    classes = np.where(edg != 0, region, np.where(region != 0, region + 3, 0)).astype(np.uint8)
    return _stack(classes, 7, labels.spacing)


def argmax_labels(probs):
    """Per-voxel index of the largest channel; ties go to the lowest index."""
    probs = np.asarray(probs)
    if probs.ndim < 1:
        raise UsageError("probability stack needs a channel axis")
    if not np.all(np.isfinite(probs)):
        raise UsageError("probability stack contains non-finite values")
    # np.argmax returns the first maximal index
    return np.argmax(probs, axis=-1).astype(np.uint8)


def fuse_prediction(classes, channels=7, spacing=(1.0, 1.0, 1.0)):
    """Turn class indices from a 4- or 7-channel model into a LabelVolume."""
    classes = np.asarray(classes)
    table = {4: CLASS_TO_LABEL4, 7: CLASS_TO_LABEL7}.get(channels)
    if table is None:
        raise UsageError(f"channels must be 4 or 7, got {channels}")
    if classes.size and (classes.min() < 0 or classes.max() >= channels):
        raise UsageError(f"class indices must lie in [0, {channels})")
    return LabelVolume(table[classes.astype(np.intp)], spacing)

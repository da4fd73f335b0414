"""A linear SoftMax voxel classifier trained with the focal loss.

This stands in for the convolutional segmentation networks: it is small
enough to check gradients by finite differences, yet it is trained on the
same 4-channel (regions) or 7-channel (edges + regions) targets and scored
through the same label fusion and metrics.

Nine features per voxel: for each of FLAIR, T1CE and T2 the normalised
value, its zero-padded 3x3x3 mean, and its central-difference gradient
magnitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .edges import extract_edges
from .errors import FormatError, UsageError
from .focal import EPS, ClassWeights, focal_loss_and_grad, softmax
from .nifti import atomic_write_bytes
from .targets import fuse_prediction
from .volgrid import LabelVolume

N_MODALITIES = 3
N_FEATURES = 9
FEATURE_NAMES = tuple(
    f"{kind}_{mod}" for kind in ("value", "mean3", "gradmag") for mod in ("flair", "t1ce", "t2")
)

# per-label grey levels for overlays; edges are drawn pure red
OVERLAY_GREY = {0: 0, 1: 85, 2: 170, 4: 255}
EDGE_RGB = (255, 0, 0)


@dataclass(frozen=True, eq=False)
class FeatureVolume:
    data: np.ndarray  # (nx, ny, nz, F), standardised
    stats: np.ndarray  # (F, 2): mean, std used for standardisation

    @property
    def dims(self):
        return tuple(int(n) for n in self.data.shape[:3])

    @property
    def n_features(self):
        return int(self.data.shape[3])


@dataclass
class ToyModel:
    weights: np.ndarray  # (C, F)
    bias: np.ndarray  # (C,)
    feature_stats: np.ndarray  # (F, 2)

    @property
    def n_classes(self):
        return int(self.weights.shape[0])

    @property
    def n_features(self):
        return int(self.weights.shape[1])

    @classmethod
    def zeros(cls, n_classes, n_features=N_FEATURES, feature_stats=None):
        if feature_stats is None:
            feature_stats = np.column_stack([np.zeros(n_features), np.ones(n_features)])
        return cls(np.zeros((n_classes, n_features)), np.zeros(n_classes),
                   np.asarray(feature_stats, dtype=np.float64))

    def logits(self, x):
        return x @ self.weights.T + self.bias


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int = 4096
    seed: int = 0
    weights: ClassWeights | None = field(default=None)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise UsageError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise UsageError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size < 1:
            raise UsageError(f"batch_size must be positive, got {self.batch_size}")


def box_mean3(a):
    """Mean over the zero-padded 3x3x3 neighbourhood (divides by 27 everywhere)."""
    p = np.pad(np.asarray(a, dtype=np.float64), 1)
    p = p[:-2] + p[1:-1] + p[2:]
    p = p[:, :-2] + p[:, 1:-1] + p[:, 2:]
    p = p[:, :, :-2] + p[:, :, 1:-1] + p[:, :, 2:]
    return p / 27.0


def gradient_magnitude(a):
    """Central-difference gradient magnitude with a zero halo."""
    p = np.pad(np.asarray(a, dtype=np.float64), 1)
    gx = (p[2:, 1:-1, 1:-1] - p[:-2, 1:-1, 1:-1]) / 2.0
    gy = (p[1:-1, 2:, 1:-1] - p[1:-1, :-2, 1:-1]) / 2.0
    gz = (p[1:-1, 1:-1, 2:] - p[1:-1, 1:-1, :-2]) / 2.0
    return np.sqrt(gx * gx + gy * gy + gz * gz)


def raw_features(modalities):
    """Unstandardised (nx, ny, nz, 9) feature array from three volumes."""
    if len(modalities) != N_MODALITIES:
        raise UsageError(f"expected {N_MODALITIES} modalities, got {len(modalities)}")
    dims = {m.dims for m in modalities}
    if len(dims) != 1:
        raise UsageError(f"modality dims differ: {sorted(dims)}")
    vals = [np.asarray(m.data, dtype=np.float64) for m in modalities]
    feats = vals + [box_mean3(v) for v in vals] + [gradient_magnitude(v) for v in vals]
    return np.stack(feats, axis=-1)


def feature_stats(raw_list):
    """Per-feature (mean, std) pooled over several raw feature arrays."""
    flat = [np.asarray(r).reshape(-1, N_FEATURES) for r in raw_list]
    n = sum(len(f) for f in flat)
    mean = sum(f.sum(axis=0) for f in flat) / n
    var = sum(np.square(f - mean).sum(axis=0) for f in flat) / n
    std = np.sqrt(var)
    # a constant feature carries no information; keep it at zero
    std[std == 0] = 1.0
    return np.column_stack([mean, std])


def standardize(raw, stats):
    stats = np.asarray(stats, dtype=np.float64)
    return (raw - stats[:, 0]) / stats[:, 1]


def extract_features(modalities, stats=None):
    """Standardised FeatureVolume; uses the volume's own statistics if none given."""
    raw = raw_features(modalities)
    if stats is None:
        stats = feature_stats([raw])
    stats = np.asarray(stats, dtype=np.float64)
    if stats.shape != (N_FEATURES, 2):
        raise UsageError(f"feature stats must have shape ({N_FEATURES}, 2), got {stats.shape}")
    return FeatureVolume(standardize(raw, stats), stats)


def batch_loss_and_grad(model, x, y, weights):
    """Mean focal loss over a batch and its gradient w.r.t. (weights, bias)."""
    loss, g = focal_loss_and_grad(y, model.logits(x), weights)
    g /= len(x)
    return float(loss.mean()), g.T @ x, g.sum(axis=0)


@numba.njit(cache=True)
def _sgd_batch(x, cls, start, stop, w, b, alpha, gamma, gw, gb):
    """Mean focal loss of one batch; fills ``gw``/``gb`` with its gradient.

    Same math as ``focal.focal_loss_and_grad`` with one-hot targets given
    as class indices, fused per row to avoid array temporaries.
    """
    n_cls, n_feat = w.shape
    z = np.empty(n_cls)
    p = np.empty(n_cls)
    dp = np.empty(n_cls)
    gw[:] = 0.0
    gb[:] = 0.0
    sq = gamma == 2.0
    total = 0.0
    for i in range(start, stop):
        zmax = -np.inf
        for c in range(n_cls):
            s = b[c]
            for f in range(n_feat):
                s += w[c, f] * x[i, f]
            z[c] = s
            if s > zmax:
                zmax = s
        esum = 0.0
        for c in range(n_cls):
            p[c] = math.exp(z[c] - zmax)
            esum += p[c]
        k = cls[i]
        sdp = 0.0
        for c in range(n_cls):
            pr = p[c] / esum
            p[c] = pr
            pc = min(max(pr, EPS), 1.0 - EPS)
            q = 1.0 - pc
            if c == k:
                lp = math.log(pc)
                qg = q * q if sq else q ** gamma
                total -= alpha[c] * qg * lp
                if gamma == 0.0:
                    d = -alpha[c] / pc
                else:
                    d = alpha[c] * (gamma * (q if sq else q ** (gamma - 1.0)) * lp - qg / pc)
            else:
                lq = math.log1p(-pc)
                pg = pc * pc if sq else pc ** gamma
                total -= pg * lq
                if gamma == 0.0:
                    d = 1.0 / q
                else:
                    d = pg / q - gamma * (pc if sq else pc ** (gamma - 1.0)) * lq
            if pr < EPS or pr > 1.0 - EPS:
                d = 0.0
            dp[c] = d
            sdp += d * pr
        for c in range(n_cls):
            g = p[c] * (dp[c] - sdp)
            gb[c] += g
            for f in range(n_feat):
                gw[c, f] += g * x[i, f]
    n = stop - start
    for c in range(n_cls):
        gb[c] /= n
        for f in range(n_feat):
            gw[c, f] /= n
    return total / n


def _stack_cases(cases):
    if not cases:
        raise UsageError("no training cases")
    n_feat = {fv.n_features for fv, _ in cases}
    n_cls = {t.channels for _, t in cases}
    if len(n_feat) != 1 or len(n_cls) != 1:
        raise UsageError("training cases disagree on feature or class counts")
    for fv, t in cases:
        if fv.dims != t.dims:
            raise UsageError(f"feature dims {fv.dims} do not match target dims {t.dims}")
    stats = cases[0][0].stats
    if any(not np.array_equal(fv.stats, stats) for fv, _ in cases):
        raise UsageError("training cases were standardised with different statistics")
    x = np.concatenate([fv.data.reshape(-1, fv.n_features) for fv, _ in cases])
    # targets are partitions, so the hot channel index carries everything
    cls = np.concatenate([np.argmax(t.data.reshape(-1, t.channels), axis=1) for _, t in cases])
    return np.ascontiguousarray(x, dtype=np.float64), cls.astype(np.int64), stats, cases[0][1].channels


def train(cases, cfg=TrainConfig()):
    """Mini-batch gradient descent on the focal loss from a zero model.

    ``cases`` is a list of ``(FeatureVolume, OneHotStack)`` pairs. Returns
    ``(model, trace)`` where ``trace[e]`` is the mean batch loss seen during
    epoch ``e``. Voxel order per epoch comes from a PCG64 stream seeded with
    ``cfg.seed``.
    """
    x, cls, stats, n_classes = _stack_cases(cases)
    weights = cfg.weights or ClassWeights.defaults(n_classes)
    if weights.channels != n_classes:
        raise UsageError(f"{weights.channels} class weights for {n_classes} classes")
    model = ToyModel.zeros(n_classes, x.shape[1], stats)
    alpha = np.asarray(weights.alpha, dtype=np.float64)
    gw = np.zeros_like(model.weights)
    gb = np.zeros_like(model.bias)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    trace = []
    n = len(x)
    xs = np.empty_like(x)
    cs = np.empty_like(cls)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        # one gather per epoch instead of scattered reads inside every batch
        np.take(x, order, axis=0, out=xs)
        np.take(cls, order, out=cs)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            stop = min(start + cfg.batch_size, n)
            loss = _sgd_batch(xs, cs, start, stop, model.weights, model.bias, alpha, weights.gamma, gw, gb)
            total += loss * (stop - start)
            model.weights -= cfg.learning_rate * gw
            model.bias -= cfg.learning_rate * gb
        trace.append(total / n)
    return model, trace


def predict(model, features):
    """Per-voxel class probabilities, shape (nx, ny, nz, C)."""
    if features.n_features != model.n_features:
        raise UsageError(f"model expects {model.n_features} features, got {features.n_features}")
    x = features.data.reshape(-1, features.n_features)
    return softmax(model.logits(x)).reshape(features.dims + (model.n_classes,))


def _fmt(v):
    return f"{float(v):.17g}"


def model_text(model):
    lines = [f"{model.n_classes} {model.n_features}"]
    for w, b in zip(model.weights, model.bias):
        lines.append(" ".join(_fmt(v) for v in list(w) + [b]))
    for mean, std in model.feature_stats:
        lines.append(f"{_fmt(mean)} {_fmt(std)}")
    return "\n".join(lines) + "\n"


def save_model(model, path):
    atomic_write_bytes(path, model_text(model).encode("ascii"))


def load_model(path):
    with open(path) as f:
        lines = [ln.split() for ln in f.read().splitlines() if ln.strip()]
    try:
        c, nf = (int(v) for v in lines[0])
        rows = np.array([[float(v) for v in ln] for ln in lines[1:1 + c]])
        stats = np.array([[float(v) for v in ln] for ln in lines[1 + c:1 + c + nf]])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed model file ({exc})") from None
    if c not in (4, 7) or rows.shape != (c, nf + 1) or stats.shape != (nf, 2) or len(lines) != 1 + c + nf:
        raise FormatError(f"{path}: model file does not match its 'C F' header")
    if not np.all(np.isfinite(rows)):
        raise FormatError(f"{path}: non-finite model parameters")
    return ToyModel(rows[:, :nf].copy(), rows[:, nf].copy(), stats)


def _check_slice(dims, z):
    if not 0 <= z < dims[2]:
        raise UsageError(f"slice z={z} outside 0..{dims[2] - 1}")


def activation_slice_pgm(probs, channel, z):
    probs = np.asarray(probs)
    if not 0 <= channel < probs.shape[3]:
        raise UsageError(f"channel {channel} outside 0..{probs.shape[3] - 1}")
    _check_slice(probs.shape, z)
    p = np.clip(probs[:, :, z, channel], 0.0, 1.0)
    # round half up; image rows are y, columns are x
    img = np.floor(255.0 * p + 0.5).astype(np.uint8).T
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def export_activation_slice(probs, channel, z, path):
    """Write one probability channel of slice ``z`` as an 8-bit PGM."""
    atomic_write_bytes(path, activation_slice_pgm(probs, channel, z))


def edge_overlay_ppm(labels, edges, z):
    if labels.dims != edges.dims:
        raise UsageError(f"edge dims {edges.dims} do not match label dims {labels.dims}")
    _check_slice(labels.dims, z)
    lab = np.asarray(labels.data)[:, :, z].T
    edg = np.asarray(edges.data)[:, :, z].T
    grey = np.zeros(lab.shape, dtype=np.uint8)
    for label, level in OVERLAY_GREY.items():
        grey[lab == label] = level
    rgb = np.repeat(grey[..., None], 3, axis=2)
    rgb[edg != 0] = EDGE_RGB
    h, w = lab.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def export_edge_overlay(labels, edges, z, path):
    """Write slice ``z`` as a PPM: grey regions with edge voxels in red."""
    atomic_write_bytes(path, edge_overlay_ppm(labels, edges, z))


def edges_from_prediction(classes, channels, spacing=(1.0, 1.0, 1.0)):
    """Edge volume implied by predicted classes.

    A 7-class model predicts edges directly (classes 1-3); for a 4-class
    model the edges are extracted from the fused labels.
    """
    labels = fuse_prediction(classes, channels, spacing)
    if channels == 7:
        cls = np.asarray(classes)
        return labels, LabelVolume(np.where((cls >= 1) & (cls <= 3), labels.data, 0), spacing)
    return labels, extract_edges(labels)

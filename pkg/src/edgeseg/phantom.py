"""Deterministic synthetic brain-tumour phantoms.

Each phantom is a ball of "healthy brain" with three concentric ellipsoids:
edema (label 2) outermost, then NCR/NET (label 1), then enhancing tumour
(label 4) at the core. Three pseudo-modalities follow the usual MR contrast:
edema is brightest in FLAIR, enhancing tumour in T1CE and the necrotic core
in T2. Outside the brain every modality is exactly 0.

All randomness comes from a SplitMix64 stream with Box-Muller normals, so
outputs depend only on the seed and the parameters.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .nifti import write_nifti
from .volgrid import LabelVolume, Volume

MODALITIES = ("flair", "t1ce", "t2")

# base intensity per region and modality, before noise
INTENSITY_LEVELS = {
    "healthy": {"flair": 1.0, "t1ce": 1.0, "t2": 1.0},
    "edema": {"flair": 2.2, "t1ce": 1.0, "t2": 1.6},
    "ncr_net": {"flair": 1.6, "t1ce": 0.5, "t2": 2.4},
    "et": {"flair": 1.8, "t1ce": 2.4, "t2": 1.4},
}

BRAIN_RADIUS_FRAC = 0.46
OUTER_RADIUS_FRAC = (0.16, 0.22)
MIN_OUTER_RADIUS = 6.0
NEST_MARGIN = 2.0
EMPTY_ET_STRIDE = 5

_MASK64 = (1 << 64) - 1
_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_MUL1 = 0xBF58476D1CE4E5B9
_SM_MUL2 = 0x94D049BB133111EB


class SplitMix64:
    """SplitMix64 generator with vectorised block draws."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next_u64(self):
        self.state = (self.state + _SM_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _SM_MUL1) & _MASK64
        z = ((z ^ (z >> 27)) * _SM_MUL2) & _MASK64
        return z ^ (z >> 31)

    def u64(self, n):
        """Next ``n`` outputs as a uint64 array (same values as repeated next_u64)."""
        # state after k steps is seed + k * gamma (mod 2**64)
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * np.uint64(_SM_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_SM_MUL1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_SM_MUL2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _SM_GAMMA) & _MASK64
        return z

    def uniform(self, n):
        """``n`` doubles in [0, 1) from the top 53 bits of each output."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normal(self, n):
        """``n`` standard normals by Box-Muller.

        Pairs (u1, u2) are consumed in order; each pair yields
        r*cos(2*pi*u2) then r*sin(2*pi*u2) with r = sqrt(-2 ln(1 - u1)).
        An odd trailing normal is dropped.
        """
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * math.pi * u[:, 1]
        out = np.empty((pairs, 2))
        out[:, 0] = r * np.cos(theta)
        out[:, 1] = r * np.sin(theta)
        return out.ravel()[:n]


@dataclass(frozen=True)
class Geometry:
    center: tuple
    outer_radii: tuple   # edema extent (whole tumour)
    middle_radii: tuple  # tumour core extent
    inner_radii: tuple   # enhancing tumour


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    size: int = 64
    noise_sigma: float = 0.05
    geometry: Geometry | None = None
    empty_et: bool = False


def brain_radius(size):
    return BRAIN_RADIUS_FRAC * size


def brain_center(size):
    return ((size - 1) / 2.0,) * 3


def random_geometry(rng, size):
    """Draw concentric nested ellipsoids inside the brain ball."""
    u = rng.uniform(12)
    lo, hi = OUTER_RADIUS_FRAC
    outer = np.maximum(size * (lo + (hi - lo) * u[0:3]), MIN_OUTER_RADIUS)
    middle = outer - np.maximum(NEST_MARGIN, outer * (0.25 + 0.15 * u[3:6]))
    inner = middle - np.maximum(NEST_MARGIN, outer * (0.2 + 0.1 * u[6:9]))
    slack = max(0.0, brain_radius(size) - 1.0 - float(outer.max()))
    offset = (2.0 * u[9:12] - 1.0) * slack / math.sqrt(3.0)
    center = np.asarray(brain_center(size)) + offset
    return Geometry(tuple(center.tolist()), tuple(outer.tolist()),
                    tuple(middle.tolist()), tuple(inner.tolist()))


def check_geometry(geom, size):
    if size < 16:
        raise UsageError(f"phantom size must be at least 16, got {size}")
    outer, middle, inner = (np.asarray(r, dtype=float) for r in
                            (geom.outer_radii, geom.middle_radii, geom.inner_radii))
    if inner.min() < 1.0:
        raise UsageError("enhancing-tumour radii must be at least 1 voxel")
    if np.any(outer - middle < NEST_MARGIN) or np.any(middle - inner < NEST_MARGIN):
        raise UsageError(f"ellipsoids must be nested with margins of at least {NEST_MARGIN} voxels")
    reach = np.linalg.norm(np.asarray(geom.center) - brain_center(size)) + outer.max()
    if reach >= brain_radius(size):
        raise UsageError("tumour ellipsoids extend outside the brain ball")


def _inside(coords, center, radii):
    return sum(((c - m) / r) ** 2 for c, m, r in zip(coords, center, radii)) <= 1.0


def generate_phantom(spec):
    """Return ``(flair, t1ce, t2, labels)`` for a phantom spec.

    With ``spec.empty_et`` the core is labelled NCR/NET but keeps its
    enhancing T1CE contrast, the way unlabelled enhancement shows up in real
    cohorts; a model that predicts ET there is penalised.
    """
    size = int(spec.size)
    if size < 16:
        raise UsageError(f"phantom size must be at least 16, got {size}")
    if spec.noise_sigma < 0:
        raise UsageError("noise_sigma must be nonnegative")
    rng = SplitMix64(spec.seed)
    geom = spec.geometry if spec.geometry is not None else random_geometry(rng, size)
    check_geometry(geom, size)

    coords = np.meshgrid(*(np.arange(size, dtype=np.float64),) * 3, indexing="ij")
    bc = brain_center(size)
    brain = sum((c - m) ** 2 for c, m in zip(coords, bc)) <= brain_radius(size) ** 2
    outer = _inside(coords, geom.center, geom.outer_radii)
    middle = _inside(coords, geom.center, geom.middle_radii)
    inner = _inside(coords, geom.center, geom.inner_radii)

    labels = np.zeros((size,) * 3, dtype=np.uint8)
    labels[outer] = 2
    labels[middle] = 1
    labels[inner] = 1 if spec.empty_et else 4

    tissue = {
        "healthy": brain & ~outer,
        "edema": outer & ~middle,
        "ncr_net": middle & ~inner,
        "et": inner,
    }
    vols = []
    for mod in MODALITIES:
        base = np.zeros(labels.shape)
        for name, m in tissue.items():
            base[m] = INTENSITY_LEVELS[name][mod]
        noise = rng.normal(size ** 3).reshape(labels.shape, order="F")
        vals = np.where(brain, base + spec.noise_sigma * noise, 0.0)
        vols.append(Volume(vals))
    return vols[0], vols[1], vols[2], LabelVolume(labels)


def case_name(index):
    return f"phantom_{index:03d}"


def generate_cohort(n, seed, out_dir, size=64, noise_sigma=0.05):
    """Write ``n`` phantom cases under ``out_dir`` and return their directories.

    Case ``i`` uses seed ``seed + i``; every fifth case (indices 0, 5, ...)
    has no enhancing-tumour label.
    """
    if n < 1:
        raise UsageError(f"cohort size must be at least 1, got {n}")
    os.makedirs(out_dir, exist_ok=True)
    dirs = []
    for i in range(n):
        spec = PhantomSpec(seed=(seed + i) & _MASK64, size=size, noise_sigma=noise_sigma,
                           empty_et=(i % EMPTY_ET_STRIDE == 0))
        flair, t1ce, t2, labels = generate_phantom(spec)
        d = os.path.join(out_dir, case_name(i))
        os.makedirs(d, exist_ok=True)
        for mod, vol in zip(MODALITIES, (flair, t1ce, t2)):
            write_nifti(vol, os.path.join(d, f"{mod}.nii"))
        write_nifti(labels, os.path.join(d, "seg.nii"))
        dirs.append(d)
    return dirs

import math

import numpy as np
import pytest

from edgeseg.errors import UsageError
from edgeseg.nifti import read_nifti
from edgeseg.metrics import region_masks
from edgeseg.phantom import (
    INTENSITY_LEVELS,
    MODALITIES,
    Geometry,
    PhantomSpec,
    SplitMix64,
    brain_center,
    brain_radius,
    generate_cohort,
    generate_phantom,
)


class TestSplitMix64:
    def test_reference_outputs_seed0(self):
        r = SplitMix64(0)
        assert r.next_u64() == 0xE220A8397B1DCDAF
        assert r.next_u64() == 0x6E789E6AA1B965F4

    def test_vectorised_matches_scalar(self):
        a, b = SplitMix64(12345), SplitMix64(12345)
        block = b.u64(50)
        assert [a.next_u64() for _ in range(50)] == [int(v) for v in block]
        assert a.state == b.state

    def test_wraparound_seed(self):
        a, b = SplitMix64(2 ** 64 - 1), SplitMix64(2 ** 64 - 1)
        assert [a.next_u64() for _ in range(5)] == [int(v) for v in b.u64(5)]

    def test_uniform_range(self):
        u = SplitMix64(1).uniform(10000)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 0.02

    def test_box_muller_pairs(self):
        u = SplitMix64(9).uniform(4)
        z = SplitMix64(9).normal(4)
        for k in range(2):
            r = math.sqrt(-2.0 * math.log(1.0 - u[2 * k]))
            assert z[2 * k] == pytest.approx(r * math.cos(2 * math.pi * u[2 * k + 1]), rel=1e-14)
            assert z[2 * k + 1] == pytest.approx(r * math.sin(2 * math.pi * u[2 * k + 1]), rel=1e-14)

    def test_odd_count_consumes_whole_pair(self):
        r = SplitMix64(4)
        r.normal(3)
        s = SplitMix64(4)
        s.u64(4)
        assert r.state == s.state

    def test_normal_moments(self):
        z = SplitMix64(2).normal(20000)
        assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03


def test_deterministic():
    a = generate_phantom(PhantomSpec(seed=11, size=24))
    b = generate_phantom(PhantomSpec(seed=11, size=24))
    assert all(x == y for x, y in zip(a, b))


def test_different_seeds_differ():
    a = generate_phantom(PhantomSpec(seed=1, size=24))
    b = generate_phantom(PhantomSpec(seed=2, size=24))
    assert a[0] != b[0]


def test_region_census_nested():
    *_, labels = generate_phantom(PhantomSpec(seed=3, size=32))
    m = region_masks(labels)
    assert 0 < m["ET"].sum() < m["TC"].sum() < m["WT"].sum()


def test_background_exactly_zero():
    flair, t1ce, t2, labels = generate_phantom(PhantomSpec(seed=5, size=24))
    c, r = brain_center(24), brain_radius(24)
    ii, jj, kk = np.indices((24,) * 3)
    outside = (ii - c[0]) ** 2 + (jj - c[1]) ** 2 + (kk - c[2]) ** 2 > r ** 2
    for vol in (flair, t1ce, t2):
        assert np.all(vol.data[outside] == 0.0)
        assert np.all(vol.data[~outside] != 0.0)
    assert not labels.data[outside].any()


def test_noise_free_levels():
    vols = generate_phantom(PhantomSpec(seed=6, size=32, noise_sigma=0.0))
    labels = vols[3].data
    tissue = {"ncr_net": labels == 1, "edema": labels == 2, "et": labels == 4}
    for mod, vol in zip(MODALITIES, vols[:3]):
        for name, m in tissue.items():
            assert np.all(vol.data[m] == np.float32(INTENSITY_LEVELS[name][mod]))
    flair, t1ce, t2 = (v.data for v in vols[:3])
    assert flair[labels == 2].mean() > flair[labels == 4].mean()
    assert t1ce[labels == 4].mean() > t1ce[labels == 2].mean()
    assert t2[labels == 1].mean() > t2[labels == 2].mean()


def test_empty_et_keeps_enhancement():
    full = generate_phantom(PhantomSpec(seed=8, size=32, noise_sigma=0.0))
    empty = generate_phantom(PhantomSpec(seed=8, size=32, noise_sigma=0.0, empty_et=True))
    assert not (empty[3].data == 4).any()
    assert np.array_equal((empty[3].data > 0), (full[3].data > 0))
    assert empty[1] == full[1]


def test_nesting_violation():
    geom = Geometry((15.5,) * 3, (6.0,) * 3, (5.0,) * 3, (2.0,) * 3)
    with pytest.raises(UsageError):
        generate_phantom(PhantomSpec(seed=0, size=32, geometry=geom))


def test_tumour_outside_brain():
    geom = Geometry((2.0, 15.5, 15.5), (8.0,) * 3, (5.0,) * 3, (2.0,) * 3)
    with pytest.raises(UsageError):
        generate_phantom(PhantomSpec(seed=0, size=32, geometry=geom))


def test_too_small():
    with pytest.raises(UsageError):
        generate_phantom(PhantomSpec(seed=0, size=8))


def test_cohort_layout_and_empty_et(tmp_path):
    dirs = generate_cohort(5, 7, tmp_path / "c", size=24)
    assert [d.rsplit("/", 1)[1] for d in map(str, dirs)] == [f"phantom_{i:03d}" for i in range(5)]
    has_et = [(read_nifti(f"{d}/seg.nii", kind="labels").data == 4).any() for d in dirs]
    assert has_et == [False, True, True, True, True]


def test_single_case_files(tmp_path):
    (d,) = generate_cohort(1, 0, tmp_path, size=16)
    import os
    assert sorted(os.listdir(d)) == ["flair.nii", "seg.nii", "t1ce.nii", "t2.nii"]


def test_cohort_byte_identical(tmp_path):
    a = generate_cohort(2, 3, tmp_path / "a", size=16)
    b = generate_cohort(2, 3, tmp_path / "b", size=16)
    for da, db in zip(a, b):
        for name in ("flair.nii", "t1ce.nii", "t2.nii", "seg.nii"):
            assert open(f"{da}/{name}", "rb").read() == open(f"{db}/{name}", "rb").read()


def test_cohort_bad_count(tmp_path):
    with pytest.raises(UsageError):
        generate_cohort(0, 0, tmp_path)

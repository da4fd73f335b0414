import numpy as np
import pytest

from edgeseg.edges import extract_edges
from edgeseg.errors import FormatError, UsageError
from edgeseg.focal import ClassWeights
from edgeseg.metrics import dice, region_masks
from edgeseg.normalize import zscore_normalize
from edgeseg.phantom import PhantomSpec, generate_phantom
from edgeseg.targets import argmax_labels, fuse_prediction, onehot_regions, onehot_regions_edges
from edgeseg.toytrain import (
    EDGE_RGB,
    FeatureVolume,
    ToyModel,
    TrainConfig,
    _sgd_batch,
    activation_slice_pgm,
    batch_loss_and_grad,
    box_mean3,
    edge_overlay_ppm,
    edges_from_prediction,
    extract_features,
    gradient_magnitude,
    load_model,
    predict,
    raw_features,
    save_model,
    train,
)
from edgeseg.volgrid import LabelVolume, Volume


def stencil_mean(a, i, j, k):
    total = 0.0
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                x, y, z = i + di, j + dj, k + dk
                if 0 <= x < a.shape[0] and 0 <= y < a.shape[1] and 0 <= z < a.shape[2]:
                    total += a[x, y, z]
    return total / 27


def at(a, i, j, k):
    inside = all(0 <= c < n for c, n in zip((i, j, k), a.shape))
    return a[i, j, k] if inside else 0.0


class TestFeatures:
    def test_box_mean_brute_force(self, rng):
        a = rng.normal(size=(4, 5, 3))
        m = box_mean3(a)
        for idx in np.ndindex(a.shape):
            assert m[idx] == pytest.approx(stencil_mean(a, *idx), abs=1e-12)

    def test_gradient_brute_force(self, rng):
        a = rng.normal(size=(3, 4, 5))
        g = gradient_magnitude(a)
        for i, j, k in np.ndindex(a.shape):
            gx = (at(a, i + 1, j, k) - at(a, i - 1, j, k)) / 2
            gy = (at(a, i, j + 1, k) - at(a, i, j - 1, k)) / 2
            gz = (at(a, i, j, k + 1) - at(a, i, j, k - 1)) / 2
            assert g[i, j, k] == pytest.approx(np.sqrt(gx * gx + gy * gy + gz * gz), abs=1e-12)

    def test_ramp_center(self):
        a = np.add.outer(np.add.outer(np.arange(3.0), np.zeros(3)), np.zeros(3))  # value = x
        assert box_mean3(a)[1, 1, 1] == pytest.approx(1.0)
        assert gradient_magnitude(a)[1, 1, 1] == pytest.approx(1.0)

    def test_feature_layout(self, rng):
        vols = [Volume(rng.normal(size=(4, 4, 4))) for _ in range(3)]
        raw = raw_features(vols)
        assert raw.shape == (4, 4, 4, 9)
        np.testing.assert_array_equal(raw[..., 1], vols[1].data.astype(np.float64))
        np.testing.assert_allclose(raw[..., 5], box_mean3(vols[2].data))

    def test_standardised(self, rng):
        vols = [Volume(rng.normal(size=(5, 5, 5))) for _ in range(3)]
        fv = extract_features(vols)
        flat = fv.data.reshape(-1, 9)
        np.testing.assert_allclose(flat.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(flat.std(axis=0), 1, atol=1e-12)

    def test_constant_feature(self):
        vols = [Volume(np.ones((3, 3, 3)))] * 3
        fv = extract_features(vols)
        assert np.all(np.isfinite(fv.data))
        assert not fv.data[..., 0].any()

    def test_dims_mismatch(self):
        with pytest.raises(UsageError):
            raw_features([Volume(np.ones((2, 2, 2))), Volume(np.ones((2, 2, 3))), Volume(np.ones((2, 2, 2)))])

    def test_wrong_modality_count(self):
        with pytest.raises(UsageError):
            raw_features([Volume(np.ones((2, 2, 2)))])


def random_model(rng, c, f=9):
    return ToyModel(rng.normal(size=(c, f)), rng.normal(size=c), np.column_stack([np.zeros(f), np.ones(f)]))


def batch_loss(model, x, y, weights):
    return batch_loss_and_grad(model, x, y, weights)[0]


class TestGradients:
    @pytest.mark.parametrize("c", [4, 7])
    def test_batch_gradient_finite_difference(self, rng, c):
        model = random_model(rng, c)
        x = rng.normal(size=(30, 9))
        y = np.eye(c)[rng.integers(0, c, 30)]
        w = ClassWeights.defaults(c)
        _, gw, gb = batch_loss_and_grad(model, x, y, w)
        h = 1e-6
        for idx in [(0, 0), (c - 1, 8), (1, 4)]:
            model.weights[idx] += h
            up = batch_loss(model, x, y, w)
            model.weights[idx] -= 2 * h
            down = batch_loss(model, x, y, w)
            model.weights[idx] += h
            assert gw[idx] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-9)
        model.bias[1] += h
        up = batch_loss(model, x, y, w)
        model.bias[1] -= 2 * h
        down = batch_loss(model, x, y, w)
        assert gb[1] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-9)

    @pytest.mark.parametrize("c,gamma", [(4, 2.0), (7, 2.0), (4, 0.0), (4, 1.5)])
    def test_kernel_matches_numpy(self, rng, c, gamma):
        model = random_model(rng, c)
        x = rng.normal(size=(200, 9)) * 3
        cls = rng.integers(0, c, 200)
        w = ClassWeights(ClassWeights.defaults(c).alpha, gamma)
        loss, gw_ref, gb_ref = batch_loss_and_grad(model, x[50:180], np.eye(c)[cls[50:180]], w)
        gw, gb = np.zeros_like(model.weights), np.zeros_like(model.bias)
        got = _sgd_batch(x, cls, 50, 180, model.weights, model.bias, np.asarray(w.alpha), w.gamma, gw, gb)
        assert got == pytest.approx(loss, rel=1e-12)
        np.testing.assert_allclose(gw, gw_ref, rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(gb, gb_ref, rtol=1e-10, atol=1e-14)


def phantom_case(seed, size=20, noise=0.0, channels=4):
    flair, t1ce, t2, labels = generate_phantom(PhantomSpec(seed=seed, size=size, noise_sigma=noise))
    mods = [zscore_normalize(v) for v in (flair, t1ce, t2)]
    target = onehot_regions(labels) if channels == 4 else onehot_regions_edges(labels, extract_edges(labels))
    return mods, labels, target


class TestTraining:
    def test_zero_epochs(self, rng):
        mods, _, target = phantom_case(1, size=16)
        model, trace = train([(extract_features(mods), target)], TrainConfig(epochs=0))
        assert trace == [] and not model.weights.any() and not model.bias.any()

    def test_zero_model_uniform(self, rng):
        mods, _, _ = phantom_case(1, size=16)
        probs = predict(ToyModel.zeros(7), extract_features(mods))
        np.testing.assert_array_equal(probs, 1 / 7)

    def test_probabilities_sum_to_one(self, rng):
        mods, _, _ = phantom_case(1, size=16)
        probs = predict(random_model(rng, 4), extract_features(mods))
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)

    def test_learns_noise_free_phantom(self):
        mods, labels, target = phantom_case(2, size=24)
        fv = extract_features(mods)
        # 14 batches per epoch, 36 epochs: just over 500 steps
        model, trace = train([(fv, target)], TrainConfig(learning_rate=0.5, epochs=36, batch_size=1024))
        assert trace[-1] < trace[0]
        pred = fuse_prediction(argmax_labels(predict(model, fv)), 4)
        gm, pm = region_masks(labels), region_masks(pred)
        assert dice(pm["WT"], gm["WT"]) >= 0.95
        assert np.mean(pred.data == labels.data) >= 0.95

    def test_deterministic(self):
        mods, _, target = phantom_case(3, size=16, noise=0.05, channels=7)
        fv = extract_features(mods)
        cfg = TrainConfig(epochs=3, batch_size=256, seed=5)
        a, ta = train([(fv, target)], cfg)
        b, tb = train([(fv, target)], cfg)
        assert ta == tb and np.array_equal(a.weights, b.weights)

    def test_dims_mismatch(self):
        mods, _, target = phantom_case(1, size=16)
        _, _, other = phantom_case(1, size=20)
        with pytest.raises(UsageError):
            train([(extract_features(mods), other)], TrainConfig(epochs=1))

    def test_no_cases(self):
        with pytest.raises(UsageError):
            train([], TrainConfig(epochs=1))

    @pytest.mark.parametrize("kw", [{"learning_rate": 0}, {"epochs": -1}, {"batch_size": 0}])
    def test_bad_config(self, kw):
        with pytest.raises(UsageError):
            TrainConfig(**kw)

    def test_predict_feature_mismatch(self):
        fv = FeatureVolume(np.zeros((2, 2, 2, 5)), np.zeros((5, 2)))
        with pytest.raises(UsageError):
            predict(ToyModel.zeros(4), fv)


class TestModelFile:
    def test_round_trip_exact(self, rng, tmp_path):
        m = random_model(rng, 7)
        m.feature_stats = rng.normal(size=(9, 2))
        save_model(m, tmp_path / "m.txt")
        back = load_model(tmp_path / "m.txt")
        assert np.array_equal(back.weights, m.weights) and np.array_equal(back.bias, m.bias)
        assert np.array_equal(back.feature_stats, m.feature_stats)

    def test_header_mismatch(self, tmp_path):
        (tmp_path / "m.txt").write_text("4 9\n1 2 3\n")
        with pytest.raises(FormatError):
            load_model(tmp_path / "m.txt")

    def test_garbage(self, tmp_path):
        (tmp_path / "m.txt").write_text("hello\n")
        with pytest.raises(FormatError):
            load_model(tmp_path / "m.txt")


def parse_pnm(blob):
    magic, dims, maxval, rest = blob.split(b"\n", 3)
    w, h = map(int, dims.split())
    return magic, w, h, int(maxval), rest


class TestExports:
    def test_pgm_endpoints(self):
        probs = np.zeros((3, 2, 1, 4))
        probs[0, :, 0, 1] = 1.0
        magic, w, h, maxval, pix = parse_pnm(activation_slice_pgm(probs, 1, 0))
        assert (magic, w, h, maxval) == (b"P5", 3, 2, 255)
        img = np.frombuffer(pix, np.uint8).reshape(h, w)
        assert img[:, 0].tolist() == [255, 255] and not img[:, 1:].any()

    def test_pgm_quarter(self):
        probs = np.full((2, 2, 1, 4), 0.25)
        *_, pix = parse_pnm(activation_slice_pgm(probs, 0, 0))
        assert set(pix) == {64}

    def test_pgm_bad_channel(self):
        with pytest.raises(UsageError):
            activation_slice_pgm(np.zeros((2, 2, 2, 4)), 4, 0)

    def test_ppm_edges_red(self, rng):
        labels = LabelVolume(np.pad(np.full((4, 4, 4), 2, np.uint8), 2))
        edges = extract_edges(labels)
        magic, w, h, _, pix = parse_pnm(edge_overlay_ppm(labels, edges, 4))
        rgb = np.frombuffer(pix, np.uint8).reshape(h, w, 3)
        emask = edges.data[:, :, 4].T != 0
        assert emask.any()
        assert np.all(rgb[emask] == EDGE_RGB)
        assert np.all(rgb[~emask & (labels.data[:, :, 4].T == 2)] == 170)

    def test_ppm_background_black(self):
        z = LabelVolume(np.zeros((3, 3, 3), np.uint8))
        *_, pix = parse_pnm(edge_overlay_ppm(z, z, 1))
        assert not any(pix)

    def test_ppm_dims_mismatch(self):
        with pytest.raises(UsageError):
            edge_overlay_ppm(LabelVolume(np.zeros((3, 3, 3), np.uint8)),
                             LabelVolume(np.zeros((3, 3, 4), np.uint8)), 0)

    def test_ppm_bad_slice(self):
        z = LabelVolume(np.zeros((3, 3, 3), np.uint8))
        with pytest.raises(UsageError):
            edge_overlay_ppm(z, z, 3)


def test_edges_from_prediction_7class():
    cls = np.array([[[0, 1, 4, 6, 3]]], np.uint8)
    labels, edges = edges_from_prediction(cls, 7)
    assert labels.data.ravel().tolist() == [0, 1, 1, 4, 4]
    assert edges.data.ravel().tolist() == [0, 1, 0, 0, 4]


def test_edges_from_prediction_4class(rng):
    cls = rng.integers(0, 4, (6, 6, 6)).astype(np.uint8)
    labels, edges = edges_from_prediction(cls, 4)
    assert edges == extract_edges(labels)

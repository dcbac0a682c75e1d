import numpy as np
import pytest

from edgekit import model as M
from edgekit.errors import DataError, ShapeError, UsageError
from edgekit.image import GrayImage, normalize_unit
from oracles import conv2d_loops, maxpool2d_loops, tconv2d_signal


def unit_image(seed=0, size=256):
    rng = np.random.default_rng(seed)
    raw = GrayImage(np.floor(rng.random((size, size)) * 256).clip(0, 255), "raw8")
    return normalize_unit(raw)


def oracle_forward(model, x, tap=False):
    """Re-run the stack with independent per-layer implementations."""
    stop = model.feature_tap + 1 if tap else len(model.layers)
    for layer in model.layers[:stop]:
        name = type(layer).__name__
        if name == "Conv2d":
            x = conv2d_loops(x, layer.w, layer.b, layer.stride, layer.padding)
        elif name == "ConvTranspose2d":
            x = tconv2d_signal(x, layer.w, layer.b, layer.stride, layer.padding)
        elif name == "BatchNorm2d":
            inv = 1.0 / np.sqrt(layer.running_var + layer.eps)
            x = (x - layer.running_mean[:, None, None]) * inv[:, None, None]
            x = x * layer.gamma[:, None, None] + layer.beta[:, None, None]
        elif name == "ReLU":
            x = np.maximum(x, 0.0)
        elif name == "MaxPool2d":
            x = maxpool2d_loops(x)[0]
        elif name == "Sigmoid":
            x = 1.0 / (1.0 + np.exp(-x))
        else:
            raise AssertionError(f"unexpected layer {name}")
    return x


class TestBuildModel:
    def test_layer_count_and_types(self):
        model = M.build_model()
        names = [type(l).__name__ for l in model.layers]
        assert names.count("Conv2d") == 6
        assert names.count("ConvTranspose2d") == 2
        assert names.count("BatchNorm2d") == 7  # head conv has no norm
        assert names.count("MaxPool2d") == 2
        assert names.count("Sigmoid") == 1
        assert names[model.feature_tap] == "ReLU"

    def test_seeded_init_reproducible(self):
        a, b = M.build_model(seed=7), M.build_model(seed=7)
        for pa, pb in zip(a.params(), b.params()):
            np.testing.assert_array_equal(pa, pb)

    def test_different_seeds_differ(self):
        a, b = M.build_model(seed=1), M.build_model(seed=2)
        assert any(not np.array_equal(pa, pb) for pa, pb in zip(a.params(), b.params()))

    def test_kaiming_uniform_bounds_and_zero_bias(self):
        model = M.build_model(seed=3)
        for layer in model.layers:
            name = type(layer).__name__
            if name == "Conv2d":
                fan_in = layer.w.shape[1] * layer.w.shape[2] * layer.w.shape[3]
            elif name == "ConvTranspose2d":
                fan_in = layer.w.shape[0] * layer.w.shape[2] * layer.w.shape[3]
            else:
                continue
            limit = np.sqrt(6.0 / fan_in)
            assert np.abs(layer.w).max() <= limit
            assert not layer.b.any()


class TestForwardShapes:
    def test_shape_trace_256(self):
        model = M.build_model()
        img = unit_image(0)
        fmap = M.extract_features(model, img)
        assert fmap.shape == (16, 256, 256)
        head = M.forward_edge(model, img)
        assert head.shape == (256, 256)
        assert (head >= 0.0).all() and (head <= 1.0).all()
        # train mode uses batch statistics, so activations stay moderate and
        # the logistic head is strictly inside (0,1)
        head_train = model.forward(img.pixels[None, None], train=True)[0, 0]
        assert (head_train > 0.0).all() and (head_train < 1.0).all()

    def test_inference_deterministic(self):
        model = M.build_model()
        img = unit_image(1)
        np.testing.assert_array_equal(M.forward_edge(model, img), M.forward_edge(model, img))

    def test_same_seed_same_output(self):
        img = unit_image(2)
        a = M.forward_edge(M.build_model(seed=5), img)
        b = M.forward_edge(M.build_model(seed=5), img)
        np.testing.assert_array_equal(a, b)

    def test_raw_image_rejected(self):
        model = M.build_model()
        raw = GrayImage(np.zeros((256, 256)), "raw8")
        with pytest.raises(UsageError):
            M.forward_edge(model, raw)

    def test_wrong_size_rejected(self):
        model = M.build_model()
        small = GrayImage(np.zeros((128, 128)), "unit")
        with pytest.raises(ShapeError):
            M.extract_features(model, small)


class TestForwardOracle:
    def test_full_stack_vs_independent_implementations(self):
        model = M.build_model(seed=11)
        # perturb BN running stats so the inference path is non-trivial
        rng = np.random.default_rng(12)
        for layer in model.layers:
            if type(layer).__name__ == "BatchNorm2d":
                layer.running_mean = rng.normal(scale=0.1, size=layer.running_mean.shape)
                layer.running_var = rng.random(layer.running_var.shape) + 0.5
        x = rng.normal(size=(1, 1, 16, 16))
        np.testing.assert_allclose(
            model.forward(x, train=False), oracle_forward(model, x), atol=1e-9
        )

    def test_tap_vs_independent_implementations(self):
        model = M.build_model(seed=13)
        x = np.random.default_rng(14).normal(size=(1, 1, 16, 16))
        np.testing.assert_allclose(
            model.forward_to_tap(x, train=False), oracle_forward(model, x, tap=True),
            atol=1e-9,
        )

    def test_tap_matches_prefix_of_full_forward(self):
        model = M.build_model(seed=15)
        x = np.random.default_rng(16).normal(size=(1, 1, 16, 16))
        tap = model.forward_to_tap(x, train=False)
        # replay the remaining layers on the tap output
        y = tap
        for layer in model.layers[model.feature_tap + 1:]:
            y = layer.forward(y, train=False)
        np.testing.assert_array_equal(y, model.forward(x, train=False))


class TestFlatten:
    def test_row_zero_is_pixel_00(self):
        fmap = np.random.default_rng(17).normal(size=(16, 256, 256))
        fmat = M.flatten_features(fmap)
        assert fmat.shape == (65536, 16)
        np.testing.assert_array_equal(fmat[0], fmap[:, 0, 0])

    def test_row_257_is_pixel_1_1(self):
        fmap = np.random.default_rng(18).normal(size=(16, 256, 256))
        fmat = M.flatten_features(fmap)
        np.testing.assert_array_equal(fmat[257], fmap[:, 1, 1])
        np.testing.assert_array_equal(fmat[256], fmap[:, 1, 0])

    def test_roundtrip_bijection(self):
        fmap = np.random.default_rng(19).normal(size=(16, 256, 256))
        np.testing.assert_array_equal(M.unflatten_features(M.flatten_features(fmap), 16), fmap)

    def test_bad_shape_rejected(self):
        with pytest.raises(ShapeError):
            M.flatten_features(np.zeros((16, 128, 128)))


class TestCheckpoint:
    def test_roundtrip_identical_outputs(self, tmp_path):
        model = M.build_model(seed=21)
        path = tmp_path / "ckpt.json"
        M.save_checkpoint(model, path)
        loaded = M.load_checkpoint(path)
        x = np.random.default_rng(22).normal(size=(1, 1, 16, 16))
        np.testing.assert_array_equal(
            model.forward(x, train=False), loaded.forward(x, train=False)
        )

    def test_roundtrip_identical_params(self, tmp_path):
        model = M.build_model(seed=23)
        path = tmp_path / "ckpt.json"
        M.save_checkpoint(model, path)
        loaded = M.load_checkpoint(path)
        assert loaded.feature_tap == model.feature_tap
        for pa, pb in zip(model.params(), loaded.params()):
            np.testing.assert_array_equal(pa, pb)

    def test_save_is_byte_deterministic(self, tmp_path):
        model = M.build_model(seed=24)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        M.save_checkpoint(model, p1)
        M.save_checkpoint(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataError):
            M.load_checkpoint(tmp_path / "nope.json")

    def test_corrupt_json_is_data_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(DataError):
            M.load_checkpoint(path)

    def test_wrong_version_is_data_error(self, tmp_path):
        path = tmp_path / "v9.json"
        path.write_text('{"format_version": 9, "layers": [], "feature_tap": 0}')
        with pytest.raises(DataError):
            M.load_checkpoint(path)


def tiny_dataset(n=4, seed=30, size=256):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        x = rng.random((size, size))
        t = (rng.random((size, size)) > 0.9).astype(np.float64)
        out.append((x, t))
    return out


class TestTrainCnn:
    def test_zero_lr_leaves_params_unchanged(self):
        model = M.build_model(seed=31)
        before = [p.copy() for p in model.params()]
        data = tiny_dataset(2)
        M.train_cnn(model, data, M.TrainConfig(epochs=1, batch_size=2, lr=0.0))
        after = model.params()
        for b, a, layer_p in zip(before, after, model.params()):
            np.testing.assert_array_equal(b, a)

    def test_log_rows_and_rmse_identity(self):
        model = M.build_model(seed=32)
        data = tiny_dataset(4)
        _, log = M.train_cnn(model, data, M.TrainConfig(epochs=2, batch_size=2))
        assert len(log) == 4  # 2 epochs x 2 batches
        assert [row[0] for row in log] == [1, 2, 3, 4]
        for _, loss, rmse in log:
            assert rmse == pytest.approx(np.sqrt(loss), abs=1e-15)

    def test_loss_decreases_on_learnable_target(self):
        model = M.build_model(seed=33)
        rng = np.random.default_rng(34)
        x = rng.random((256, 256))
        data = [(x, np.zeros((256, 256)))]
        _, log = M.train_cnn(model, data, M.TrainConfig(epochs=8, batch_size=1, lr=1e-2))
        assert log[-1][1] < log[0][1]

    def test_same_seed_identical_training(self):
        data = tiny_dataset(2, seed=35)
        m1, log1 = M.train_cnn(M.build_model(seed=36), data,
                               M.TrainConfig(epochs=1, batch_size=1, seed=9))
        m2, log2 = M.train_cnn(M.build_model(seed=36), data,
                               M.TrainConfig(epochs=1, batch_size=1, seed=9))
        assert log1 == log2
        for pa, pb in zip(m1.params(), m2.params()):
            np.testing.assert_array_equal(pa, pb)

    def test_checkpoint_interval_files(self, tmp_path):
        model = M.build_model(seed=37)
        data = tiny_dataset(1, seed=38)
        M.train_cnn(model, data, M.TrainConfig(
            epochs=2, batch_size=1, checkpoint_interval=1, checkpoint_dir=str(tmp_path)
        ))
        assert sorted(p.name for p in tmp_path.iterdir()) == [
            "cnn-epoch0001.json", "cnn-epoch0002.json",
        ]

    def test_empty_dataset_rejected(self):
        with pytest.raises(UsageError):
            M.train_cnn(M.build_model(), [], M.TrainConfig(epochs=1))

    def test_bad_config_rejected(self):
        with pytest.raises(UsageError):
            M.TrainConfig(epochs=0)
        with pytest.raises(UsageError):
            M.TrainConfig(batch_size=0)
        with pytest.raises(UsageError):
            M.TrainConfig(lr=-1.0)

    def test_train_log_csv(self, tmp_path):
        path = tmp_path / "log.csv"
        M.write_train_log([(1, 0.25, 0.5)], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,loss,rmse"
        assert lines[1] == "1,0.25,0.5"

import numpy as np
import pytest

from aberrex.fringe_net import (
    BN_TAGS,
    CONV_LAYERS,
    EXPECTED_SHAPES,
    PARAMETER_COUNT,
    FringeNetWeights,
    WeightFormatError,
    correct_channel,
    forward,
    load_weights,
    save_weights,
)


def random_tensors(rng, scale=0.1):
    tensors = {}
    for name, shape in EXPECTED_SHAPES.items():
        if name.endswith(".var"):
            tensors[name] = (0.5 + rng.random(shape)).astype(np.float32)
        elif name.endswith(".gamma"):
            tensors[name] = (0.8 + 0.4 * rng.random(shape)).astype(np.float32)
        else:
            tensors[name] = (scale * rng.standard_normal(shape)).astype(np.float32)
    return tensors


def zero_tensors():
    tensors = {}
    for name, shape in EXPECTED_SHAPES.items():
        if name.endswith(".var") or name.endswith(".gamma"):
            tensors[name] = np.ones(shape, np.float32)
        else:
            tensors[name] = np.zeros(shape, np.float32)
    return tensors


class TestParameterCount:
    def test_matches_layer_table(self):
        # conv kernels + biases + batch-norm affine pairs, summed by hand:
        # 9 * 13360 + 289 + 2 * 288 = 121105
        assert PARAMETER_COUNT == 121105

    def test_dimension_chain(self):
        chain = [(o, i) for _, o, i in CONV_LAYERS]
        assert chain == [(16, 2), (32, 16), (64, 32), (64, 64), (64, 64), (32, 64), (16, 32), (1, 16)]


class TestWeightFile:
    def test_round_trip(self, tmp_path, rng):
        tensors = random_tensors(rng)
        path = tmp_path / "w.ftbw"
        save_weights(tensors, path)
        loaded = load_weights(path)
        for name, arr in tensors.items():
            assert np.array_equal(loaded.tensors[name], arr)

    def test_loaded_parameter_count_matches_constant(self, tmp_path, rng):
        path = tmp_path / "w.ftbw"
        save_weights(random_tensors(rng), path)
        loaded = load_weights(path)
        learnable = sum(
            arr.size
            for name, arr in loaded.tensors.items()
            if not (name.endswith(".mean") or name.endswith(".var"))
        )
        assert learnable == PARAMETER_COUNT

    def test_dimension_mismatch_names_tensor(self, tmp_path, rng):
        tensors = random_tensors(rng)
        tensors["conv3.w"] = np.zeros((64, 16, 3, 3), np.float32)
        path = tmp_path / "bad.ftbw"
        save_weights(tensors, path)
        with pytest.raises(WeightFormatError, match="conv3.w"):
            load_weights(path)

    def test_missing_tensor(self, tmp_path, rng):
        tensors = random_tensors(rng)
        del tensors["bn5.mean"]
        path = tmp_path / "missing.ftbw"
        save_weights(tensors, path)
        with pytest.raises(WeightFormatError, match="bn5.mean"):
            load_weights(path)

    def test_nan_weight_rejected(self, tmp_path, rng):
        tensors = random_tensors(rng)
        tensors["conv1.b"][0] = np.nan
        path = tmp_path / "nan.ftbw"
        save_weights(tensors, path)
        with pytest.raises(WeightFormatError, match="conv1.b"):
            load_weights(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ftbw"
        path.write_bytes(b"JUNK" + b"\x00" * 32)
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(path)

    def test_truncated_file(self, tmp_path, rng):
        tensors = random_tensors(rng)
        path = tmp_path / "trunc.ftbw"
        save_weights(tensors, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(WeightFormatError, match="truncated"):
            load_weights(path)


class TestForward:
    @pytest.mark.parametrize("shape", [(128, 128), (97, 211), (8, 8)])
    def test_output_shape_matches_input(self, rng, shape, tmp_path):
        weights = FringeNetWeights.from_tensors(random_tensors(rng))
        z_c = rng.random(shape).astype(np.float32)
        z_g = rng.random(shape).astype(np.float32)
        assert forward(weights, z_c, z_g).shape == shape

    def test_zero_weights_give_zero_residual(self, rng):
        weights = FringeNetWeights.from_tensors(zero_tensors())
        z_c = rng.random((32, 32)).astype(np.float32)
        z_g = rng.random((32, 32)).astype(np.float32)
        assert np.abs(forward(weights, z_c, z_g)).max() == 0.0
        assert np.array_equal(correct_channel(weights, z_c, z_g), z_c)

    def test_deterministic(self, rng):
        weights = FringeNetWeights.from_tensors(random_tensors(rng))
        z_c = rng.random((64, 64)).astype(np.float32)
        z_g = rng.random((64, 64)).astype(np.float32)
        assert np.array_equal(forward(weights, z_c, z_g), forward(weights, z_c, z_g))

    def test_shape_mismatch_rejected(self, rng):
        weights = FringeNetWeights.from_tensors(random_tensors(rng))
        with pytest.raises(ValueError, match="shape mismatch"):
            forward(weights, np.zeros((16, 16), np.float32), np.zeros((16, 17), np.float32))

    def test_too_small_rejected(self, rng):
        weights = FringeNetWeights.from_tensors(random_tensors(rng))
        with pytest.raises(ValueError, match="8x8"):
            forward(weights, np.zeros((4, 4), np.float32), np.zeros((4, 4), np.float32))

    def test_correct_channel_clamps(self, rng):
        weights = FringeNetWeights.from_tensors(random_tensors(rng, scale=2.0))
        z_c = rng.random((32, 32)).astype(np.float32)
        z_g = rng.random((32, 32)).astype(np.float32)
        out = correct_channel(weights, z_c, z_g)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_skip_connections_active(self, rng):
        # zeroing the tag-3 conv must still propagate signal through the
        # tag-5/tag-3 skip; compare against fully zeroed late layers
        tensors = random_tensors(rng)
        for tag in (4, 5):
            tensors[f"conv{tag}.w"] = np.zeros_like(tensors[f"conv{tag}.w"])
            tensors[f"conv{tag}.b"] = np.zeros_like(tensors[f"conv{tag}.b"])
            tensors[f"bn{tag}.beta"] = np.zeros_like(tensors[f"bn{tag}.beta"])
            tensors[f"bn{tag}.mean"] = np.zeros_like(tensors[f"bn{tag}.mean"])
        weights = FringeNetWeights.from_tensors(tensors)
        z = np.random.default_rng(0).random((16, 16)).astype(np.float32)
        out = forward(weights, z, z)
        assert np.abs(out).max() > 0.0  # tag-3 output flows through the skip


class TestBatchNormFolding:
    def test_folding_matches_explicit_bn(self, rng):
        # run the first layer by hand: conv, then batch norm, then relu
        tensors = random_tensors(rng)
        weights = FringeNetWeights.from_tensors(tensors)
        x = rng.random((2, 12, 12)).astype(np.float32)
        from aberrex.fringe_net import _conv3x3, BN_EPSILON

        raw = _conv3x3(x, tensors["conv1.w"], tensors["conv1.b"])
        scale = tensors["bn1.gamma"] / np.sqrt(tensors["bn1.var"] + BN_EPSILON)
        explicit = raw * scale[:, None, None] + (
            tensors["bn1.beta"] - tensors["bn1.mean"] * scale
        )[:, None, None]
        w, b, relu = weights.folded[0]
        folded = _conv3x3(x, w, b)
        assert np.abs(folded - explicit).max() < 1e-5

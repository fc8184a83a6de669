import numpy as np
import pytest

from aberrex.charts import color_scene, dead_leaves
from aberrex.psf import GaussianPsf
from aberrex.simulate import (
    DatasetConfig,
    DegradeParams,
    apply_forward_model,
    bilateral_denoise,
    demosaick_hamilton_adams,
    generate_dataset,
    mosaick,
    process,
    translate,
    unprocess,
)

from conftest import make_image


def dirac_params(alpha=0.0, beta=0.0, shift_r=(0.0, 0.0), shift_b=(0.0, 0.0), seed=0):
    psf = GaussianPsf(0.0, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2)
    return DegradeParams(psf, shift_r, shift_b, alpha, beta, seed=seed)


class TestUnprocess:
    def test_fixed_points(self):
        image = make_image([[[0.0, 1.0]], [[0.0, 1.0]], [[0.0, 1.0]]])
        out = unprocess(image)
        assert np.allclose(out.data[:, 0, 0], 0.0, atol=1e-7)
        assert np.allclose(out.data[:, 0, 1], 1.0, atol=1e-7)

    def test_half_value(self):
        # inverse smoothstep fixes 0.5, then 0.5 ** 2.2 = 0.21763764
        image = make_image(np.full((3, 2, 2), 0.5, np.float32))
        assert unprocess(image).data[0, 0, 0] == pytest.approx(0.21764, abs=1e-4)

    def test_process_round_trip(self, rng):
        image = make_image(rng.random((3, 16, 16)).astype(np.float32))
        back = process(unprocess(image))
        assert np.abs(back.data - image.data).max() < 1e-4


class TestForwardModel:
    def test_degenerate_model_mosaicks_clean(self, rng):
        clean = make_image(rng.random((3, 32, 32)).astype(np.float32))
        pair = apply_forward_model(clean, dirac_params())
        # the 0.2-floor kernel is near-Dirac (center tap 0.99998)
        assert np.abs(pair.raw - mosaick(clean.data)).max() < 5e-5

    def test_noise_variance_tracks_model(self):
        clean = make_image(np.full((3, 128, 128), 0.5, np.float32))
        beta = 1e-4
        pair = apply_forward_model(clean, dirac_params(beta=beta, seed=3), denoise=False)
        interior = pair.raw[8:-8, 8:-8]
        smooth = mosaick(clean.data)[8:-8, 8:-8]
        measured = float(np.var(interior - smooth))
        assert abs(measured - beta) / beta < 0.10

    def test_green_never_shifted(self):
        clean = make_image(dead_leaves(64, np.random.default_rng(2), colored=True))
        pair = apply_forward_model(clean, dirac_params(shift_r=(2.0, -1.0), shift_b=(-3.0, 2.5)))
        green_sites = mosaick(clean.data)[0::2, 1::2]
        assert np.abs(pair.raw[0::2, 1::2] - green_sites).max() < 1e-5

    def test_deterministic_given_seed(self, rng):
        clean = make_image(rng.random((3, 32, 32)).astype(np.float32))
        params = dirac_params(alpha=0.005, beta=1e-5, seed=11)
        a = apply_forward_model(clean, params)
        b = apply_forward_model(clean, params)
        assert np.array_equal(a.raw, b.raw)
        assert np.array_equal(a.rgb.data, b.rgb.data)

    def test_shift_bounds_enforced(self):
        with pytest.raises(ValueError, match=r"\[-4, 4\]"):
            dirac_params(shift_r=(5.0, 0.0))

    def test_identity_components_reproduce_smooth_clean(self):
        # Dirac blur, zero shift, zero noise, mosaick + demosaick composed
        ys, xs = np.mgrid[0:96, 0:96].astype(np.float32)
        smooth = 0.2 + 0.6 * (xs + ys) / 190.0
        clean = make_image(np.stack([smooth, smooth * 0.9, smooth * 0.8]))
        pair = apply_forward_model(clean, dirac_params())
        assert np.abs(pair.rgb.data - clean.data).max() < 0.01


class TestBilateral:
    def test_constant_unchanged(self):
        channel = np.full((32, 32), 0.6, np.float32)
        out = bilateral_denoise(channel, 1.8, 0.05)
        assert np.abs(out - 0.6).max() < 1e-6

    def test_large_range_sigma_matches_gaussian(self, rng):
        from scipy import ndimage

        channel = rng.random((48, 48)).astype(np.float64)
        out = bilateral_denoise(channel, 1.5, 1e6)
        radius = int(np.ceil(2 * 1.5))
        reference = ndimage.gaussian_filter(channel, 1.5, truncate=radius / 1.5, mode="reflect")
        assert np.abs(out[4:-4, 4:-4] - reference[4:-4, 4:-4]).max() < 1e-3

    def test_smooths_noise(self, rng):
        channel = (0.5 + rng.normal(0, 0.01, (64, 64))).astype(np.float32)
        out = bilateral_denoise(channel, 1.8, 0.03)
        assert out.std() < channel.std()


class TestDemosaick:
    def test_constant_gray_exact(self):
        raw = np.full((32, 32), 0.37, np.float32)
        rgb = demosaick_hamilton_adams(raw)
        assert np.abs(rgb - 0.37).max() < 1e-7

    def test_smooth_gradient_error_small(self):
        ys, xs = np.mgrid[0:128, 0:128].astype(np.float32)
        smooth = 0.25 + 0.5 * (xs + ys) / 254.0
        raw = mosaick(np.stack([smooth] * 3))
        rgb = demosaick_hamilton_adams(raw)
        assert np.abs(rgb - smooth).max() < 0.01

    def test_horizontal_edge_no_zipper(self):
        # a horizontal step: green interpolation must follow the edge direction,
        # so rows away from the step stay constant
        raw_full = np.zeros((3, 32, 32), np.float32)
        raw_full[:, 16:, :] = 0.9
        raw_full[:, :16, :] = 0.1
        rgb = demosaick_hamilton_adams(mosaick(raw_full))
        assert np.abs(rgb[1, :14, :] - 0.1).max() < 1e-6
        assert np.abs(rgb[1, 18:, :] - 0.9).max() < 1e-6

    def test_odd_dimensions_rejected(self):
        with pytest.raises(ValueError, match="even"):
            demosaick_hamilton_adams(np.zeros((31, 32), np.float32))


class TestGenerateDataset:
    @pytest.fixture
    def source_dir(self, tmp_path):
        from aberrex.imageio import write_image

        src = tmp_path / "sources"
        src.mkdir()
        for i in range(2):
            scene = color_scene(160, np.random.default_rng(50 + i))
            write_image(process(scene), src / f"{i}.png")
        return src

    def test_reproducible_and_complete(self, source_dir, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        generate_dataset(source_dir, 3, out_a, DatasetConfig(crop=96), seed=7)
        generate_dataset(source_dir, 3, out_b, DatasetConfig(crop=96), seed=7)
        manifest_a = (out_a / "manifest.tsv").read_bytes()
        assert manifest_a == (out_b / "manifest.tsv").read_bytes()
        for sub in ("clean", "raw", "aberrated", "deblurred"):
            files = sorted((out_a / sub).iterdir())
            assert len(files) == 3
            for f in files:
                assert f.read_bytes() == (out_b / sub / f.name).read_bytes()

    def test_sampled_ranges(self, source_dir, tmp_path):
        out = tmp_path / "ranges"
        generate_dataset(source_dir, 5, out, DatasetConfig(crop=96), seed=1)
        with open(out / "manifest.tsv") as f:
            header = f.readline().split()
            for line in f:
                row = dict(zip(header, line.split()))
                for key in ("sigma_r", "sigma_g", "sigma_b", "rho_r", "rho_g", "rho_b"):
                    assert 0.2 <= float(row[key]) <= 4.0
                for key in ("dx_r", "dy_r", "dx_b", "dy_b"):
                    assert -4.0 <= float(row[key]) <= 4.0

    def test_empty_source_errors(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(ValueError, match="no source images"):
            generate_dataset(empty, 1, tmp_path / "out")


class TestTranslate:
    def test_integer_shift_on_ramp(self):
        ramp = np.tile(np.arange(16, dtype=np.float32) / 15.0, (16, 1))
        shifted = translate(ramp, 1.0, 0.0)
        assert np.abs(shifted[:, 1:] - ramp[:, :-1]).max() < 1e-6

    def test_identity(self, rng):
        x = rng.random((16, 16)).astype(np.float32)
        assert np.array_equal(translate(x, 0.0, 0.0), x)

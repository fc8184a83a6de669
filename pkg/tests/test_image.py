import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aberrex.image import PlanarImage, extract, fuse, gamma_decode, gamma_encode, tile

from conftest import make_image


def ramp_image(h, w, channels=1):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
    plane = (xs + ys) / (h + w - 2)
    return make_image(np.repeat(plane[None], channels, axis=0))


class TestPlanarImage:
    def test_rejects_nan(self):
        data = np.zeros((1, 4, 4), np.float32)
        data[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            PlanarImage(data)

    def test_rejects_bad_channels(self):
        with pytest.raises(ValueError, match="channel count"):
            PlanarImage(np.zeros((2, 4, 4), np.float32))

    def test_rejects_zero_size(self):
        with pytest.raises(ValueError, match="zero-sized"):
            PlanarImage(np.zeros((1, 0, 4), np.float32))


class TestTile:
    def test_single_patch_when_exact(self):
        grid = tile(ramp_image(400, 400), 400, 0.5)
        assert grid.origins == ((0, 0),)

    def test_800_patch400_overlap_half(self):
        # stride 200 -> starts {0, 200, 400} on both axes, 9 patches
        grid = tile(ramp_image(800, 800), 400, 0.5)
        expected = tuple((r, c) for r in (0, 200, 400) for c in (0, 200, 400))
        assert grid.origins == expected

    def test_500_patch400_overlap_quarter_clamps(self):
        # stride 300 overshoots; the trailing origin clamps to 100
        grid = tile(ramp_image(500, 500), 400, 0.25)
        expected = tuple((r, c) for r in (0, 100) for c in (0, 100))
        assert grid.origins == expected

    def test_patch_larger_than_image_shrinks(self):
        grid = tile(ramp_image(300, 500), 400, 0.25)
        assert grid.patch_size == 300
        assert all(r + 300 <= 300 and c + 300 <= 500 for r, c in grid.origins)

    def test_rejects_small_patch(self):
        with pytest.raises(ValueError, match=">= 32"):
            tile(ramp_image(100, 100), 16, 0.25)

    @given(
        h=st.integers(64, 300),
        w=st.integers(64, 300),
        patch=st.sampled_from([40, 64, 100]),
        overlap=st.sampled_from([0.25, 0.5]),
    )
    @settings(max_examples=40, deadline=None)
    def test_union_covers_every_pixel(self, h, w, patch, overlap):
        grid = tile(ramp_image(h, w), patch, overlap)
        covered = np.zeros((h, w), bool)
        p = grid.patch_size
        for r, c in grid.origins:
            assert 0 <= r <= h - p and 0 <= c <= w - p
            covered[r : r + p, c : c + p] = True
        assert covered.all()


class TestFuse:
    def test_constant_patches_fuse_to_constant(self):
        image = make_image(np.full((3, 180, 180), 0.5, np.float32))
        grid = tile(image, 100, 0.5)
        patches = [extract(image, grid, i) for i in range(len(grid.origins))]
        fused = fuse(patches, grid)
        assert np.abs(fused.data - 0.5).max() < 1e-6

    def test_single_full_patch_identity(self):
        image = ramp_image(128, 128, channels=3)
        grid = tile(image, 128, 0.25)
        fused = fuse([extract(image, grid, 0)], grid)
        assert np.array_equal(fused.data, image.data)

    def test_two_half_overlapping_ramp_patches(self):
        image = ramp_image(100, 150)
        grid = tile(image, 100, 0.5)
        patches = [extract(image, grid, i) for i in range(len(grid.origins))]
        fused = fuse(patches, grid)
        assert np.abs(fused.data - image.data).max() < 1e-6

    @pytest.mark.parametrize("patch,overlap", [(100, 0.25), (100, 0.5), (64, 0.25), (64, 0.5)])
    def test_tile_fuse_identity(self, patch, overlap, rng):
        data = rng.random((3, 257, 311), np.float32)
        image = make_image(data)
        grid = tile(image, patch, overlap)
        patches = [extract(image, grid, i) for i in range(len(grid.origins))]
        fused = fuse(patches, grid)
        assert np.abs(fused.data - data).max() < 1e-6

    def test_patch_count_mismatch(self):
        image = ramp_image(128, 128)
        grid = tile(image, 64, 0.5)
        with pytest.raises(ValueError, match="patch count"):
            fuse([extract(image, grid, 0)], grid)

    def test_order_independence(self, rng):
        # fusing identical values in any patch order gives identical sums
        image = make_image(rng.random((1, 90, 90), np.float32))
        grid = tile(image, 45, 0.5)
        patches = [extract(image, grid, i) for i in range(len(grid.origins))]
        a = fuse(patches, grid).data
        b = fuse([p.copy() for p in patches], grid).data
        assert np.array_equal(a, b)


class TestGamma:
    def test_fixed_points(self):
        image = make_image([[[0.0, 1.0]]])
        assert np.allclose(gamma_decode(image).data, [[[0.0, 1.0]]])
        assert np.allclose(gamma_encode(image).data, [[[0.0, 1.0]]])

    def test_round_trip(self):
        image = make_image([[[0.25]]], colorspace="gamma22")
        back = gamma_encode(gamma_decode(image))
        assert abs(back.data[0, 0, 0] - 0.25) < 1e-6

    def test_decode_half(self):
        # 0.5 ** 2.2 = 0.21763764
        image = make_image([[[0.5]]])
        assert abs(gamma_decode(image).data[0, 0, 0] - 0.21763764) < 1e-6

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_and_inverse(self, a, b):
        image = make_image([[[a, b]]])
        decoded = gamma_decode(image).data[0, 0]
        if a < b:
            assert decoded[0] <= decoded[1]
        back = gamma_encode(gamma_decode(image)).data[0, 0]
        assert abs(back[0] - a) < 1e-6 and abs(back[1] - b) < 1e-6

    def test_tags(self):
        image = make_image([[[0.5]]], colorspace="gamma22")
        assert gamma_decode(image).colorspace == "linear"
        assert gamma_encode(gamma_decode(image)).colorspace == "gamma22"

import numpy as np
import pytest

from aberrex.charts import colored_shapes
from aberrex.estimation import LINEAR_MODEL, AffineBlurModel
from aberrex.fringe_net import save_weights
from aberrex.image import GAMMA22, LINEAR, PlanarImage
from aberrex.metrics import ssim
from aberrex.pipeline import (
    PipelineConfig,
    correct,
    deblur_only,
    defringe_only,
    estimate_patch_kernel,
)
from aberrex.psf import GaussianPsf, convolve, rasterize
from aberrex.simulate import DegradeParams, apply_forward_model

from test_fringe_net import random_tensors, zero_tensors


@pytest.fixture
def aberrated_pair():
    scene = colored_shapes(256, np.random.default_rng(61))
    clean = PlanarImage(scene)
    psf = GaussianPsf(0.6, 1.6, 1.2, 1.4, 0.8, 0.7, 0.9)
    params = DegradeParams(psf, (1.5, -1.0), (-2.0, 0.5), 0.0, 0.0, seed=4)
    pair = apply_forward_model(clean, params)
    return clean, pair.rgb


@pytest.fixture
def blurred_pair():
    # blur only, channels aligned: isolates the deblurring stage's claim
    scene = colored_shapes(256, np.random.default_rng(62))
    clean = PlanarImage(scene)
    psf = GaussianPsf(0.6, 1.6, 1.2, 1.4, 0.8, 0.7, 0.9)
    params = DegradeParams(psf, (0.0, 0.0), (0.0, 0.0), 0.0, 0.0, seed=4)
    pair = apply_forward_model(clean, params)
    return clean, pair.rgb


def cfg(**kw):
    kw.setdefault("patch_size", 128)
    kw.setdefault("fringe_method", "none")
    return PipelineConfig(**kw)


class TestConfig:
    def test_rejects_small_patch(self):
        with pytest.raises(ValueError, match=">= 100"):
            PipelineConfig(patch_size=64)

    def test_rejects_bad_overlap(self):
        with pytest.raises(ValueError, match="overlap"):
            PipelineConfig(overlap=0.3)

    def test_rejects_unknown_method(self):
        with pytest.raises(ValueError, match="fringe method"):
            PipelineConfig(fringe_method="magic")

    def test_model_selection_by_tag(self):
        config = PipelineConfig()
        assert config.blur_model(LINEAR) == LINEAR_MODEL
        assert config.blur_model(GAMMA22).slope == pytest.approx(0.371)
        custom = PipelineConfig(coefficients=AffineBlurModel(0.5, 0.3))
        assert custom.blur_model(LINEAR).slope == 0.5

    def test_threads_env_default(self, monkeypatch):
        monkeypatch.setenv("ABERREX_THREADS", "3")
        from aberrex.pipeline import default_threads

        assert default_threads() == 3


class TestCorrect:
    def test_improves_ssim_on_blurred_chart(self, blurred_pair):
        clean, blurred = blurred_pair
        out = correct(blurred, cfg(overlap=0.25))
        before = np.mean([ssim(blurred.data[c], clean.data[c]) for c in range(3)])
        after = np.mean([ssim(out.data[c], clean.data[c]) for c in range(3)])
        assert after > before

    def test_deterministic_single_thread(self, aberrated_pair):
        _, aberrated = aberrated_pair
        a = correct(aberrated, cfg())
        b = correct(aberrated, cfg())
        assert np.array_equal(a.data, b.data)

    def test_thread_count_invariance(self, aberrated_pair):
        _, aberrated = aberrated_pair
        one = correct(aberrated, cfg(threads=1))
        two = correct(aberrated, cfg(threads=2))
        assert np.abs(one.data - two.data).max() <= 1e-6

    def test_stage_composition_exact_at_zero_overlap(self, aberrated_pair):
        _, aberrated = aberrated_pair
        config = cfg(overlap=0.0)
        composed = defringe_only(deblur_only(aberrated, config), config)
        single = correct(aberrated, config)
        assert np.array_equal(composed.data, single.data)

    def test_stage_composition_close_at_quarter_overlap(self, aberrated_pair):
        _, aberrated = aberrated_pair
        config = cfg(overlap=0.25)
        composed = defringe_only(deblur_only(aberrated, config), config)
        single = correct(aberrated, config)
        # the composed path fuses twice, so equality is approximate
        assert np.abs(composed.data - single.data).max() < 0.02

    def test_jpeg_round_trip_tags(self, aberrated_pair):
        _, aberrated = aberrated_pair
        tagged = PlanarImage(aberrated.data, GAMMA22)
        out = correct(tagged, cfg())
        assert out.colorspace == GAMMA22

    def test_cnn_method_runs_with_weight_file(self, aberrated_pair, tmp_path):
        _, aberrated = aberrated_pair
        path = tmp_path / "w.ftbw"
        save_weights(zero_tensors(), path)
        out = correct(aberrated, cfg(fringe_method="cnn", weights_path=str(path)))
        reference = correct(aberrated, cfg())
        # zero network: stage 2 is the identity, output matches fringe 'none'
        assert np.abs(out.data - reference.data).max() < 1e-6

    def test_missing_weights_error(self, aberrated_pair, tmp_path, monkeypatch):
        from aberrex.fringe_net import WeightFormatError
        import aberrex.pipeline as pipeline

        monkeypatch.setattr(pipeline, "packaged_weights_path", lambda: None)
        _, aberrated = aberrated_pair
        with pytest.raises(WeightFormatError, match="weights"):
            correct(aberrated, cfg(fringe_method="cnn"))

    def test_baseline_method_end_to_end(self, aberrated_pair):
        clean, aberrated = aberrated_pair
        out = correct(aberrated, cfg(fringe_method="phasecorr"))
        assert out.data.shape == aberrated.data.shape

    def test_full_correction_improves_ssim_and_energy(self, aberrated_pair):
        from aberrex.metrics import energy
        from aberrex.pipeline import packaged_weights_path

        if packaged_weights_path() is None:
            pytest.skip("packaged weights not present")
        clean, aberrated = aberrated_pair
        out = correct(aberrated, cfg(fringe_method="cnn"))
        before = np.mean([ssim(aberrated.data[c], clean.data[c]) for c in range(3)])
        after = np.mean([ssim(out.data[c], clean.data[c]) for c in range(3)])
        e_before = energy(aberrated.data[0], aberrated.data[2], aberrated.data[1])
        e_after = energy(out.data[0], out.data[2], out.data[1])
        assert after > before
        assert e_after < e_before


class TestEstimatePatchKernel:
    def test_recovers_known_blur(self):
        scene = colored_shapes(256, np.random.default_rng(67))
        blurred = np.stack([convolve(scene[c], rasterize(0.0, 2.0, 0.8)) for c in range(3)])
        est = estimate_patch_kernel(PlanarImage(blurred), (0, 0), cfg(patch_size=256))
        assert abs(est.sigma[1] - 2.0) < 0.35
        assert min(est.theta, np.pi - est.theta) < np.radians(15)

    def test_origin_clamped(self):
        scene = PlanarImage(colored_shapes(128, np.random.default_rng(68)))
        est = estimate_patch_kernel(scene, (999, -5), cfg(patch_size=128))
        assert est is not None

import math

import numpy as np
import pytest

from aberrex.cli import main
from aberrex.charts import colored_shapes, scene_suite
from aberrex.image import PlanarImage
from aberrex.imageio import read_image, write_image
from aberrex.psf import EmpiricalPsf, rasterize, write_epsf
from aberrex.simulate import process


@pytest.fixture
def scene_png(tmp_path):
    path = tmp_path / "scene.png"
    write_image(PlanarImage(colored_shapes(192, np.random.default_rng(7))), path)
    return path


@pytest.fixture
def source_dir(tmp_path):
    src = tmp_path / "sources"
    src.mkdir()
    for i, scene in enumerate(scene_suite(3, 160, seed=5)):
        write_image(process(PlanarImage(scene)), src / f"{i}.png")
    return src


class TestExitCodes:
    def test_success(self, scene_png, tmp_path):
        out = tmp_path / "out.png"
        assert main(["deblur", str(scene_png), str(out), "--patch", "128",
                     "--fringe-method", "none"]) == 0
        assert out.exists()

    def test_usage_error(self, scene_png, tmp_path, capsys):
        code = main(["correct", str(scene_png), str(tmp_path / "o.png"), "--coeffs", "zzz"])
        assert code == 1
        assert "usage error" in capsys.readouterr().err

    def test_io_error(self, tmp_path, capsys):
        code = main(["correct", str(tmp_path / "missing.png"), str(tmp_path / "o.png")])
        assert code == 2
        assert "i/o error" in capsys.readouterr().err

    def test_validation_error(self, tmp_path, capsys):
        # a valid file with an invalid (1-channel) shape for the pipeline
        path = tmp_path / "gray.pfm"
        write_image(PlanarImage(np.zeros((1, 64, 64), np.float32) + 0.5), path)
        code = main(["deblur", str(path), str(tmp_path / "o.pfm"), "--fringe-method", "none"])
        assert code == 3

    def test_unknown_flag_is_usage_error(self, scene_png, tmp_path):
        assert main(["correct", str(scene_png), str(tmp_path / "o.png"), "--bogus"]) == 1


class TestEstimateKernel:
    def test_prints_estimate(self, tmp_path, capsys):
        from aberrex.psf import convolve

        scene = colored_shapes(192, np.random.default_rng(7))
        blurred = np.stack([convolve(scene[c], rasterize(0.0, 2.0, 1.0)) for c in range(3)])
        path = tmp_path / "b.pfm"
        write_image(PlanarImage(blurred), path)
        assert main(["estimate-kernel", str(path), "--patch-origin", "0,0",
                     "--patch", "192"]) == 0
        out = capsys.readouterr().out
        assert "theta_deg" in out
        assert "sigma=" in out

    def test_writes_kernels(self, scene_png, tmp_path, capsys):
        epsf = tmp_path / "k.epsf"
        assert main(["estimate-kernel", str(scene_png), "--patch", "128",
                     "--write-kernels", str(epsf)]) == 0
        assert epsf.exists()
        assert main(["fit-psf", str(epsf)]) == 0
        assert "record\tchannel" in capsys.readouterr().out


class TestDegradeCalibrateEval:
    def test_degrade_range_flags(self, source_dir, tmp_path):
        pairs = tmp_path / "mild"
        assert main(["degrade", str(source_dir), str(pairs), "--count", "2", "--seed", "1",
                     "--std-range", "0.2,1.0", "--shift-limit", "0"]) == 0
        with open(pairs / "manifest.tsv") as f:
            header = f.readline().split()
            for line in f:
                row = dict(zip(header, line.split()))
                assert float(row["sigma_g"]) <= 1.0
                assert float(row["dx_r"]) == 0.0 and float(row["dy_b"]) == 0.0

    def test_degrade_then_eval(self, source_dir, tmp_path, capsys):
        pairs = tmp_path / "pairs"
        assert main(["degrade", str(source_dir), str(pairs), "--count", "2",
                     "--seed", "3"]) == 0
        assert (pairs / "manifest.tsv").exists()
        capsys.readouterr()
        assert main(["eval", str(pairs), "--fringe-method", "none"]) == 0
        out = capsys.readouterr().out
        lines = out.strip().splitlines()
        assert lines[0].split("\t") == ["id", "R", "E_before", "E_after",
                                        "ssim_blurry", "ssim_deblurred"]
        assert len(lines) == 3

    def test_calibrate_self_consistency(self, tmp_path, capsys):
        # corpus whose sidecar stds follow a planted affine model exactly
        from aberrex.charts import gray_chart_suite
        from aberrex.estimation import _interior_max_abs, directional_difference, normalize
        from aberrex.psf import convolve

        corpus = tmp_path / "corpus"
        corpus.mkdir()
        rng = np.random.default_rng(17)
        slope, intercept = 0.45, 0.33
        for i, chart in enumerate(gray_chart_suite(12, 128, seed=2)):
            sigma = rng.uniform(0.5, 3.0)
            blurred = convolve(chart, rasterize(0.0, sigma, sigma))
            n, _ = normalize(blurred)
            truths = []
            for angle in (0.0, math.pi / 2):
                s = _interior_max_abs(directional_difference(n, angle))
                truths.append(math.sqrt(max(slope**2 / s**2 - intercept**2, 1e-6)))
            write_image(PlanarImage(np.stack([blurred] * 3)), corpus / f"{i:03d}.pfm")
            (corpus / f"{i:03d}.txt").write_text(f"0.0 {truths[0]} {truths[1]}\n" * 3)
        model_file = tmp_path / "model.txt"
        assert main(["calibrate", str(corpus), "--out", str(model_file)]) == 0
        out = capsys.readouterr().out
        c_value = float(out.splitlines()[0].split("=")[1])
        sb_value = float(out.splitlines()[1].split("=")[1])
        assert abs(c_value - slope) / slope < 0.01
        assert abs(sb_value - intercept) / intercept < 0.01
        assert model_file.exists()

    def test_calibrate_degenerate_corpus(self, tmp_path, capsys):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        flat = PlanarImage(np.full((3, 64, 64), 0.5, np.float32))
        write_image(flat, corpus / "000.pfm")
        (corpus / "000.txt").write_text("0.0 1.0 1.0\n" * 3)
        assert main(["calibrate", str(corpus)]) == 3


class TestConfigFile:
    def test_flags_override_file(self, scene_png, tmp_path):
        config = tmp_path / "conf"
        config.write_text("patch=400\nfringe_method=none\noverlap=0.25\n")
        out = tmp_path / "out.png"
        assert main(["deblur", str(scene_png), str(out), "--config", str(config),
                     "--patch", "128"]) == 0
        assert out.exists()

    def test_unknown_config_key(self, scene_png, tmp_path):
        config = tmp_path / "conf"
        config.write_text("patchsize=400\n")
        assert main(["deblur", str(scene_png), str(tmp_path / "o.png"),
                     "--config", str(config)]) == 1


class TestFitPsf:
    def test_fits_written_grid(self, tmp_path, capsys):
        kernels = [rasterize(0.3, 2.0, 1.0), rasterize(1.2, 1.5, 0.7)]
        side = max(k.side for k in kernels)
        taps = np.zeros((len(kernels), side, side))
        for i, k in enumerate(kernels):
            r = (side - k.side) // 2
            taps[i, r : r + k.side, r : r + k.side] = k.taps
        path = tmp_path / "grid.epsf"
        write_epsf([EmpiricalPsf(taps[0:1]), EmpiricalPsf(taps[1:2])], path)
        assert main(["fit-psf", str(path)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        _, _, theta, sigma, rho = lines[1].split("\t")
        assert abs(float(sigma) - 2.0) < 0.05

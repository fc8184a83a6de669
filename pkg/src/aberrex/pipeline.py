"""End-to-end correction: per-patch blur estimation, polynomial deconvolution,
fringe correction of red/blue against green, and Hamming-window reassembly.

Per-patch failures degrade to identity for that patch instead of aborting the
image.  Patch results are reduced in fixed row-major order, so worker count
never changes the output beyond float reassociation in the workers themselves.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import baselines, fringe_net
from .deblur import DEFAULT_POLYNOMIAL, InversePolynomial, deblur_patch
from .estimation import (
    JPEG_MODEL,
    LINEAR_MODEL,
    AffineBlurModel,
    BlurEstimate,
    estimate,
)
from .image import GAMMA22, PlanarImage, extract, fuse, gamma_decode, gamma_encode, tile

FRINGE_METHODS = ("cnn", "none") + baselines.FRINGE_BASELINES


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("ABERREX_THREADS", "1")))
    except ValueError:
        return 1


def packaged_weights_path() -> str | None:
    """Path of the committed trained weights, if the package carries them."""
    try:
        path = resources.files("aberrex").joinpath("data/fringenet.ftbw")
        if path.is_file():
            return str(path)
    except (FileNotFoundError, ModuleNotFoundError):
        pass
    return None


@dataclass(frozen=True)
class PipelineConfig:
    patch_size: int = 400
    overlap: float = 0.25
    coefficients: str | AffineBlurModel = "auto"  # auto selects by colorspace tag
    polynomial: InversePolynomial = DEFAULT_POLYNOMIAL
    fringe_method: str = "cnn"
    weights_path: str | None = None  # None: packaged default
    threads: int = field(default_factory=default_threads)
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 100:
            raise ValueError(f"patch size must be >= 100, got {self.patch_size}")
        if self.overlap not in (0.0, 0.25, 0.5):
            raise ValueError(f"overlap must be 0, 0.25 or 0.5, got {self.overlap}")
        if self.fringe_method not in FRINGE_METHODS:
            raise ValueError(f"fringe method must be one of {FRINGE_METHODS}")
        if self.threads < 1:
            raise ValueError("thread count must be >= 1")

    def blur_model(self, colorspace: str) -> AffineBlurModel:
        if isinstance(self.coefficients, AffineBlurModel):
            return self.coefficients
        return JPEG_MODEL if colorspace == GAMMA22 else LINEAR_MODEL

    def load_weights(self) -> fringe_net.FringeNetWeights:
        path = self.weights_path or packaged_weights_path()
        if path is None:
            raise fringe_net.WeightFormatError(
                "no fringe network weights: pass --weights or set ABERREX_WEIGHTS"
            )
        return fringe_net.load_weights(path)


def _defringe_patch(z: np.ndarray, config: PipelineConfig, weights) -> np.ndarray:
    out = z.copy()
    for c in (0, 2):
        try:
            if config.fringe_method == "cnn":
                out[c] = fringe_net.correct_channel(weights, z[c], z[1])
            else:
                out[c] = baselines.correct_fringe_baseline(z[c], z[1], config.fringe_method)
        except ValueError:
            out[c] = z[c]  # degenerate patch (e.g. all-zero): keep it unchanged
    return out


def _process_patch(
    patch: np.ndarray,
    config: PipelineConfig,
    model: AffineBlurModel,
    weights,
    stage: str,
) -> np.ndarray:
    z = patch
    if stage in ("full", "deblur"):
        est = estimate(patch, model)
        z = deblur_patch(patch, est, config.polynomial)
    if stage in ("full", "defringe") and config.fringe_method != "none":
        z = _defringe_patch(z, config, weights)
    return z


def _run_stage(image: PlanarImage, config: PipelineConfig, stage: str) -> PlanarImage:
    if image.channels != 3:
        raise ValueError("the correction pipeline needs a 3-channel image")
    weights = None
    if config.fringe_method == "cnn" and stage in ("full", "defringe"):
        weights = config.load_weights()
    tagged_jpeg = image.colorspace == GAMMA22
    work = gamma_decode(image) if tagged_jpeg else image
    model = config.blur_model(image.colorspace)
    grid = tile(work, config.patch_size, config.overlap)
    patches = [extract(work, grid, i) for i in range(len(grid.origins))]
    if config.threads == 1:
        results = [_process_patch(p, config, model, weights, stage) for p in patches]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(
                pool.map(lambda p: _process_patch(p, config, model, weights, stage), patches)
            )
    out = fuse(results, grid)
    out = PlanarImage(np.clip(out.data, 0.0, 1.0), work.colorspace)
    return gamma_encode(out) if tagged_jpeg else out


def correct(image: PlanarImage, config: PipelineConfig = PipelineConfig()) -> PlanarImage:
    """Both stages: blind deblurring then fringe correction, patchwise."""
    return _run_stage(image, config, "full")


def deblur_only(image: PlanarImage, config: PipelineConfig = PipelineConfig()) -> PlanarImage:
    """Stage 1 only: blind Gaussian deblurring."""
    return _run_stage(image, config, "deblur")


def defringe_only(image: PlanarImage, config: PipelineConfig = PipelineConfig()) -> PlanarImage:
    """Stage 2 only: red/blue fringe correction against green."""
    return _run_stage(image, config, "defringe")


def estimate_patch_kernel(
    image: PlanarImage,
    origin: tuple[int, int],
    config: PipelineConfig = PipelineConfig(),
) -> BlurEstimate:
    """Blur estimate for the patch anchored at `origin` (clamped into bounds)."""
    work = gamma_decode(image) if image.colorspace == GAMMA22 else image
    p = min(config.patch_size, work.height, work.width)
    r = min(max(origin[0], 0), work.height - p)
    c = min(max(origin[1], 0), work.width - p)
    patch = work.data[:, r : r + p, c : c + p]
    return estimate(patch, config.blur_model(image.colorspace))

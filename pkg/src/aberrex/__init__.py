"""Blind optical aberration correction.

Two-stage engine: per-patch Gaussian blur estimation with polynomial
approximate-inverse deconvolution, then residual-CNN removal of lateral
chromatic fringes, plus the simulation, calibration, baseline, and metric
machinery around it.
"""

from .estimation import AffineBlurModel, BlurEstimate, JPEG_MODEL, LINEAR_MODEL, calibrate, estimate
from .image import GAMMA22, LINEAR, PatchGrid, PlanarImage, fuse, gamma_decode, gamma_encode, tile
from .imageio import ImageIoError, read_image, write_image
from .pipeline import PipelineConfig, correct, deblur_only, defringe_only
from .psf import EmpiricalPsf, GaussianPsf, RasterKernel, covariance, fit_gaussian, rasterize

__version__ = "0.1.0"

__all__ = [
    "AffineBlurModel",
    "BlurEstimate",
    "EmpiricalPsf",
    "GAMMA22",
    "GaussianPsf",
    "ImageIoError",
    "JPEG_MODEL",
    "LINEAR",
    "LINEAR_MODEL",
    "PatchGrid",
    "PipelineConfig",
    "PlanarImage",
    "RasterKernel",
    "calibrate",
    "correct",
    "covariance",
    "deblur_only",
    "defringe_only",
    "estimate",
    "fit_gaussian",
    "fuse",
    "gamma_decode",
    "gamma_encode",
    "rasterize",
    "read_image",
    "tile",
    "write_image",
    "__version__",
]

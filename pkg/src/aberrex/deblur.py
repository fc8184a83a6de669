"""Approximate-inverse polynomial deconvolution of Gaussian-blurred channels.

The inverse of a mild blur k is approximated by a low-degree polynomial in k
under convolution.  The default p(k) = k*k - 3k + 3*delta is the degree-2
truncation of the reciprocal about 1 (p(x)*x = 1 - (1-x)^3) and has unit DC
gain, so constants pass through unchanged.  Both coefficient variants printed
elsewhere with non-unit DC gain remain reachable through the coefficient
vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .estimation import BlurEstimate
from .image import PlanarImage
from .psf import RasterKernel, convolve, rasterize


@dataclass(frozen=True)
class InversePolynomial:
    """Coefficients (a0, a1, ..., ad) of p(k) = a0*delta + a1*k + ... + ad*k^(*d)."""

    coefficients: tuple[float, ...] = (3.0, -3.0, 1.0)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if not 1 <= len(coeffs) <= 4:
            raise ValueError(f"polynomial degree must be <= 3, got {len(coeffs) - 1}")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def dc_gain(self) -> float:
        return sum(self.coefficients)


DEFAULT_POLYNOMIAL = InversePolynomial()


def build_inverse(kernel: RasterKernel, poly: InversePolynomial = DEFAULT_POLYNOMIAL) -> np.ndarray:
    """Taps of p(k); support grows to d*(side-1)+1.  Taps may be negative."""
    k = kernel.taps
    degree = len(poly.coefficients) - 1
    side = degree * (k.shape[0] - 1) + 1
    filt = np.zeros((side, side), np.float64)
    center = side // 2
    filt[center, center] = poly.coefficients[0]
    power = k
    for j, coeff in enumerate(poly.coefficients[1:], start=1):
        half = power.shape[0] // 2
        filt[center - half : center + half + 1, center - half : center + half + 1] += coeff * power
        if j < degree:
            power = signal.convolve2d(power, k, mode="full")
    return filt


def deblur_channel(
    channel: np.ndarray,
    theta: float,
    sigma: float,
    rho: float,
    poly: InversePolynomial = DEFAULT_POLYNOMIAL,
) -> np.ndarray:
    """Deconvolve one channel with the inverse filter of its Gaussian kernel."""
    kernel = rasterize(theta, sigma, rho)
    return convolve(channel, build_inverse(kernel, poly))


def deblur_patch(
    patch: PlanarImage | np.ndarray,
    est: BlurEstimate,
    poly: InversePolynomial = DEFAULT_POLYNOMIAL,
) -> np.ndarray:
    """Deconvolve each channel with its own estimated kernel (shared direction).

    Flat-flagged or floor-clamped channels pass through untouched; the result
    is clamped to [0, 1] once after filtering.
    """
    data = patch.data if isinstance(patch, PlanarImage) else np.asarray(patch, np.float32)
    if data.ndim != 3 or data.shape[0] != 3:
        raise ValueError(f"expected a 3-channel patch, got shape {data.shape}")
    out = np.empty_like(data)
    for c in range(3):
        if est.is_dirac(c):
            out[c] = data[c]
        else:
            out[c] = deblur_channel(data[c], est.theta, est.sigma[c], est.rho[c], poly)
    return np.clip(out, 0.0, 1.0)

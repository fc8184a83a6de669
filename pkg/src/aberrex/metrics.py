"""Evaluation metrics: SSIM, the deblurring SSIM ratio, chroma-gradient
energy, and the residual training loss.

The energy score compares normalized gradients of the red/blue planes against
the green one and needs no ground truth, so it also applies to real images.
Sums over pixels are reported as means so values are comparable across patch
sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .deblur import DEFAULT_POLYNOMIAL, InversePolynomial, build_inverse
from .estimation import gradients
from .psf import RasterKernel, convolve


@dataclass(frozen=True)
class SsimConfig:
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0


DEFAULT_SSIM = SsimConfig()


def _gaussian_window(cfg: SsimConfig) -> np.ndarray:
    half = cfg.window_size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-0.5 * (ax / cfg.window_sigma) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def _local_mean(a: np.ndarray, window: np.ndarray) -> np.ndarray:
    r = window.shape[0] // 2
    padded = np.pad(a, r, mode="symmetric")
    return signal.oaconvolve(padded, window, mode="valid")


def ssim(a: np.ndarray, b: np.ndarray, cfg: SsimConfig = DEFAULT_SSIM) -> float:
    """Mean local structural similarity of two single-channel images."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < cfg.window_size:
        raise ValueError(f"images must be at least {cfg.window_size} pixels per side")
    window = _gaussian_window(cfg)
    mu_a = _local_mean(a, window)
    mu_b = _local_mean(b, window)
    var_a = _local_mean(a * a, window) - mu_a**2
    var_b = _local_mean(b * b, window) - mu_b**2
    cov = _local_mean(a * b, window) - mu_a * mu_b
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(score.mean())


_SHIFT_RANGE = 2  # integer alignment search radius
_CROP = 15  # border crop before scoring


def _best_shift_ssim(deblurred: np.ndarray, clean: np.ndarray, cfg: SsimConfig) -> float:
    """Max SSIM over integer translations of the clean reference (border-cropped)."""
    h, w = clean.shape
    best = -np.inf
    d = deblurred[_CROP : h - _CROP, _CROP : w - _CROP]
    for dy in range(-_SHIFT_RANGE, _SHIFT_RANGE + 1):
        for dx in range(-_SHIFT_RANGE, _SHIFT_RANGE + 1):
            u = clean[_CROP + dy : h - _CROP + dy, _CROP + dx : w - _CROP + dx]
            best = max(best, ssim(d, u, cfg))
    return best


def ssim_ratio(
    blurry: np.ndarray,
    clean: np.ndarray,
    kernel_true: RasterKernel,
    kernel_est: RasterKernel,
    poly: InversePolynomial = DEFAULT_POLYNOMIAL,
    cfg: SsimConfig = DEFAULT_SSIM,
) -> float:
    """Relative deblurring quality of an estimated kernel vs the true one:

        R = (SSIM[p(g) * v, u] + 2) / (SSIM[p(g_est) * v, u] + 2)

    Both sides use the same integer-shift alignment search (radius 2) and a
    15-pixel border crop, so R equals 1 exactly when the kernels agree.
    """
    if blurry.shape != clean.shape:
        raise ValueError(f"shape mismatch {blurry.shape} vs {clean.shape}")
    if min(clean.shape) < 61:
        raise ValueError("images smaller than 61x61: the 15-pixel crop leaves no usable area")
    num = _best_shift_ssim(convolve(blurry, build_inverse(kernel_true, poly)), clean, cfg)
    den = _best_shift_ssim(convolve(blurry, build_inverse(kernel_est, poly)), clean, cfg)
    return (num + 2.0) / (den + 2.0)


def energy(u_r: np.ndarray, u_b: np.ndarray, z_g: np.ndarray, eps: float = 1e-3) -> float:
    """Chroma-gradient energy: mean L1 gap between normalized gradients of the
    red/blue planes and the green plane.  Zero when both planes equal green."""
    if not (u_r.shape == u_b.shape == z_g.shape):
        raise ValueError(f"shape mismatch {u_r.shape} / {u_b.shape} / {z_g.shape}")
    g = np.maximum(np.asarray(z_g, np.float64), eps)
    ggx, ggy = gradients(z_g)
    total = 0.0
    for plane in (u_r, u_b):
        p = np.maximum(np.asarray(plane, np.float64), eps)
        gx, gy = gradients(plane)
        total += float(np.abs(ggx / g - gx / p).mean())
        total += float(np.abs(ggy / g - gy / p).mean())
    return total


def residual_loss(u: np.ndarray, z: np.ndarray, phi: np.ndarray) -> float:
    """Training objective: mean L1 gap of chroma residuals, summed over R and B.

    `u` and `z` are (3, h, w) clean/deblurred stacks; `phi` holds the network
    outputs for the red and blue channels as a (2, h, w) stack.
    """
    u = np.asarray(u, np.float64)
    z = np.asarray(z, np.float64)
    phi = np.asarray(phi, np.float64)
    if u.shape != z.shape or u.shape[0] != 3 or phi.shape != (2,) + u.shape[1:]:
        raise ValueError(f"shape mismatch: u {u.shape}, z {z.shape}, phi {phi.shape}")
    total = 0.0
    for c, pc in ((0, 0), (2, 1)):
        target = (u[c] - u[1]) - (z[c] - phi[pc] - z[1])
        total += float(np.abs(target).mean())
    return total

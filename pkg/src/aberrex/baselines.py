"""Classical chroma-alignment baselines: global radial warp, phase-correlation
translation, and pyramid Lucas-Kanade translation/similarity fields.

All baselines align a moving plane (red or blue) onto the fixed green plane
and resample bicubically with mirror boundaries.  They model geometry only;
unlike the residual network they cannot equalize per-channel edge profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, optimize

from .simulate import translate


@dataclass(frozen=True)
class RadialWarp:
    """r' = r * (1 + k1 * rn^2 + k3 * rn^4) about `center`, rn = r / half-diagonal."""

    center: tuple[float, float]  # (cx, cy)
    k1: float
    k3: float


@dataclass(frozen=True)
class LocalWarp:
    """Per-block warp parameters on a regular block grid.

    mode 'translation': params (gy, gx, 2) holding (dx, dy) per block.
    mode 'similarity':  params (gy, gx, 4) holding (dx, dy, scale-1, angle),
    every block expressed about the shared image center, so parameters blend
    across blocks.
    """

    block_size: int
    mode: str
    params: np.ndarray
    flags: np.ndarray  # True where the normal equations were singular
    center: tuple[float, float]
    shape: tuple[int, int]

    def __post_init__(self):
        if not np.isfinite(self.params).all():
            raise ValueError("non-finite warp parameters")


# --- phase correlation ---


def phase_correlate(moving: np.ndarray, fixed: np.ndarray) -> tuple[float, float]:
    """Sub-pixel (dx, dy) such that translate(moving, dx, dy) aligns onto fixed.

    Peak of the normalized cross-power spectrum with parabolic refinement in
    each axis.
    """
    moving = np.asarray(moving, np.float64)
    fixed = np.asarray(fixed, np.float64)
    if moving.shape != fixed.shape:
        raise ValueError(f"shape mismatch {moving.shape} vs {fixed.shape}")
    if min(moving.shape) < 32:
        raise ValueError("phase correlation needs at least 32x32 inputs")
    if not moving.any() or not fixed.any():
        raise ValueError("all-zero input")
    spectrum = np.fft.fft2(moving) * np.conj(np.fft.fft2(fixed))
    spectrum /= np.maximum(np.abs(spectrum), 1e-12)
    corr = np.real(np.fft.ifft2(spectrum))
    h, w = corr.shape
    py, px = np.unravel_index(int(np.argmax(corr)), corr.shape)

    def _peak_offset(cm, c0, cp):
        # the unit-power peak is sinc-shaped, so the one-sided ratio
        # c1 / (c1 + c0) recovers the fractional offset exactly
        side, c1 = (1.0, cp) if abs(cp) > abs(cm) else (-1.0, cm)
        den = c1 + c0
        if abs(den) < 1e-12 or abs(c0) < 1e-12:
            return 0.0
        return float(np.clip(side * c1 / den, -0.5, 0.5))

    dy = py + _peak_offset(corr[(py - 1) % h, px], corr[py, px], corr[(py + 1) % h, px])
    dx = px + _peak_offset(corr[py, (px - 1) % w], corr[py, px], corr[py, (px + 1) % w])
    if dy > h / 2:
        dy -= h
    if dx > w / 2:
        dx -= w
    # peak at s means moving equals fixed shifted by +s; undo it
    return -dx, -dy


# --- pyramid Lucas-Kanade ---


def _downsample(channel: np.ndarray) -> np.ndarray:
    smoothed = ndimage.gaussian_filter(channel, 1.0, mode="reflect")
    return smoothed[::2, ::2]


def _warp_coords(params, mode, center, ys, xs):
    """Sampling coordinates W(x; p) on the moving image for output pixels (ys, xs)."""
    if mode == "translation":
        dx, dy = params
        return ys - dy, xs - dx
    dx, dy, a, ang = params
    c, s = math.cos(ang), math.sin(ang)
    scale = 1.0 + a
    ux, uy = xs - center[0], ys - center[1]
    sx = center[0] + scale * (c * ux - s * uy) - dx
    sy = center[1] + scale * (s * ux + c * uy) - dy
    return sy, sx


def _gn_step(moving_full, fixed, r0, c0, params, mode, center):
    """One Gauss-Newton update; fixed is a block of the full image at (r0, c0)."""
    h, w = fixed.shape
    ys, xs = np.mgrid[r0 : r0 + h, c0 : c0 + w].astype(np.float64)
    sy, sx = _warp_coords(params, mode, center, ys, xs)
    warped = ndimage.map_coordinates(moving_full, [sy, sx], order=1, mode="reflect")
    gy, gx = np.gradient(warped)
    err = fixed - warped
    if mode == "translation":
        jac = [-gx, -gy]
    else:
        _, _, a, ang = params
        c, s = math.cos(ang), math.sin(ang)
        ux, uy = xs - center[0], ys - center[1]
        jac = [
            -gx,
            -gy,
            gx * (c * ux - s * uy) + gy * (s * ux + c * uy),
            (1.0 + a) * (gx * (-s * ux - c * uy) + gy * (c * ux - s * uy)),
        ]
    n = len(jac)
    ata = np.empty((n, n))
    atb = np.empty(n)
    for i in range(n):
        atb[i] = float((jac[i] * err).sum())
        for j in range(i, n):
            ata[i, j] = ata[j, i] = float((jac[i] * jac[j]).sum())
    cond_ok = np.isfinite(ata).all() and np.linalg.cond(ata) < 1e10
    if not cond_ok:
        return params, 0.0, True
    delta = np.linalg.solve(ata, atb)
    if not np.isfinite(delta).all():
        return params, 0.0, True
    return params + delta, float(np.abs(delta[:2]).max()), False


def _refine(moving_full, fixed, r0, c0, params, mode, iterations, tol, center):
    params = np.asarray(params, np.float64).copy()
    singular = False
    for _ in range(iterations):
        params, step, bad = _gn_step(moving_full, fixed, r0, c0, params, mode, center)
        singular = singular or bad
        if bad or step < tol:
            break
    return params, singular


def lucas_kanade(
    moving: np.ndarray,
    fixed: np.ndarray,
    mode: str = "translation",
    levels: int = 3,
    block_size: int = 64,
    iterations: int = 20,
    tol: float = 1e-3,
) -> LocalWarp:
    """Coarse-to-fine Gauss-Newton alignment: global estimate through the
    pyramid, then per-block refinement at full resolution.

    Blocks with singular normal equations keep the global motion, flagged.
    """
    moving = np.asarray(moving, np.float64)
    fixed = np.asarray(fixed, np.float64)
    if moving.shape != fixed.shape:
        raise ValueError(f"shape mismatch {moving.shape} vs {fixed.shape}")
    if mode not in ("translation", "similarity"):
        raise ValueError(f"unknown mode {mode!r}")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = fixed.shape
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    pyramid = [(moving, fixed)]
    while len(pyramid) < levels and min(pyramid[-1][0].shape) >= 64:
        pyramid.append((_downsample(pyramid[-1][0]), _downsample(pyramid[-1][1])))
    params = np.zeros(2 if mode == "translation" else 4)
    for lvl in range(len(pyramid) - 1, -1, -1):
        m, f = pyramid[lvl]
        lvl_center = (center[0] / 2**lvl, center[1] / 2**lvl)
        params, _ = _refine(m, f, 0, 0, params, mode, iterations, tol, lvl_center)
        if lvl > 0:
            params[0] *= 2.0
            params[1] *= 2.0
    gy_n, gx_n = max(1, h // block_size), max(1, w // block_size)
    grid = np.zeros((gy_n, gx_n, params.size))
    flags = np.zeros((gy_n, gx_n), bool)
    for by in range(gy_n):
        for bx in range(gx_n):
            r0 = by * block_size
            c0 = bx * block_size
            r1 = h if by == gy_n - 1 else r0 + block_size
            c1 = w if bx == gx_n - 1 else c0 + block_size
            refined, singular = _refine(
                moving, fixed[r0:r1, c0:c1], r0, c0, params, mode, iterations, tol, center
            )
            grid[by, bx] = params if singular else refined
            flags[by, bx] = singular
    return LocalWarp(block_size, mode, grid, flags, center, (h, w))


# --- global radial model ---


def _radial_coords(shape: tuple[int, int], warp: RadialWarp):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ux, uy = xs - warp.center[0], ys - warp.center[1]
    half_diag = 0.5 * math.hypot(h, w)
    rn2 = (ux * ux + uy * uy) / half_diag**2
    factor = 1.0 + warp.k1 * rn2 + warp.k3 * rn2 * rn2
    return warp.center[1] + uy * factor, warp.center[0] + ux * factor


def fit_radial(moving: np.ndarray, fixed: np.ndarray) -> RadialWarp:
    """Nelder-Mead fit of (k1, k3) minimizing the mean absolute chroma residual,
    center fixed at the image center."""
    moving = np.asarray(moving, np.float64)
    fixed = np.asarray(fixed, np.float64)
    if moving.shape != fixed.shape:
        raise ValueError(f"shape mismatch {moving.shape} vs {fixed.shape}")
    h, w = fixed.shape
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    spline = ndimage.spline_filter(moving, order=3, mode="reflect")

    def cost(k):
        sy, sx = _radial_coords(fixed.shape, RadialWarp(center, k[0], k[1]))
        warped = ndimage.map_coordinates(
            spline, [sy, sx], order=3, mode="reflect", prefilter=False
        )
        return float(np.abs(warped - fixed).mean())

    res = optimize.minimize(
        cost,
        np.zeros(2),
        method="Nelder-Mead",
        options={
            "xatol": 1e-5,
            "fatol": 1e-9,
            "maxiter": 120,
            "initial_simplex": np.array([[0.0, 0.0], [0.004, 0.0], [0.0, 0.004]]),
        },
    )
    return RadialWarp(center, float(res.x[0]), float(res.x[1]))


# --- warp application ---


def _interp_block_params(warp: LocalWarp, h: int, w: int) -> np.ndarray:
    """Bilinear interpolation of per-block parameters to a dense (h, w, n) field."""
    gy_n, gx_n, n = warp.params.shape
    if gy_n == 1 and gx_n == 1:
        return np.broadcast_to(warp.params[0, 0], (h, w, n))
    # knot positions = block centers (last block absorbs the remainder)
    def centers(extent, count):
        edges = [min(i * warp.block_size, extent) for i in range(count)] + [extent]
        return np.array([(edges[i] + edges[i + 1] - 1) / 2.0 for i in range(count)])

    cy = centers(h, gy_n)
    cx = centers(w, gx_n)
    fy = np.interp(np.arange(h), cy, np.arange(gy_n)) if gy_n > 1 else np.zeros(h)
    fx = np.interp(np.arange(w), cx, np.arange(gx_n)) if gx_n > 1 else np.zeros(w)
    y0 = np.floor(fy).astype(int)
    x0 = np.floor(fx).astype(int)
    y1 = np.minimum(y0 + 1, gy_n - 1)
    x1 = np.minimum(x0 + 1, gx_n - 1)
    wy = (fy - y0)[:, None, None]
    wx = (fx - x0)[None, :, None]
    p = warp.params
    return (
        p[y0][:, x0] * (1 - wy) * (1 - wx)
        + p[y0][:, x1] * (1 - wy) * wx
        + p[y1][:, x0] * wy * (1 - wx)
        + p[y1][:, x1] * wy * wx
    )


def apply_warp(channel: np.ndarray, warp: RadialWarp | LocalWarp) -> np.ndarray:
    """Resample a channel through a warp (bicubic, mirror boundary)."""
    channel = np.asarray(channel, np.float64)
    h, w = channel.shape
    if isinstance(warp, RadialWarp):
        sy, sx = _radial_coords(channel.shape, warp)
    else:
        dense = _interp_block_params(warp, h, w)
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        if warp.mode == "translation":
            sy = ys - dense[:, :, 1]
            sx = xs - dense[:, :, 0]
        else:
            scale = 1.0 + dense[:, :, 2]
            ang = dense[:, :, 3]
            ux, uy = xs - warp.center[0], ys - warp.center[1]
            sx = warp.center[0] + scale * (np.cos(ang) * ux - np.sin(ang) * uy) - dense[:, :, 0]
            sy = warp.center[1] + scale * (np.sin(ang) * ux + np.cos(ang) * uy) - dense[:, :, 1]
    out = ndimage.map_coordinates(channel, [sy, sx], order=3, mode="reflect")
    return out.astype(np.float32)


# --- correction dispatcher used by the pipeline and eval ---

FRINGE_BASELINES = ("radial", "phasecorr", "plk-t", "plk-s")

# warps below this displacement are resampling noise, not fringes; skipping
# them keeps already-aligned planes bit-identical
_IDENTITY_EPS = 0.02


def _max_displacement(shape: tuple[int, int], warp: RadialWarp | LocalWarp) -> float:
    h, w = shape
    if isinstance(warp, RadialWarp):
        half_diag = 0.5 * math.hypot(h, w)
        rn2 = ((h / 2) ** 2 + (w / 2) ** 2) / half_diag**2
        return abs(warp.k1 * rn2 + warp.k3 * rn2 * rn2) * half_diag
    if warp.mode == "translation":
        return float(np.abs(warp.params).max())
    trans = float(np.abs(warp.params[:, :, :2]).max())
    lever = 0.5 * math.hypot(h, w)
    return trans + float(
        (np.abs(warp.params[:, :, 2]) + np.abs(warp.params[:, :, 3])).max()
    ) * lever


def correct_fringe_baseline(z_c: np.ndarray, z_g: np.ndarray, method: str) -> np.ndarray:
    """Align one chroma plane onto green with a named classical method."""
    if method == "phasecorr":
        dx, dy = phase_correlate(z_c, z_g)
        if max(abs(dx), abs(dy)) < _IDENTITY_EPS:
            return np.asarray(z_c, np.float32).copy()
        return np.clip(translate(z_c, dx, dy), 0.0, 1.0)
    if method == "radial":
        warp = fit_radial(z_c, z_g)
    elif method in ("plk-t", "plk-s"):
        mode = "translation" if method == "plk-t" else "similarity"
        warp = lucas_kanade(z_c, z_g, mode=mode)
    else:
        raise ValueError(f"unknown fringe method {method!r}")
    if _max_displacement(z_c.shape, warp) < _IDENTITY_EPS:
        return np.asarray(z_c, np.float32).copy()
    return np.clip(apply_warp(z_c, warp), 0.0, 1.0)

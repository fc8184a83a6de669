"""Synthetic raw formation and ISP emulation for training/evaluation pairs.

A clean linear image is warped per channel (sub-pixel translations of red and
blue), blurred with the parametric Gaussian model, corrupted with
heteroscedastic shot/read noise, mosaicked to an RGGB Bayer plane, and clipped
to [0, 1].  The ISP side denoises the four Bayer sub-planes with a bilateral
filter and demosaicks with gradient-directed green interpolation plus
color-difference interpolation for red/blue.  Dataset generation then runs the
blind deblurring stage so the stored pairs feed the fringe network directly.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .deblur import DEFAULT_POLYNOMIAL, deblur_patch
from .estimation import LINEAR_MODEL, estimate
from .image import LINEAR, PlanarImage
from .imageio import read_image, write_image
from .psf import GaussianPsf, convolve, rasterize


@dataclass(frozen=True)
class DegradeParams:
    psf: GaussianPsf
    shift_r: tuple[float, float]  # (dx, dy) pixels
    shift_b: tuple[float, float]
    alpha: float  # shot noise weight
    beta: float  # read noise weight
    bayer: str = "RGGB"
    seed: int = 0

    def __post_init__(self):
        for dx, dy in (self.shift_r, self.shift_b):
            if not (-4.0 <= dx <= 4.0 and -4.0 <= dy <= 4.0):
                raise ValueError(f"channel shifts must lie in [-4, 4]^2, got ({dx}, {dy})")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("noise weights must be nonnegative")
        if self.bayer != "RGGB":
            raise ValueError(f"unsupported Bayer pattern {self.bayer!r}")


@dataclass(frozen=True)
class SamplePair:
    clean: PlanarImage  # linear ground truth
    raw: np.ndarray  # mosaicked single plane
    rgb: PlanarImage  # denoised + demosaicked aberrated image
    params: DegradeParams


@dataclass(frozen=True)
class DatasetConfig:
    crop: int = 128
    std_range: tuple[float, float] = (0.2, 4.0)
    shift_limit: float = 4.0
    alpha_range: tuple[float, float] = (1e-4, 0.012)  # log-uniform
    beta_range: tuple[float, float] = (1e-7, 4e-5)  # log-uniform
    bilateral_spatial: float = 1.8
    unprocess_sources: bool = True


# --- unprocessing (display-referred -> linear) ---


def _inverse_smoothstep(y: np.ndarray) -> np.ndarray:
    # inverse of 3x^2 - 2x^3 on [0, 1]
    y = np.clip(y, 0.0, 1.0)
    return 0.5 - np.sin(np.arcsin(1.0 - 2.0 * y) / 3.0)


def smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return 3.0 * x**2 - 2.0 * x**3


def unprocess(image: PlanarImage) -> PlanarImage:
    """Invert the S tone curve then the 2.2 gamma, yielding linear values."""
    x = _inverse_smoothstep(image.data.astype(np.float64))
    return PlanarImage((x**2.2).astype(np.float32), LINEAR)


def process(image: PlanarImage) -> PlanarImage:
    """Forward tone pipeline: gamma compression then the S curve."""
    x = np.clip(image.data.astype(np.float64), 0.0, 1.0) ** (1.0 / 2.2)
    return PlanarImage(smoothstep(x).astype(np.float32), "gamma22")


# --- forward model ---


def translate(channel: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Bicubic sub-pixel translation moving content by (+dx, +dy), mirror boundary."""
    if dx == 0.0 and dy == 0.0:
        return np.asarray(channel, np.float32).copy()
    h, w = channel.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    out = ndimage.map_coordinates(
        channel.astype(np.float64), [ys - dy, xs - dx], order=3, mode="reflect"
    )
    return out.astype(np.float32)


def mosaick(planes: np.ndarray, pattern: str = "RGGB") -> np.ndarray:
    """Decimate a (3, h, w) stack onto a single RGGB Bayer plane."""
    if pattern != "RGGB":
        raise ValueError(f"unsupported Bayer pattern {pattern!r}")
    _, h, w = planes.shape
    raw = np.empty((h, w), np.float32)
    raw[0::2, 0::2] = planes[0, 0::2, 0::2]
    raw[0::2, 1::2] = planes[1, 0::2, 1::2]
    raw[1::2, 0::2] = planes[1, 1::2, 0::2]
    raw[1::2, 1::2] = planes[2, 1::2, 1::2]
    return raw


def apply_forward_model(
    clean: PlanarImage, params: DegradeParams, denoise: bool = True
) -> SamplePair:
    """Run the raw formation model; deterministic given params.seed."""
    data = clean.data.astype(np.float64)
    shifts = {0: params.shift_r, 1: (0.0, 0.0), 2: params.shift_b}
    degraded = np.empty_like(data, dtype=np.float32)
    for c in range(3):
        plane = translate(data[c], *shifts[c]).astype(np.float64)
        kernel = rasterize(*params.psf.channel(c))
        degraded[c] = convolve(plane, kernel)
    rng = np.random.default_rng(np.random.SeedSequence(params.seed))
    if params.alpha > 0 or params.beta > 0:
        variance = np.clip(params.alpha * degraded + params.beta, 0.0, None)
        degraded = degraded + rng.standard_normal(degraded.shape, np.float32) * np.sqrt(
            variance, dtype=np.float32
        )
    raw = np.clip(mosaick(degraded, params.bayer), 0.0, 1.0)
    work = raw
    if denoise and (params.alpha > 0 or params.beta > 0):
        range_sigma = 3.0 * math.sqrt(params.alpha * 0.5 + params.beta)
        work = denoise_bayer(raw, spatial_sigma=1.8, range_sigma=range_sigma)
    rgb = demosaick_hamilton_adams(work, params.bayer)
    return SamplePair(clean, raw, PlanarImage(rgb, LINEAR), params)


# --- bilateral denoising ---


def bilateral_denoise(channel: np.ndarray, spatial_sigma: float, range_sigma: float) -> np.ndarray:
    """Standard bilateral filter over a (2*ceil(2*spatial_sigma)+1)^2 window."""
    channel = np.asarray(channel, np.float64)
    radius = int(math.ceil(2.0 * spatial_sigma))
    padded = np.pad(channel, radius, mode="symmetric")
    h, w = channel.shape
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    inv_r2 = 1.0 / (2.0 * max(range_sigma, 1e-12) ** 2)
    inv_s2 = 1.0 / (2.0 * spatial_sigma**2)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            shifted = padded[radius + dy : radius + dy + h, radius + dx : radius + dx + w]
            weight = math.exp(-(dx * dx + dy * dy) * inv_s2) * np.exp(
                -((shifted - channel) ** 2) * inv_r2
            )
            num += weight * shifted
            den += weight
    return (num / den).astype(np.float32)


def denoise_bayer(raw: np.ndarray, spatial_sigma: float, range_sigma: float) -> np.ndarray:
    """Bilateral-denoise each of the four Bayer sub-planes independently."""
    out = np.empty_like(raw, np.float32)
    for oy in (0, 1):
        for ox in (0, 1):
            out[oy::2, ox::2] = bilateral_denoise(
                raw[oy::2, ox::2], spatial_sigma, range_sigma
            )
    return out


# --- Hamilton-Adams demosaicking ---


def demosaick_hamilton_adams(raw: np.ndarray, pattern: str = "RGGB") -> np.ndarray:
    """Gradient-directed green reconstruction with Laplacian correction, then
    color-difference interpolation for red/blue.  Returns a (3, h, w) stack."""
    if pattern != "RGGB":
        raise ValueError(f"unsupported Bayer pattern {pattern!r}")
    h, w = raw.shape
    if h % 2 or w % 2:
        raise ValueError(f"Bayer demosaicking needs even dimensions, got {raw.shape}")
    # 'reflect' (no edge repeat) maps index -k to +k and preserves CFA parity
    p = np.pad(raw.astype(np.float64), 2, mode="reflect")
    green = p.copy()
    ys, xs = np.mgrid[2 : h + 2, 2 : w + 2]
    chroma_site = ((ys % 2) == 0) & ((xs % 2) == 0) | ((ys % 2) == 1) & ((xs % 2) == 1)
    cy, cx = ys[chroma_site], xs[chroma_site]
    c0 = p[cy, cx]
    grad_h = np.abs(p[cy, cx - 1] - p[cy, cx + 1]) + np.abs(2 * c0 - p[cy, cx - 2] - p[cy, cx + 2])
    grad_v = np.abs(p[cy - 1, cx] - p[cy + 1, cx]) + np.abs(2 * c0 - p[cy - 2, cx] - p[cy + 2, cx])
    est_h = 0.5 * (p[cy, cx - 1] + p[cy, cx + 1]) + 0.25 * (2 * c0 - p[cy, cx - 2] - p[cy, cx + 2])
    est_v = 0.5 * (p[cy - 1, cx] + p[cy + 1, cx]) + 0.25 * (2 * c0 - p[cy - 2, cx] - p[cy + 2, cx])
    est_m = 0.5 * (est_h + est_v)
    green[cy, cx] = np.where(grad_h < grad_v, est_h, np.where(grad_h > grad_v, est_v, est_m))
    green_full = green[2 : h + 2, 2 : w + 2]

    # red/blue: interpolate the color-difference plane bilinearly, then add green
    def _chroma(site_y: int, site_x: int) -> np.ndarray:
        diff = np.zeros((h + 4, w + 4))
        mask = np.zeros((h + 4, w + 4))
        diff[2 + site_y : h + 2 : 2, 2 + site_x : w + 2 : 2] = (
            p[2 + site_y : h + 2 : 2, 2 + site_x : w + 2 : 2]
            - green[2 + site_y : h + 2 : 2, 2 + site_x : w + 2 : 2]
        )
        mask[2 + site_y : h + 2 : 2, 2 + site_x : w + 2 : 2] = 1.0
        # parity-preserving mirror of the known sites into the pad margin
        for arr in (diff, mask):
            arr[0:2] = arr[4:2:-1]
            arr[h + 2 : h + 4] = arr[h + 1 : h - 1 : -1]
            arr[:, 0:2] = arr[:, 4:2:-1]
            arr[:, w + 2 : w + 4] = arr[:, w + 1 : w - 1 : -1]
        kernel = np.array([[0.25, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.25]])
        num = ndimage.convolve(diff, kernel, mode="constant")
        den = ndimage.convolve(mask, kernel, mode="constant")
        full = num[2 : h + 2, 2 : w + 2] / den[2 : h + 2, 2 : w + 2]
        return full + green_full

    red = _chroma(0, 0)
    blue = _chroma(1, 1)
    return np.clip(np.stack([red, green_full, blue]), 0.0, 1.0).astype(np.float32)


# --- dataset generation ---


def sample_params(rng: np.random.Generator, config: DatasetConfig, seed: int) -> DegradeParams:
    lo, hi = config.std_range
    stds = rng.uniform(lo, hi, 6)
    psf = GaussianPsf(rng.uniform(0.0, math.pi), *stds)
    shift_r = tuple(rng.uniform(-config.shift_limit, config.shift_limit, 2))
    shift_b = tuple(rng.uniform(-config.shift_limit, config.shift_limit, 2))
    alpha = math.exp(rng.uniform(math.log(config.alpha_range[0]), math.log(config.alpha_range[1])))
    beta = math.exp(rng.uniform(math.log(config.beta_range[0]), math.log(config.beta_range[1])))
    return DegradeParams(psf, shift_r, shift_b, alpha, beta, seed=seed)


_MANIFEST_COLUMNS = (
    "id theta sigma_r sigma_g sigma_b rho_r rho_g rho_b "
    "dx_r dy_r dx_b dy_b alpha beta bayer seed"
).split()


def generate_dataset(
    source_dir: str | os.PathLike,
    count: int,
    out_dir: str | os.PathLike,
    config: DatasetConfig = DatasetConfig(),
    seed: int = 0,
) -> str:
    """Write `count` sample pairs plus a manifest.tsv; reproducible from seed.

    Layout: out_dir/{clean,raw,aberrated,deblurred}/NNNNNN.pfm.  Sources are
    display-referred images that get unprocessed to linear before degradation;
    the deblurred plane is produced by the blind stage with the linear-domain
    coefficients, which is what the fringe network trains against.
    """
    source_dir = os.fspath(source_dir)
    sources = sorted(
        os.path.join(source_dir, n)
        for n in os.listdir(source_dir)
        if os.path.splitext(n)[1].lower() in (".png", ".ppm", ".pfm")
    )
    if not sources:
        raise ValueError(f"{source_dir}: no source images")
    out_dir = os.fspath(out_dir)
    for sub in ("clean", "raw", "aberrated", "deblurred"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    rows = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        src = read_image(sources[int(rng.integers(len(sources)))])
        clean = _random_crop(src, config.crop, rng)
        if config.unprocess_sources:
            clean = unprocess(clean)
        params = sample_params(rng, config, seed=int(rng.integers(2**31)))
        pair = apply_forward_model(clean, params)
        est = estimate(pair.rgb, LINEAR_MODEL)
        z = deblur_patch(pair.rgb, est, DEFAULT_POLYNOMIAL)
        name = f"{i:06d}.pfm"
        write_image(pair.clean, os.path.join(out_dir, "clean", name))
        write_image(PlanarImage(pair.raw[None]), os.path.join(out_dir, "raw", name))
        write_image(pair.rgb, os.path.join(out_dir, "aberrated", name))
        write_image(PlanarImage(z), os.path.join(out_dir, "deblurred", name))
        psf = params.psf
        rows.append(
            [i, psf.theta, psf.sigma_r, psf.sigma_g, psf.sigma_b, psf.rho_r, psf.rho_g, psf.rho_b]
            + list(params.shift_r)
            + list(params.shift_b)
            + [params.alpha, params.beta, params.bayer, params.seed]
        )
    manifest = os.path.join(out_dir, "manifest.tsv")
    with open(manifest, "w") as f:
        f.write("\t".join(_MANIFEST_COLUMNS) + "\n")
        for row in rows:
            f.write(
                "\t".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in row) + "\n"
            )
    return manifest


def _random_crop(image: PlanarImage, crop: int, rng: np.random.Generator) -> PlanarImage:
    if image.height < crop or image.width < crop:
        raise ValueError(f"source {image.height}x{image.width} smaller than crop {crop}")
    r = int(rng.integers(image.height - crop + 1))
    c = int(rng.integers(image.width - crop + 1))
    return PlanarImage(image.data[:, r : r + crop, c : c + crop].copy(), image.colorspace)

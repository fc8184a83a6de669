"""Parametric 2D Gaussian blur kernels and moment-based fitting.

A local lens blur is modeled per color channel by an anisotropic Gaussian with
a shared principal direction: std `sigma` along the unit vector
(cos theta, sin theta) in (x=columns, y=rows) coordinates and std `rho` along
the perpendicular.  The covariance convention is

    Sigma = R(theta) @ diag(sigma^2, rho^2) @ R(theta).T

so the major-axis eigenvector sits at +theta and the off-diagonal term is
positive for theta in (0, pi/2).  `fit_gaussian` inverts `rasterize` via the
second moments of the tap distribution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .imageio import ImageIoError, _read_token

STD_FLOOR = 0.2
STD_CEIL = 4.0


@dataclass(frozen=True)
class GaussianPsf:
    """Seven-parameter RGB blur: shared direction, per-channel stds."""

    theta: float
    sigma_r: float
    sigma_g: float
    sigma_b: float
    rho_r: float
    rho_g: float
    rho_b: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % math.pi)
        for name in ("sigma_r", "sigma_g", "sigma_b", "rho_r", "rho_g", "rho_b"):
            v = float(getattr(self, name))
            if not STD_FLOOR <= v <= STD_CEIL:
                raise ValueError(f"{name}={v} outside the validated range [{STD_FLOOR}, {STD_CEIL}]")

    def channel(self, c: int) -> tuple[float, float, float]:
        sigma = (self.sigma_r, self.sigma_g, self.sigma_b)[c]
        rho = (self.rho_r, self.rho_g, self.rho_b)[c]
        return self.theta, sigma, rho


@dataclass(frozen=True)
class RasterKernel:
    """Odd-sided grid of unit-sum taps centered on the middle cell."""

    side: int
    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, np.float64)
        if taps.shape != (self.side, self.side) or self.side % 2 == 0:
            raise ValueError(f"kernel must be odd square, got side={self.side} shape={taps.shape}")
        if abs(taps.sum() - 1.0) > 1e-8:
            raise ValueError(f"kernel taps sum to {taps.sum()}, expected 1")
        object.__setattr__(self, "taps", taps)


def covariance(theta: float, sigma: float, rho: float) -> np.ndarray:
    """Covariance matrix R(theta) diag(sigma^2, rho^2) R(theta)^T in (x, y) coordinates."""
    if sigma <= 0 or rho <= 0:
        raise ValueError(f"standard deviations must be positive, got ({sigma}, {rho})")
    c, s = math.cos(theta), math.sin(theta)
    r = np.array([[c, -s], [s, c]])
    return r @ np.diag([sigma**2, rho**2]) @ r.T


def rasterize(theta: float, sigma: float, rho: float) -> RasterKernel:
    """Sample the Gaussian at integer offsets and renormalize to unit sum.

    Support radius 4*max(sigma, rho) covers > 0.9999 of the mass.
    """
    if not (0 < sigma <= 8 and 0 < rho <= 8):
        raise ValueError(f"standard deviations must be in (0, 8], got ({sigma}, {rho})")
    radius = int(math.ceil(4.0 * max(sigma, rho)))
    side = 2 * radius + 1
    ys, xs = np.mgrid[-radius : radius + 1, -radius : radius + 1].astype(np.float64)
    c, s = math.cos(theta), math.sin(theta)
    # quadratic form of Sigma^{-1} = R diag(1/s^2, 1/r^2) R^T
    a = c * c / sigma**2 + s * s / rho**2
    d = s * s / sigma**2 + c * c / rho**2
    b = c * s * (1.0 / sigma**2 - 1.0 / rho**2)
    q = a * xs * xs + 2.0 * b * xs * ys + d * ys * ys
    taps = np.exp(-0.5 * q)
    taps /= taps.sum()
    return RasterKernel(side, taps)


def fit_gaussian(taps: np.ndarray) -> tuple[float, float, float]:
    """Recover (theta, sigma, rho) from a nonnegative tap grid by second moments.

    The tap distribution's covariance about its centroid is eigendecomposed;
    theta is the major eigenvector angle folded into [0, pi), sigma/rho the
    square roots of the eigenvalues.  Degenerate grids clamp to the 0.2 floor.
    """
    taps = np.asarray(taps, np.float64)
    total = taps.sum()
    if taps.ndim != 2 or total <= 0 or (taps < 0).any():
        raise ValueError("PSF grid must be 2-d, nonnegative, with positive mass")
    p = taps / total
    h, w = p.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    mx, my = (p * xs).sum(), (p * ys).sum()
    dx, dy = xs - mx, ys - my
    cxx = (p * dx * dx).sum()
    cyy = (p * dy * dy).sum()
    cxy = (p * dx * dy).sum()
    evals, evecs = np.linalg.eigh(np.array([[cxx, cxy], [cxy, cyy]]))
    # eigh returns ascending eigenvalues
    sigma = math.sqrt(max(evals[1], 0.0))
    rho = math.sqrt(max(evals[0], 0.0))
    vx, vy = evecs[0, 1], evecs[1, 1]
    theta = math.atan2(vy, vx) % math.pi
    if sigma < STD_FLOOR or rho < STD_FLOOR:
        warnings.warn("near-degenerate PSF moments, clamping stds to the 0.2 floor")
        sigma, rho = max(sigma, STD_FLOOR), max(rho, STD_FLOOR)
    return theta, sigma, rho


def convolve(channel: np.ndarray, kernel: RasterKernel | np.ndarray) -> np.ndarray:
    """Same-size 2D convolution with symmetric (mirror) boundary handling."""
    taps = kernel.taps if isinstance(kernel, RasterKernel) else np.asarray(kernel, np.float64)
    side = taps.shape[0]
    if side > min(channel.shape):
        raise ValueError(f"kernel side {side} exceeds channel extent {channel.shape}")
    r = side // 2
    padded = np.pad(channel.astype(np.float64), r, mode="symmetric")
    out = signal.oaconvolve(padded, taps, mode="valid")
    return out.astype(np.float32)


# --- empirical PSF measurements ---


@dataclass(frozen=True)
class EmpiricalPsf:
    """Measured per-channel PSF taps, unit sum per channel."""

    taps: np.ndarray  # (channels, side, side)

    def __post_init__(self):
        taps = np.asarray(self.taps, np.float64)
        if taps.ndim != 3 or taps.shape[1] != taps.shape[2] or taps.shape[1] % 2 == 0:
            raise ValueError(f"expected (channels, side, side) with odd side, got {taps.shape}")
        if (taps < 0).any():
            raise ValueError("empirical PSF taps must be nonnegative")
        sums = taps.sum(axis=(1, 2))
        if (sums <= 0).any():
            raise ValueError("empirical PSF channel with zero mass")
        object.__setattr__(self, "taps", taps / sums[:, None, None])

    @property
    def channels(self) -> int:
        return self.taps.shape[0]

    @property
    def side(self) -> int:
        return self.taps.shape[1]


def _read_pfm_block(f, path: str) -> np.ndarray:
    magic = _read_token(f)
    if magic != b"Pf":
        raise ImageIoError(f"{path}: EPSF payload must be grayscale PFM, got magic {magic!r}")
    try:
        w, h = int(_read_token(f)), int(_read_token(f))
        scale = float(_read_token(f))
    except ValueError as exc:
        raise ImageIoError(f"{path}: bad PFM block header ({exc})") from exc
    payload = f.read(h * w * 4)
    if len(payload) != h * w * 4:
        raise ImageIoError(f"{path}: truncated PFM block")
    arr = np.frombuffer(payload, "<f4" if scale < 0 else ">f4").reshape(h, w)
    return np.ascontiguousarray(arr[::-1], np.float64)  # PFM rows are bottom-up


def read_epsf(path: str) -> list[EmpiricalPsf]:
    """Read an empirical-PSF grid file: one or more records of

        EPSF <side> <channels>\\n

    each followed by one grayscale PFM block of taps per channel.
    """
    records = []
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise ImageIoError(f"{path}: {exc}") from exc
    with f:
        while True:
            head = f.readline()
            if head.strip() == b"":
                break
            parts = head.split()
            if len(parts) != 3 or parts[0] != b"EPSF":
                raise ImageIoError(f"{path}: bad EPSF record header {head!r}")
            try:
                side, channels = int(parts[1]), int(parts[2])
            except ValueError as exc:
                raise ImageIoError(f"{path}: bad EPSF dimensions ({exc})") from exc
            taps = np.stack([_read_pfm_block(f, path) for _ in range(channels)])
            if taps.shape != (channels, side, side):
                raise ImageIoError(f"{path}: EPSF payload shape {taps.shape} does not match header")
            records.append(EmpiricalPsf(taps))
    if not records:
        raise ImageIoError(f"{path}: empty EPSF file")
    return records


def write_epsf(records: list[EmpiricalPsf], path: str) -> None:
    with open(path, "wb") as f:
        for rec in records:
            f.write(b"EPSF %d %d\n" % (rec.side, rec.channels))
            for c in range(rec.channels):
                f.write(b"Pf\n%d %d\n-1.0\n" % (rec.side, rec.side))
                f.write(rec.taps[c, ::-1].astype("<f4").tobytes())

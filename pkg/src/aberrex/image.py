"""Planar image container, patch tiling and Hamming-window overlap fusion.

Images are stored channel-planar (channels, height, width) as float32 with
samples nominally in [0, 1].  Patch fusion uses a separable symmetric Hamming
window normalized per pixel by the accumulated window sum, which makes
tile -> fuse an exact identity on untouched patches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LINEAR = "linear"
GAMMA22 = "gamma22"

_COLORSPACES = (LINEAR, GAMMA22)


@dataclass(frozen=True)
class PlanarImage:
    """Float32 image, shape (channels, height, width), channels 1 or 3."""

    data: np.ndarray
    colorspace: str = LINEAR

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"planar image must be 3-d (c, h, w), got shape {arr.shape}")
        if arr.shape[0] not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {arr.shape[0]}")
        if arr.shape[1] == 0 or arr.shape[2] == 0:
            raise ValueError("zero-sized image")
        if self.colorspace not in _COLORSPACES:
            raise ValueError(f"unknown colorspace tag {self.colorspace!r}")
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite samples")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def plane(self, c: int) -> np.ndarray:
        return self.data[c]

    def with_data(self, data: np.ndarray, colorspace: str | None = None) -> "PlanarImage":
        return PlanarImage(data, self.colorspace if colorspace is None else colorspace)


@dataclass(frozen=True)
class PatchGrid:
    """Tiling of an image into square patches with row-major origins."""

    patch_size: int
    overlap: float
    origins: tuple[tuple[int, int], ...]
    image_shape: tuple[int, int]


def _axis_origins(extent: int, patch: int, stride: int) -> list[int]:
    starts = list(range(0, extent - patch + 1, stride))
    if starts[-1] != extent - patch:
        # clamp the trailing patch into bounds instead of padding
        starts.append(extent - patch)
    return starts


def tile(image: PlanarImage, patch_size: int, overlap: float) -> PatchGrid:
    """Cover the image with patches of `patch_size` at the given overlap ratio.

    The stride is patch_size * (1 - overlap); the last row/column of origins is
    clamped so every patch sees real pixels.  A patch size exceeding the image
    is reduced to min(height, width).
    """
    if image.height == 0 or image.width == 0:
        raise ValueError("cannot tile a zero-sized image")
    if patch_size < 32:
        raise ValueError(f"patch size must be >= 32, got {patch_size}")
    if not 0.0 <= overlap <= 0.9:
        raise ValueError(f"overlap ratio must be in [0, 0.9], got {overlap}")
    p = min(patch_size, image.height, image.width)
    stride = max(1, int(round(p * (1.0 - overlap))))
    rows = _axis_origins(image.height, p, stride)
    cols = _axis_origins(image.width, p, stride)
    origins = tuple((r, c) for r in rows for c in cols)
    return PatchGrid(p, overlap, origins, (image.height, image.width))


def extract(image: PlanarImage, grid: PatchGrid, index: int) -> np.ndarray:
    """Copy of patch `index` as a (channels, p, p) array."""
    r, c = grid.origins[index]
    p = grid.patch_size
    return image.data[:, r : r + p, c : c + p].copy()


def _window(p: int) -> np.ndarray:
    # symmetric Hamming: 0.54 - 0.46 cos(2 pi n / (N - 1)); endpoints 0.08 > 0,
    # so the per-pixel normalizer never vanishes
    w = np.hamming(p)
    return np.outer(w, w)


def fuse(patches, grid: PatchGrid, out_shape: tuple[int, int] | None = None) -> PlanarImage:
    """Reassemble processed patches with Hamming weighting.

    output(x) = sum_i w_i(x) patch_i(x) / sum_i w_i(x).  Accumulation runs in
    grid origin order with float64 accumulators, so the result does not depend
    on how the patches were produced.
    """
    if len(patches) != len(grid.origins):
        raise ValueError(
            f"patch count {len(patches)} does not match grid of {len(grid.origins)} origins"
        )
    if out_shape is None:
        out_shape = grid.image_shape
    h, w = out_shape
    arrays = [p.data if isinstance(p, PlanarImage) else np.asarray(p) for p in patches]
    channels = arrays[0].shape[0]
    p = grid.patch_size
    for a in arrays:
        if a.shape != (channels, p, p):
            raise ValueError(f"patch shape {a.shape} does not match grid patch size {p}")
    win = _window(p)
    num = np.zeros((channels, h, w), np.float64)
    den = np.zeros((h, w), np.float64)
    for (r, c), a in zip(grid.origins, arrays):
        num[:, r : r + p, c : c + p] += a * win
        den[r : r + p, c : c + p] += win
    if not (den > 0).all():
        raise ValueError("patch grid does not cover the output shape")
    out = (num / den).astype(np.float32)
    tag = patches[0].colorspace if isinstance(patches[0], PlanarImage) else LINEAR
    return PlanarImage(out, tag)


def gamma_decode(image: PlanarImage, exponent: float = 2.2) -> PlanarImage:
    """Map gamma-encoded samples to linear: x -> x**exponent (inputs clamped to [0,1])."""
    data = np.clip(image.data, 0.0, 1.0) ** np.float32(exponent)
    return PlanarImage(data, LINEAR)


def gamma_encode(image: PlanarImage, exponent: float = 2.2) -> PlanarImage:
    """Map linear samples to gamma: x -> x**(1/exponent) (inputs clamped to [0,1])."""
    data = np.clip(image.data, 0.0, 1.0) ** np.float32(1.0 / exponent)
    return PlanarImage(data, GAMMA22)

"""Deterministic synthetic test scenes.

Blur estimation needs patches with strong, well-separated edges at many
orientations; fringe evaluation needs colorful occluding shapes.  Charts are
drawn at 2x resolution and box-downsampled for sub-pixel antialiasing, which
keeps the latent edges close to the ideal step profile the affine blur rule
was tuned on.
"""

from __future__ import annotations

import numpy as np

from .image import LINEAR, PlanarImage


def _downsample2(arr: np.ndarray) -> np.ndarray:
    return 0.25 * (arr[0::2, 0::2] + arr[1::2, 0::2] + arr[0::2, 1::2] + arr[1::2, 1::2])


def _disc_mask(xs, ys, cx, cy, radius):
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2


def _rect_mask(xs, ys, cx, cy, half_w, half_h, angle):
    c, s = np.cos(angle), np.sin(angle)
    u = c * (xs - cx) + s * (ys - cy)
    v = -s * (xs - cx) + c * (ys - cy)
    return (np.abs(u) <= half_w) & (np.abs(v) <= half_h)


def shape_chart(size: int, rng: np.random.Generator, shapes: int = 14) -> np.ndarray:
    """Grayscale chart of high-contrast discs and rotated bars over a two-tone
    split background.

    Edges appear at every orientation with long straight runs, which is what
    the max-gradient blur estimator keys on; the split background keeps the
    normalized variance well above the flat-patch threshold under heavy blur.
    """
    s2 = size * 2
    ys, xs = np.mgrid[0:s2, 0:s2].astype(np.float64)
    split = rng.uniform(0.0, np.pi)
    offset = rng.uniform(-0.15, 0.15) * s2
    halves = (np.cos(split) * (xs - s2 / 2) + np.sin(split) * (ys - s2 / 2)) > offset
    img = np.where(halves, 0.97, 0.03)
    for i in range(shapes):
        value = 0.97 if i % 2 == 0 else 0.03
        cx, cy = rng.uniform(0.1 * s2, 0.9 * s2, 2)
        if rng.random() < 0.5:
            mask = _disc_mask(xs, ys, cx, cy, rng.uniform(0.05, 0.16) * s2)
        else:
            mask = _rect_mask(
                xs,
                ys,
                cx,
                cy,
                rng.uniform(0.08, 0.25) * s2,
                rng.uniform(0.02, 0.08) * s2,
                rng.uniform(0.0, np.pi),
            )
        img[mask] = value
    return _downsample2(img).astype(np.float32)


def sunburst(size: int, spokes: int = 12) -> np.ndarray:
    """Alternating angular wedges: edges at `spokes` evenly spaced orientations."""
    s2 = size * 2
    ys, xs = np.mgrid[0:s2, 0:s2].astype(np.float64)
    ang = np.arctan2(ys - s2 / 2, xs - s2 / 2)
    wedge = np.floor((ang % (2 * np.pi)) / (2 * np.pi) * spokes).astype(int)
    img = np.where(wedge % 2 == 0, 0.95, 0.05)
    return _downsample2(img).astype(np.float32)


def dead_leaves(
    size: int,
    rng: np.random.Generator,
    discs: int = 80,
    colored: bool = True,
    saturation: float = 0.25,
) -> np.ndarray:
    """Occluding random discs with power-law radii, a standard camera test scene.

    Per-disc colors are a shared luminance plus a `saturation`-sized chroma
    spread; photographs sit around 0.1-0.3.  Returns (3, size, size) when
    colored, else (size, size).
    """
    s2 = size * 2
    ys, xs = np.mgrid[0:s2, 0:s2].astype(np.float64)
    channels = 3 if colored else 1
    img = np.full((channels, s2, s2), 0.5)
    rmin, rmax = 0.02 * s2, 0.35 * s2
    for _ in range(discs):
        # r ~ 1/r^3 density gives natural-image-like scale distribution
        u = rng.random()
        radius = rmin / np.sqrt(1.0 - u * (1.0 - (rmin / rmax) ** 2))
        cx, cy = rng.uniform(0, s2, 2)
        mask = _disc_mask(xs, ys, cx, cy, radius)
        base = rng.uniform(0.03, 0.97)
        if colored:
            color = np.clip(base + rng.uniform(-saturation, saturation, 3), 0.02, 0.98)
        else:
            color = [base]
        for c in range(channels):
            img[c][mask] = color[c]
    out = np.stack([_downsample2(img[c]) for c in range(channels)]).astype(np.float32)
    return out if colored else out[0]


def gray_chart_suite(count: int, size: int, seed: int = 0) -> list[np.ndarray]:
    """Deterministic grayscale charts mixing shape scatter and sunbursts."""
    rng = np.random.default_rng(seed)
    charts = []
    for i in range(count):
        if i % 4 == 3:
            charts.append(sunburst(size, spokes=10 + 2 * (i % 3)))
        else:
            charts.append(shape_chart(size, rng))
    return [np.clip(c, 0.0, 1.0).astype(np.float32) for c in charts]


def color_scene(size: int, rng: np.random.Generator) -> PlanarImage:
    """Colored dead-leaves scene used as a display-referred source image."""
    return PlanarImage(dead_leaves(size, rng, colored=True), LINEAR)


def colored_shapes(size: int, rng: np.random.Generator, shapes: int = 16,
                   saturation: float = 0.15) -> np.ndarray:
    """High-contrast colored shape scene: enough dynamic range that blur
    estimation engages, with photograph-like channel correlation."""
    s2 = size * 2
    ys, xs = np.mgrid[0:s2, 0:s2].astype(np.float64)
    split = rng.uniform(0.0, np.pi)
    halves = (np.cos(split) * (xs - s2 / 2) + np.sin(split) * (ys - s2 / 2)) > 0
    img = np.empty((3, s2, s2))
    for c in range(3):
        tones = np.clip(np.array([0.85, 0.15]) + rng.uniform(-saturation, saturation, 2), 0.02, 0.98)
        img[c] = np.where(halves, tones[0], tones[1])
    for i in range(shapes):
        base = 0.9 if i % 2 == 0 else 0.08
        color = np.clip(base + rng.uniform(-saturation, saturation, 3), 0.02, 0.98)
        cx, cy = rng.uniform(0.08 * s2, 0.92 * s2, 2)
        if rng.random() < 0.5:
            mask = _disc_mask(xs, ys, cx, cy, rng.uniform(0.04, 0.14) * s2)
        else:
            mask = _rect_mask(
                xs, ys, cx, cy,
                rng.uniform(0.06, 0.22) * s2,
                rng.uniform(0.015, 0.07) * s2,
                rng.uniform(0.0, np.pi),
            )
        for c in range(3):
            img[c][mask] = color[c]
    return np.stack([_downsample2(img[c]) for c in range(3)]).astype(np.float32)


def scene_suite(count: int, size: int, seed: int = 0) -> list[np.ndarray]:
    """Display-referred color scenes for dataset sources: a mix of contrasted
    shape scenes (blur estimation engages) and dead leaves (flat-rule path)."""
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(count):
        if i % 3 == 2:
            scenes.append(dead_leaves(size, rng, colored=True, saturation=0.15))
        else:
            scenes.append(colored_shapes(size, rng))
    return scenes

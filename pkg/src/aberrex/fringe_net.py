"""Residual color-fringe network: weight file I/O and forward inference.

The network maps a 2-channel stack [z_c, z_G] to a residual for channel c
(c = red or blue, same weights for both); the corrected plane is
z_c - residual, clamped to [0, 1].  The graph is a stride-1 chain of 3x3
convolutions with batch norm and ReLU plus three additive skips, so spatial
dimensions are preserved for any input of at least 8x8:

    tag      1    2    3    4    5    6      7    8      9    10     11
    layer    CBR  CBR  CBR  CBR  CBR  Add 3  CBR  Add 2  CBR  Add 1  C
    out/in   16/2 32/16 64/32 64/64 64/64 -  32/64 -     16/32 -     1/16

Weights travel in FTBW, a little-endian named-tensor container:
magic "FTBW", u32 version, u32 tensor count, then per tensor a u16 name
length, UTF-8 name, u8 rank, u32 dims, and float32 row-major payload.
Convolutions are cross-correlations (no kernel flip) over symmetric-padded
input; batch norm uses running statistics folded into a per-channel affine at
load time with epsilon 1e-5.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FTBW_MAGIC = b"FTBW"
FTBW_VERSION = 1
BN_EPSILON = 1e-5

# (tag, out_channels, in_channels) for each convolution; tags 6/8/10 are adds
CONV_LAYERS = (
    (1, 16, 2),
    (2, 32, 16),
    (3, 64, 32),
    (4, 64, 64),
    (5, 64, 64),
    (7, 32, 64),
    (9, 16, 32),
    (11, 1, 16),
)
BN_TAGS = (1, 2, 3, 4, 5, 7, 9)  # final conv has no batch norm / ReLU
SKIPS = {5: 3, 7: 2, 9: 1}  # after this tag's block, add the output of tag N

#: learnable parameters: conv kernels + biases + batch-norm affine terms
PARAMETER_COUNT = sum(o * i * 9 + o for _, o, i in CONV_LAYERS) + 2 * sum(
    o for t, o, _ in CONV_LAYERS if t in BN_TAGS
)


class WeightFormatError(Exception):
    """Malformed or mismatched weight file."""


def _expected_shapes() -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for tag, out_c, in_c in CONV_LAYERS:
        shapes[f"conv{tag}.w"] = (out_c, in_c, 3, 3)
        shapes[f"conv{tag}.b"] = (out_c,)
        if tag in BN_TAGS:
            for part in ("gamma", "beta", "mean", "var"):
                shapes[f"bn{tag}.{part}"] = (out_c,)
    return shapes


EXPECTED_SHAPES = _expected_shapes()


@dataclass(frozen=True)
class FringeNetWeights:
    """Validated tensor set with batch norm pre-folded per conv layer."""

    tensors: dict[str, np.ndarray]
    folded: tuple  # ((w, b, relu), ...) in tag order

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> "FringeNetWeights":
        for name, shape in EXPECTED_SHAPES.items():
            if name not in tensors:
                raise WeightFormatError(f"missing tensor {name}")
            got = tensors[name].shape
            if got != shape:
                raise WeightFormatError(f"{name}: dimension mismatch {got}, expected {shape}")
            if not np.isfinite(tensors[name]).all():
                raise WeightFormatError(f"{name}: non-finite values")
        extra = set(tensors) - set(EXPECTED_SHAPES)
        if extra:
            raise WeightFormatError(f"unexpected tensors: {sorted(extra)}")
        folded = []
        for tag, _, _ in CONV_LAYERS:
            w = tensors[f"conv{tag}.w"].astype(np.float32)
            b = tensors[f"conv{tag}.b"].astype(np.float32)
            if tag in BN_TAGS:
                # y = gamma * (x - mean) / sqrt(var + eps) + beta folds into conv
                scale = tensors[f"bn{tag}.gamma"] / np.sqrt(
                    tensors[f"bn{tag}.var"] + BN_EPSILON
                )
                w = (w * scale[:, None, None, None]).astype(np.float32)
                b = (
                    (b - tensors[f"bn{tag}.mean"]) * scale + tensors[f"bn{tag}.beta"]
                ).astype(np.float32)
            folded.append((w, b, tag in BN_TAGS))
        return cls(dict(tensors), tuple(folded))


def save_weights(tensors: dict[str, np.ndarray], path: str) -> None:
    """Write tensors to an FTBW file in canonical order."""
    with open(path, "wb") as f:
        f.write(FTBW_MAGIC)
        f.write(struct.pack("<II", FTBW_VERSION, len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], "<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_weights(path: str) -> FringeNetWeights:
    """Read and validate an FTBW weight file against the layer chain."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise WeightFormatError(f"{path}: {exc}") from exc
    if blob[:4] != FTBW_MAGIC:
        raise WeightFormatError(f"{path}: bad magic {blob[:4]!r}")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != FTBW_VERSION:
            raise WeightFormatError(f"{path}: unsupported version {version}")
        offset = 12
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            payload = blob[offset : offset + 4 * size]
            if len(payload) != 4 * size:
                raise WeightFormatError(f"{path}: truncated payload for {name}")
            offset += 4 * size
            tensors[name] = np.frombuffer(payload, "<f4").reshape(dims).copy()
    except struct.error as exc:
        raise WeightFormatError(f"{path}: truncated file ({exc})") from exc
    return FringeNetWeights.from_tensors(tensors)


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-size 3x3 cross-correlation over symmetric-padded (c, h, w) input.

    One GEMM per kernel offset keeps peak memory at one channel stack instead
    of a full im2col buffer.
    """
    in_c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="symmetric")
    out = np.zeros((w.shape[0], h * wd), np.float32)
    for ky in range(3):
        for kx in range(3):
            sl = np.ascontiguousarray(xp[:, ky : ky + h, kx : kx + wd]).reshape(in_c, -1)
            out += w[:, :, ky, kx] @ sl
    out += b[:, None]
    return out.reshape(w.shape[0], h, wd)


def forward(weights: FringeNetWeights, z_c: np.ndarray, z_g: np.ndarray) -> np.ndarray:
    """Residual prediction for one chroma channel against the green plane."""
    z_c = np.asarray(z_c, np.float32)
    z_g = np.asarray(z_g, np.float32)
    if z_c.shape != z_g.shape:
        raise ValueError(f"shape mismatch {z_c.shape} vs {z_g.shape}")
    if z_c.ndim != 2 or min(z_c.shape) < 8:
        raise ValueError(f"input must be a 2-d channel of at least 8x8, got {z_c.shape}")
    x = np.stack([z_c, z_g])
    saved: dict[int, np.ndarray] = {}
    for (tag, _, _), (w, b, relu) in zip(CONV_LAYERS, weights.folded):
        x = _conv3x3(x, w, b)
        if relu:
            np.maximum(x, 0.0, out=x)
        if tag in SKIPS:
            x = x + saved[SKIPS[tag]]
        if tag in (1, 2, 3):
            saved[tag] = x
    return x[0]


def correct_channel(weights: FringeNetWeights, z_c: np.ndarray, z_g: np.ndarray) -> np.ndarray:
    """Aligned chroma plane: clamp(z_c - residual, 0, 1)."""
    return np.clip(z_c - forward(weights, z_c, z_g), 0.0, 1.0)

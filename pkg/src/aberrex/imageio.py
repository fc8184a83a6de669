"""Image file I/O: PNG (8/16-bit), binary PPM (P6), and PFM.

Integer samples map to [0, 1] by division by (2^bits - 1); writing rounds
half-up so write(read(p)) is bit-identical.  PFM (float32, little-endian,
scale -1.0, bottom-to-top rows) is the lossless interchange format between
pipeline stages; integer formats default to the linear colorspace tag and the
CLI --jpeg flag re-tags them.
"""

from __future__ import annotations

import os

import cv2
import numpy as np

from .image import LINEAR, PlanarImage


class ImageIoError(Exception):
    """File-level failure (unsupported format, truncation, bad header)."""


def _from_interleaved(arr: np.ndarray, colorspace: str) -> PlanarImage:
    if arr.ndim == 2:
        planar = arr[None, :, :]
    else:
        planar = np.moveaxis(arr, 2, 0)
    return PlanarImage(np.ascontiguousarray(planar, dtype=np.float32), colorspace)


def _to_interleaved(image: PlanarImage) -> np.ndarray:
    if image.channels == 1:
        return image.data[0]
    return np.moveaxis(image.data, 0, 2)


def read_image(path: str | os.PathLike) -> PlanarImage:
    """Read a PNG, binary PPM or PFM file into a planar float image."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if not os.path.exists(path):
        raise ImageIoError(f"{path}: no such file")
    if ext == ".pfm":
        return _read_pfm(path)
    if ext in (".ppm", ".pnm"):
        return _read_ppm(path)
    if ext == ".png":
        return _read_png(path)
    raise ImageIoError(f"{path}: unsupported format {ext!r} (expected .png, .ppm or .pfm)")


def write_image(image: PlanarImage, path: str | os.PathLike, bits: int = 8) -> None:
    """Write a planar float image; `bits` selects 8/16-bit for integer formats."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pfm":
        _write_pfm(image, path)
        return
    if bits not in (8, 16):
        raise ValueError(f"bit depth must be 8 or 16, got {bits}")
    if ext in (".ppm", ".pnm"):
        _write_ppm(image, path, bits)
        return
    if ext == ".png":
        _write_png(image, path, bits)
        return
    raise ImageIoError(f"{path}: unsupported format {ext!r} (expected .png, .ppm or .pfm)")


def _quantize(data: np.ndarray, bits: int) -> np.ndarray:
    maxval = (1 << bits) - 1
    # round half-up, the exact inverse of x / maxval on integer inputs
    q = np.floor(np.clip(data, 0.0, 1.0).astype(np.float64) * maxval + 0.5)
    return q.astype(np.uint8 if bits == 8 else np.uint16)


# --- PNG (via OpenCV; channel order swapped to RGB) ---


def _read_png(path: str) -> PlanarImage:
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIoError(f"{path}: not a decodable PNG")
    if raw.dtype == np.uint8:
        maxval = 255.0
    elif raw.dtype == np.uint16:
        maxval = 65535.0
    else:
        raise ImageIoError(f"{path}: unsupported PNG sample type {raw.dtype}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        if raw.shape[2] != 3:
            raise ImageIoError(f"{path}: unsupported PNG channel count {raw.shape[2]}")
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return _from_interleaved(raw.astype(np.float32) / maxval, LINEAR)


def _write_png(image: PlanarImage, path: str, bits: int) -> None:
    q = _quantize(_to_interleaved(image), bits)
    if q.ndim == 3:
        q = cv2.cvtColor(q, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(path, q):
        raise ImageIoError(f"{path}: PNG write failed")


# --- binary PPM (P6) ---


def _read_token(f) -> bytes:
    tok = b""
    while True:
        ch = f.read(1)
        if ch == b"":
            raise ImageIoError("truncated header")
        if ch == b"#":
            f.readline()
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def _read_ppm(path: str) -> PlanarImage:
    try:
        with open(path, "rb") as f:
            magic = _read_token(f)
            if magic != b"P6":
                raise ImageIoError(f"{path}: not a binary PPM (magic {magic!r})")
            w = int(_read_token(f))
            h = int(_read_token(f))
            maxval = int(_read_token(f))
            if maxval not in (255, 65535):
                raise ImageIoError(f"{path}: unsupported PPM maxval {maxval}")
            dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
            payload = f.read(h * w * 3 * dtype.itemsize)
    except (ValueError, OSError) as exc:
        raise ImageIoError(f"{path}: bad PPM header ({exc})") from exc
    if len(payload) != h * w * 3 * dtype.itemsize:
        raise ImageIoError(f"{path}: truncated PPM payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(h, w, 3)
    return _from_interleaved(arr.astype(np.float32) / maxval, LINEAR)


def _write_ppm(image: PlanarImage, path: str, bits: int) -> None:
    if image.channels != 3:
        raise ValueError("PPM requires a 3-channel image")
    q = _quantize(_to_interleaved(image), bits)
    if bits == 16:
        q = q.astype(">u2")
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n%d\n" % (image.width, image.height, (1 << bits) - 1))
        f.write(q.tobytes())


# --- PFM (PF color / Pf gray, negative scale = little-endian, rows bottom-up) ---


def _read_pfm(path: str) -> PlanarImage:
    try:
        with open(path, "rb") as f:
            magic = _read_token(f)
            if magic not in (b"PF", b"Pf"):
                raise ImageIoError(f"{path}: not a PFM (magic {magic!r})")
            w = int(_read_token(f))
            h = int(_read_token(f))
            scale = float(_read_token(f))
            channels = 3 if magic == b"PF" else 1
            payload = f.read(h * w * channels * 4)
    except (ValueError, OSError) as exc:
        raise ImageIoError(f"{path}: bad PFM header ({exc})") from exc
    if len(payload) != h * w * channels * 4:
        raise ImageIoError(f"{path}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(payload, dtype=dtype).reshape(h, w, channels)
    arr = np.ascontiguousarray(arr[::-1], np.float32)  # stored bottom-to-top
    if not np.isfinite(arr).all():
        raise ImageIoError(f"{path}: PFM contains non-finite samples")
    if channels == 1:
        arr = arr[:, :, 0]
    return _from_interleaved(arr, LINEAR)


def _write_pfm(image: PlanarImage, path: str) -> None:
    magic = b"PF" if image.channels == 3 else b"Pf"
    arr = _to_interleaved(image).astype("<f4")
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n-1.0\n" % (image.width, image.height))
        f.write(arr[::-1].tobytes())

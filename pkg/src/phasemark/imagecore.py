"""Grayscale image I/O and synthetic sensor degradation.

Images are plain ``numpy`` arrays of shape ``(height, width)`` holding
float64 intensities in [0, 1]. Pixel ``(0, 0)`` is the top-left pixel, pixel
centers sit on integer coordinates, ``x`` runs along columns and ``y`` down
the rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d

from ._validation import check_image
from .exceptions import ConfigError, ImageIOError

SUPPORTED_BIT_DEPTHS = (8, 10, 12, 16)


@dataclass(frozen=True)
class SensorSpec:
    """Sensor model applied by :func:`degrade`.

    Noise is additive Gaussian, drawn from ``numpy.random.default_rng(seed)``
    (PCG64), so a given seed always produces the same corruption.
    """

    bit_depth: int = 12
    gaussian_noise_sigma: float = 0.0
    blur_sigma: float = 0.0

    def __post_init__(self):
        if self.bit_depth not in SUPPORTED_BIT_DEPTHS:
            raise ConfigError(f"bit_depth must be one of {SUPPORTED_BIT_DEPTHS}, got {self.bit_depth}")
        if not (self.gaussian_noise_sigma >= 0 and self.blur_sigma >= 0):
            raise ConfigError("noise and blur sigmas must be >= 0")


def quantize(img: np.ndarray, bit_depth: int) -> np.ndarray:
    levels = (1 << bit_depth) - 1
    return np.floor(img * levels + 0.5) / levels


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, radius ``ceil(3 sigma)``, edge-clamped."""
    if sigma <= 0:
        return np.array(img, dtype=np.float64)
    k = gaussian_kernel(sigma)
    out = convolve1d(np.asarray(img, dtype=np.float64), k, axis=0, mode="nearest")
    return convolve1d(out, k, axis=1, mode="nearest")


def degrade(img, spec: SensorSpec, seed: int = 0) -> np.ndarray:
    """Blur, add noise, quantize to ``spec.bit_depth`` and clamp to [0, 1]."""
    img = check_image(img)
    out = gaussian_blur(img, spec.blur_sigma)
    if spec.gaussian_noise_sigma > 0:
        rng = np.random.default_rng(seed)
        out = out + rng.normal(0.0, spec.gaussian_noise_sigma, size=out.shape)
    out = quantize(out, spec.bit_depth)
    return np.clip(out, 0.0, 1.0)


# -- file I/O ---------------------------------------------------------------


def _read_pgm(data: bytes, path) -> np.ndarray:
    if not data.startswith(b"P5"):
        raise ImageIOError(f"{path}: only binary PGM (P5) is supported")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageIOError(f"{path}: truncated PGM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace before the raster
    width, height, maxval = fields
    if maxval not in (255, 65535):
        raise ImageIOError(f"{path}: unsupported PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype(np.uint8)
    count = width * height
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return raster.reshape(height, width).astype(np.float64) / maxval


def load_image(path) -> np.ndarray:
    """Read an 8- or 16-bit grayscale PGM or PNG, rescaled to [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"{path}: no such file")
    data = path.read_bytes()
    if data[:2] == b"P5":
        try:
            return _read_pgm(data, path)
        except ValueError as exc:
            raise ImageIOError(f"{path}: malformed PGM ({exc})") from exc
    try:
        with Image.open(path) as im:
            im.load()
            fmt, mode = im.format, im.mode
            if fmt != "PNG":
                raise ImageIOError(f"{path}: unsupported format {fmt}")
            if mode in ("L", "1"):
                return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                return np.asarray(im, dtype=np.float64) / 65535.0
            raise ImageIOError(f"{path}: color or palette images are not supported (mode {mode})")
    except ImageIOError:
        raise
    except Exception as exc:  # Pillow raises a variety of types
        raise ImageIOError(f"{path}: cannot read image ({exc})") from exc


def save_image(img, path, bit_depth: int = 8) -> None:
    """Write ``img`` as PNG or PGM (chosen by suffix) at 8 or 16 bits."""
    if bit_depth not in (8, 16):
        raise ConfigError(f"bit_depth must be 8 or 16, got {bit_depth}")
    img = check_image(img, clip=True)
    levels = (1 << bit_depth) - 1
    samples = np.floor(img * levels + 0.5)
    path = Path(path)
    try:
        if path.suffix.lower() in (".pgm", ".pnm"):
            dtype = ">u2" if bit_depth == 16 else np.uint8
            header = f"P5\n{img.shape[1]} {img.shape[0]}\n{levels}\n".encode()
            with open(path, "wb") as fh:
                fh.write(header)
                fh.write(samples.astype(dtype).tobytes())
        else:
            arr = samples.astype(np.uint16 if bit_depth == 16 else np.uint8)
            Image.fromarray(arr).save(path, format="PNG")
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot write ({exc.strerror or exc})") from exc


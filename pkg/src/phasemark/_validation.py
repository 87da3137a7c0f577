"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigError


def check_image(img, *, name="img", min_size=1, clip=False) -> np.ndarray:
    """Return ``img`` as a 2D float64 array of finite values in [0, 1].

    Parameters
    ----------
    img : array-like of shape (height, width)
    min_size : int
        Minimum accepted width and height.
    clip : bool
        Clip out-of-range values instead of raising.
    """
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2D grayscale array, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr / 255.0
    elif arr.dtype == np.uint16:
        arr = arr / 65535.0
    else:
        arr = arr.astype(np.float64, copy=False)
    h, w = arr.shape
    if h < min_size or w < min_size:
        raise ValueError(f"{name} must be at least {min_size}x{min_size}, got {w}x{h}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if clip:
        arr = np.clip(arr, 0.0, 1.0)
    elif arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} intensities must lie in [0, 1]")
    return arr


def check_images(X, *, min_size=1) -> list:
    """Accept a single image, a 3D stack or a sequence of 2D images."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return [check_image(X, min_size=min_size)]
    if isinstance(X, np.ndarray) and X.ndim == 3:
        return [check_image(x, name=f"X[{k}]", min_size=min_size) for k, x in enumerate(X)]
    try:
        items = list(X)
    except TypeError:
        raise ValueError("X must be an image or a sequence of images") from None
    return [check_image(x, name=f"X[{k}]", min_size=min_size) for k, x in enumerate(items)]


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ConfigError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (strict and value == 0):
        raise ConfigError(f"{name} must be {'> 0' if strict else '>= 0'}, got {value!r}")
    return float(value)


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)

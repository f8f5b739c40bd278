"""Input validation helpers used by the estimator-style classes.

All helpers raise InputError (bad runtime data) or ConfigurationError (bad
settings) with messages that name the offending field.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, InputError


def as_image_batch(
    X, image_shape: tuple[int, int, int] | None = None, name: str = "X"
) -> tuple[np.ndarray, bool]:
    """Coerce to a float64 image batch (n, H, W, C).

    Accepts a single image (H, W, C) or a batch; returns the batch plus a flag
    saying whether the input was a single image. Values must be finite.
    """
    arr = np.asarray(X, dtype=np.float64)
    single = False
    if image_shape is not None and arr.ndim == 3:
        if tuple(arr.shape) != tuple(image_shape):
            raise InputError(
                f"{name}: expected image shape {tuple(image_shape)}, got {arr.shape}"
            )
        arr = arr[None]
        single = True
    elif arr.ndim == 3 and image_shape is None:
        arr = arr[None]
        single = True
    if arr.ndim != 4:
        raise InputError(f"{name}: expected (n, H, W, C) array, got shape {arr.shape}")
    if image_shape is not None and tuple(arr.shape[1:]) != tuple(image_shape):
        raise InputError(
            f"{name}: expected image shape {tuple(image_shape)}, got {arr.shape[1:]}"
        )
    if not np.isfinite(arr).all():
        raise InputError(f"{name}: contains non-finite values")
    return arr, single


def check_labels(y, n: int | None = None, num_classes: int | None = None, name: str = "y") -> np.ndarray:
    """Coerce to an int64 label vector and range-check against num_classes."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise InputError(f"{name}: expected 1-d label array, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise InputError(f"{name}: labels must be integers")
        arr = as_int
    arr = arr.astype(np.int64)
    if n is not None and arr.shape[0] != n:
        raise InputError(f"{name}: got {arr.shape[0]} labels for {n} samples")
    if arr.size and num_classes is not None:
        if arr.min() < 0 or arr.max() >= num_classes:
            raise InputError(
                f"{name}: labels must lie in [0, {num_classes}), got range "
                f"[{arr.min()}, {arr.max()}]"
            )
    return arr


def check_unit_range(x: np.ndarray, name: str = "images") -> None:
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise InputError(f"{name}: pixel values must lie in [0, 1]")


def check_fraction(value: float, field: str, *, inclusive: bool = True) -> float:
    v = float(value)
    ok = 0.0 <= v <= 1.0 if inclusive else 0.0 < v < 1.0
    if not ok:
        bounds = "[0, 1]" if inclusive else "(0, 1)"
        raise ConfigurationError(f"{field}: must lie in {bounds}, got {value}")
    return v


def check_positive(value, field: str, *, integer: bool = False):
    if integer:
        if int(value) != value or int(value) < 1:
            raise ConfigurationError(f"{field}: must be a positive integer, got {value}")
        return int(value)
    v = float(value)
    if not np.isfinite(v) or v <= 0:
        raise ConfigurationError(f"{field}: must be positive, got {value}")
    return v


def check_non_negative(value, field: str, *, integer: bool = False):
    if integer:
        if int(value) != value or int(value) < 0:
            raise ConfigurationError(f"{field}: must be a non-negative integer, got {value}")
        return int(value)
    v = float(value)
    if not np.isfinite(v) or v < 0:
        raise ConfigurationError(f"{field}: must be non-negative, got {value}")
    return v


def check_choice(value: str, options: tuple[str, ...], field: str) -> str:
    if value not in options:
        raise ConfigurationError(
            f"{field}: expected one of {list(options)}, got {value!r}"
        )
    return value

"""Per-pixel feature maps and factored image encodings.

A grayscale image of N pixels becomes N feature vectors of length d = 2,
one per pixel. The implied tensor product of those vectors (the full
2^N-component data state) is never materialized.
"""

import enum

import numpy as np

from .errors import DomainError
from .tensor import DTYPE


class FeatureMap(enum.Enum):
    """Built-in local feature maps for normalized pixels p in [0, 1].

    LINEAR maps p to (1 - p, p); components sum to 1.
    TRIG maps p to (cos(pi*p/2), sin(pi*p/2)); Euclidean norm 1.
    Both send black (0) and white (1) to the two standard basis vectors.
    """

    LINEAR = "linear"
    TRIG = "trig"

    @property
    def d(self) -> int:
        return 2


DEFAULT_FEATURE_MAP = FeatureMap.LINEAR


def _check_range(p: np.ndarray) -> None:
    bad = (p < 0.0) | (p > 1.0) | ~np.isfinite(p)
    if bad.any():
        idx = int(np.argmax(bad.reshape(-1)))
        val = p.reshape(-1)[idx]
        raise DomainError(
            f"pixel value {val!r} at flat index {idx} outside [0, 1]; "
            "normalize before encoding"
        )


def _features(fmap: FeatureMap, p: np.ndarray) -> np.ndarray:
    if fmap is FeatureMap.LINEAR:
        return np.stack([1.0 - p, p], axis=-1)
    # cos(pi*p/2) written as sin(pi*(1-p)/2) so p = 0, 1 hit the basis
    # vectors exactly.
    half_pi = 0.5 * np.pi
    return np.stack([np.sin(half_pi * (1.0 - p)), np.sin(half_pi * p)], axis=-1)


def encode_pixel(fmap: FeatureMap, p: float) -> np.ndarray:
    """Feature vector of length d for one normalized pixel value."""
    arr = np.asarray(p, dtype=DTYPE)
    if arr.ndim != 0:
        raise DomainError(f"encode_pixel expects a scalar, got shape {arr.shape}")
    _check_range(arr)
    return _features(fmap, arr)


def encode_image(fmap: FeatureMap, pixels) -> np.ndarray:
    """Encode N pixels into an [N, d] array of feature vectors.

    Pixel order is preserved (row-major flattening of the source image).
    """
    p = np.asarray(pixels, dtype=DTYPE)
    if p.ndim != 1:
        raise DomainError(f"encode_image expects a flat pixel list, got shape {p.shape}")
    _check_range(p)
    return _features(fmap, p)


def encode_batch(fmap: FeatureMap, images) -> np.ndarray:
    """Encode a [B, N] batch of flattened images into [B, N, d] features."""
    p = np.asarray(images, dtype=DTYPE)
    if p.ndim != 2:
        raise DomainError(f"encode_batch expects a [B, N] array, got shape {p.shape}")
    _check_range(p)
    return _features(fmap, p)

"""Pixel location -> 6D input features (x1, y1, x2, y2, r, theta), all in [0, 1].

(x1, y1) has its origin at the top-left corner, (x2, y2) at the bottom-right,
and (r, theta) is polar around the image centre. Axes of length 1 map to 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

FEATURE_CONVENTION = "xy1-xy2-polar/v1"
FEATURE_NAMES = ("x1", "y1", "x2", "y2", "r", "theta")


@dataclass(frozen=True)
class CoordFeature:
    x1: float
    y1: float
    x2: float
    y2: float
    r: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2, self.r, self.theta])


@dataclass(frozen=True)
class GridSpec:
    source_height: int
    source_width: int
    out_height: int
    out_width: int

    def __post_init__(self):
        for name in ("source_height", "source_width", "out_height", "out_width"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1, got {getattr(self, name)}")


def _check_dims(height, width):
    if height < 1 or width < 1:
        raise InvalidInputError(f"image dimensions must be >= 1, got {height}x{width}")


def featurize_many(rows, cols, height: int, width: int) -> np.ndarray:
    """Vectorised ``featurize``: returns an ``(n, 6)`` float64 array."""
    _check_dims(height, width)
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    if not (np.isfinite(rows).all() and np.isfinite(cols).all()):
        raise InvalidInputError("pixel locations must be finite")

    x1 = cols / (width - 1) if width > 1 else np.full_like(cols, 0.5)
    y1 = rows / (height - 1) if height > 1 else np.full_like(rows, 0.5)

    cr, cc = (height - 1) / 2.0, (width - 1) / 2.0
    dr, dc = rows - cr, cols - cc
    half_diag = np.hypot(cr, cc)
    dist = np.hypot(dr, dc)
    r = dist / half_diag if half_diag > 0 else np.zeros_like(dist)
    theta = (np.arctan2(dr, dc) + np.pi) / (2.0 * np.pi)
    theta = np.where(dist == 0.0, 0.0, theta)
    return np.stack([x1, y1, 1.0 - x1, 1.0 - y1, r, theta], axis=-1)


def featurize(row: float, col: float, height: int, width: int) -> CoordFeature:
    return CoordFeature(*featurize_many([row], [col], height, width)[0].tolist())


def training_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Features for every integer pixel, row-major.

    Returns ``(features, rows, cols)`` with ``features`` of shape ``(H*W, 6)``.
    """
    _check_dims(height, width)
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    rows, cols = rows.ravel(), cols.ravel()
    return featurize_many(rows, cols, height, width), rows, cols


def _source_positions(n_out: int, n_src: int) -> np.ndarray:
    # align-corners: first and last samples coincide with the source frame ends
    if n_out == 1:
        return np.array([(n_src - 1) / 2.0])
    idx = np.arange(n_out)
    if n_out == n_src:
        return idx.astype(np.float64)
    return idx * ((n_src - 1) / (n_out - 1))


def resample_grid(spec: GridSpec) -> np.ndarray:
    """``(out_h*out_w, 6)`` features sampled over the source frame, row-major."""
    ys = _source_positions(spec.out_height, spec.source_height)
    xs = _source_positions(spec.out_width, spec.source_width)
    rows, cols = np.meshgrid(ys, xs, indexing="ij")
    return featurize_many(rows.ravel(), cols.ravel(), spec.source_height, spec.source_width)

"""Classical comparison methods and corruption generators.

All filters work per channel with replicate ("nearest") border padding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError

FILTER_KINDS = ("mean", "gaussian", "median", "bilateral")
DEFAULT_GAUSSIAN_SIGMA = {3: 0.8, 5: 1.1}
DEFAULT_RANGE_SIGMA = 0.1


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    kernel_size: int = 3
    sigma_spatial: Optional[float] = None
    sigma_range: Optional[float] = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise InvalidInputError(f"unknown filter kind {self.kind!r}")
        _check_kernel(self.kernel_size)
        for name in ("sigma_spatial", "sigma_range"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidInputError(f"{name} must be positive, got {v}")

    @property
    def label(self) -> str:
        k = self.kernel_size
        return f"{self.kind}{k}x{k}"

    def apply(self, image) -> np.ndarray:
        k = self.kernel_size
        if self.kind == "mean":
            return mean_filter(image, k)
        if self.kind == "gaussian":
            return gaussian_filter(image, k, self.sigma_spatial)
        if self.kind == "median":
            return median_filter(image, k)
        return bilateral_filter(image, self)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_8bit: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma_8bit < 0:
            raise InvalidInputError(f"noise sigma must be >= 0, got {self.sigma_8bit}")


def _check_kernel(k: int):
    if k < 1 or k % 2 == 0:
        raise InvalidInputError(f"kernel size must be a positive odd integer, got {k}")


def _image(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.size == 0:
        raise InvalidInputError(f"expected a non-empty HxWxC image, got shape {img.shape}")
    return img


def add_gaussian_noise(image, spec: NoiseSpec) -> np.ndarray:
    """i.i.d. Gaussian noise with std ``sigma_8bit / 255``, clamped to [0, 1]."""
    img = _image(image)
    if spec.sigma_8bit == 0:
        return img.copy()
    rng = np.random.default_rng(spec.seed)
    return np.clip(img + rng.normal(0.0, spec.sigma_8bit / 255.0, size=img.shape), 0.0, 1.0)


def mean_filter(image, k: int = 3) -> np.ndarray:
    _check_kernel(k)
    return ndimage.uniform_filter(_image(image), size=(k, k, 1), mode="nearest")


def gaussian_kernel(k: int, sigma: float) -> np.ndarray:
    x = np.arange(k) - (k - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def gaussian_filter(image, k: int = 3, sigma: Optional[float] = None, clamp: bool = True) -> np.ndarray:
    """Gaussian blur with a k x k kernel truncated and renormalised to the window."""
    _check_kernel(k)
    sigma = DEFAULT_GAUSSIAN_SIGMA.get(k, k / 4.0) if sigma is None else sigma
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    g = gaussian_kernel(k, sigma)
    out = ndimage.correlate1d(_image(image), g, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, g, axis=1, mode="nearest")
    return np.clip(out, 0.0, 1.0) if clamp else out


def median_filter(image, k: int = 3) -> np.ndarray:
    _check_kernel(k)
    return ndimage.median_filter(_image(image), size=(k, k, 1), mode="nearest")


def bilateral_filter(image, spec: FilterSpec) -> np.ndarray:
    """Edge-preserving smoothing: spatial Gaussian times range Gaussian, normalised per pixel."""
    k = spec.kernel_size
    _check_kernel(k)
    ss = spec.sigma_spatial if spec.sigma_spatial is not None else k / 2.0
    sr = spec.sigma_range if spec.sigma_range is not None else DEFAULT_RANGE_SIGMA
    if not (ss > 0 and sr > 0):
        raise InvalidInputError("bilateral sigmas must be positive")
    img = _image(image)
    h, w, _ = img.shape
    r = k // 2
    padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")
    num = np.zeros_like(img)
    den = np.zeros_like(img)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            nb = padded[r + dy : r + dy + h, r + dx : r + dx + w]
            wgt = math.exp(-(dy * dy + dx * dx) / (2.0 * ss * ss)) * np.exp(-((nb - img) ** 2) / (2.0 * sr * sr))
            num += wgt * nb
            den += wgt
    return np.clip(num / den, 0.0, 1.0)


def cubic_kernel(x, a: float = -0.5) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _cubic_matrix(n_out: int, n_src: int) -> np.ndarray:
    """(n_out, n_src) interpolation weights, align-corners mapping, replicated edges."""
    if n_out == 1:
        pos = np.array([(n_src - 1) / 2.0])
    elif n_out == n_src:
        return np.eye(n_src)
    else:
        pos = np.arange(n_out) * ((n_src - 1) / (n_out - 1))
    base = np.floor(pos).astype(int)
    frac = pos - base
    m = np.zeros((n_out, n_src))
    rows = np.arange(n_out)
    for tap in (-1, 0, 1, 2):
        idx = np.clip(base + tap, 0, n_src - 1)
        np.add.at(m, (rows, idx), cubic_kernel(frac - tap))
    return m


def bicubic_resize(image, out_h: int, out_w: int, clamp: bool = True) -> np.ndarray:
    """Separable Catmull-Rom (a = -0.5) resampling under the align-corners convention."""
    img = _image(image)
    if out_h < 1 or out_w < 1:
        raise InvalidInputError(f"output size must be >= 1, got {out_h}x{out_w}")
    my = _cubic_matrix(out_h, img.shape[0])
    mx = _cubic_matrix(out_w, img.shape[1])
    out = np.einsum("ij,jkc,lk->ilc", my, img, mx, optimize=True)
    return np.clip(out, 0.0, 1.0) if clamp else out


def benchmark_downsample(image, factor: int = 4) -> np.ndarray:
    img = _image(image)
    if factor < 2:
        raise InvalidInputError(f"downsampling factor must be >= 2, got {factor}")
    h, w = img.shape[:2]
    return bicubic_resize(img, math.ceil(h / factor), math.ceil(w / factor))


def table1_filters(
    gaussian_sigmas: Optional[dict[int, float]] = None,
    bilateral_spatial: Optional[float] = None,
    bilateral_range: Optional[float] = None,
) -> list[FilterSpec]:
    """The eight denoising baselines in the order of the published denoising table."""
    gs = {**DEFAULT_GAUSSIAN_SIGMA, **(gaussian_sigmas or {})}
    specs = []
    for kind in FILTER_KINDS:
        for k in (3, 5):
            if kind == "gaussian":
                specs.append(FilterSpec(kind, k, sigma_spatial=gs[k]))
            elif kind == "bilateral":
                specs.append(FilterSpec(kind, k, sigma_spatial=bilateral_spatial, sigma_range=bilateral_range))
            else:
                specs.append(FilterSpec(kind, k))
    return specs

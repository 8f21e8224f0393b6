from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(reference, test) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise InvalidInputError(f"expected HxW or HxWxC images, got shape {a.shape}")
    return a, b


def psnr(reference, test, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a, b = _pair(reference, test)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value**2 / mse)


def gaussian_window_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _blur_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable Gaussian over axes 0 and 1, windows fully inside the image
    x = sliding_window_view(x, g.size, axis=0) @ g
    return sliding_window_view(x, g.size, axis=1) @ g


def ssim_map(reference, test, data_range: float = 1.0) -> np.ndarray:
    """Per-position, per-channel SSIM over valid 11x11 Gaussian windows."""
    a, b = _pair(reference, test)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise InvalidInputError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape[:2]}")
    g = gaussian_window_1d()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _blur_valid(a, g), _blur_valid(b, g)
    var_a = _blur_valid(a * a, g) - mu_a**2
    var_b = _blur_valid(b * b, g) - mu_b**2
    cov = _blur_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(reference, test, data_range: float = 1.0) -> float:
    """Mean SSIM: averaged over window positions, then over channels."""
    m = ssim_map(reference, test, data_range)
    return float(np.mean(m.mean(axis=(0, 1))))


def masked_psnr(reference, test, mask, max_value: float = 1.0) -> float:
    """PSNR restricted to pixels where ``mask`` is True."""
    a, b = _pair(reference, test)
    m = np.asarray(mask, dtype=bool)
    if m.shape != a.shape[:2]:
        raise InvalidInputError("mask shape does not match images")
    if not m.any():
        raise InvalidInputError("empty mask")
    mse = float(np.mean((a[m] - b[m]) ** 2))
    return math.inf if mse == 0.0 else 10.0 * math.log10(max_value**2 / mse)


@dataclass
class MetricRecord:
    image_id: str
    method: str
    sigma: float
    psnr_db: float
    ssim: float


@dataclass
class MetricsReport:
    records: list[MetricRecord] = field(default_factory=list)

    def add(self, image_id, method, sigma, psnr_db, ssim_value):
        self.records.append(MetricRecord(str(image_id), method, float(sigma), float(psnr_db), float(ssim_value)))

    def methods(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.method, None)
        return list(seen)

    def sigmas(self) -> list[float]:
        return sorted({r.sigma for r in self.records})

    def aggregate(self) -> dict[tuple[str, float], tuple[float, float, int]]:
        """(method, sigma) -> (mean psnr, mean ssim, count)."""
        groups: dict[tuple[str, float], list[MetricRecord]] = {}
        for r in self.records:
            groups.setdefault((r.method, r.sigma), []).append(r)
        return {
            k: (float(np.mean([r.psnr_db for r in v])), float(np.mean([r.ssim for r in v])), len(v))
            for k, v in groups.items()
        }

    def mean(self, method: str, sigma: float = 0.0) -> tuple[float, float]:
        p, s, _ = self.aggregate()[(method, float(sigma))]
        return p, s

"""Image quality metrics: PSNR and Gaussian-window SSIM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.metrics import structural_similarity

from .errors import ShapeMismatchError
from .models import as_grid


@dataclass(frozen=True)
class SSIMParams:
    """Standard SSIM configuration (11-tap Gaussian, sigma 1.5, 8-bit range)."""

    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 255.0


def _pair(u, reference) -> tuple[np.ndarray, np.ndarray]:
    u = as_grid(u)
    reference = as_grid(reference)
    if u.shape != reference.shape:
        raise ShapeMismatchError(f"Shapes differ: {u.shape} vs {reference.shape}")
    return u.values, reference.values


def psnr(u, reference, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    a, b = _pair(u, reference)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / mse))


def _squeeze(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Signals stored as one column or one row are compared as 1-D arrays
    if 1 in a.shape:
        return a.ravel(), b.ravel()
    return a, b


def _window_size(shape: tuple[int, ...], params: SSIMParams) -> int:
    """Largest odd window up to ``params.window_size`` that fits every axis."""
    shortest = min(shape)
    return max(1, min(params.window_size, shortest if shortest % 2 else shortest - 1))


def _structural_similarity(u, reference, params: SSIMParams | None):
    params = params or SSIMParams()
    a, b = _squeeze(*_pair(u, reference))
    return structural_similarity(
        a,
        b,
        win_size=_window_size(a.shape, params),
        gaussian_weights=True,
        sigma=params.window_sigma,
        use_sample_covariance=False,
        data_range=params.data_range,
        K1=params.k1,
        K2=params.k2,
        full=True,
    )


def ssim_map(u, reference, params: SSIMParams | None = None) -> np.ndarray:
    """Local SSIM values with the input's shape."""
    a, _ = _pair(u, reference)
    return _structural_similarity(u, reference, params)[1].reshape(a.shape)


def ssim(u, reference, params: SSIMParams | None = None) -> float:
    """Mean structural similarity over the window-cropped interior; symmetric in its arguments."""
    return float(_structural_similarity(u, reference, params)[0])

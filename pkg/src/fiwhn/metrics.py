"""Quality metrics: Y-channel PSNR and SSIM with border cropping.

Conventions (documented because the benchmark tables never state theirs):
RGB is reduced to luma with the ITU-R BT.601 full-range coefficients
(0.2990, 0.5870, 0.1140), `scale` pixels are cropped from every border, and
the dynamic range is 1.0. SSIM uses an 11x11 Gaussian window with sigma 1.5
and K1=0.01, K2=0.03. Identical images report PSNR = +inf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

Y_COEFFS = (0.2990, 0.5870, 0.1140)


@dataclass
class MetricReport:
    dataset: str
    scale: int
    psnr_db: float
    ssim: float
    n_images: int


def rgb_to_y(img: torch.Tensor) -> torch.Tensor:
    """[..., 3, H, W] -> [..., H, W] luma."""
    if img.shape[-3] != 3:
        raise ValueError(f"expected 3 channels, got {img.shape[-3]}")
    r, g, b = img.unbind(dim=-3)
    return Y_COEFFS[0] * r + Y_COEFFS[1] * g + Y_COEFFS[2] * b


def _cropped_y(sr: torch.Tensor, hr: torch.Tensor, scale: int):
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch: {tuple(sr.shape)} vs {tuple(hr.shape)}")
    ys = rgb_to_y(sr.double())
    yh = rgb_to_y(hr.double())
    if scale > 0:
        if ys.shape[-1] <= 2 * scale or ys.shape[-2] <= 2 * scale:
            raise ValueError("image too small for the border crop")
        ys = ys[..., scale:-scale, scale:-scale]
        yh = yh[..., scale:-scale, scale:-scale]
    return ys, yh


def psnr_y(sr: torch.Tensor, hr: torch.Tensor, scale: int) -> float:
    ys, yh = _cropped_y(sr, hr, scale)
    mse = torch.mean((ys - yh) ** 2).item()
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim_y(sr: torch.Tensor, hr: torch.Tensor, scale: int,
           window_size: int = 11, sigma: float = 1.5,
           k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over valid windows of the cropped Y planes."""
    ys, yh = _cropped_y(sr, hr, scale)
    if ys.shape[-1] < window_size or ys.shape[-2] < window_size:
        raise ValueError(f"cropped image smaller than the {window_size}x{window_size} window")
    win = torch.from_numpy(gaussian_window(window_size, sigma))
    a = ys.reshape(1, 1, *ys.shape[-2:])
    b = yh.reshape(1, 1, *yh.shape[-2:])
    w = win.reshape(1, 1, window_size, window_size)
    conv = torch.nn.functional.conv2d
    mu1, mu2 = conv(a, w), conv(b, w)
    s11 = conv(a * a, w) - mu1 * mu1
    s22 = conv(b * b, w) - mu2 * mu2
    s12 = conv(a * b, w) - mu1 * mu2
    c1, c2 = k1**2, k2**2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1**2 + mu2**2 + c1) * (s11 + s22 + c2)
    return (num / den).mean().item()

import math

import numpy as np
import pytest
import torch

from fiwhn.metrics import Y_COEFFS, gaussian_window, psnr_y, rgb_to_y, ssim_y


def psnr_oracle(sr, hr, scale):
    """Direct-formula PSNR, accumulated with explicit loops."""
    sr = sr.double().numpy()
    hr = hr.double().numpy()
    h, w = sr.shape[-2], sr.shape[-1]
    total, count = 0.0, 0
    for i in range(scale, h - scale):
        for j in range(scale, w - scale):
            ys = sum(c * sr[k, i, j] for k, c in enumerate(Y_COEFFS))
            yh = sum(c * hr[k, i, j] for k, c in enumerate(Y_COEFFS))
            total += (ys - yh) ** 2
            count += 1
    mse = total / count
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def ssim_oracle(sr, hr, scale, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Sliding-window SSIM with explicit loops over every valid window."""
    ys = rgb_to_y(sr.double()).numpy()[scale:-scale, scale:-scale]
    yh = rgb_to_y(hr.double()).numpy()[scale:-scale, scale:-scale]
    win = gaussian_window(size, sigma)
    c1, c2 = k1**2, k2**2
    h, w = ys.shape
    values = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            a = ys[i : i + size, j : j + size]
            b = yh[i : i + size, j : j + size]
            mu1 = (win * a).sum()
            mu2 = (win * b).sum()
            s11 = (win * a * a).sum() - mu1 * mu1
            s22 = (win * b * b).sum() - mu2 * mu2
            s12 = (win * a * b).sum() - mu1 * mu2
            values.append(((2 * mu1 * mu2 + c1) * (2 * s12 + c2))
                          / ((mu1**2 + mu2**2 + c1) * (s11 + s22 + c2)))
    return float(np.mean(values))


def quantized(img):
    return torch.round(img * 255.0) / 255.0


def test_psnr_identical_images_is_infinite():
    img = torch.rand(3, 16, 16)
    assert psnr_y(img, img.clone(), 2) == math.inf


def test_psnr_uniform_offset_closed_form():
    torch.manual_seed(0)
    hr = quantized(torch.rand(3, 20, 20) * 0.5 + 0.2)
    sr = hr + 16.0 / 255.0  # luma coefficients sum to 1, so Y shifts by 16/255
    expected = 20.0 * math.log10(255.0 / 16.0)
    assert psnr_y(sr, hr, 2) == pytest.approx(expected, abs=1e-3)
    assert expected == pytest.approx(24.0484, abs=1e-4)


def test_psnr_matches_bruteforce_oracle():
    torch.manual_seed(1)
    for _ in range(20):
        sr, hr = torch.rand(3, 12, 14), torch.rand(3, 12, 14)
        assert psnr_y(sr, hr, 2) == pytest.approx(psnr_oracle(sr, hr, 2), abs=1e-9)


def test_psnr_rejects_mismatched_dims():
    with pytest.raises(ValueError):
        psnr_y(torch.rand(3, 8, 8), torch.rand(3, 8, 9), 2)


def test_ssim_identical_images_is_one():
    img = torch.rand(3, 20, 20)
    assert ssim_y(img, img.clone(), 2) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_offset_closed_form():
    mu1, delta = 0.4, 0.1
    sr = torch.full((3, 20, 20), mu1)
    hr = torch.full((3, 20, 20), mu1 + delta)
    mu2 = mu1 + delta  # luma of a constant RGB image is that constant
    c1 = 0.01**2
    expected = (2 * mu1 * mu2 + c1) / (mu1**2 + mu2**2 + c1)
    assert ssim_y(sr, hr, 2) == pytest.approx(expected, abs=1e-6)


def test_ssim_matches_bruteforce_oracle():
    torch.manual_seed(2)
    for _ in range(20):
        sr, hr = torch.rand(3, 24, 24), torch.rand(3, 24, 24)
        assert ssim_y(sr, hr, 2) == pytest.approx(ssim_oracle(sr, hr, 2), abs=1e-6)


def test_ssim_rejects_images_smaller_than_window():
    with pytest.raises(ValueError):
        ssim_y(torch.rand(3, 12, 12), torch.rand(3, 12, 12), 2)  # cropped to 8 < 11


def test_rgb_to_y_coefficients():
    img = torch.zeros(3, 2, 2)
    img[0] = 1.0
    assert torch.allclose(rgb_to_y(img), torch.full((2, 2), Y_COEFFS[0]))
    assert abs(sum(Y_COEFFS) - 1.0) < 1e-12

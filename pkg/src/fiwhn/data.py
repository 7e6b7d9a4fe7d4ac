"""Dataset ingestion, bicubic degradation, patch sampling and augmentation.

Folder layout, mirroring the common SR benchmark convention:

    root/HR/*.png                     ground truth images
    root/LR_bicubic/X{scale}/*.png    optional pre-degraded inputs; matched
                                      by identical filename or by the
                                      "<stem>x{scale}" naming variant

With an HR-only folder the LR side is generated on the fly with the same
bicubic kernel shipped in :mod:`fiwhn.resize`. An optional manifest (plain
text, one HR-relative path per line) restricts and orders the corpus.

Determinism: every random draw is derived from (seed, index) through a fresh
numpy Generator, so identical seeds reproduce identical batches.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import PatchSpec
from .resize import bicubic_resize


@dataclass
class ImagePair:
    """Aligned LR/HR sample; hr dims are exactly scale * lr dims."""

    lr: torch.Tensor
    hr: torch.Tensor
    scale: int
    id: str


def load_image(path) -> torch.Tensor:
    """Decode an 8-bit RGB PNG to a [3, H, W] float tensor in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def save_image(img: torch.Tensor, path):
    """Clamp to [0, 1], quantize to 8 bits and write a PNG."""
    arr = img.detach().clamp(0.0, 1.0).mul(255.0).round().to(torch.uint8)
    arr = arr.permute(1, 2, 0).cpu().numpy()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def crop_to_multiple(img: torch.Tensor, scale: int) -> torch.Tensor:
    h, w = img.shape[-2], img.shape[-1]
    return img[..., : h - h % scale, : w - w % scale]


def degrade(hr: torch.Tensor, scale: int) -> torch.Tensor:
    """Bicubic downscale of an HR image (cropped to a scale multiple),
    clipped back to the pixel range."""
    hr = crop_to_multiple(hr, scale)
    h, w = hr.shape[-2], hr.shape[-1]
    return bicubic_resize(hr, h // scale, w // scale).clamp(0.0, 1.0)


def _match_lr(lr_dir: Path, hr_name: str, scale: int):
    stem = Path(hr_name).stem
    for candidate in (f"{stem}.png", f"{stem}x{scale}.png"):
        p = lr_dir / candidate
        if p.exists():
            return p
    return None


def load_corpus(root, scale: int, manifest=None):
    """Load every pair under `root`, deterministically ordered by filename.

    Returns (pairs, errors); unreadable files are reported in `errors` and
    skipped without aborting the load.
    """
    root = Path(root)
    hr_dir = root / "HR"
    if not hr_dir.is_dir():
        raise FileNotFoundError(f"no HR/ folder under {root}")
    lr_dir = root / "LR_bicubic" / f"X{scale}"
    if manifest is not None:
        names = [line.strip() for line in Path(manifest).read_text().splitlines() if line.strip()]
    else:
        names = sorted(p.name for p in hr_dir.glob("*.png"))
    pairs, errors = [], []
    for name in names:
        try:
            hr = crop_to_multiple(load_image(hr_dir / name), scale)
            lr_path = _match_lr(lr_dir, name, scale) if lr_dir.is_dir() else None
            if lr_path is not None:
                lr = load_image(lr_path)
                if (lr.shape[-2] * scale, lr.shape[-1] * scale) != (hr.shape[-2], hr.shape[-1]):
                    raise ValueError(
                        f"LR dims {tuple(lr.shape[-2:])} do not match HR {tuple(hr.shape[-2:])} at x{scale}"
                    )
            else:
                lr = degrade(hr, scale)
            pairs.append(ImagePair(lr=lr, hr=hr, scale=scale, id=Path(name).stem))
        except Exception as exc:  # noqa: BLE001 - itemized error report
            errors.append(f"{name}: {exc}")
    return pairs, errors


def draw_patch_params(spec: PatchSpec, lr_h: int, lr_w: int, index: int) -> dict:
    """The (crop offset, rotation, flip) draw for one sample, fully
    determined by (spec.seed, index)."""
    if lr_h < spec.lr_patch or lr_w < spec.lr_patch:
        raise ValueError(
            f"image ({lr_h}x{lr_w}) smaller than patch size {spec.lr_patch}"
        )
    rng = np.random.default_rng([spec.seed, index])
    y = int(rng.integers(0, lr_h - spec.lr_patch + 1))
    x = int(rng.integers(0, lr_w - spec.lr_patch + 1))
    rot = int(rng.choice(np.asarray(spec.rotations)))
    flip = str(rng.choice(np.asarray(spec.flips)))
    return {"y": y, "x": x, "rot": rot, "flip": flip}


def _augment(img: torch.Tensor, rot: int, flip: str) -> torch.Tensor:
    if flip == "horizontal":
        img = torch.flip(img, dims=(-1,))
    if rot:
        img = torch.rot90(img, k=rot // 90, dims=(-2, -1))
    return img


def sample_patch(pair: ImagePair, spec: PatchSpec, index: int = 0) -> ImagePair:
    """Aligned LR/HR crop with the same rotation/flip applied to both."""
    s = pair.scale
    draw = draw_patch_params(spec, pair.lr.shape[-2], pair.lr.shape[-1], index)
    y, x, p = draw["y"], draw["x"], spec.lr_patch
    lr = pair.lr[..., y : y + p, x : x + p]
    hr = pair.hr[..., y * s : (y + p) * s, x * s : (x + p) * s]
    lr = _augment(lr, draw["rot"], draw["flip"])
    hr = _augment(hr, draw["rot"], draw["flip"])
    return ImagePair(lr=lr, hr=hr, scale=s, id=f"{pair.id}#{index}")


def synthesize_corpus(n_images: int, hr_size: int, scale: int, seed: int = 0,
                      max_cycles: float = 9.0, n_waves: int = 24):
    """Band-limited synthetic corpus: each HR image is a sum of random 2-D
    cosine waves with at most `max_cycles` cycles across the image, plus the
    matching bicubic LR. Useful for desk-scale training runs."""
    pairs = []
    ys, xs = np.meshgrid(np.arange(hr_size), np.arange(hr_size), indexing="ij")
    for i in range(n_images):
        rng = np.random.default_rng([seed, i])
        img = np.zeros((3, hr_size, hr_size), dtype=np.float64)
        base_theta = rng.uniform(0, 2 * np.pi, size=n_waves)
        cycles = rng.uniform(0.5, max_cycles, size=n_waves)
        phase = rng.uniform(0, 2 * np.pi, size=n_waves)
        shared = rng.standard_normal(size=n_waves) / np.sqrt(cycles)
        for c in range(3):
            tint = 1.0 + 0.3 * rng.standard_normal(size=n_waves)
            for k in range(n_waves):
                fy = cycles[k] * np.sin(base_theta[k]) / hr_size
                fx = cycles[k] * np.cos(base_theta[k]) / hr_size
                img[c] += shared[k] * tint[k] * np.cos(2 * np.pi * (fy * ys + fx * xs) + phase[k])
        lo, hi = img.min(), img.max()
        img = 0.05 + 0.9 * (img - lo) / max(hi - lo, 1e-9)
        hr = torch.from_numpy(img.astype(np.float32))
        pairs.append(ImagePair(lr=degrade(hr, scale), hr=crop_to_multiple(hr, scale),
                               scale=scale, id=f"synth{i:03d}"))
    return pairs

"""CNN building blocks: wide-residual weighting units, combination coefficient
gates, paired skip connections, distillation branches, and the assembled WDIB.

All convolutions are stride-1 with zero padding, so every block preserves the
spatial dimensions. Weight normalization is applied to the convolutions inside
the wide residual units (WIRW/WCRW) only.
"""
from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import WDIBConfig


class WNConv2d(nn.Module):
    """Weight-normalized convolution: weight = g * v / ||v||.

    The norm is clamped away from zero so the all-zero parameter state is
    well defined (effective weight zero) instead of 0/0.
    """

    def __init__(self, in_channels, out_channels, kernel_size, padding=0):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = padding
        v = torch.empty(out_channels, in_channels, kernel_size, kernel_size)
        nn.init.kaiming_uniform_(v, a=math.sqrt(5))
        self.weight_v = nn.Parameter(v)
        self.weight_g = nn.Parameter(v.flatten(1).norm(dim=1))
        bound = 1.0 / math.sqrt(in_channels * kernel_size * kernel_size)
        self.bias = nn.Parameter(torch.empty(out_channels).uniform_(-bound, bound))

    def weight(self) -> torch.Tensor:
        norm = self.weight_v.flatten(1).norm(dim=1).clamp_min(1e-12)
        return self.weight_v * (self.weight_g / norm).view(-1, 1, 1, 1)

    def forward(self, x):
        return F.conv2d(x, self.weight(), self.bias, padding=self.padding)


class AdaptivePair(nn.Module):
    """Learnable scalar multipliers for the main and residual paths.

    Both start at 1.0. With `trainable=False` the multipliers are the
    constant 1 and contribute no parameters (ablation mode).
    """

    def __init__(self, trainable=True):
        super().__init__()
        self.trainable_pair = trainable
        if trainable:
            self.lambda_x = nn.Parameter(torch.ones(()))
            self.lambda_res = nn.Parameter(torch.ones(()))

    def combine(self, main, residual):
        if self.trainable_pair:
            return self.lambda_x * main + self.lambda_res * residual
        return main + residual


class CCLayer(nn.Module):
    """Combination coefficient learning gate.

    Per-channel statistics (global average and population standard deviation)
    are pushed through a shared reduce/expand 1x1 bottleneck and a sigmoid;
    the gate is the mean of the two branch responses, so it is strictly
    inside (0, 1).
    """

    def __init__(self, channels, reduction=4):
        super().__init__()
        mid = math.ceil(channels / reduction)
        self.reduce = nn.Conv2d(channels, mid, 1)
        self.expand = nn.Conv2d(mid, channels, 1)

    def forward(self, x):
        avg = x.mean(dim=(2, 3), keepdim=True)
        # population std; tiny floor keeps the gradient finite for flat inputs
        var = x.var(dim=(2, 3), unbiased=False, keepdim=True)
        std = torch.sqrt(var + 1e-12)
        g_avg = torch.sigmoid(self.expand(self.reduce(avg)))
        g_std = torch.sigmoid(self.expand(self.reduce(std)))
        return (g_avg + g_std) / 2


class PairedSkip(nn.Module):
    """One half of a paired skip connection: x + y * gate(y)."""

    def __init__(self, channels, reduction=4):
        super().__init__()
        self.gate = CCLayer(channels, reduction)

    def forward(self, x, y):
        if x.shape != y.shape:
            raise ValueError(f"paired skip shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
        return x + y * self.gate(y)


class WideUnit(nn.Module):
    """Wide-activation feature extractor: 1x1 up, ReLU, 1x1 down, 3x3."""

    def __init__(self, in_channels, out_channels, wide_channels):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.expand = WNConv2d(in_channels, wide_channels, 1)
        self.reduce = WNConv2d(wide_channels, out_channels, 1)
        self.refine = WNConv2d(out_channels, out_channels, 3, padding=1)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {x.shape[1]}")
        return self.refine(self.reduce(F.relu(self.expand(x))))


class PlainUnit(nn.Module):
    """Narrow two-conv residual body used by the no-wide-mechanism ablation."""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.conv1 = WNConv2d(in_channels, out_channels, 3, padding=1)
        self.conv2 = WNConv2d(out_channels, out_channels, 3, padding=1)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {x.shape[1]}")
        return self.conv2(F.relu(self.conv1(x)))


def _make_body(in_channels, out_channels, cfg: WDIBConfig):
    if cfg.use_wide:
        return WideUnit(in_channels, out_channels, cfg.wide_channels)
    return PlainUnit(in_channels, out_channels)


class WIRW(nn.Module):
    """Wide identical residual weighting unit: lx * body(x) + lres * x."""

    def __init__(self, cfg: WDIBConfig):
        super().__init__()
        c = cfg.channels
        self.body = _make_body(c, c, cfg)
        self.pair = AdaptivePair(cfg.use_adaptive)

    def forward(self, x):
        return self.pair.combine(self.body(x), x)


class WCRW(nn.Module):
    """Wide convolutional residual weighting unit.

    The shortcut is a 3x3 convolution that restores the pre-split channel
    width: lx * body(x) + lres * conv3(x).
    """

    def __init__(self, cfg: WDIBConfig, in_channels=None):
        super().__init__()
        self.in_channels = cfg.remain_channels if in_channels is None else in_channels
        c = cfg.channels
        self.body = _make_body(self.in_channels, c, cfg)
        self.shortcut = WNConv2d(self.in_channels, c, 3, padding=1)
        self.pair = AdaptivePair(cfg.use_adaptive)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"WCRW expects {self.in_channels} input channels, got {x.shape[1]}"
            )
        return self.pair.combine(self.body(x), self.shortcut(x))


def channel_split(x, ratio):
    """Contiguous channel split: (remain, distill), remain keeps ties."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    c = x.shape[1]
    distill = math.ceil(c * ratio - 0.5)
    remain = c - distill
    if distill < 1 or remain < 1:
        raise ValueError(f"ratio {ratio} leaves an empty part for {c} channels")
    return x[:, :remain], x[:, remain:]


class DistillBranch(nn.Module):
    """Coarse-feature branch: sigmoid(conv3x3), expanding back to full width."""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)

    def forward(self, x):
        return torch.sigmoid(self.conv(x))


class SCF(nn.Module):
    """Self-calibrating fusion: a shared gate derived from the fused map
    reweights both inputs before a 3x3 refinement."""

    def __init__(self, channels, reduction=4):
        super().__init__()
        self.fuse = nn.Conv2d(2 * channels, channels, 1)
        self.gate = CCLayer(channels, reduction)
        self.refine = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, a, b):
        if a.shape != b.shape:
            raise ValueError(f"SCF shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
        f = self.fuse(torch.cat([a, b], dim=1))
        g = self.gate(f)
        return self.refine(a * g + b * g)


class ConcatFuse(nn.Module):
    """Plain concat + 1x1 fusion used when SCF is ablated away."""

    def __init__(self, channels):
        super().__init__()
        self.fuse = nn.Conv2d(2 * channels, channels, 1)

    def forward(self, a, b):
        if a.shape != b.shape:
            raise ValueError(f"fusion shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
        return self.fuse(torch.cat([a, b], dim=1))


class WDIB(nn.Module):
    """Wide-residual distillation interaction block.

    Lattice-style dataflow over an input x of width C:

        t1            = ir(x);  r1, d1 = split(t1)
        x1            = cr(r1)
        v0            = x  + x1 * gate(x1)          (first paired skips)
        u0            = x1 + x  * gate(x)
        t2            = ir(v0); r2, d2 = split(t2)
        x2            = cr(r2)
        vi            = x2 + u0 * gate(u0)          (second paired skips)
        ui            = u0 + x2 * gate(x2)
        coarse_u/d    = sigmoid(conv3(d1)), sigmoid(conv3(d2))
        xi, xj        = ui * coarse_u, vi * coarse_d
        out           = fusion(ir(xi), ir(xj)) + x

    The WIRW and WCRW units are shared (one instance each) across their
    application sites; each application keeps the block compact while the
    gates and distillation branches stay independent. Exactly two
    distillation events occur per forward pass.
    """

    def __init__(self, cfg: WDIBConfig):
        super().__init__()
        self.cfg = cfg
        c, r = cfg.channels, cfg.ccl_reduction
        self.ir = WIRW(cfg)
        # without the wide mechanism there is no split, so WCRW runs full width
        self.cr = WCRW(cfg, in_channels=None if cfg.use_wide else c)
        self.skip_in_up = PairedSkip(c, r)
        self.skip_in_down = PairedSkip(c, r)
        self.skip_mid_up = PairedSkip(c, r)
        self.skip_mid_down = PairedSkip(c, r)
        if cfg.use_wide:
            self.distill_up = DistillBranch(cfg.distill_channels, c)
            self.distill_down = DistillBranch(cfg.distill_channels, c)
        self.fusion = SCF(c, r) if cfg.use_scf else ConcatFuse(c)

    def _branch(self, x):
        t = self.ir(x)
        if self.cfg.use_wide:
            remain, distill = channel_split(t, self.cfg.distill_ratio)
        else:
            remain, distill = t, None
        return self.cr(remain), distill

    def forward(self, x):
        if x.shape[1] != self.cfg.channels:
            raise ValueError(f"WDIB expects {self.cfg.channels} channels, got {x.shape[1]}")
        x1, d1 = self._branch(x)
        v0 = self.skip_in_up(x, x1)
        u0 = self.skip_in_down(x1, x)
        x2, d2 = self._branch(v0)
        vi = self.skip_mid_up(x2, u0)
        ui = self.skip_mid_down(u0, x2)
        if self.cfg.use_wide and self.cfg.use_distill_gate:
            xi = ui * self.distill_up(d1)
            xj = vi * self.distill_down(d2)
        else:
            xi, xj = ui, vi
        return self.fusion(self.ir(xi), self.ir(xj)) + x

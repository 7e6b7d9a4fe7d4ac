"""Full network assembly: feature shuffle weighted groups, the four
CNN/transformer coupling topologies, and pixel-shuffle reconstruction.
"""
from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import WDIB, AdaptivePair
from .config import ConfigError, FIWHNConfig
from .resize import bicubic_resize
from .transformer import EfficientTransformer, MapToTokens, PatchEmbed, TokensToMap


def channel_shuffle(x: torch.Tensor, groups: int) -> torch.Tensor:
    """Fixed interleaving permutation of channels, as in ShuffleNet."""
    n, c, h, w = x.shape
    if c % groups != 0:
        raise ValueError(f"channels ({c}) must be divisible by groups ({groups})")
    return x.reshape(n, groups, c // groups, h, w).transpose(1, 2).reshape(n, c, h, w)


class CGSFuse(nn.Module):
    """Concat -> grouped 1x1 convolution -> channel shuffle."""

    def __init__(self, channels, groups=2):
        super().__init__()
        self.groups = groups
        self.conv = nn.Conv2d(2 * channels, channels, 1, groups=groups)

    def forward(self, a, b):
        if a.shape != b.shape:
            raise ValueError(f"fuse shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
        return channel_shuffle(self.conv(torch.cat([a, b], dim=1)), self.groups)


class FSWG(nn.Module):
    """Feature shuffle weighted group: a chain of WDIBs whose adjacent
    outputs are progressively fused, with adaptive scalar-weighted residual.

    For blocks B1..Bk: out = lx * (fuse(...fuse(W1, W2)..., Wk) + Wk) + lres * x.
    With a single block the fusion chain is empty and out = lx * W1 + lres * x.
    Returns the output and the per-block taps.
    """

    def __init__(self, cfg: FIWHNConfig):
        super().__init__()
        n = cfg.wdibs_per_fswg
        self.blocks = nn.ModuleList(WDIB(cfg.wdib) for _ in range(n))
        if cfg.use_block_interaction and n >= 2:
            self.fuse_units = nn.ModuleList(CGSFuse(cfg.cnn_channels) for _ in range(n - 1))
        else:
            self.fuse_units = nn.ModuleList()
        self.pair = AdaptivePair(cfg.wdib.use_adaptive)

    def forward(self, x):
        taps = []
        h = x
        for block in self.blocks:
            h = block(h)
            taps.append(h)
        if len(self.fuse_units) > 0:
            fused = self.fuse_units[0](taps[0], taps[1])
            for unit, tap in zip(self.fuse_units[1:], taps[2:]):
                fused = unit(fused, tap)
            out = self.pair.combine(fused + taps[-1], x)
        else:
            out = self.pair.combine(taps[-1], x)
        return out, taps

    @staticmethod
    def tap_index(n_blocks: int) -> int:
        # middle tap feeds the transformer branch
        return (n_blocks - 1) // 2


class Upsampler(nn.Module):
    """3x3 conv to 3*scale^2 channels, pixel shuffle, plus the bicubic
    upsample of the input image. A zero-weight trunk therefore reduces the
    whole model to plain bicubic interpolation."""

    def __init__(self, channels, scale):
        super().__init__()
        if scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3 or 4, got {scale}")
        self.scale = scale
        self.conv = nn.Conv2d(channels, 3 * scale * scale, 3, padding=1)
        self.shuffle = nn.PixelShuffle(scale)

    def forward(self, deep, shallow, img):
        if deep.shape != shallow.shape:
            raise ValueError(
                f"residual shape mismatch: {tuple(deep.shape)} vs {tuple(shallow.shape)}"
            )
        y = self.shuffle(self.conv(deep + shallow))
        h, w = img.shape[-2], img.shape[-1]
        return y + bicubic_resize(img, h * self.scale, w * self.scale)


class FIWHN(nn.Module):
    """Hybrid CNN/transformer super-resolution network.

    The `topology` field of the config selects how the CNN groups (FSWGs)
    and the transformer blocks exchange information:

      ct_series    FSWGs first, their output projected into token space and
                   refined by the transformer chain.
      tc_series    transformer chain first (on the projected shallow CNN
                   features plus the image embedding), FSWGs after.
      parallel     independent branches, fused at the end by concat + 1x1.
      interactive  the middle tap of the first FSWG enriches the token
                   stream; the refined tokens are injected back into the
                   remaining FSWGs and fused with the final CNN output.

    Inference with frozen weights is safe to run concurrently over disjoint
    batches; training must be externally serialized.
    """

    def __init__(self, cfg: FIWHNConfig):
        super().__init__()
        self.cfg = cfg
        c, d = cfg.cnn_channels, cfg.t_dim
        self.head = nn.Conv2d(3, c, 3, padding=1)
        self.embed = PatchEmbed(d)
        self.groups = nn.ModuleList(FSWG(cfg) for _ in range(cfg.n_fswg))
        self.transformers = nn.ModuleList(EfficientTransformer(cfg.et) for _ in range(cfg.n_et))
        self.rc = TokensToMap(d, c)
        if cfg.topology in ("ct_series", "tc_series", "interactive"):
            self.cr = MapToTokens(c, d)
        if cfg.topology in ("parallel", "interactive"):
            self.fuse = nn.Conv2d(2 * c, c, 1)
        self.upsampler = Upsampler(c, cfg.scale)

    def _et_chain(self, tokens):
        for block in self.transformers:
            tokens = block(tokens)
        return tokens

    def _deep_features(self, fc, ft, hw):
        topology = self.cfg.topology
        if topology == "interactive":
            out, taps = self.groups[0](fc)
            tap = taps[FSWG.tap_index(len(taps))]
            tokens = self._et_chain(self.cr(tap) + ft)
            global_map = self.rc(tokens, hw)
            for group in self.groups[1:]:
                out, _ = group(out + global_map)
            return self.fuse(torch.cat([out, global_map], dim=1))
        if topology == "ct_series":
            out = fc
            for group in self.groups:
                out, _ = group(out)
            tokens = self._et_chain(self.cr(out) + ft)
            return self.rc(tokens, hw)
        if topology == "tc_series":
            tokens = self._et_chain(self.cr(fc) + ft)
            out = self.rc(tokens, hw)
            for group in self.groups:
                out, _ = group(out)
            return out
        if topology == "parallel":
            out = fc
            for group in self.groups:
                out, _ = group(out)
            tokens = self._et_chain(ft)
            return self.fuse(torch.cat([out, self.rc(tokens, hw)], dim=1))
        raise ConfigError(f"unknown topology {topology!r}")

    def forward(self, img):
        if img.dim() != 4 or img.shape[1] != 3:
            raise ValueError(f"expected [N, 3, H, W] input, got {tuple(img.shape)}")
        fc = self.head(img)
        ft, hw = self.embed(img)
        deep = self._deep_features(fc, ft, hw)
        return self.upsampler(deep, fc, img)


def build_model(cfg: FIWHNConfig) -> FIWHN:
    """Instantiate the network for any of the four topologies."""
    return FIWHN(cfg)


def zero_weights_(model: torch.nn.Module, residual_value: float = 1.0):
    """Zero every learnable tensor, then set the residual multipliers to
    `residual_value`. The network then computes exactly the bicubic
    interpolation baseline."""
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("lambda_res"):
                p.fill_(residual_value)
            else:
                p.zero_()
    return model

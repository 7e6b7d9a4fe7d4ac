"""Efficient transformer branch: token embedding, split multi-head
self-attention, and the CNN-feature <-> token shape adapters.

Tokens are the row-major flattening of the spatial grid. Self-attention is
computed independently inside `splits` contiguous token groups, so only
(T/splits)^2 attention entries are ever materialized per head instead of T^2.
"""
from __future__ import annotations

import math

import torch
import torch.nn as nn

from .config import ETConfig


def to_tokens(x: torch.Tensor) -> torch.Tensor:
    """[N, C, H, W] -> [N, H*W, C], row-major."""
    return x.flatten(2).transpose(1, 2)


def to_map(tokens: torch.Tensor, hw) -> torch.Tensor:
    """[N, T, C] -> [N, C, H, W]; T must equal H*W."""
    h, w = hw
    n, t, c = tokens.shape
    if t != h * w:
        raise ValueError(f"cannot unfold {t} tokens to {h}x{w}")
    return tokens.transpose(1, 2).reshape(n, c, h, w)


def split_attention(q, k, v, splits, heads, return_weights=False):
    """Grouped scaled dot-product attention over contiguous token bands.

    q, k, v: [N, T, D]. Tokens are padded with zeros (masked out of the
    softmax) when T is not divisible by `splits`; padding is removed from the
    output. Attention never crosses group boundaries.
    """
    if q.shape != k.shape or q.shape != v.shape:
        raise ValueError("q, k, v must share a shape")
    n, t, d = q.shape
    if d % heads != 0:
        raise ValueError(f"dim {d} not divisible by heads {heads}")
    d_k = d // heads
    pad = (-t) % splits
    if pad:
        zeros = q.new_zeros(n, pad, d)
        q = torch.cat([q, zeros], dim=1)
        k = torch.cat([k, zeros], dim=1)
        v = torch.cat([v, zeros], dim=1)
    tg = (t + pad) // splits
    outs = []
    weights = []
    for g in range(splits):
        lo, hi = g * tg, (g + 1) * tg
        qs = q[:, lo:hi].view(n, tg, heads, d_k).transpose(1, 2)
        ks = k[:, lo:hi].view(n, tg, heads, d_k).transpose(1, 2)
        vs = v[:, lo:hi].view(n, tg, heads, d_k).transpose(1, 2)
        scores = qs @ ks.transpose(-2, -1) / math.sqrt(d_k)
        n_pad_keys = max(0, hi - t)
        if n_pad_keys:
            scores[..., tg - n_pad_keys:] = -1e9
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ vs).transpose(1, 2).reshape(n, tg, d)
        outs.append(out)
        if return_weights:
            weights.append(attn)
    merged = torch.cat(outs, dim=1)[:, :t]
    if return_weights:
        return merged, weights
    return merged


class PatchEmbed(nn.Module):
    """3x3 convolution from the image to the token dimension, then fold."""

    def __init__(self, dim, in_channels=3):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, dim, 3, padding=1)

    def forward(self, img):
        x = self.proj(img)
        hw = (x.shape[-2], x.shape[-1])
        return to_tokens(x), hw


class MapToTokens(nn.Module):
    """1x1 channel projection C -> D followed by folding to tokens."""

    def __init__(self, in_channels, dim):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, dim, 1)

    def forward(self, x):
        return to_tokens(self.proj(x))


class TokensToMap(nn.Module):
    """Unfold tokens to a map, then 1x1 channel projection D -> C."""

    def __init__(self, dim, out_channels):
        super().__init__()
        self.proj = nn.Conv2d(dim, out_channels, 1)

    def forward(self, tokens, hw):
        return self.proj(to_map(tokens, hw))


class EfficientTransformer(nn.Module):
    """Pre-norm transformer block with split multi-head self-attention.

    t + proj(attn(norm(t))) followed by + mlp(norm(.)); the MLP is a GELU
    bottleneck of width mlp_ratio * dim. With all branch weights zero the
    block is the identity.
    """

    def __init__(self, cfg: ETConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.dim
        self.norm1 = nn.LayerNorm(d)
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.proj = nn.Linear(d, d)
        self.norm2 = nn.LayerNorm(d)
        self.mlp = nn.Sequential(
            nn.Linear(d, cfg.mlp_hidden),
            nn.GELU(),
            nn.Linear(cfg.mlp_hidden, d),
        )

    def forward(self, t):
        h = self.norm1(t)
        a = split_attention(self.q(h), self.k(h), self.v(h), self.cfg.splits, self.cfg.heads)
        t = t + self.proj(a)
        return t + self.mlp(self.norm2(t))

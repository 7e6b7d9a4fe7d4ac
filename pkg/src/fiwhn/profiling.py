"""Closed-form complexity accounting and latency measurement.

The counts are derived analytically from the architecture graph; nothing is
traced at runtime. Conventions:

* `params` includes every learnable tensor (weight-norm direction and gain,
  biases, scalar multipliers). It must equal the checkpoint element count.
* `multi_adds` is the headline figure: multiply-accumulates of every
  parameterized layer, each unique layer counted once, at the declared
  output resolution (the comparison convention of the lightweight-SR
  tables). Convolutions count k^2*C_in*C_out/groups per output pixel;
  linear layers count in*out per token; gate convolutions act on pooled
  1x1 maps and therefore contribute their weight count once.
* `multi_adds_per_pass` additionally multiplies shared (weight-tied) units
  by their number of applications per forward pass.
* `attention_macs` reports the QK^T / attention-value matmuls separately;
  they have no learnable parameters and are excluded from the headline.
* The LR input is output // scale per axis, so the effective output of a
  x3 profile at 1280x720 is 1278x720.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import torch

from .blocks import CCLayer, PairedSkip, SCF, WCRW, WDIB, WIRW, WNConv2d, WideUnit
from .network import FIWHN, FSWG
from .transformer import EfficientTransformer

# Published reference figures for the original FIWHN configuration at
# 1280x720 output: scale -> (params, multi-adds).
REFERENCE_COMPLEXITY = {
    2: (705_000, 137.7e9),
    3: (713_000, 62.0e9),
    4: (725_000, 35.6e9),
}


@dataclass
class LayerCost:
    path: str
    kind: str
    params: int
    macs: int  # one application at the profiled resolution
    apps: int = 1


@dataclass
class ComplexityReport:
    params: int
    multi_adds: int
    ms_per_image: float | None
    resolution: tuple
    multi_adds_per_pass: int = 0
    attention_macs: int = 0
    layers: list = field(default_factory=list)


def conv_cost(path, m, spatial, apps=1):
    if isinstance(m, WNConv2d):
        weights = m.kernel_size**2 * m.in_channels * m.out_channels
        params = weights + 2 * m.out_channels  # gain + bias
    else:
        k = m.kernel_size[0]
        weights = k * k * (m.in_channels // m.groups) * m.out_channels
        params = weights + (m.out_channels if m.bias is not None else 0)
    return LayerCost(path, "conv", params, weights * spatial, apps)


def linear_cost(path, m, tokens, apps=1):
    weights = m.in_features * m.out_features
    params = weights + (m.out_features if m.bias is not None else 0)
    return LayerCost(path, "linear", params, weights * tokens, apps)


def _scalar_pair(path, pair, apps=1):
    if pair.trainable_pair:
        return [LayerCost(path, "scalars", 2, 0, apps)]
    return []


def _ccl(path, m: CCLayer, apps=1):
    # shared reduce/expand convs run once per pooling branch, on 1x1 maps
    return [conv_cost(f"{path}.reduce", m.reduce, 1, apps * 2),
            conv_cost(f"{path}.expand", m.expand, 1, apps * 2)]


def _unit(path, m, px, apps):
    if isinstance(m, WideUnit):
        names = ("expand", "reduce", "refine")
    else:
        names = ("conv1", "conv2")
    return [conv_cost(f"{path}.{n}", getattr(m, n), px, apps) for n in names]


def _wirw(path, m: WIRW, px, apps):
    return _unit(f"{path}.body", m.body, px, apps) + _scalar_pair(f"{path}.pair", m.pair, apps)


def _wcrw(path, m: WCRW, px, apps):
    rows = _unit(f"{path}.body", m.body, px, apps)
    rows.append(conv_cost(f"{path}.shortcut", m.shortcut, px, apps))
    rows += _scalar_pair(f"{path}.pair", m.pair, apps)
    return rows


def _wdib(path, m: WDIB, px):
    rows = _wirw(f"{path}.ir", m.ir, px, apps=4)
    rows += _wcrw(f"{path}.cr", m.cr, px, apps=2)
    for name in ("skip_in_up", "skip_in_down", "skip_mid_up", "skip_mid_down"):
        skip: PairedSkip = getattr(m, name)
        rows += _ccl(f"{path}.{name}.gate", skip.gate)
    if m.cfg.use_wide:
        rows.append(conv_cost(f"{path}.distill_up.conv", m.distill_up.conv, px))
        rows.append(conv_cost(f"{path}.distill_down.conv", m.distill_down.conv, px))
    if isinstance(m.fusion, SCF):
        rows.append(conv_cost(f"{path}.fusion.fuse", m.fusion.fuse, px))
        rows += _ccl(f"{path}.fusion.gate", m.fusion.gate)
        rows.append(conv_cost(f"{path}.fusion.refine", m.fusion.refine, px))
    else:
        rows.append(conv_cost(f"{path}.fusion.fuse", m.fusion.fuse, px))
    return rows


def _fswg(path, m: FSWG, px):
    rows = []
    for i, block in enumerate(m.blocks):
        rows += _wdib(f"{path}.blocks.{i}", block, px)
    for i, unit in enumerate(m.fuse_units):
        rows.append(conv_cost(f"{path}.fuse_units.{i}.conv", unit.conv, px))
    rows += _scalar_pair(f"{path}.pair", m.pair)
    return rows


def _et(path, m: EfficientTransformer, tokens):
    cfg = m.cfg
    rows = [LayerCost(f"{path}.norm1", "norm", 2 * cfg.dim, 0),
            linear_cost(f"{path}.q", m.q, tokens),
            linear_cost(f"{path}.k", m.k, tokens),
            linear_cost(f"{path}.v", m.v, tokens),
            linear_cost(f"{path}.proj", m.proj, tokens),
            LayerCost(f"{path}.norm2", "norm", 2 * cfg.dim, 0),
            linear_cost(f"{path}.mlp.0", m.mlp[0], tokens),
            linear_cost(f"{path}.mlp.2", m.mlp[2], tokens)]
    return rows


def _attention_macs(cfg, tokens):
    tg = -(-tokens // cfg.splits)  # padded group length
    return 2 * cfg.splits * tg * tg * cfg.dim


def model_complexity(model: FIWHN, output_resolution=(1280, 720)) -> ComplexityReport:
    """Analytic parameter and multiply-accumulate counts for one forward
    pass at the given output resolution."""
    cfg = model.cfg
    out_w, out_h = output_resolution
    lr_h, lr_w = out_h // cfg.scale, out_w // cfg.scale
    px = lr_h * lr_w
    tokens = px

    rows = [conv_cost("head", model.head, px), conv_cost("embed.proj", model.embed.proj, px)]
    for i, group in enumerate(model.groups):
        rows += _fswg(f"groups.{i}", group, px)
    attn = 0
    for i, block in enumerate(model.transformers):
        rows += _et(f"transformers.{i}", block, tokens)
        attn += _attention_macs(block.cfg, tokens)
    if hasattr(model, "cr"):
        rows.append(conv_cost("cr.proj", model.cr.proj, px))
    rows.append(conv_cost("rc.proj", model.rc.proj, px))
    if hasattr(model, "fuse"):
        rows.append(conv_cost("fuse", model.fuse, px))
    rows.append(conv_cost("upsampler.conv", model.upsampler.conv, px))

    return ComplexityReport(
        params=sum(r.params for r in rows),
        multi_adds=sum(r.macs for r in rows),
        ms_per_image=None,
        resolution=tuple(output_resolution),
        multi_adds_per_pass=sum(r.macs * r.apps for r in rows),
        attention_macs=attn,
        layers=rows,
    )


def count_parameters(model: FIWHN) -> int:
    return model_complexity(model).params


def measure_latency(model: FIWHN, output_resolution=(1280, 720), runs=20) -> float:
    """Median wall-clock milliseconds of `runs` forward passes."""
    out_w, out_h = output_resolution
    s = model.cfg.scale
    x = torch.rand(1, 3, out_h // s, out_w // s)
    model.eval()
    with torch.no_grad():
        for _ in range(2):
            model(x)
        samples = []
        for _ in range(max(1, runs)):
            t0 = time.perf_counter()
            model(x)
            samples.append((time.perf_counter() - t0) * 1000.0)
    samples.sort()
    return samples[len(samples) // 2]


def profile(model: FIWHN, resolution=(1280, 720), timing_runs=20) -> ComplexityReport:
    """Closed-form complexity plus (optionally) measured latency."""
    report = model_complexity(model, resolution)
    if timing_runs > 0:
        report.ms_per_image = measure_latency(model, resolution, timing_runs)
    return report


def write_layer_csv(report: ComplexityReport, path):
    lines = ["layer,kind,params,multi_adds,apps"]
    for r in report.layers:
        lines.append(f"{r.path},{r.kind},{r.params},{r.macs},{r.apps}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

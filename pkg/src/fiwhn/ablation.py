"""Ablation runner: trains architecture variants under an identical toy
budget (same seeds, steps, and data) and tabulates quality vs complexity.

Variants are executed sequentially so latency-free metrics stay comparable;
with fixed seeds the emitted tables are reproducible bit for bit.
"""
from __future__ import annotations

import copy
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path

import torch

from .config import ETConfig, FIWHNConfig, TOPOLOGIES, TrainConfig, WDIBConfig
from .data import synthesize_corpus
from .metrics import psnr_y, ssim_y
from .network import build_model
from .profiling import model_complexity
from .resize import bicubic_resize
from .train import train

SUITES = ("topology", "wide_width", "wdib_parts", "wdib_count")


@dataclass
class AblationBudget:
    """Toy training budget shared by every variant of a suite."""

    steps: int = 60
    batch: int = 4
    n_train: int = 6
    n_eval: int = 2
    hr_size: int = 48
    scale: int = 2
    lr_patch: int = 16
    seeds: tuple = (0, 1, 2)
    base: FIWHNConfig = field(default_factory=lambda: _toy_config())


def _toy_config(scale=2):
    return FIWHNConfig(
        scale=scale, cnn_channels=8, t_dim=16, n_fswg=2, wdibs_per_fswg=2, n_et=2,
        topology="interactive",
        wdib=WDIBConfig(channels=8, wide_channels=24, ccl_reduction=4),
        et=ETConfig(dim=16, heads=2, splits=2),
    )


def _variants(suite: str, base: FIWHNConfig):
    if suite == "topology":
        return [(t, replace(copy.deepcopy(base), topology=t)) for t in TOPOLOGIES]
    if suite == "wide_width":
        plain = copy.deepcopy(base)
        plain.wdib = replace(plain.wdib, use_wide=False)
        rows = [("plain_residual", plain)]
        for factor in (2, 4):
            cfg = copy.deepcopy(base)
            cfg.wdib = replace(cfg.wdib, wide_channels=factor * base.cnn_channels)
            rows.append((f"wide_x{factor}", cfg))
        return rows
    if suite == "wdib_parts":
        combos = [
            ("baseline", dict(use_wide=False, use_scf=False, use_adaptive=False), False),
            ("wrdc_only", dict(use_wide=True, use_scf=False, use_adaptive=False), False),
            ("scf_only", dict(use_wide=False, use_scf=True, use_adaptive=False), False),
            ("bi_only", dict(use_wide=False, use_scf=False, use_adaptive=False), True),
            ("adaptive_only", dict(use_wide=False, use_scf=False, use_adaptive=True), False),
            ("full", dict(use_wide=True, use_scf=True, use_adaptive=True), True),
        ]
        rows = []
        for name, flags, bi in combos:
            cfg = copy.deepcopy(base)
            cfg.wdib = replace(cfg.wdib, **flags)
            cfg.use_block_interaction = bi
            rows.append((name, cfg))
        return rows
    if suite == "wdib_count":
        rows = []
        for n in (2, 3, 4):
            cfg = copy.deepcopy(base)
            cfg.wdibs_per_fswg = n
            rows.append((f"wdibs_{n}", cfg))
        return rows
    raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")


def _evaluate(model, pairs):
    model.eval()
    psnrs, ssims = [], []
    with torch.no_grad():
        for pair in pairs:
            sr = model(pair.lr.unsqueeze(0)).squeeze(0).clamp(0.0, 1.0)
            psnrs.append(psnr_y(sr, pair.hr, pair.scale))
            ssims.append(ssim_y(sr, pair.hr, pair.scale))
    return sum(psnrs) / len(psnrs), sum(ssims) / len(ssims)


def bicubic_baseline(pairs):
    psnrs = []
    for pair in pairs:
        up = bicubic_resize(pair.lr, pair.hr.shape[-2], pair.hr.shape[-1]).clamp(0.0, 1.0)
        psnrs.append(psnr_y(up, pair.hr, pair.scale))
    return sum(psnrs) / len(psnrs)


def run_suite(suite: str, budget: AblationBudget, out_dir) -> list[dict]:
    """Train/evaluate every variant of a suite; returns ranked result rows
    and writes ablation.csv plus an aligned text table under `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = synthesize_corpus(budget.n_train + budget.n_eval, budget.hr_size,
                               budget.scale, seed=1234)
    train_set = corpus[: budget.n_train]
    eval_set = corpus[budget.n_train:]

    rows = []
    for name, cfg in _variants(suite, budget.base):
        cfg.scale = budget.scale
        psnrs, ssims = [], []
        for seed in budget.seeds:
            torch.manual_seed(seed)
            model = build_model(cfg)
            tcfg = TrainConfig(epochs=1, steps_per_epoch=budget.steps, batch=budget.batch,
                               seed=seed, lr_patch=budget.lr_patch, checkpoint_every=0)
            train(model, train_set, tcfg, out_dir / f"{suite}_{name}_s{seed}",
                  model_config=cfg.to_dict())
            p, s = _evaluate(model, eval_set)
            psnrs.append(p)
            ssims.append(s)
        report = model_complexity(build_model(cfg), (1280, 720))
        rows.append({
            "variant": name,
            "psnr_mean": statistics.mean(psnrs),
            "psnr_sd": statistics.stdev(psnrs) if len(psnrs) > 1 else 0.0,
            "ssim_mean": statistics.mean(ssims),
            "ssim_sd": statistics.stdev(ssims) if len(ssims) > 1 else 0.0,
            "params": report.params,
            "multi_adds": report.multi_adds,
        })
    rows.sort(key=lambda r: r["psnr_mean"], reverse=True)
    _write_tables(suite, rows, eval_set, out_dir)
    return rows


def _write_tables(suite, rows, eval_set, out_dir):
    header = ["variant", "psnr_mean", "psnr_sd", "ssim_mean", "ssim_sd", "params", "multi_adds"]
    csv_lines = [",".join(header)]
    for r in rows:
        csv_lines.append(",".join(str(r[h]) for h in header))
    (out_dir / "ablation.csv").write_text("\n".join(csv_lines) + "\n")

    widths = [max(len(h), 12) for h in header]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    txt = [fmt.format(*header)]
    for r in rows:
        txt.append(fmt.format(r["variant"], f"{r['psnr_mean']:.3f}", f"{r['psnr_sd']:.3f}",
                              f"{r['ssim_mean']:.4f}", f"{r['ssim_sd']:.4f}",
                              r["params"], r["multi_adds"]))
    if suite == "topology":
        by_name = {r["variant"]: r for r in rows}
        if "interactive" in by_name and "parallel" in by_name:
            delta = by_name["interactive"]["psnr_mean"] - by_name["parallel"]["psnr_mean"]
            txt.append(f"interactive vs parallel: {delta:+.3f} dB (toy scale)")
        txt.append(f"bicubic baseline: {bicubic_baseline(eval_set):.3f} dB")
    (out_dir / "ablation.txt").write_text("\n".join(txt) + "\n")

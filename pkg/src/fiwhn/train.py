"""L1 training loop with cosine-annealed learning rate and deterministic
resume.

Reproducibility contract: the batch drawn at step k is a pure function of
(seed, k), and the checkpoint carries the exact float32 optimizer moments,
so a resumed run continues the original loss sequence bit for bit.
"""
from __future__ import annotations

import math
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint, apply_params
from .config import PatchSpec, TrainConfig
from .data import sample_patch


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries the offending batch."""

    def __init__(self, step, batch_ids):
        super().__init__(f"non-finite loss at step {step} on batch {batch_ids}")
        self.step = step
        self.batch_ids = batch_ids


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over all elements."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


def cosine_lr(step: int, total: int, cfg: TrainConfig) -> float:
    """lr(step) = lr_min + 0.5 * (lr0 - lr_min) * (1 + cos(pi * step / total))."""
    if total <= 0:
        raise ValueError("total steps must be positive")
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    return cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + math.cos(math.pi * step / total))


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    rows: list  # (step, lr, loss, wall_ms)
    total_steps: int


def make_batch(corpus, patch: PatchSpec, seed: int, step: int, batch: int):
    """Deterministic batch for a given step: item choice and patch draws are
    derived from (seed, step)."""
    rng = np.random.default_rng([seed, step])
    ids = rng.integers(0, len(corpus), size=batch)
    spec = PatchSpec(lr_patch=patch.lr_patch, rotations=patch.rotations,
                     flips=patch.flips, seed=seed)
    lrs, hrs = [], []
    for slot, idx in enumerate(ids):
        p = sample_patch(corpus[idx], spec, index=step * batch + slot)
        lrs.append(p.lr)
        hrs.append(p.hr)
    return torch.stack(lrs), torch.stack(hrs), [int(i) for i in ids]


def _optimizer_arrays(opt: torch.optim.Adam, model: torch.nn.Module):
    names = [n for n, _ in model.named_parameters()]
    arrays, steps = {}, {}
    for name, p in zip(names, opt.param_groups[0]["params"]):
        state = opt.state.get(p)
        if not state:
            continue
        arrays[f"optim/{name}/exp_avg"] = state["exp_avg"].numpy()
        arrays[f"optim/{name}/exp_avg_sq"] = state["exp_avg_sq"].numpy()
        steps[name] = float(state["step"])
    return arrays, steps


def _restore_optimizer(opt, model, extra, steps):
    for name, p in zip([n for n, _ in model.named_parameters()], opt.param_groups[0]["params"]):
        key = f"optim/{name}/exp_avg"
        if key not in extra:
            continue
        opt.state[p] = {
            "step": torch.tensor(steps[name]),
            "exp_avg": torch.from_numpy(np.array(extra[key])),
            "exp_avg_sq": torch.from_numpy(np.array(extra[f"optim/{name}/exp_avg_sq"])),
        }


def _save(path, model, model_config, opt, step, cfg):
    arrays, steps = _optimizer_arrays(opt, model)
    save_checkpoint(
        path,
        model=model,
        config=model_config,
        extra=arrays,
        meta={"step": step, "seed": cfg.seed, "train_config": cfg.to_dict(),
              "optim_steps": steps},
    )


def write_metrics(path, rows):
    lines = ["step,lr,loss,wall_ms"]
    for step, lr, loss, wall in rows:
        lines.append(f"{step},{lr!r},{loss!r},{wall:.3f}")
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def train(model, corpus, cfg: TrainConfig, out_dir, model_config=None,
          resume_from=None, stop_after=None) -> TrainResult:
    """Run the training loop and checkpoint atomically into `out_dir`.

    The cosine horizon is epochs * steps_per_epoch; `stop_after` pauses the
    run at that absolute step (the checkpoint then resumes the identical
    schedule). With epochs=0 the initial weights are written unchanged. A
    non-finite loss aborts with a diagnostic snapshot naming the offending
    batch.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_config = model_config or {}

    torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr0,
                           betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    start_step = 0
    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        apply_params(model, ck.params)
        _restore_optimizer(opt, model, ck.extra, ck.meta.get("optim_steps", {}))
        start_step = int(ck.meta.get("step", 0))

    spe = cfg.steps_per_epoch or max(1, -(-len(corpus) // cfg.batch))
    total = cfg.epochs * spe
    last = total if stop_after is None else min(stop_after, total)
    patch = PatchSpec(lr_patch=cfg.lr_patch, seed=cfg.seed)

    ck_path = out_dir / "checkpoint.zip"
    metrics_path = out_dir / "metrics.csv"
    rows = []
    model.train()
    for step in range(start_step + 1, last + 1):
        t0 = time.perf_counter()
        lr_batch, hr_batch, ids = make_batch(corpus, patch, cfg.seed, step, cfg.batch)
        lr = cosine_lr(step, total, cfg)
        for group in opt.param_groups:
            group["lr"] = lr
        pred = model(lr_batch)
        loss = l1_loss(pred, hr_batch)
        if not torch.isfinite(loss):
            diag = out_dir / f"diverged_step{step}.json"
            diag.write_text(json.dumps({"step": step, "batch_ids": ids,
                                        "loss": str(loss.item())}, indent=2))
            raise TrainingDiverged(step, ids)
        opt.zero_grad()
        loss.backward()
        if cfg.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        opt.step()
        rows.append((step, lr, float(loss.item()), (time.perf_counter() - t0) * 1000.0))
        if cfg.checkpoint_every > 0 and step % cfg.checkpoint_every == 0:
            _save(ck_path, model, model_config, opt, step, cfg)
            write_metrics(metrics_path, rows)

    _save(ck_path, model, model_config, opt, max(last, start_step), cfg)
    write_metrics(metrics_path, rows)
    return TrainResult(checkpoint_path=ck_path, metrics_path=metrics_path,
                       rows=rows, total_steps=total)

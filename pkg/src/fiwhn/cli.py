"""Command line entry point.

Subcommands: prepare, train, eval, sr, profile, ablate. Every run writes a
manifest (command, config snapshot, seed, timestamps, outputs) into its
output directory before doing any work. Config files are JSON; explicit
flags override file values. The FIWHN_DATA_ROOT environment variable is
used when --data is omitted.
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import torch

from .ablation import SUITES, AblationBudget, run_suite
from .checkpoint import model_from_checkpoint
from .config import ConfigError, FIWHNConfig, TOPOLOGY_ALIASES, TrainConfig
from .data import degrade, load_corpus, load_image, save_image
from .metrics import MetricReport, psnr_y, ssim_y
from .network import build_model
from .profiling import REFERENCE_COMPLEXITY, profile, write_layer_csv
from .train import train


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_manifest(out_dir: Path, command: str, config: dict, seed, outputs: list[str]):
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "git_describe": _git_describe(),
        "started_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "finished_at": None,
        "outputs": outputs,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def finish_manifest(out_dir: Path, manifest: dict):
    manifest["finished_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _model_config(args) -> FIWHNConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    if getattr(args, "scale", None) is not None:
        base["scale"] = args.scale
    if getattr(args, "topology", None) is not None:
        base["topology"] = TOPOLOGY_ALIASES[args.topology]
    return FIWHNConfig.from_dict(base)


def _data_root(args) -> Path:
    root = getattr(args, "data", None) or os.environ.get("FIWHN_DATA_ROOT")
    if not root:
        raise SystemExit("no data root: pass --data or set FIWHN_DATA_ROOT")
    return Path(root)


def cmd_prepare(args) -> int:
    root = Path(args.root)
    hr_dir = root / "HR"
    if not hr_dir.is_dir():
        print(f"error: no HR/ folder under {root}", file=sys.stderr)
        return 2
    lr_dir = root / "LR_bicubic" / f"X{args.scale}"
    lr_dir.mkdir(parents=True, exist_ok=True)
    written = skipped = 0
    failed = []
    for hr_path in sorted(hr_dir.glob("*.png")):
        out_path = lr_dir / hr_path.name
        if out_path.exists():
            skipped += 1
            continue
        try:
            save_image(degrade(load_image(hr_path), args.scale), out_path)
            written += 1
        except Exception as exc:  # noqa: BLE001 - itemized per-file report
            failed.append(f"{hr_path.name}: {exc}")
    for line in failed:
        print(f"error: {line}", file=sys.stderr)
    print(f"prepare: wrote {written} LR images under {lr_dir} "
          f"({skipped} already present, {len(failed)} failed)")
    return 1 if failed else 0


def cmd_train(args) -> int:
    cfg = _model_config(args)
    tdict = {}
    if args.config:
        tdict = json.loads(Path(args.config).read_text()).get("train", {})
    tcfg = TrainConfig.from_dict(tdict)
    if args.seed is not None:
        tcfg = replace(tcfg, seed=args.seed)
    if args.steps is not None:
        tcfg = replace(tcfg, epochs=1, steps_per_epoch=args.steps)

    out_dir = Path(args.out)
    manifest = write_manifest(out_dir, "train", {"model": cfg.to_dict(), "train": tcfg.to_dict()},
                              tcfg.seed, ["checkpoint.zip", "metrics.csv"])
    corpus, errors = load_corpus(_data_root(args), cfg.scale)
    for line in errors:
        print(f"warning: {line}", file=sys.stderr)
    if not corpus:
        print("error: empty corpus", file=sys.stderr)
        return 2
    torch.manual_seed(tcfg.seed)  # model init must be reproducible end to end
    model = build_model(cfg)
    result = train(model, corpus, tcfg, out_dir, model_config=cfg.to_dict(),
                   resume_from=args.resume, stop_after=args.stop_after)
    finish_manifest(out_dir, manifest)
    last = result.rows[-1][2] if result.rows else float("nan")
    reached = result.rows[-1][0] if result.rows else 0
    print(f"train: reached step {reached}/{result.total_steps}, final loss {last:.6f}, "
          f"checkpoint {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    model, ck = model_from_checkpoint(args.checkpoint)
    scale = model.cfg.scale
    root = _data_root(args)
    corpus, errors = load_corpus(root, scale)
    for line in errors:
        print(f"warning: {line}", file=sys.stderr)
    if not corpus:
        print("error: empty corpus", file=sys.stderr)
        return 2
    model.eval()
    rows = []
    with torch.no_grad():
        for pair in corpus:
            sr = model(pair.lr.unsqueeze(0)).squeeze(0).clamp(0.0, 1.0)
            rows.append((pair.id, psnr_y(sr, pair.hr, scale), ssim_y(sr, pair.hr, scale)))
    report = MetricReport(dataset=str(root), scale=scale,
                          psnr_db=sum(r[1] for r in rows) / len(rows),
                          ssim=sum(r[2] for r in rows) / len(rows),
                          n_images=len(rows))
    if args.out:
        out_dir = Path(args.out)
        manifest = write_manifest(out_dir, "eval", {"checkpoint": str(args.checkpoint)},
                                  None, ["eval.csv"])
        lines = ["image,psnr_db,ssim"]
        lines += [f"{i},{p!r},{s!r}" for i, p, s in rows]
        lines.append(f"mean,{report.psnr_db!r},{report.ssim!r}")
        (out_dir / "eval.csv").write_text("\n".join(lines) + "\n")
        finish_manifest(out_dir, manifest)
    print(f"eval: {report.n_images} images, PSNR {report.psnr_db:.4f} dB, "
          f"SSIM {report.ssim:.6f}")
    return 0 if not errors else 1


def cmd_sr(args) -> int:
    try:
        img = load_image(args.input)
    except Exception as exc:  # noqa: BLE001
        print(f"error: cannot decode {args.input}: {exc}", file=sys.stderr)
        return 2
    model, _ = model_from_checkpoint(args.checkpoint)
    model.eval()
    with torch.no_grad():
        sr = model(img.unsqueeze(0)).squeeze(0)
    save_image(sr, args.output)
    print(f"sr: {tuple(img.shape[-2:])} -> {tuple(sr.shape[-2:])} at x{model.cfg.scale}, "
          f"wrote {args.output}")
    return 0


def cmd_profile(args) -> int:
    cfg = _model_config(args)
    model = build_model(cfg)
    w, h = (int(v) for v in args.resolution.split("x"))
    report = profile(model, (w, h), timing_runs=args.timing_runs)
    print(f"profile: topology={cfg.topology} scale=x{cfg.scale} output={w}x{h}")
    print(f"  params        {report.params:,}")
    print(f"  multi-adds    {report.multi_adds:,}")
    print(f"  per-pass      {report.multi_adds_per_pass:,} (weight-shared units "
          f"counted per application)")
    print(f"  attention     {report.attention_macs:,} (score/value matmuls, "
          f"excluded from the headline)")
    if report.ms_per_image is not None:
        print(f"  latency       {report.ms_per_image:.1f} ms/image (median)")
    ref = REFERENCE_COMPLEXITY.get(cfg.scale)
    if ref and cfg.topology == "interactive":
        print(f"  reference     {ref[0]:,} params / {ref[1]:,.0f} multi-adds "
              f"({report.params / ref[0] - 1:+.1%} / {report.multi_adds / ref[1] - 1:+.1%})")
    if args.out:
        out_dir = Path(args.out)
        manifest = write_manifest(out_dir, "profile", cfg.to_dict(), None, ["layers.csv"])
        write_layer_csv(report, out_dir / "layers.csv")
        finish_manifest(out_dir, manifest)
    return 0


def cmd_ablate(args) -> int:
    if args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r}; expected one of {SUITES}",
              file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    budget = AblationBudget(steps=args.steps, seeds=tuple(range(args.n_seeds)))
    manifest = write_manifest(out_dir, f"ablate:{args.suite}",
                              {"steps": budget.steps, "seeds": list(budget.seeds)},
                              0, ["ablation.csv", "ablation.txt"])
    rows = run_suite(args.suite, budget, out_dir)
    finish_manifest(out_dir, manifest)
    print((out_dir / "ablation.txt").read_text())
    return 0 if rows else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fiwhn",
                                     description="lightweight hybrid super-resolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="generate LR folders from HR via bicubic downscale")
    p.add_argument("root")
    p.add_argument("--scale", type=int, choices=(2, 3, 4), default=2)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--data", help="corpus root (or FIWHN_DATA_ROOT)")
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, choices=(2, 3, 4))
    p.add_argument("--topology", choices=sorted(TOPOLOGY_ALIASES))
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="schedule horizon in steps")
    p.add_argument("--stop-after", type=int, help="pause at this absolute step")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sr", help="super-resolve one PNG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_sr)

    p = sub.add_parser("profile", help="closed-form complexity and latency")
    p.add_argument("--config")
    p.add_argument("--scale", type=int, choices=(2, 3, 4))
    p.add_argument("--topology", choices=sorted(TOPOLOGY_ALIASES))
    p.add_argument("--resolution", default="1280x720", help="output WxH")
    p.add_argument("--timing-runs", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_profile)

    p = sub.add_parser("ablate", help="run an ablation suite at toy scale")
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--n-seeds", type=int, default=3)
    p.set_defaults(fn=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

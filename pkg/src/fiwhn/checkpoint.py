"""Checkpoint archive format.

A checkpoint is a single zip archive with:

  config.json           model configuration record (structured text)
  meta.json             free-form metadata (step counter, seed, ...)
  params/<name>.npy     one little-endian float32 array per model parameter,
                        keyed by the module path (e.g.
                        "groups.0.blocks.0.ir.body.expand.weight_v"); the
                        .npy header carries the shape
  extra/<name>.npy      optional additional arrays (optimizer state, ...)

Writes are atomic: the archive is assembled under a temporary name and
renamed into place.
"""
from __future__ import annotations

import io
import json
import os
import tempfile
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch


@dataclass
class Checkpoint:
    config: dict
    params: dict
    extra: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_elements(self) -> int:
        return sum(int(a.size) for a in self.params.values())


def _write_array(zf: zipfile.ZipFile, name: str, arr: np.ndarray):
    buf = io.BytesIO()
    # asarray keeps 0-d scalars 0-d (ascontiguousarray would promote to 1-d)
    np.lib.format.write_array(buf, np.asarray(arr, dtype="<f4", order="C"),
                              allow_pickle=False)
    zf.writestr(name, buf.getvalue())


def save_checkpoint(path, model: torch.nn.Module | None = None, config: dict | None = None,
                    params: dict | None = None, extra: dict | None = None,
                    meta: dict | None = None):
    """Write a checkpoint archive atomically. Either a model or an explicit
    name->array `params` mapping must be supplied."""
    path = Path(path)
    if params is None:
        if model is None:
            raise ValueError("need a model or an explicit params mapping")
        params = {name: p.detach().cpu().numpy() for name, p in model.named_parameters()}
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("config.json", json.dumps(config or {}, indent=2, sort_keys=True))
            zf.writestr("meta.json", json.dumps(meta or {}, indent=2, sort_keys=True))
            for name in sorted(params):
                _write_array(zf, f"params/{name}.npy", params[name])
            for name in sorted(extra or {}):
                _write_array(zf, f"extra/{name}.npy", extra[name])
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    params, extra = {}, {}
    with zipfile.ZipFile(path, "r") as zf:
        config = json.loads(zf.read("config.json"))
        meta = json.loads(zf.read("meta.json"))
        for name in zf.namelist():
            if name.endswith(".npy"):
                arr = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
                key = name[len("params/"):-4] if name.startswith("params/") else None
                if key is not None:
                    params[key] = arr
                elif name.startswith("extra/"):
                    extra[name[len("extra/"):-4]] = arr
    return Checkpoint(config=config, params=params, extra=extra, meta=meta)


def apply_params(model: torch.nn.Module, params: dict):
    """Copy checkpoint arrays into the model's parameters (strict match)."""
    own = dict(model.named_parameters())
    missing = sorted(set(own) - set(params))
    unexpected = sorted(set(params) - set(own))
    if missing or unexpected:
        raise ValueError(f"checkpoint mismatch: missing={missing}, unexpected={unexpected}")
    with torch.no_grad():
        for name, p in own.items():
            arr = params[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {arr.shape} vs model {tuple(p.shape)}"
                )
            p.copy_(torch.from_numpy(np.asarray(arr)))


def model_from_checkpoint(path):
    """Rebuild the network described by a checkpoint and load its weights."""
    from .config import FIWHNConfig
    from .network import build_model

    ck = load_checkpoint(path)
    model = build_model(FIWHNConfig.from_dict(ck.config))
    apply_params(model, ck.params)
    return model, ck

import numpy as np
import pytest
import torch

from fiwhn.config import ETConfig, FIWHNConfig, WDIBConfig


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(0)
    np.random.seed(0)


def toy_wdib_config(channels=8, wide=24, **kw):
    return WDIBConfig(channels=channels, wide_channels=wide, ccl_reduction=4, **kw)


def toy_model_config(scale=2, topology="interactive", n_fswg=2, wdibs=2, n_et=2,
                     channels=8, dim=16):
    return FIWHNConfig(
        scale=scale, cnn_channels=channels, t_dim=dim, n_fswg=n_fswg,
        wdibs_per_fswg=wdibs, n_et=n_et, topology=topology,
        wdib=toy_wdib_config(channels=channels),
        et=ETConfig(dim=dim, heads=2, splits=2),
    )


def central_difference(loss_fn, param, flat_index, eps=1e-5):
    """Two-sided finite difference of loss_fn w.r.t. one parameter entry."""
    with torch.no_grad():
        flat = param.view(-1)
        orig = flat[flat_index].item()
        flat[flat_index] = orig + eps
        plus = loss_fn().item()
        flat[flat_index] = orig - eps
        minus = loss_fn().item()
        flat[flat_index] = orig
    return (plus - minus) / (2.0 * eps)


def gradient_errors(loss_fn, entries, eps=1e-5):
    """Relative error between autodiff and central differences for each
    (param, flat_index) entry. loss_fn must rebuild the graph on each call."""
    loss = loss_fn()
    params = list({id(p): p for p, _ in entries}.values())
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grad_of = {id(p): g for p, g in zip(params, grads)}
    errors = []
    for param, idx in entries:
        g = grad_of[id(param)]
        analytic = 0.0 if g is None else g.view(-1)[idx].item()
        fd = central_difference(loss_fn, param, idx, eps)
        denom = max(abs(analytic), abs(fd), 1e-6)
        errors.append(abs(analytic - fd) / denom)
    return errors


def sample_entries(named_params, rng, per_param=1, include=lambda name: True):
    entries = []
    for name, p in named_params:
        if not include(name):
            continue
        n = p.numel()
        for _ in range(min(per_param, n)):
            entries.append((p, int(rng.integers(0, n))))
    return entries

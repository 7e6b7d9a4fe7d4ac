import math

import pytest
import torch

from conftest import toy_model_config
from fiwhn.config import TrainConfig
from fiwhn.data import synthesize_corpus
from fiwhn.network import build_model
from fiwhn.train import TrainingDiverged, cosine_lr, l1_loss, train


def l1_oracle(pred, target):
    total = 0.0
    for a, b in zip(pred.flatten().tolist(), target.flatten().tolist()):
        total += abs(a - b)
    return total / pred.numel()


def small_train_config(steps, **kw):
    defaults = dict(epochs=1, steps_per_epoch=steps, batch=2, seed=0,
                    lr_patch=8, checkpoint_every=0)
    defaults.update(kw)
    return TrainConfig(**defaults)


# --- loss ------------------------------------------------------------------------

def test_l1_identical_is_zero():
    x = torch.rand(2, 3, 4, 4)
    assert l1_loss(x, x.clone()).item() == 0.0


def test_l1_constant_offset():
    x = torch.rand(2, 3, 4, 4, dtype=torch.float64)
    assert l1_loss(x + 0.1, x).item() == pytest.approx(0.1, abs=1e-12)


def test_l1_matches_bruteforce():
    a, b = torch.rand(1, 3, 6, 6), torch.rand(1, 3, 6, 6)
    assert l1_loss(a, b).item() == pytest.approx(l1_oracle(a, b), abs=1e-7)


def test_l1_shape_mismatch():
    with pytest.raises(ValueError):
        l1_loss(torch.rand(1, 3, 4, 4), torch.rand(1, 3, 4, 5))


# --- schedule --------------------------------------------------------------------

def test_cosine_endpoints_match_published_constants():
    cfg = TrainConfig()
    assert cosine_lr(0, 1000, cfg) == pytest.approx(5e-4, abs=0)
    assert cosine_lr(1000, 1000, cfg) == pytest.approx(6.25e-6, rel=1e-12)


def test_cosine_midpoint():
    cfg = TrainConfig()
    assert cosine_lr(1, 2, cfg) == pytest.approx((5e-4 + 6.25e-6) / 2, rel=1e-12)
    assert cosine_lr(1, 2, cfg) == pytest.approx(2.53125e-4, rel=1e-9)


def test_cosine_total_zero_is_an_error():
    with pytest.raises(ValueError):
        cosine_lr(0, 0, TrainConfig())


def test_cosine_monotone_decreasing():
    cfg = TrainConfig()
    values = [cosine_lr(s, 50, cfg) for s in range(51)]
    assert all(a >= b for a, b in zip(values, values[1:]))


# --- training loop ---------------------------------------------------------------

def _toy_setup(seed=0):
    torch.manual_seed(seed)
    model = build_model(toy_model_config(scale=2, n_fswg=1, wdibs=1, n_et=1))
    corpus = synthesize_corpus(2, 24, 2, seed=3)
    return model, corpus


def test_zero_epochs_leaves_weights_unchanged(tmp_path):
    model, corpus = _toy_setup()
    before = {k: v.clone() for k, v in model.state_dict().items()}
    result = train(model, corpus, small_train_config(0, epochs=0), tmp_path)
    assert result.rows == []
    for k, v in model.state_dict().items():
        assert torch.equal(v, before[k])


def test_empty_corpus_rejected(tmp_path):
    model, _ = _toy_setup()
    with pytest.raises(ValueError):
        train(model, [], small_train_config(1), tmp_path)


def test_fixed_seed_gives_bitwise_identical_losses(tmp_path):
    losses = []
    for run in range(2):
        model, corpus = _toy_setup(seed=0)
        result = train(model, corpus, small_train_config(4), tmp_path / str(run))
        losses.append([row[2] for row in result.rows])
    assert losses[0] == losses[1]


def test_resume_reproduces_loss_sequence(tmp_path):
    model, corpus = _toy_setup(seed=0)
    full = train(model, corpus, small_train_config(6), tmp_path / "full")

    # same schedule horizon, paused after step 3, then resumed
    model2, _ = _toy_setup(seed=0)
    part = train(model2, corpus, small_train_config(6), tmp_path / "part", stop_after=3)
    model3, _ = _toy_setup(seed=0)
    resumed = train(model3, corpus, small_train_config(6), tmp_path / "resumed",
                    resume_from=part.checkpoint_path)
    assert [r[0] for r in part.rows] == [1, 2, 3]
    assert [r[0] for r in resumed.rows] == [4, 5, 6]
    assert [r[2] for r in part.rows] == [r[2] for r in full.rows[:3]]
    assert [r[2] for r in resumed.rows] == [r[2] for r in full.rows[3:]]


def test_lambda_multipliers_receive_gradients():
    model, corpus = _toy_setup()
    pair = corpus[0]
    loss = l1_loss(model(pair.lr.unsqueeze(0)), pair.hr.unsqueeze(0))
    loss.backward()
    lambda_names = [n for n, _ in model.named_parameters() if "lambda" in n]
    assert lambda_names
    for name, p in model.named_parameters():
        if "lambda" in name:
            assert p.grad is not None and p.grad.abs().item() > 0, name


def test_nonfinite_loss_aborts_with_diagnostic(tmp_path):
    model, corpus = _toy_setup()
    with torch.no_grad():
        model.head.weight.fill_(float("nan"))
    with pytest.raises(TrainingDiverged) as err:
        train(model, corpus, small_train_config(2), tmp_path)
    assert err.value.step == 1
    diagnostics = list(tmp_path.glob("diverged_step*.json"))
    assert len(diagnostics) == 1


def test_default_config_trains_stably(tmp_path):
    # full-size default model at the real 48x48 patch recipe
    torch.manual_seed(0)
    from fiwhn.config import FIWHNConfig
    model = build_model(FIWHNConfig(scale=2))
    corpus = synthesize_corpus(2, 96, 2, seed=1, max_cycles=14)
    cfg = TrainConfig(epochs=1, steps_per_epoch=3, batch=2, lr_patch=48, seed=0,
                      checkpoint_every=0)
    result = train(model, corpus, cfg, tmp_path)
    assert len(result.rows) == 3
    assert all(math.isfinite(row[2]) for row in result.rows)
    for p in model.parameters():
        assert torch.all(torch.isfinite(p))


def test_metrics_file_schema(tmp_path):
    model, corpus = _toy_setup()
    result = train(model, corpus, small_train_config(2), tmp_path)
    lines = result.metrics_path.read_text().splitlines()
    assert lines[0] == "step,lr,loss,wall_ms"
    assert len(lines) == 3
    step, lr, loss, wall = lines[1].split(",")
    assert int(step) == 1
    assert float(lr) == cosine_lr(1, 2, TrainConfig())
    assert math.isfinite(float(loss)) and float(wall) >= 0

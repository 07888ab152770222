import numpy as np
import pytest

from airsig import gradcheck, nn
from airsig.errors import DomainError, ShapeError
from airsig.slitcnn import ModelSpec, TrainedModel, build_model, forward_logits, train


def _count(variant):
    """Parameter count written out layer by layer (weights + biases)."""
    rows = {"tip_only": [3], "tiptail_single": [6], "two_stream": [3, 3]}[variant]
    total = 0
    for r in rows:
        total += 64 * r * 30 + 64          # conv1
        total += 128 * 64 * 8 + 128        # conv2
        total += 128 * 238 * 128 + 128     # flatten -> stream FC
    total += 512 * 128 * len(rows) + 512   # fusion FC
    total += 45 * 512 + 45                 # output
    return total


@pytest.mark.parametrize("variant, millions", [
    ("two_stream", 8.01), ("tiptail_single", 4.04), ("tip_only", 4.03)])
def test_parameter_counts(variant, millions):
    spec = ModelSpec(variant, t=512, num_classes=45)
    assert spec.parameter_count() == _count(variant)
    assert abs(spec.parameter_count() / 1e6 - millions) / millions < 0.02


def test_shape_chain_t512():
    spec = ModelSpec("tip_only", t=512, num_classes=4)
    p = build_model(spec, 0).params
    x = np.zeros((1, 1, 3, 512))
    h, _ = nn.conv2d_forward(x, p["tip.conv1.w"], p["tip.conv1.b"])
    assert h.shape == (1, 64, 1, 483)
    h, _ = nn.conv2d_forward(h, p["tip.conv2.w"], p["tip.conv2.b"])
    assert h.shape == (1, 128, 1, 476)
    h, _ = nn.max_pool_forward(h)
    assert h.shape == (1, 128, 1, 238)
    assert h.size == spec.flat_size == 30464
    assert nn.linear_forward(h.reshape(1, -1), p["tip.fc.w"], p["tip.fc.b"])[0].shape == (1, 128)


@pytest.mark.parametrize("kwargs", [dict(variant="three"), dict(t=32), dict(num_classes=1)])
def test_invalid_spec(kwargs):
    with pytest.raises(DomainError):
        ModelSpec(**kwargs)


@pytest.fixture(scope="module")
def small():
    spec = ModelSpec("two_stream", t=64, num_classes=4)
    X = np.random.default_rng(0).normal(size=(6, 64, 6))
    return build_model(spec, 3), X


def test_probabilities_sum_to_one(small):
    model, X = small
    p = model.predict_proba(X)
    assert p.shape == (6, 4)
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-12


def test_batch_permutation_and_duplication(small):
    model, X = small
    p = model.predict_proba(X)
    perm = [3, 0, 5, 1, 4, 2]
    assert np.allclose(model.predict_proba(X[perm]), p[perm], atol=1e-12)
    dup = model.predict_proba(np.stack([X[2], X[2]]))
    assert np.allclose(dup[0], dup[1], atol=1e-15)


def test_length_mismatch(small):
    model, _ = small
    with pytest.raises(ShapeError):
        model.predict_proba(np.zeros((1, 65, 6)))


def test_two_stream_symmetry(small):
    model, X = small
    p = model.params
    swapped = dict(p)
    for suffix in ("conv1.w", "conv1.b", "conv2.w", "conv2.b", "fc.w", "fc.b"):
        swapped[f"tip.{suffix}"], swapped[f"tail.{suffix}"] = p[f"tail.{suffix}"], p[f"tip.{suffix}"]
    w = model.spec.stream_fc
    swapped["fuse.w"] = np.hstack([p["fuse.w"][:, w:], p["fuse.w"][:, :w]])
    Xs = np.concatenate([X[:, :, 3:], X[:, :, :3]], axis=2)
    a, _ = forward_logits(model.spec, p, X)
    b, _ = forward_logits(model.spec, swapped, Xs)
    assert np.allclose(a, b, atol=1e-12)


def test_tip_only_ignores_tail_columns():
    model = build_model(ModelSpec("tip_only", t=64, num_classes=3), 0)
    X = np.random.default_rng(1).normal(size=(2, 64, 6))
    Y = X.copy()
    Y[:, :, 3:] = 0
    assert np.array_equal(model.predict_proba(X), model.predict_proba(Y[:, :, :3]))


@pytest.mark.parametrize("variant", ["tip_only", "tiptail_single", "two_stream"])
def test_whole_model_gradient(variant):
    assert gradcheck.check_model(np.random.default_rng(11), variant) < 1e-4


def test_checkpoint_round_trip(tmp_path, small):
    model, X = small
    model.history.append({"epoch": 1, "train_loss": 0.5, "val_accuracy": 0.75})
    path = tmp_path / "m.ckpt"
    model.save(path)
    loaded = TrainedModel.load(path)
    assert loaded.spec == model.spec
    assert np.array_equal(loaded.predict_proba(X), model.predict_proba(X))
    assert loaded.history == model.history


def _overfit_set():
    rng = np.random.default_rng(5)
    X = rng.normal(scale=0.1, size=(8, 64, 6)) + np.linspace(0, 1, 64)[None, :, None]
    y = np.arange(8) % 4
    return X, y


def test_training_deterministic():
    X, y = _overfit_set()
    cfg = nn.TrainConfig(learning_rate=1e-3, batch_size=4, max_epochs=3, seed=2)
    runs = []
    for _ in range(2):
        m = build_model(ModelSpec("two_stream", t=64, num_classes=4), 0)
        train(m, X, y, X, y, cfg)
        runs.append(m)
    assert runs[0].history == runs[1].history
    assert all(np.array_equal(runs[0].params[k], runs[1].params[k]) for k in runs[0].params)


def test_loss_decreases_over_first_epochs():
    X, y = _overfit_set()
    m = build_model(ModelSpec("two_stream", t=64, num_classes=4, dropout=0.0), 0)
    train(m, X, y, X, y, nn.TrainConfig(batch_size=8, max_epochs=5, seed=0))
    losses = [h["train_loss"] for h in m.history]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_best_epoch_maximises_validation_accuracy():
    X, y = _overfit_set()
    m = build_model(ModelSpec("tip_only", t=64, num_classes=4), 1)
    train(m, X, y, X[:4], y[:4], nn.TrainConfig(learning_rate=1e-3, batch_size=4, max_epochs=6))
    best = max(h["val_accuracy"] for h in m.history)
    assert m.history[m.best_epoch - 1]["val_accuracy"] == best


def test_train_argument_errors():
    m = build_model(ModelSpec("tip_only", t=64, num_classes=3), 0)
    X = np.zeros((2, 64, 3))
    with pytest.raises(DomainError):
        train(m, X[:0], np.zeros(0, int), X, [0, 1], nn.TrainConfig(max_epochs=1))
    with pytest.raises(DomainError):
        train(m, X, [0, 5], X, [0, 1], nn.TrainConfig(max_epochs=1))

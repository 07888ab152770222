import numpy as np
import pytest

from airsig import gradcheck, nn
from airsig.errors import ParseError, ShapeError


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def test_conv_output_shape():
    x = np.zeros((1, 1, 3, 512))
    w = np.zeros((64, 1, 3, 30))
    y, _ = nn.conv2d_forward(x, w)
    assert y.shape == (1, 64, 1, 483)


def test_conv_ones_kernel_is_running_sum(rng):
    x = rng.normal(size=(1, 1, 1, 20))
    y, _ = nn.conv2d_forward(x, np.ones((1, 1, 1, 5)))
    expected = [x[0, 0, 0, i:i + 5].sum() for i in range(16)]
    assert np.allclose(y[0, 0, 0], expected, atol=1e-12)


def test_conv_matches_direct_loop(rng):
    # Both code paths (narrow im2col and wide per-tap) against a naive loop.
    for C, H, kh in ((1, 3, 3), (16, 1, 1), (2, 4, 2)):
        x = rng.normal(size=(2, C, H, 12))
        w = rng.normal(size=(3, C, kh, 4))
        y, _ = nn.conv2d_forward(x, w)
        ref = np.zeros((2, 3, H - kh + 1, 9))
        for b in range(2):
            for o in range(3):
                for i in range(H - kh + 1):
                    for j in range(9):
                        ref[b, o, i, j] = np.sum(x[b, :, i:i + kh, j:j + 4] * w[o])
        assert np.allclose(y, ref, atol=1e-12)


def test_conv_kernel_too_large():
    with pytest.raises(ShapeError):
        nn.conv2d_forward(np.zeros((1, 1, 3, 10)), np.zeros((1, 1, 3, 11)))


def test_conv_gradient_tight(rng):
    # Smooth layer: tighter bound than the generic 1e-4 suite threshold.
    assert gradcheck.check_conv2d(rng) < 1e-6


def test_leaky_relu_values():
    y, _ = nn.leaky_relu_forward(np.array([-1.0, 2.0, 0.0]))
    assert y.tolist() == [-0.01, 2.0, 0.0]


def test_layer_norm_statistics(rng):
    x = rng.normal(3.0, 2.0, size=(4, 8, 1, 50))
    y, _ = nn.layer_norm_forward(x)
    assert np.allclose(y.mean(axis=(1, 2, 3)), 0, atol=1e-9)
    assert np.allclose(y.var(axis=(1, 2, 3)), 1, atol=1e-5)  # eps = 1e-5 biases var slightly
    z, _ = nn.layer_norm_forward(np.full((1, 3, 1, 7), 4.2))
    assert np.array_equal(z, np.zeros_like(z))


def test_layer_norm_unit_variance_without_eps(rng):
    x = rng.normal(size=(2, 3, 1, 40))
    y, _ = nn.layer_norm_forward(x, eps=0.0)
    assert np.allclose(y.var(axis=(1, 2, 3)), 1, atol=1e-9)


def test_max_pool_values():
    y, _ = nn.max_pool_forward(np.array([[1.0, 3.0, 2.0, 2.0]]))
    assert y.tolist() == [[3.0, 2.0]]
    assert nn.max_pool_forward(np.zeros((1, 2, 1, 477)))[0].shape == (1, 2, 1, 238)


def test_max_pool_ties_route_to_first():
    y, cache = nn.max_pool_forward(np.array([[2.0, 2.0]]))
    assert nn.max_pool_backward(np.array([[1.0]]), cache).tolist() == [[1.0, 0.0]]


def test_linear_identity_and_bias(rng):
    x = rng.normal(size=(2, 5))
    assert np.array_equal(nn.linear_forward(x, np.eye(5), np.zeros(5))[0], x)
    b = rng.normal(size=3)
    assert np.array_equal(nn.linear_forward(np.zeros((1, 5)), rng.normal(size=(3, 5)), b)[0][0], b)


def test_dropout_identity_cases(rng):
    x = rng.normal(size=(10, 10))
    assert np.array_equal(nn.dropout_forward(x, 0.0, True, rng)[0], x)
    assert np.array_equal(nn.dropout_forward(x, 0.25, False, rng)[0], x)


def test_dropout_rate_and_scaling():
    x = np.ones(100_000)
    y, _ = nn.dropout_forward(x, 0.25, True, np.random.default_rng(0))
    assert abs((y == 0).mean() - 0.25) < 0.01
    assert np.allclose(y[y != 0], 1 / 0.75)


def test_dropout_deterministic_given_seed():
    x = np.ones((5, 5))
    a = nn.dropout_forward(x, 0.25, True, np.random.default_rng(9))[0]
    b = nn.dropout_forward(x, 0.25, True, np.random.default_rng(9))[0]
    assert np.array_equal(a, b)


def test_uniform_logits_loss_is_log_c():
    loss, _ = nn.softmax_cross_entropy(np.zeros(7), 3)
    assert loss == pytest.approx(np.log(7), abs=1e-9)


def test_confident_correct_logit_drives_loss_to_zero():
    logits = np.zeros(4)
    logits[2] = 50.0
    loss, _ = nn.softmax_cross_entropy(logits, 2)
    assert loss < 1e-20


def test_softmax_rows_sum_to_one(rng):
    p = nn.softmax(rng.normal(scale=30, size=(20, 9)))
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-12


def test_adam_first_step_magnitude():
    cfg = nn.TrainConfig()
    g = np.array([0.5, -2.0, 1e-3])
    p = {"w": np.zeros(3)}
    nn.adam_step(p, {"w": g}, nn.AdamState(), cfg)
    expected = -cfg.learning_rate * g / (np.abs(g) + cfg.adam_epsilon)
    assert np.allclose(p["w"], expected, rtol=1e-9)


def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([1.0, 2.0])}
    nn.adam_step(p, {"w": np.zeros(2)}, nn.AdamState(), nn.TrainConfig())
    assert p["w"].tolist() == [1.0, 2.0]


def test_adam_deterministic(rng):
    grads = [rng.normal(size=4) for _ in range(5)]
    runs = []
    for _ in range(2):
        p, s = {"w": np.ones(4)}, nn.AdamState()
        for g in grads:
            nn.adam_step(p, {"w": g}, s, nn.TrainConfig())
        runs.append((p["w"], s.m["w"], s.v["w"]))
    assert all(np.array_equal(a, b) for a, b in zip(*runs))


def test_train_config_validation():
    with pytest.raises(ValueError):
        nn.TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        nn.TrainConfig(beta1=1.0)


def test_checkpoint_round_trip(tmp_path, rng):
    tensors = {"a": rng.normal(size=(2, 3, 4)), "scalar": np.array(3.5), "v": rng.normal(size=7)}
    path = tmp_path / "c.bin"
    nn.save_tensors(path, "two_stream", tensors)
    raw = path.read_bytes()
    assert raw.startswith(nn.MAGIC)
    variant, loaded = nn.load_tensors(path)
    assert variant == "two_stream"
    assert all(np.array_equal(loaded[k], v) for k, v in tensors.items())


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"nope")
    with pytest.raises(ParseError):
        nn.load_tensors(p)
    p.write_bytes(nn.MAGIC + b"\x01\x00")
    with pytest.raises(ParseError):
        nn.load_tensors(p)


@pytest.mark.parametrize("name", sorted(gradcheck.LAYER_CHECKS))
def test_layer_gradients(name):
    err = gradcheck.LAYER_CHECKS[name](np.random.default_rng(7))
    assert err < 1e-6, f"{name}: {err:.2e}"

"""Central finite-difference checks for every layer and a tiny end-to-end model."""
from __future__ import annotations

import numpy as np

from . import nn
from .slitcnn import ModelSpec, backward_logits, build_model, forward_logits

H = 1e-6


def _check(forward, backward, inputs: dict, rng, max_entries=400):
    """Compare backward(r) against central differences of forward() projected on r.

    `inputs` maps names to arrays that forward() reads; returns the
    relative error per input name.
    """
    out = forward()
    probe = rng.normal(size=np.shape(out))
    analytic = backward(probe)
    errors = {}
    for name, arr in inputs.items():
        n = arr.size
        idx = rng.choice(n, size=min(n, max_entries), replace=False)
        diffs = nn.numeric_gradient(forward, arr, H, idx)
        numeric = {i: float(np.sum(probe * d)) for i, d in diffs.items()}
        errors[name] = nn.max_relative_error(analytic[name], numeric)
    return errors


def check_conv2d(rng):
    x = rng.normal(size=(2, 1, 3, 40))
    w = rng.normal(size=(4, 1, 3, 7))
    b = rng.normal(size=4)
    x2 = rng.normal(size=(2, 16, 1, 30))
    w2 = rng.normal(size=(5, 16, 1, 4))

    def bw(dy, cache):
        dx, dw, db = nn.conv2d_backward(dy, cache)
        return {"x": dx, "w": dw, "b": db}

    errs = _check(lambda: nn.conv2d_forward(x, w, b)[0],
                  lambda dy: bw(dy, nn.conv2d_forward(x, w, b)[1]), {"x": x, "w": w, "b": b}, rng)
    errs2 = _check(lambda: nn.conv2d_forward(x2, w2)[0],
                   lambda dy: bw(dy, nn.conv2d_forward(x2, w2)[1]), {"x": x2, "w": w2}, rng)
    return max(*errs.values(), *errs2.values())


def check_leaky_relu(rng):
    x = rng.normal(size=(3, 50))
    x[np.abs(x) < 1e-3] = 0.5  # stay clear of the kink
    return _check(lambda: nn.leaky_relu_forward(x)[0],
                  lambda dy: {"x": nn.leaky_relu_backward(dy, nn.leaky_relu_forward(x)[1])},
                  {"x": x}, rng)["x"]


def check_layer_norm(rng):
    x = rng.normal(size=(2, 4, 1, 25))
    return _check(lambda: nn.layer_norm_forward(x)[0],
                  lambda dy: {"x": nn.layer_norm_backward(dy, nn.layer_norm_forward(x)[1])},
                  {"x": x}, rng)["x"]


def check_max_pool(rng):
    x = rng.normal(size=(2, 3, 1, 31))
    return _check(lambda: nn.max_pool_forward(x)[0],
                  lambda dy: {"x": nn.max_pool_backward(dy, nn.max_pool_forward(x)[1])},
                  {"x": x}, rng)["x"]


def check_linear(rng):
    x = rng.normal(size=(3, 20))
    w = rng.normal(size=(7, 20))
    b = rng.normal(size=7)

    def bw(dy):
        dx, dw, db = nn.linear_backward(dy, nn.linear_forward(x, w, b)[1])
        return {"x": dx, "w": dw, "b": db}

    return max(_check(lambda: nn.linear_forward(x, w, b)[0], bw, {"x": x, "w": w, "b": b}, rng).values())


def check_dropout(rng):
    x = rng.normal(size=(4, 30))
    seed = int(rng.integers(1 << 30))

    def fw():
        return nn.dropout_forward(x, 0.25, True, np.random.default_rng(seed))

    return _check(lambda: fw()[0], lambda dy: {"x": nn.dropout_backward(dy, fw()[1])}, {"x": x}, rng)["x"]


def check_softmax_cross_entropy(rng):
    logits = rng.normal(size=(3, 5))
    labels = np.array([0, 4, 2])
    _, grad = nn.softmax_cross_entropy(logits, labels)
    numeric = nn.numeric_gradient(lambda: nn.softmax_cross_entropy(logits, labels)[0], logits, H)
    return nn.max_relative_error(grad, numeric)


def check_model(rng, variant="two_stream", max_entries=40):
    """Whole-network check on a t=64, 3-class model, dropout mask held fixed."""
    spec = ModelSpec(variant, t=64, num_classes=3)
    model = build_model(spec, seed=int(rng.integers(1 << 30)))
    X = rng.normal(scale=0.5, size=(2, 64, spec.input_columns))
    y = np.array([0, 2])
    seed = int(rng.integers(1 << 30))

    def loss():
        logits, _ = forward_logits(spec, model.params, X, True, np.random.default_rng(seed))
        return nn.softmax_cross_entropy(logits, y)[0]

    logits, caches = forward_logits(spec, model.params, X, True, np.random.default_rng(seed))
    _, dlogits = nn.softmax_cross_entropy(logits, y)
    grads = backward_logits(spec, dlogits, caches)
    worst = 0.0
    for name, arr in model.params.items():
        idx = rng.choice(arr.size, size=min(arr.size, max_entries), replace=False)
        numeric = nn.numeric_gradient(loss, arr, H, idx)
        worst = max(worst, nn.max_relative_error(grads[name], numeric))
    return worst


LAYER_CHECKS = {
    "conv2d": check_conv2d,
    "leaky_relu": check_leaky_relu,
    "layer_norm": check_layer_norm,
    "max_pool": check_max_pool,
    "linear": check_linear,
    "dropout": check_dropout,
    "softmax_cross_entropy": check_softmax_cross_entropy,
}


def run_all(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    results = {name: fn(rng) for name, fn in LAYER_CHECKS.items()}
    for variant in ("tip_only", "tiptail_single", "two_stream"):
        results[f"model[{variant}]"] = check_model(rng, variant)
    return results

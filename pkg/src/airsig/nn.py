"""Hand-written layers with reverse-mode gradients, Adam, and a binary checkpoint format.

Every layer is a forward/backward pair over batched float64 arrays. Forward
returns ``(out, cache)``; backward takes the upstream gradient and the cache.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParseError, ShapeError

LEAKY_SLOPE = 0.01
LAYER_NORM_EPS = 1e-5


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")


# -- convolution ----------------------------------------------------------

def conv2d_forward(x, w, b=None):
    """Valid, stride-1 cross-correlation of x (B, C, H, W) with w (O, C, kH, kW)."""
    _, C, H, W = x.shape
    O, Cw, kh, kw = w.shape
    if C != Cw:
        raise ShapeError(f"input has {C} channels, kernel expects {Cw}")
    if kh > H or kw > W:
        raise ShapeError(f"kernel {kh}x{kw} larger than input {H}x{W}")
    if kh == H and C * H >= ROWS_PATH_MIN_CHANNELS:
        y = _conv_rows_forward(x, w)
    else:
        patches = sliding_window_view(x, (kh, kw), axis=(2, 3))  # B, C, Ho, Wo, kh, kw
        y = np.tensordot(patches, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        y = np.ascontiguousarray(y)
    if b is not None:
        y += b[None, :, None, None]
    return y, (x, w)


def conv2d_backward(dy, cache, need_dx=True):
    x, w = cache
    _, _, kh, kw = w.shape
    db = dy.sum(axis=(0, 2, 3))
    if kh == x.shape[2] and x.shape[1] * kh >= ROWS_PATH_MIN_CHANNELS:
        dx, dw = _conv_rows_backward(dy, x, w, need_dx)
        return dx, dw, db
    patches = sliding_window_view(x, (kh, kw), axis=(2, 3))
    dw = np.tensordot(dy, patches, axes=([0, 2, 3], [0, 2, 3]))
    dx = None
    if need_dx:
        dyp = np.pad(dy, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        win = sliding_window_view(dyp, (kh, kw), axis=(2, 3))
        dx = np.tensordot(win, w[:, :, ::-1, ::-1], axes=([1, 4, 5], [0, 2, 3]))
        dx = np.ascontiguousarray(dx.transpose(0, 3, 1, 2))
    return dx, dw, db


# Kernels spanning the full input height reduce to a 1D convolution over
# C*H channels. The batch is laid out channels-last and flattened to
# (B*W, C*H) so each kernel tap is one contiguous GEMM; output rows that
# straddle two samples are computed and discarded. Narrow inputs use im2col.
ROWS_PATH_MIN_CHANNELS = 16

def _taps(w):
    O, C, kh, kw = w.shape
    return np.ascontiguousarray(w.reshape(O, C * kh, kw).transpose(2, 1, 0))  # kw, C*kh, O


def _conv_rows_forward(x, w):
    B, C, H, W = x.shape
    O, _, _, kw = w.shape
    Wo = W - kw + 1
    xf = np.ascontiguousarray(x.reshape(B, C * H, W).transpose(0, 2, 1)).reshape(B * W, C * H)
    taps = _taps(w)
    n = B * W - kw + 1
    yf = np.zeros((B * W, O))
    for j in range(kw):
        yf[:n] += xf[j:j + n] @ taps[j]
    return np.ascontiguousarray(yf.reshape(B, W, O)[:, :Wo].transpose(0, 2, 1))[:, :, None, :]


def _conv_rows_backward(dy, x, w, need_dx):
    B, C, H, W = x.shape
    O, _, _, kw = w.shape
    Wo = W - kw + 1
    xf = np.ascontiguousarray(x.reshape(B, C * H, W).transpose(0, 2, 1)).reshape(B * W, C * H)
    dyf = np.zeros((B, W, O))
    dyf[:, :Wo] = dy[:, :, 0, :].transpose(0, 2, 1)
    dyf = dyf.reshape(B * W, O)
    n = B * W - kw + 1
    taps = _taps(w)
    dtaps = np.empty_like(taps)
    dxf = np.zeros((B * W, C * H)) if need_dx else None
    for j in range(kw):
        dtaps[j] = xf[j:j + n].T @ dyf[:n]
        if need_dx:
            dxf[j:j + n] += dyf[:n] @ taps[j].T
    dw = dtaps.transpose(2, 1, 0).reshape(O, C, H, kw)
    dx = None
    if need_dx:
        dx = np.ascontiguousarray(dxf.reshape(B, W, C * H).transpose(0, 2, 1)).reshape(B, C, H, W)
    return dx, dw


# -- pointwise and normalisation --------------------------------------------

def leaky_relu_forward(x, slope=LEAKY_SLOPE):
    if not 0.0 <= slope <= 1.0:
        raise ValueError("leaky slope must lie in [0, 1]")
    y = x * slope
    np.maximum(x, y, out=y)  # x where x >= 0, slope * x elsewhere
    return y, (x, slope)


def leaky_relu_backward(dy, cache):
    x, slope = cache
    dx = dy * slope
    np.copyto(dx, dy, where=x >= 0)
    return dx


def layer_norm_forward(x, eps=LAYER_NORM_EPS):
    """Normalise each sample over all of its features; no affine parameters."""
    axes = tuple(range(1, x.ndim))
    mu = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    centered = x - mu
    # a constant sample has no spread; rounding in the mean must not leak through
    flat = x.reshape(len(x), -1)
    centered[np.all(flat == flat[:, :1], axis=1)] = 0.0
    xhat = centered * inv_std
    return xhat, (xhat, inv_std)


def layer_norm_backward(dy, cache):
    xhat, inv_std = cache
    axes = tuple(range(1, dy.ndim))
    mean_dy = dy.mean(axis=axes, keepdims=True)
    mean_dy_xhat = (dy * xhat).mean(axis=axes, keepdims=True)
    return inv_std * (dy - mean_dy - xhat * mean_dy_xhat)


def max_pool_forward(x):
    """Non-overlapping width-2 max pooling along the last axis; odd tail dropped."""
    W = x.shape[-1]
    if W < 2:
        raise ShapeError("max pooling needs width >= 2")
    W2 = W // 2
    first, second = x[..., 0:2 * W2:2], x[..., 1:2 * W2:2]
    take_first = first >= second  # ties route to the first element
    return np.where(take_first, first, second), (x.shape, take_first)


def max_pool_backward(dy, cache):
    shape, take_first = cache
    W2 = take_first.shape[-1]
    dx = np.zeros(shape)
    dx[..., 0:2 * W2:2] = np.where(take_first, dy, 0.0)
    dx[..., 1:2 * W2:2] = np.where(take_first, 0.0, dy)
    return dx


def linear_forward(x, w, b):
    """x (B, n) @ w.T for w (m, n), plus bias (m,)."""
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear expects {w.shape[1]} inputs, got {x.shape[-1]}")
    return x @ w.T + b, (x, w)


def linear_backward(dy, cache):
    x, w = cache
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def dropout_forward(x, p, training, rng):
    """Inverted dropout; identity at inference or p == 0."""
    if not training or p == 0:
        return x, None
    keep = rng.random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    return x * keep * scale, keep * scale


def dropout_backward(dy, cache):
    return dy if cache is None else dy * cache


# -- output -----------------------------------------------------------------

def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient on the logits."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(labels)
    z = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_z
    B = len(labels)
    loss = -log_p[np.arange(B), labels].mean()
    grad = np.exp(log_p)
    grad[np.arange(B), labels] -= 1.0
    return float(loss), grad / B


# -- optimiser --------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


ADAM_CHUNK = 1 << 14  # elements per block; keeps the temporaries cache resident


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig) -> AdamState:
    """One bias-corrected Adam update, applied to `params` in place."""
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    inv_sqrt_bc2 = 1.0 / np.sqrt(bc2)
    step_size = config.learning_rate / bc1
    tmp = np.empty(ADAM_CHUNK)
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        p, m, v = params[k].reshape(-1), state.m[k].reshape(-1), state.v[k].reshape(-1)
        g = np.ascontiguousarray(g).reshape(-1)
        for s in range(0, g.size, ADAM_CHUNK):
            sl = slice(s, s + ADAM_CHUNK)
            gs, ms, vs = g[sl], m[sl], v[sl]
            ts = tmp[:gs.size]
            np.multiply(gs, 1 - b1, out=ts)
            ms *= b1
            ms += ts
            np.multiply(gs, gs, out=ts)
            ts *= 1 - b2
            vs *= b2
            vs += ts
            np.sqrt(vs, out=ts)
            ts *= inv_sqrt_bc2
            ts += config.adam_epsilon
            np.divide(ms, ts, out=ts)
            ts *= step_size
            p[sl] -= ts
    return state


# -- checkpoints ------------------------------------------------------------

MAGIC = b"AIRSIGNN"
FORMAT_VERSION = 1


def save_tensors(path, variant: str, tensors: dict) -> None:
    """Binary layout: magic, u32 version, tag, u32 count, then per tensor
    (u32 name length, name, u32 rank, u64 extents, float64 LE values)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        tag = variant.encode()
        fh.write(struct.pack("<II", FORMAT_VERSION, len(tag)))
        fh.write(tag)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f8")
            bname = name.encode()
            fh.write(struct.pack("<I", len(bname)))
            fh.write(bname)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_tensors(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise ParseError(f"{path}: not a checkpoint (bad magic)")
    off = len(MAGIC)

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, data, off)
        off += struct.calcsize(fmt)
        return vals

    try:
        version, tag_len = take("<II")
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported checkpoint version {version}")
        variant = data[off:off + tag_len].decode()
        off += tag_len
        (count,) = take("<I")
        tensors = {}
        for _ in range(count):
            (n,) = take("<I")
            name = data[off:off + n].decode()
            off += n
            (rank,) = take("<I")
            shape = take(f"<{rank}Q")
            size = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape)
            off += 8 * size
            tensors[name] = arr.astype(np.float64)
    except struct.error as exc:
        raise ParseError(f"{path}: truncated checkpoint") from exc
    return variant, tensors


# -- gradient checking ------------------------------------------------------

def numeric_gradient(f, x, h=1e-6, indices=None):
    """Central differences of scalar f w.r.t. x (perturbed in place, then restored)."""
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = {}
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out


def max_relative_error(analytic, numeric: dict, floor=1e-12):
    """||a - n|| / max(||a||, ||n||) over the checked entries of one tensor.

    A per-element ratio is dominated by rounding noise on entries whose
    gradient is near zero, so the norm over the sampled entries is used.
    """
    a = np.asarray(analytic).reshape(-1)
    idx = np.fromiter(numeric.keys(), dtype=int)
    if idx.size == 0:
        return 0.0
    a = a[idx]
    n = np.fromiter(numeric.values(), dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / denom)

"""SliTCNN: 2D kernels spanning all coordinates of a stream, sliding along time.

Three variants share one stream body and one classification head:

* ``tip_only``       one stream over the pen-tip (t x 3)
* ``tiptail_single`` one stream over tip and tail stacked (t x 6)
* ``two_stream``     separate tip and tail streams fused after per-stream FC layers
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import DomainError, ShapeError

log = logging.getLogger(__name__)

VARIANTS = ("tip_only", "tiptail_single", "two_stream")


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "two_stream"
    t: int = 512
    num_classes: int = 45
    conv1_width: int = 30
    conv1_channels: int = 64
    conv2_width: int = 8
    conv2_channels: int = 128
    stream_fc: int = 128
    fuse_fc: int = 512
    dropout: float = 0.25

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.t < 64:
            raise DomainError("temporal length t must be at least 64")
        if self.num_classes < 2:
            raise DomainError("need at least two classes")
        if not 0 <= self.dropout < 1:
            raise DomainError("dropout must lie in [0, 1)")

    @property
    def streams(self):
        """(name, first input column, coordinate rows) per stream."""
        if self.variant == "tip_only":
            return [("tip", 0, 3)]
        if self.variant == "tiptail_single":
            return [("tiptail", 0, 6)]
        return [("tip", 0, 3), ("tail", 3, 3)]

    @property
    def input_columns(self) -> int:
        return 3 if self.variant == "tip_only" else 6

    @property
    def pooled_width(self) -> int:
        return (self.t - self.conv1_width + 1 - self.conv2_width + 1) // 2

    @property
    def flat_size(self) -> int:
        return self.conv2_channels * self.pooled_width

    def param_shapes(self) -> dict:
        shapes = {}
        for name, _, rows in self.streams:
            shapes[f"{name}.conv1.w"] = (self.conv1_channels, 1, rows, self.conv1_width)
            shapes[f"{name}.conv1.b"] = (self.conv1_channels,)
            shapes[f"{name}.conv2.w"] = (self.conv2_channels, self.conv1_channels, 1, self.conv2_width)
            shapes[f"{name}.conv2.b"] = (self.conv2_channels,)
            shapes[f"{name}.fc.w"] = (self.stream_fc, self.flat_size)
            shapes[f"{name}.fc.b"] = (self.stream_fc,)
        fused = self.stream_fc * len(self.streams)
        shapes["fuse.w"] = (self.fuse_fc, fused)
        shapes["fuse.b"] = (self.fuse_fc,)
        shapes["out.w"] = (self.num_classes, self.fuse_fc)
        shapes["out.b"] = (self.num_classes,)
        return shapes

    def parameter_count(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))


def init_params(spec: ModelSpec, seed: int) -> dict:
    """Fan-in scaled uniform weights (He bound sqrt(6 / fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def _stream_forward(p, prefix, x, spec, training, rng):
    caches = {}
    h, caches["conv1"] = nn.conv2d_forward(x, p[f"{prefix}.conv1.w"], p[f"{prefix}.conv1.b"])
    h, caches["act1"] = nn.leaky_relu_forward(h)
    h, caches["norm1"] = nn.layer_norm_forward(h)
    h, caches["conv2"] = nn.conv2d_forward(h, p[f"{prefix}.conv2.w"], p[f"{prefix}.conv2.b"])
    h, caches["act2"] = nn.leaky_relu_forward(h)
    h, caches["pool"] = nn.max_pool_forward(h)
    caches["pooled_shape"] = h.shape
    h = h.reshape(len(h), -1)
    h, caches["act3"] = nn.leaky_relu_forward(h)
    h, caches["fc"] = nn.linear_forward(h, p[f"{prefix}.fc.w"], p[f"{prefix}.fc.b"])
    h, caches["drop"] = nn.dropout_forward(h, spec.dropout, training, rng)
    return h, caches


def _stream_backward(dh, prefix, caches, grads):
    dh = nn.dropout_backward(dh, caches["drop"])
    dh, grads[f"{prefix}.fc.w"], grads[f"{prefix}.fc.b"] = nn.linear_backward(dh, caches["fc"])
    dh = nn.leaky_relu_backward(dh, caches["act3"])
    dh = dh.reshape(caches["pooled_shape"])
    dh = nn.max_pool_backward(dh, caches["pool"])
    dh = nn.leaky_relu_backward(dh, caches["act2"])
    dh, grads[f"{prefix}.conv2.w"], grads[f"{prefix}.conv2.b"] = nn.conv2d_backward(dh, caches["conv2"])
    dh = nn.layer_norm_backward(dh, caches["norm1"])
    dh = nn.leaky_relu_backward(dh, caches["act1"])
    _, grads[f"{prefix}.conv1.w"], grads[f"{prefix}.conv1.b"] = nn.conv2d_backward(
        dh, caches["conv1"], need_dx=False)


def stream_inputs(spec: ModelSpec, X: np.ndarray):
    """Split a (B, t, columns) batch into per-stream (B, 1, rows, t) tensors."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.shape[1] != spec.t:
        raise ShapeError(f"trajectories have length {X.shape[1]}, model expects t={spec.t}")
    if X.shape[2] < spec.input_columns:
        raise ShapeError(f"{spec.variant} needs {spec.input_columns} columns, got {X.shape[2]}")
    return [np.ascontiguousarray(X[:, :, c:c + rows].transpose(0, 2, 1))[:, None]
            for _, c, rows in spec.streams]


def forward_logits(spec: ModelSpec, params: dict, X, training=False, rng=None):
    inputs = stream_inputs(spec, X)
    feats, stream_caches = [], []
    for (name, _, _), x in zip(spec.streams, inputs):
        f, c = _stream_forward(params, name, x, spec, training, rng)
        feats.append(f)
        stream_caches.append(c)
    h = np.concatenate(feats, axis=1)
    caches = {"streams": stream_caches}
    h, caches["fuse"] = nn.linear_forward(h, params["fuse.w"], params["fuse.b"])
    h, caches["act"] = nn.leaky_relu_forward(h)
    logits, caches["out"] = nn.linear_forward(h, params["out.w"], params["out.b"])
    return logits, caches


def backward_logits(spec: ModelSpec, dlogits, caches) -> dict:
    grads = {}
    dh, grads["out.w"], grads["out.b"] = nn.linear_backward(dlogits, caches["out"])
    dh = nn.leaky_relu_backward(dh, caches["act"])
    dh, grads["fuse.w"], grads["fuse.b"] = nn.linear_backward(dh, caches["fuse"])
    w = spec.stream_fc
    for i, ((name, _, _), c) in enumerate(zip(spec.streams, caches["streams"])):
        _stream_backward(dh[:, i * w:(i + 1) * w], name, c, grads)
    return grads


@dataclass
class TrainedModel:
    spec: ModelSpec
    params: dict
    adam: nn.AdamState = field(default_factory=nn.AdamState)
    history: list = field(default_factory=list)
    best_epoch: int = 0

    def predict_proba(self, X, batch_size: int = 64) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        out = []
        for s in range(0, len(X), batch_size):
            logits, _ = forward_logits(self.spec, self.params, X[s:s + batch_size])
            out.append(nn.softmax(logits))
        return np.concatenate(out) if out else np.zeros((0, self.spec.num_classes))

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def loss_and_grads(self, X, y, rng=None, training=True):
        logits, caches = forward_logits(self.spec, self.params, X, training, rng)
        loss, dlogits = nn.softmax_cross_entropy(logits, y)
        return loss, backward_logits(self.spec, dlogits, caches)

    def save(self, path) -> None:
        tensors = {f"spec.{k}": np.array(float(v)) for k, v in asdict(self.spec).items()
                   if k != "variant"}
        tensors.update({f"param.{k}": v for k, v in self.params.items()})
        tensors.update({f"adam.m.{k}": v for k, v in self.adam.m.items()})
        tensors.update({f"adam.v.{k}": v for k, v in self.adam.v.items()})
        tensors["adam.step"] = np.array(float(self.adam.step))
        tensors["best_epoch"] = np.array(float(self.best_epoch))
        if self.history:
            tensors["history"] = np.array([[h["epoch"], h["train_loss"], h["val_accuracy"]]
                                           for h in self.history])
        nn.save_tensors(path, self.spec.variant, tensors)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        variant, tensors = nn.load_tensors(path)
        fields = {}
        for k, v in tensors.items():
            if k.startswith("spec."):
                name = k[5:]
                fields[name] = float(v) if name == "dropout" else int(v)
        spec = ModelSpec(variant=variant, **fields)
        params = {k[6:]: v for k, v in tensors.items() if k.startswith("param.")}
        for name, shape in spec.param_shapes().items():
            if params.get(name, np.empty(0)).shape != tuple(shape):
                raise ShapeError(f"checkpoint tensor {name} missing or mis-shaped")
        adam = nn.AdamState(
            m={k[7:]: v for k, v in tensors.items() if k.startswith("adam.m.")},
            v={k[7:]: v for k, v in tensors.items() if k.startswith("adam.v.")},
            step=int(tensors.get("adam.step", 0)),
        )
        history = [{"epoch": int(e), "train_loss": float(l), "val_accuracy": float(a)}
                   for e, l, a in tensors.get("history", np.zeros((0, 3)))]
        return cls(spec, params, adam, history, int(tensors.get("best_epoch", 0)))


def build_model(spec: ModelSpec, seed: int = 0) -> TrainedModel:
    return TrainedModel(spec, init_params(spec, seed))


def _check_split(name, X, y, spec):
    if len(X) == 0:
        raise DomainError(f"{name} split is empty")
    if len(X) != len(y):
        raise DomainError(f"{name} split has {len(X)} samples but {len(y)} labels")
    y = np.asarray(y)
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise DomainError(f"{name} labels must lie in 0..{spec.num_classes - 1}")


def train(model: TrainedModel, train_X, train_y, val_X, val_y,
          config: nn.TrainConfig, progress=None) -> TrainedModel:
    """Shuffled mini-batch Adam on cross-entropy, keeping the best validation snapshot.

    A snapshot is taken whenever validation accuracy improves, or stays equal
    while validation loss drops. Training stops early after `config.patience`
    epochs without a new snapshot, when patience is set.
    """
    spec = model.spec
    train_X = np.asarray(train_X, dtype=float)
    train_y = np.asarray(train_y, dtype=int)
    val_X = np.asarray(val_X, dtype=float)
    val_y = np.asarray(val_y, dtype=int)
    _check_split("training", train_X, train_y, spec)
    _check_split("validation", val_X, val_y, spec)

    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    best = (-1.0, np.inf)
    best_state = None
    since_best = 0
    n = len(train_X)
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            loss, grads = model.loss_and_grads(train_X[idx], train_y[idx], dropout_rng)
            nn.adam_step(model.params, grads, model.adam, config)
            total += loss * len(idx)
        probs = model.predict_proba(val_X)
        val_acc = float((probs.argmax(axis=1) == val_y).mean())
        val_loss = float(-np.log(np.maximum(probs[np.arange(len(val_y)), val_y], 1e-300)).mean())
        record = {"epoch": epoch, "train_loss": total / n, "val_accuracy": val_acc}
        model.history.append(record)
        if progress is not None:
            progress(record)
        log.info("epoch %d loss %.5f val_acc %.4f", epoch, total / n, val_acc)
        if (val_acc, -val_loss) > (best[0], -best[1]):
            best = (val_acc, val_loss)
            best_state = _snapshot(model, best_state, epoch)
            since_best = 0
        else:
            since_best += 1
            if config.patience is not None and since_best >= config.patience:
                break
    params, m, v, step, model.best_epoch = best_state
    model.params, model.adam = params, nn.AdamState(m, v, step)
    return model


def _copy_into(src: dict, dst: dict | None) -> dict:
    if dst is None:
        return {k: a.copy() for k, a in src.items()}
    for k, a in src.items():
        np.copyto(dst[k], a)
    return dst


def _snapshot(model: TrainedModel, previous, epoch: int):
    """Copy parameters and Adam moments, reusing the previous snapshot's buffers."""
    old = previous or (None, None, None)
    return (_copy_into(model.params, old[0]), _copy_into(model.adam.m, old[1]),
            _copy_into(model.adam.v, old[2]), model.adam.step, epoch)
